// Core raster, point-set and kernel types plus their on-disk formats.
//
// Coordinate convention: a cell at (slice s, row r, column c) has its
// center at the continuous point (x = c, y = r, z = s). Dims are stored
// outermost first: 2D (height, width), 3D (depth, height, width).
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (DMAP, CSV, manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Continuous coordinate in pixel units, ordered (x, y, z). z is 0 in 2D.
using Point = std::array<double, 3>;

/// Cell address (slice, row, column). slice is 0 in 2D.
struct CellIndex {
  std::size_t slice = 0;
  std::size_t row = 0;
  std::size_t col = 0;
};

class DensityMap {
 public:
  DensityMap() = default;
  /// Zero-filled map.
  explicit DensityMap(std::vector<std::size_t> dims);
  DensityMap(std::vector<std::size_t> dims, std::vector<float> values);

  int ndim() const { return static_cast<int>(dims_.size()); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t size() const { return values_.size(); }

  std::size_t depth() const { return ndim() == 3 ? dims_[0] : 1; }
  std::size_t height() const { return dims_[dims_.size() - 2]; }
  std::size_t width() const { return dims_.back(); }

  std::span<const float> values() const { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }
  float at(const CellIndex& c) const { return values_[flat_index(c)]; }

  std::size_t flat_index(const CellIndex& c) const {
    return (c.slice * height() + c.row) * width() + c.col;
  }
  CellIndex cell_index(std::size_t flat) const;
  /// Continuous center of a cell.
  Point cell_center(std::size_t flat) const;

  bool operator==(const DensityMap&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<float> values_;
};

struct PointSet {
  int ndim = 2;
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Validates ndim and coordinate finiteness; throws std::invalid_argument.
void validate(const PointSet& points);

/// Grid cell nearest to a continuous point, or false when outside the grid.
bool nearest_cell(const DensityMap& map, const Point& p, CellIndex& out);

/// Shared Gaussian covariance of every kernel in a density map.
///
/// Sigma is a d x d symmetric positive-definite matrix in pixel^2 units,
/// expressed in (x, y, z) axis order. Construction rejects asymmetric,
/// indefinite and ill-conditioned (condition number > 1e8) matrices.
class KernelSpec {
 public:
  KernelSpec(int ndim, std::span<const double> sigma_row_major);

  static KernelSpec isotropic(int ndim, double stddev);
  /// Diagonal covariance from per-axis standard deviations (x, y[, z]).
  static KernelSpec diagonal(std::span<const double> stddevs);

  int ndim() const { return ndim_; }
  double sigma(int i, int j) const { return sigma_[3 * i + j]; }
  double inverse(int i, int j) const { return inverse_[3 * i + j]; }
  double determinant() const { return det_; }
  /// Standard deviation along one axis, sqrt(Sigma_ii).
  double axis_stddev(int i) const;
  /// Smallest per-axis standard deviation.
  double min_axis_stddev() const;

  /// (2 pi)^(-d/2) det(Sigma)^(-1/2).
  double peak_density() const { return peak_; }
  /// Largest eigenvalue of the covariance.
  double max_eigenvalue() const { return max_eig_; }

  double mahalanobis_squared(const Point& a, const Point& b) const;
  double mahalanobis_squared(double dx, double dy, double dz) const;

  /// Lower-triangular Cholesky factor L with L L^T = Sigma.
  std::array<double, 9> cholesky() const { return chol_; }

 private:
  int ndim_;
  std::array<double, 9> sigma_{};
  std::array<double, 9> inverse_{};
  std::array<double, 9> chol_{};
  double det_ = 1.0;
  double peak_ = 0.0;
  double max_eig_ = 1.0;
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path gt_points_path;
  std::filesystem::path gt_density_path;
  std::filesystem::path pred_density_path;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// DMAP: "DMAP", version byte 1, ndim byte, two zero bytes, ndim
// little-endian u32 dims, then little-endian float32 values.
DensityMap read_density_map(const std::filesystem::path& path);
void write_density_map(const DensityMap& map, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_density_map(const DensityMap& map);
DensityMap decode_density_map(std::span<const std::uint8_t> bytes);

PointSet read_points(const std::filesystem::path& path);
void write_points(const PointSet& points, const std::filesystem::path& path);
PointSet parse_points(const std::string& text);
std::string format_points(const PointSet& points);

/// Relative paths in the manifest are resolved against its directory.
DatasetManifest read_manifest(const std::filesystem::path& path);
/// Paths are written relative to the manifest's directory when possible.
void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path);

}  // namespace dmc
