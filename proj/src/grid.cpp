#include "dmc/grid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace dmc {
namespace {

constexpr std::uint8_t kDmapVersion = 1;
constexpr std::size_t kDmapFixedHeader = 8;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

void check_dims(const std::vector<std::size_t>& dims) {
  if (dims.size() != 2 && dims.size() != 3)
    throw std::invalid_argument("density map must be 2D or 3D, got ndim " +
                                std::to_string(dims.size()));
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("density map dims must be positive");
}

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         std::multiplies<>());
}

void put_u32(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// DensityMap

DensityMap::DensityMap(std::vector<std::size_t> dims)
    : dims_(std::move(dims)) {
  check_dims(dims_);
  values_.assign(product(dims_), 0.0f);
}

DensityMap::DensityMap(std::vector<std::size_t> dims, std::vector<float> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  check_dims(dims_);
  if (values_.size() != product(dims_))
    throw std::invalid_argument("density map has " + std::to_string(values_.size()) +
                                " values, dims require " +
                                std::to_string(product(dims_)));
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]))
      throw std::invalid_argument("non-finite density at index " + std::to_string(i));
    if (values_[i] < 0.0f)
      throw std::invalid_argument("negative density at index " + std::to_string(i));
  }
}

CellIndex DensityMap::cell_index(std::size_t flat) const {
  CellIndex c;
  c.col = flat % width();
  flat /= width();
  c.row = flat % height();
  c.slice = flat / height();
  return c;
}

Point DensityMap::cell_center(std::size_t flat) const {
  CellIndex c = cell_index(flat);
  return {static_cast<double>(c.col), static_cast<double>(c.row),
          static_cast<double>(c.slice)};
}

bool nearest_cell(const DensityMap& map, const Point& p, CellIndex& out) {
  const double col = std::round(p[0]);
  const double row = std::round(p[1]);
  const double slice = map.ndim() == 3 ? std::round(p[2]) : 0.0;
  if (col < 0 || row < 0 || slice < 0) return false;
  if (col >= static_cast<double>(map.width()) || row >= static_cast<double>(map.height()) ||
      slice >= static_cast<double>(map.depth()))
    return false;
  out = {static_cast<std::size_t>(slice), static_cast<std::size_t>(row),
         static_cast<std::size_t>(col)};
  return true;
}

void validate(const PointSet& points) {
  if (points.ndim != 2 && points.ndim != 3)
    throw std::invalid_argument("point set must be 2D or 3D");
  for (std::size_t i = 0; i < points.size(); ++i)
    for (int a = 0; a < points.ndim; ++a)
      if (!std::isfinite(points.points[i][a]))
        throw std::invalid_argument("non-finite coordinate in point " + std::to_string(i));
}

// ---------------------------------------------------------------------------
// KernelSpec

KernelSpec::KernelSpec(int ndim, std::span<const double> sigma_row_major) : ndim_(ndim) {
  if (ndim != 2 && ndim != 3) throw std::invalid_argument("kernel must be 2D or 3D");
  const auto d = static_cast<std::size_t>(ndim);
  if (sigma_row_major.size() != d * d)
    throw std::invalid_argument("kernel covariance needs " + std::to_string(d * d) +
                                " entries");
  Eigen::MatrixXd m(ndim, ndim);
  for (int i = 0; i < ndim; ++i)
    for (int j = 0; j < ndim; ++j) {
      const double v = sigma_row_major[static_cast<std::size_t>(i * ndim + j)];
      if (!std::isfinite(v)) throw std::invalid_argument("kernel covariance not finite");
      m(i, j) = v;
    }
  const double scale = m.cwiseAbs().maxCoeff();
  for (int i = 0; i < ndim; ++i)
    for (int j = i + 1; j < ndim; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-9 * scale)
        throw std::invalid_argument("kernel covariance is not symmetric");
  m = 0.5 * (m + m.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) throw std::invalid_argument("kernel covariance is not positive definite");
  if (hi / lo > 1e8) throw std::invalid_argument("kernel covariance is ill-conditioned");

  Eigen::LLT<Eigen::MatrixXd> llt(m);
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(ndim, ndim));
  const Eigen::MatrixXd l = llt.matrixL();
  for (int i = 0; i < ndim; ++i)
    for (int j = 0; j < ndim; ++j) {
      sigma_[3 * i + j] = m(i, j);
      inverse_[3 * i + j] = inv(i, j);
      chol_[3 * i + j] = l(i, j);
    }
  det_ = m.determinant();
  max_eig_ = hi;
  peak_ = std::pow(2.0 * std::numbers::pi, -0.5 * ndim) / std::sqrt(det_);
}

KernelSpec KernelSpec::isotropic(int ndim, double stddev) {
  if (!(stddev > 0.0)) throw std::invalid_argument("kernel sigma must be positive");
  std::vector<double> s(static_cast<std::size_t>(ndim), stddev);
  return diagonal(s);
}

KernelSpec KernelSpec::diagonal(std::span<const double> stddevs) {
  const int ndim = static_cast<int>(stddevs.size());
  std::vector<double> m(stddevs.size() * stddevs.size(), 0.0);
  for (int i = 0; i < ndim; ++i) {
    if (!(stddevs[i] > 0.0)) throw std::invalid_argument("kernel sigma must be positive");
    m[static_cast<std::size_t>(i * ndim + i)] = stddevs[i] * stddevs[i];
  }
  return KernelSpec(ndim, m);
}

double KernelSpec::axis_stddev(int i) const { return std::sqrt(sigma(i, i)); }

double KernelSpec::min_axis_stddev() const {
  double m = axis_stddev(0);
  for (int i = 1; i < ndim_; ++i) m = std::min(m, axis_stddev(i));
  return m;
}

double KernelSpec::mahalanobis_squared(double dx, double dy, double dz) const {
  const auto& q = inverse_;
  double r = q[0] * dx * dx + 2.0 * q[1] * dx * dy + q[4] * dy * dy;
  if (ndim_ == 3) r += 2.0 * q[2] * dx * dz + 2.0 * q[5] * dy * dz + q[8] * dz * dz;
  return r;
}

double KernelSpec::mahalanobis_squared(const Point& a, const Point& b) const {
  return mahalanobis_squared(a[0] - b[0], a[1] - b[1], ndim_ == 3 ? a[2] - b[2] : 0.0);
}

// ---------------------------------------------------------------------------
// DMAP

std::vector<std::uint8_t> encode_density_map(const DensityMap& map) {
  const std::size_t header = kDmapFixedHeader + 4 * map.dims().size();
  std::vector<std::uint8_t> out(header + 4 * map.size(), 0);
  std::memcpy(out.data(), "DMAP", 4);
  out[4] = kDmapVersion;
  out[5] = static_cast<std::uint8_t>(map.ndim());
  std::uint8_t* p = out.data() + kDmapFixedHeader;
  for (std::size_t d : map.dims()) {
    if (d > 0xFFFFFFFFu) throw std::invalid_argument("dimension exceeds u32 range");
    put_u32(p, static_cast<std::uint32_t>(d));
    p += 4;
  }
  for (float v : map.values()) {
    put_u32(p, std::bit_cast<std::uint32_t>(v));
    p += 4;
  }
  return out;
}

DensityMap decode_density_map(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kDmapFixedHeader)
    throw FormatError("truncated header: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(bytes.data(), "DMAP", 4) != 0) throw FormatError("bad magic at offset 0");
  if (bytes[4] != kDmapVersion)
    throw FormatError("unsupported version " + std::to_string(bytes[4]) + " at offset 4");
  const std::uint8_t ndim = bytes[5];
  if (ndim != 2 && ndim != 3)
    throw FormatError("unsupported ndim " + std::to_string(ndim) + " at offset 5");
  if (bytes[6] != 0 || bytes[7] != 0)
    throw FormatError("nonzero reserved byte at offset " + std::string(bytes[6] ? "6" : "7"));

  const std::size_t header = kDmapFixedHeader + 4u * ndim;
  if (bytes.size() < header)
    throw FormatError("truncated dims at offset " + std::to_string(bytes.size()));
  std::vector<std::size_t> dims(ndim);
  for (std::size_t i = 0; i < ndim; ++i) {
    dims[i] = get_u32(bytes.data() + kDmapFixedHeader + 4 * i);
    if (dims[i] == 0)
      throw FormatError("zero dimension at offset " + std::to_string(kDmapFixedHeader + 4 * i));
  }
  const std::size_t count = product(dims);
  const std::size_t expected = header + 4 * count;
  if (bytes.size() < expected)
    throw FormatError("truncated payload: expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(bytes.size()) + " (offset " +
                      std::to_string(bytes.size()) + ")");
  if (bytes.size() > expected)
    throw FormatError("trailing bytes after offset " + std::to_string(expected));

  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = header + 4 * i;
    const float v = std::bit_cast<float>(get_u32(bytes.data() + off));
    if (!std::isfinite(v))
      throw FormatError("non-finite value at index " + std::to_string(i) + " (offset " +
                        std::to_string(off) + ")");
    if (v < 0.0f)
      throw FormatError("negative value at index " + std::to_string(i) + " (offset " +
                        std::to_string(off) + ")");
    values[i] = v;
  }
  return DensityMap(std::move(dims), std::move(values));
}

DensityMap read_density_map(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  try {
    return decode_density_map(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()),
                                        raw.size()));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_density_map(const DensityMap& map, const std::filesystem::path& path) {
  const auto bytes = encode_density_map(map);
  write_file(path, bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// Points CSV

PointSet parse_points(const std::string& text) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (lines.empty() || trim_cr(lines[0]).empty()) throw FormatError("line 1: missing header");
  PointSet ps;
  const std::string_view header = trim_cr(lines[0]);
  if (header == "x,y") {
    ps.ndim = 2;
  } else if (header == "x,y,z") {
    ps.ndim = 3;
  } else {
    throw FormatError("line 1: header must be \"x,y\" or \"x,y,z\", got \"" +
                      std::string(header) + "\"");
  }
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string_view line = trim_cr(lines[ln]);
    if (line.empty()) {
      if (ln + 1 == lines.size()) break;
      throw FormatError("line " + std::to_string(ln + 1) + ": empty line");
    }
    const auto fields = split(line, ',');
    if (fields.size() != static_cast<std::size_t>(ps.ndim))
      throw FormatError("line " + std::to_string(ln + 1) + ": expected " +
                        std::to_string(ps.ndim) + " fields, got " +
                        std::to_string(fields.size()));
    Point p{0.0, 0.0, 0.0};
    for (std::size_t a = 0; a < fields.size(); ++a) {
      std::string_view f = fields[a];
      if (!f.empty() && f.front() == '+') f.remove_prefix(1);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size() || f.empty() || !std::isfinite(v))
        throw FormatError("line " + std::to_string(ln + 1) + ": non-numeric field \"" +
                          std::string(fields[a]) + "\"");
      p[a] = v;
    }
    ps.points.push_back(p);
  }
  return ps;
}

std::string format_points(const PointSet& points) {
  validate(points);
  std::string out = points.ndim == 3 ? "x,y,z\n" : "x,y\n";
  char buf[128];
  for (const Point& p : points.points) {
    if (points.ndim == 3)
      std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", p[0], p[1], p[2]);
    else
      std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", p[0], p[1]);
    out += buf;
  }
  return out;
}

PointSet read_points(const std::filesystem::path& path) {
  try {
    return parse_points(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_points(const PointSet& points, const std::filesystem::path& path) {
  const std::string text = format_points(points);
  write_file(path, text.data(), text.size());
}

// ---------------------------------------------------------------------------
// Manifest

DatasetManifest read_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&](std::string_view s) {
    std::filesystem::path p{std::string(s)};
    return p.is_absolute() ? p : base / p;
  };
  DatasetManifest m;
  std::set<std::string> seen;
  const auto lines = split(text, '\n');
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string_view line = trim_cr(lines[ln]);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 4)
      throw FormatError(path.string() + ": line " + std::to_string(ln + 1) +
                        ": expected 4 tab-separated fields, got " +
                        std::to_string(fields.size()));
    ManifestEntry e{std::string(fields[0]), resolve(fields[1]), resolve(fields[2]),
                    resolve(fields[3])};
    if (!seen.insert(e.id).second)
      throw FormatError(path.string() + ": line " + std::to_string(ln + 1) +
                        ": duplicate id \"" + e.id + "\"");
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  const std::filesystem::path base = path.parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    if (base.empty()) return p.generic_string();
    const auto r = p.lexically_relative(base);
    return r.empty() ? p.generic_string() : r.generic_string();
  };
  std::set<std::string> seen;
  std::string out = "# id\tgt_points\tgt_density\tpred_density\n";
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.id).second) throw std::invalid_argument("duplicate manifest id " + e.id);
    out += e.id + '\t' + rel(e.gt_points_path) + '\t' + rel(e.gt_density_path) + '\t' +
           rel(e.pred_density_path) + '\n';
  }
  write_file(path, out.data(), out.size());
}

}  // namespace dmc
