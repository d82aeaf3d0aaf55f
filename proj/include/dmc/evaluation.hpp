// Detection and counting metrics: radius-gated one-to-one matching,
// precision / recall / F-measure, MAE and count histograms.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmc/counting.hpp"
#include "dmc/grid.hpp"

namespace dmc {

struct MatchPair {
  std::size_t pred = 0;
  std::size_t gt = 0;
  double distance = 0.0;
};

struct Matching {
  double radius = 0.0;
  /// Ascending distance.
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> unmatched_pred;
  std::vector<std::size_t> unmatched_gt;

  std::size_t tp() const { return pairs.size(); }
  std::size_t fp() const { return unmatched_pred.size(); }
  std::size_t fn() const { return unmatched_gt.size(); }
};

/// Greedy matching of pairs closer than `radius` (strict), shortest first;
/// ties go to the smaller pred index, then the smaller gt index.
Matching match_points(const PointSet& pred, const PointSet& gt, double radius);

/// 1 when tp + fp == 0.
double precision(std::size_t tp, std::size_t fp);
/// 1 when tp + fn == 0.
double recall(std::size_t tp, std::size_t fn);
/// 0 when p + r == 0.
double f_measure(double p, double r);

enum class MethodKind { dma, cca_t, iodm };

struct MethodSpec {
  MethodKind kind = MethodKind::dma;
  /// Only used by cca-t.
  double threshold = 0.0;

  std::string name() const;
};

struct MethodImageResult {
  double pred_count = 0.0;
  /// False for counting-only methods (IoDM); tp/fp/fn are then unused.
  bool localized = true;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct ImageResult {
  std::string id;
  std::size_t gt_count = 0;
  std::map<std::string, MethodImageResult> methods;
};

struct MethodAggregate {
  bool localized = true;
  double mae = 0.0;
  /// MAE of the rounded count (differs from mae only for IoDM).
  double mae_rounded = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  // Micro-averaged over pooled tp/fp/fn.
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  // Mean of per-image values.
  double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
};

struct CountHistogram {
  std::vector<std::int64_t> bins;
  /// Series name ("gt" or a method) -> frequency per bin.
  std::map<std::string, std::vector<std::size_t>> counts;
};

struct MetricsReport {
  double radius = 0.0;
  std::vector<std::string> methods;
  std::vector<ImageResult> per_image;
  std::map<std::string, MethodAggregate> aggregate;
  CountHistogram histogram;
  /// Per-method notes (e.g. the CCA-T threshold and how it was chosen).
  std::map<std::string, std::string> notes;
};

/// Throws std::invalid_argument for an empty dataset.
MetricsReport compute_metrics(const std::vector<ImageResult>& images,
                              const std::vector<std::string>& methods, double radius);

struct LoadedImage {
  std::string id;
  PointSet gt;
  DensityMap pred;
};

/// Loads ground-truth points and predicted maps; errors name the file.
std::vector<LoadedImage> load_images(const DatasetManifest& manifest, unsigned threads = 1);

struct EvalOptions {
  DmaOptions dma;
  unsigned threads = 1;
};

MetricsReport evaluate_images(const std::vector<LoadedImage>& images, const KernelSpec& kernel,
                              const std::vector<MethodSpec>& methods, double radius,
                              std::uint64_t seed, const EvalOptions& options = {});

MetricsReport evaluate_manifest(const DatasetManifest& manifest, const KernelSpec& kernel,
                                const std::vector<MethodSpec>& methods, double radius,
                                std::uint64_t seed, const EvalOptions& options = {});

inline constexpr int kReportVersion = 1;

nlohmann::json report_to_json(const MetricsReport& report, bool macro = false);
/// Plain-text table with one row per method; "-" where a method has no centers.
std::string report_to_table(const MetricsReport& report, bool macro = false);

}  // namespace dmc
