#include "dmc/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "dmc/baselines.hpp"
#include "dmc/localization.hpp"
#include "dmc/parallel.hpp"

namespace dmc {

Matching match_points(const PointSet& pred, const PointSet& gt, double radius) {
  if (pred.ndim != gt.ndim && !pred.empty() && !gt.empty())
    throw std::invalid_argument("cannot match point sets of different dimensionality");
  const int d = std::max(pred.ndim, gt.ndim);
  Matching m;
  m.radius = radius;
  std::vector<MatchPair> candidates;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < gt.size(); ++j) {
      double s = 0.0;
      for (int a = 0; a < d; ++a) {
        const double diff = pred.points[i][a] - gt.points[j][a];
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      if (dist < radius) candidates.push_back({i, j, dist});
    }
  std::sort(candidates.begin(), candidates.end(), [](const MatchPair& a, const MatchPair& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });
  std::vector<bool> pred_used(pred.size(), false), gt_used(gt.size(), false);
  for (const MatchPair& c : candidates) {
    if (pred_used[c.pred] || gt_used[c.gt]) continue;
    pred_used[c.pred] = gt_used[c.gt] = true;
    m.pairs.push_back(c);
  }
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (!pred_used[i]) m.unmatched_pred.push_back(i);
  for (std::size_t j = 0; j < gt.size(); ++j)
    if (!gt_used[j]) m.unmatched_gt.push_back(j);
  return m;
}

double precision(std::size_t tp, std::size_t fp) {
  return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double recall(std::size_t tp, std::size_t fn) {
  return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double f_measure(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

std::string MethodSpec::name() const {
  switch (kind) {
    case MethodKind::dma: return "dma";
    case MethodKind::cca_t: return "cca-t";
    case MethodKind::iodm: return "iodm";
  }
  return "unknown";
}

MetricsReport compute_metrics(const std::vector<ImageResult>& images,
                              const std::vector<std::string>& methods, double radius) {
  if (images.empty()) throw std::invalid_argument("cannot compute metrics of an empty dataset");
  MetricsReport report;
  report.radius = radius;
  report.methods = methods;
  report.per_image = images;

  const auto n = static_cast<double>(images.size());
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = std::numeric_limits<std::int64_t>::min();
  auto widen = [&](std::int64_t v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  };
  for (const ImageResult& img : images) widen(static_cast<std::int64_t>(img.gt_count));

  for (const std::string& name : methods) {
    MethodAggregate agg;
    for (const ImageResult& img : images) {
      auto it = img.methods.find(name);
      if (it == img.methods.end())
        throw std::invalid_argument("image " + img.id + " has no result for method " + name);
      const MethodImageResult& r = it->second;
      const auto gt = static_cast<double>(img.gt_count);
      agg.localized = r.localized;
      agg.mae += std::abs(r.pred_count - gt);
      agg.mae_rounded += std::abs(std::round(r.pred_count) - gt);
      widen(static_cast<std::int64_t>(std::round(r.pred_count)));
      if (!r.localized) continue;
      agg.tp += r.tp;
      agg.fp += r.fp;
      agg.fn += r.fn;
      const double p = precision(r.tp, r.fp), rc = recall(r.tp, r.fn);
      agg.macro_precision += p;
      agg.macro_recall += rc;
      agg.macro_f1 += f_measure(p, rc);
    }
    agg.mae /= n;
    agg.mae_rounded /= n;
    agg.macro_precision /= n;
    agg.macro_recall /= n;
    agg.macro_f1 /= n;
    agg.precision = precision(agg.tp, agg.fp);
    agg.recall = recall(agg.tp, agg.fn);
    agg.f1 = f_measure(agg.precision, agg.recall);
    report.aggregate[name] = agg;
  }

  CountHistogram& h = report.histogram;
  for (std::int64_t b = lo; b <= hi; ++b) h.bins.push_back(b);
  auto add = [&](const std::string& series, std::int64_t value) {
    auto& v = h.counts[series];
    v.resize(h.bins.size(), 0);
    ++v[static_cast<std::size_t>(value - lo)];
  };
  for (const ImageResult& img : images) {
    add("gt", static_cast<std::int64_t>(img.gt_count));
    for (const std::string& name : methods)
      add(name, static_cast<std::int64_t>(std::round(img.methods.at(name).pred_count)));
  }
  return report;
}

std::vector<LoadedImage> load_images(const DatasetManifest& manifest, unsigned threads) {
  std::vector<LoadedImage> images(manifest.size());
  parallel_for(manifest.size(), threads, [&](std::size_t i) {
    const ManifestEntry& e = manifest.entries[i];
    images[i].id = e.id;
    images[i].gt = read_points(e.gt_points_path);
    images[i].pred = read_density_map(e.pred_density_path);
    if (images[i].gt.ndim != images[i].pred.ndim())
      throw FormatError(e.gt_points_path.string() + ": points are " +
                        std::to_string(images[i].gt.ndim) + "D but " +
                        e.pred_density_path.string() + " is " +
                        std::to_string(images[i].pred.ndim()) + "D");
  });
  for (std::size_t i = 1; i < images.size(); ++i)
    if (images[i].pred.ndim() != images[0].pred.ndim())
      throw FormatError(manifest.entries[i].pred_density_path.string() +
                        ": dimensionality differs from the rest of the manifest");
  return images;
}

MetricsReport evaluate_images(const std::vector<LoadedImage>& images, const KernelSpec& kernel,
                              const std::vector<MethodSpec>& methods, double radius,
                              std::uint64_t seed, const EvalOptions& options) {
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (!seen.insert(m.name()).second)
      throw std::invalid_argument("method listed twice: " + m.name());
    names.push_back(m.name());
  }
  if (!images.empty() && images.front().pred.ndim() != kernel.ndim())
    throw std::invalid_argument("maps and kernel disagree on dimensionality");

  std::vector<ImageResult> results(images.size());
  parallel_for(images.size(), options.threads, [&](std::size_t i) {
    const LoadedImage& img = images[i];
    ImageResult& out = results[i];
    out.id = img.id;
    out.gt_count = img.gt.size();
    for (const MethodSpec& m : methods) {
      MethodImageResult r;
      if (m.kind == MethodKind::iodm) {
        r.localized = false;
        r.pred_count = count_iodm(img.pred);
      } else {
        PointSet centers;
        if (m.kind == MethodKind::dma) {
          DmaAnalysis a = analyze_dma(img.pred, kernel, seed ^ i, options.dma);
          r.pred_count = static_cast<double>(a.count.total_count);
          centers = std::move(a.centers);
        } else {
          CcatResult c = cca_t(img.pred, m.threshold, options.dma.connectivity);
          r.pred_count = static_cast<double>(c.count);
          centers = std::move(c.centers);
        }
        const Matching match = match_points(centers, img.gt, radius);
        r.tp = match.tp();
        r.fp = match.fp();
        r.fn = match.fn();
      }
      out.methods[m.name()] = r;
    }
  });
  return compute_metrics(results, names, radius);
}

MetricsReport evaluate_manifest(const DatasetManifest& manifest, const KernelSpec& kernel,
                                const std::vector<MethodSpec>& methods, double radius,
                                std::uint64_t seed, const EvalOptions& options) {
  return evaluate_images(load_images(manifest, options.threads), kernel, methods, radius, seed,
                         options);
}

nlohmann::json report_to_json(const MetricsReport& report, bool macro) {
  using nlohmann::json;
  json j;
  j["report_version"] = kReportVersion;
  j["radius"] = report.radius;
  j["averaging"] = "micro";
  j["methods"] = report.methods;
  if (!report.notes.empty()) j["notes"] = report.notes;

  json per_image = json::array();
  for (const ImageResult& img : report.per_image) {
    json e;
    e["id"] = img.id;
    e["gt_count"] = img.gt_count;
    for (const auto& name : report.methods) {
      const MethodImageResult& r = img.methods.at(name);
      json m;
      m["count"] = r.pred_count;
      if (r.localized) {
        m["tp"] = r.tp;
        m["fp"] = r.fp;
        m["fn"] = r.fn;
      }
      e["methods"][name] = m;
    }
    per_image.push_back(e);
  }
  j["per_image"] = per_image;

  json aggregate = json::object();
  json aggregate_macro = json::object();
  for (const auto& name : report.methods) {
    const MethodAggregate& a = report.aggregate.at(name);
    json m;
    m["mae"] = a.mae;
    m["mae_rounded"] = a.mae_rounded;
    if (a.localized) {
      m["precision"] = a.precision;
      m["recall"] = a.recall;
      m["f1"] = a.f1;
      m["tp"] = a.tp;
      m["fp"] = a.fp;
      m["fn"] = a.fn;
      aggregate_macro[name] = {
          {"precision", a.macro_precision}, {"recall", a.macro_recall}, {"f1", a.macro_f1}};
    }
    aggregate[name] = m;
  }
  j["aggregate"] = aggregate;
  if (macro) j["aggregate_macro"] = aggregate_macro;

  j["histogram"]["bins"] = report.histogram.bins;
  j["histogram"]["counts"] = report.histogram.counts;
  return j;
}

std::string report_to_table(const MetricsReport& report, bool macro) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "Images: %zu   match radius: %g px   P/R/F: %s-averaged (%s)\n",
                report.per_image.size(), report.radius, macro ? "macro" : "micro",
                macro ? "mean of per-image values" : "pooled TP/FP/FN");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-8s %10s %11s %10s %11s\n", "Method", "MAE", "Precision",
                "Recall", "F-measure");
  out += buf;
  for (const auto& name : report.methods) {
    const MethodAggregate& a = report.aggregate.at(name);
    std::string label = name;
    for (char& ch : label) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (a.localized) {
      const double p = macro ? a.macro_precision : a.precision;
      const double r = macro ? a.macro_recall : a.recall;
      const double f = macro ? a.macro_f1 : a.f1;
      std::snprintf(buf, sizeof buf, "%-8s %10.2f %11.2f %10.2f %11.2f\n", label.c_str(), a.mae,
                    100.0 * p, 100.0 * r, 100.0 * f);
    } else {
      std::snprintf(buf, sizeof buf, "%-8s %10.2f %11s %10s %11s\n", label.c_str(), a.mae, "-",
                    "-", "-");
    }
    out += buf;
  }
  for (const auto& [name, note] : report.notes) out += name + ": " + note + "\n";
  return out;
}

}  // namespace dmc
