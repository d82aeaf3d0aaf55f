// dmc: density-map counting and localization from the command line.
//
// Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or configuration.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dmc/baselines.hpp"
#include "dmc/counting.hpp"
#include "dmc/evaluation.hpp"
#include "dmc/gaussian.hpp"
#include "dmc/grid.hpp"
#include "dmc/localization.hpp"
#include "dmc/synthesis.hpp"

namespace fs = std::filesystem;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct Globals {
  std::uint64_t seed = 0;
  std::optional<double> sigma;
  std::optional<double> sigma_z;
  std::string connectivity = "full";
  unsigned threads = 1;
};

dmc::Connectivity connectivity_of(const Globals& g) {
  return g.connectivity == "face" ? dmc::Connectivity::face : dmc::Connectivity::full;
}

dmc::KernelSpec make_kernel(const Globals& g, int ndim, const std::vector<double>& defaults = {}) {
  std::vector<double> sd;
  if (g.sigma) {
    sd.assign(static_cast<std::size_t>(ndim), *g.sigma);
  } else if (static_cast<int>(defaults.size()) == ndim) {
    sd = defaults;
  } else {
    sd.assign(static_cast<std::size_t>(ndim), 2.0);
  }
  if (ndim == 3 && g.sigma_z) sd[2] = *g.sigma_z;
  return dmc::KernelSpec::diagonal(sd);
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v <= 0) throw std::invalid_argument(part);
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("invalid --dims \"" + text + "\" (expected HxW or DxHxW)");
    }
  }
  if (dims.size() != 2 && dims.size() != 3)
    throw UsageError("invalid --dims \"" + text + "\" (expected HxW or DxHxW)");
  return dims;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw dmc::IoError("cannot write " + path.string());
  out << text;
  if (!out) throw dmc::IoError("write failed for " + path.string());
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// --- synth -----------------------------------------------------------------

struct SynthArgs {
  std::string preset = "ellipse-like";
  std::size_t n = 10;
  std::string out;
  std::string dims;
  std::optional<double> count_mean, count_std, overlap_min, overlap_max, min_sep;
  std::string noise = "default";
  std::optional<double> gain_std, bump_rate, white_noise, blur;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  dmc::Preset p = dmc::preset(a.preset);
  if (!a.dims.empty()) p.scene.dims = parse_dims(a.dims);
  if (a.count_mean) p.scene.count_mean = *a.count_mean;
  if (a.count_std) p.scene.count_stddev = *a.count_std;
  if (a.overlap_min) p.scene.overlap_min = *a.overlap_min;
  if (a.overlap_max) p.scene.overlap_max = *a.overlap_max;
  if (a.min_sep) p.scene.min_separation = *a.min_sep;
  const int ndim = static_cast<int>(p.scene.dims.size());
  std::vector<double> defaults = p.sigma;
  if (static_cast<int>(defaults.size()) != ndim) {
    // Preset of the other dimensionality: keep its in-plane sigma, halve z.
    defaults.assign(static_cast<std::size_t>(ndim), p.sigma[0]);
    if (ndim == 3) defaults[2] = p.sigma[0] / 2.0;
  }
  Globals kg = g;
  if (g.sigma && ndim == 3 && !g.sigma_z && !p.sigma.empty()) kg.sigma_z = *g.sigma / 2.0;
  const dmc::KernelSpec kernel = make_kernel(kg, ndim, defaults);

  dmc::NoiseConfig noise = a.noise == "none" ? dmc::NoiseConfig::none() : dmc::NoiseConfig{};
  if (a.gain_std) noise.gain_stddev = *a.gain_std;
  if (a.bump_rate) noise.bump_rate = *a.bump_rate;
  if (a.white_noise) noise.white_noise_stddev = *a.white_noise;
  if (a.blur) noise.blur_stddev = *a.blur;

  const fs::path out(a.out);
  dmc::generate_dataset(p.scene, noise, kernel, a.n, g.seed, out, g.threads);
  std::cout << (out / "manifest.tsv").string() << "\n";
  return 0;
}

// --- render ----------------------------------------------------------------

int run_render(const Globals& g, const std::string& points_path, const std::string& dims,
               const std::string& out) {
  const dmc::PointSet pts = dmc::read_points(points_path);
  const auto d = parse_dims(dims);
  if (static_cast<int>(d.size()) != pts.ndim)
    throw UsageError("--dims has " + std::to_string(d.size()) + " axes but points are " +
                     std::to_string(pts.ndim) + "D");
  const dmc::KernelSpec kernel = make_kernel(g, pts.ndim);
  dmc::write_density_map(dmc::render_density_map(pts, kernel, d), out);
  std::cout << "wrote " << out << " (" << pts.size() << " kernels)\n";
  return 0;
}

// --- analyze ---------------------------------------------------------------

struct AnalyzeArgs {
  std::string method = "dma";
  std::string input;
  std::optional<double> threshold;
  std::string output;
  std::size_t samples_per_object = 2000;
  std::size_t candidates = 48;
};

int run_analyze(const Globals& g, const AnalyzeArgs& a) {
  if (a.method == "cca-t" && !a.threshold) throw UsageError("cca-t requires --threshold");
  const dmc::DensityMap map = dmc::read_density_map(a.input);
  const dmc::KernelSpec kernel = make_kernel(g, map.ndim());
  fs::path out = a.output;
  if (out.empty()) out = fs::path(a.input).replace_extension(".centers.csv");

  if (a.method == "iodm") {
    std::cout << "count: " << fmt("%.3f", dmc::count_iodm(map)) << "\n";
    return 0;
  }
  if (a.method == "cca-t") {
    const dmc::CcatResult r = dmc::cca_t(map, *a.threshold, connectivity_of(g));
    dmc::write_points(r.centers, out);
    std::cout << "count: " << r.count << "\n";
    std::cout << "threshold: " << fmt("%.9g", r.threshold) << "\n";
    std::cout << "centers: " << out.string() << "\n";
    return 0;
  }
  dmc::DmaOptions opts;
  opts.connectivity = connectivity_of(g);
  opts.samples_per_object = a.samples_per_object;
  opts.n_candidates = a.candidates;
  const dmc::DmaAnalysis r = dmc::analyze_dma(map, kernel, g.seed, opts);
  for (const auto& w : r.count.warnings) std::cerr << "warning: " << w << "\n";
  dmc::write_points(r.centers, out);
  std::cout << "count: " << r.count.total_count << "\n";
  std::cout << "threshold: " << fmt("%.9g", r.count.selection.chosen_t) << "\n";
  std::cout << "centers: " << out.string() << "\n";
  return 0;
}

// --- sweep / evaluate / compare ----------------------------------------------

struct EvalArgs {
  std::string manifest;
  std::string validation;
  std::string methods = "dma,cca-t,iodm";
  std::optional<double> threshold;
  double radius = 5.0;
  std::size_t grid = 32;
  std::string objective = "f1";
  std::string out = "report";
  bool macro = false;
  std::size_t samples_per_object = 2000;
};

dmc::SweepResult sweep_for(const Globals& g, const EvalArgs& a, const dmc::KernelSpec& kernel,
                           const std::vector<dmc::LoadedImage>& images) {
  const auto grid = dmc::default_threshold_grid(kernel, a.grid);
  const auto objective = a.objective == "mae" ? dmc::SweepObjective::mae : dmc::SweepObjective::f1;
  if (a.validation.empty())
    return dmc::sweep_threshold(images, grid, a.radius, objective, connectivity_of(g), g.threads);
  const auto val = dmc::load_images(dmc::read_manifest(a.validation), g.threads);
  if (val.empty()) throw UsageError("validation manifest is empty");
  return dmc::sweep_threshold(val, grid, a.radius, objective, connectivity_of(g), g.threads);
}

std::vector<dmc::LoadedImage> load_nonempty(const Globals& g, const std::string& manifest) {
  auto images = dmc::load_images(dmc::read_manifest(manifest), g.threads);
  if (images.empty()) throw UsageError("manifest " + manifest + " has no entries");
  return images;
}

int run_sweep(const Globals& g, const EvalArgs& a) {
  const auto images = load_nonempty(g, a.manifest);
  const dmc::KernelSpec kernel = make_kernel(g, images.front().pred.ndim());
  const dmc::SweepResult r = sweep_for(g, a, kernel, images);
  std::cout << "best threshold: " << fmt("%.9g", r.best_threshold) << "\n";
  std::cout << "f1: " << fmt("%.6f", r.best.f1) << "\n";
  std::cout << "mae: " << fmt("%.6f", r.best.mae) << "\n";
  return 0;
}

int run_evaluate(const Globals& g, const EvalArgs& a, bool compare) {
  const auto images = load_nonempty(g, a.manifest);
  const dmc::KernelSpec kernel = make_kernel(g, images.front().pred.ndim());

  std::vector<dmc::MethodSpec> methods;
  std::map<std::string, std::string> notes;
  std::vector<std::string> names;
  if (compare) {
    names = {"dma", "cca-t", "iodm"};
  } else {
    std::stringstream ss(a.methods);
    std::string m;
    while (std::getline(ss, m, ',')) names.push_back(m);
  }
  for (const std::string& name : names) {
    dmc::MethodSpec spec;
    if (name == "dma") {
      spec.kind = dmc::MethodKind::dma;
    } else if (name == "iodm") {
      spec.kind = dmc::MethodKind::iodm;
    } else if (name == "cca-t") {
      spec.kind = dmc::MethodKind::cca_t;
      if (a.threshold) {
        spec.threshold = *a.threshold;
        notes["cca-t"] = "threshold " + fmt("%.9g", spec.threshold) + " (given)";
      } else {
        const dmc::SweepResult r = sweep_for(g, a, kernel, images);
        spec.threshold = r.best_threshold;
        notes["cca-t"] = "threshold " + fmt("%.9g", spec.threshold) + " (best " + a.objective +
                         " over " + std::to_string(a.grid) + "-point sweep on the " +
                         (a.validation.empty() ? "evaluated" : "validation") + " set)";
      }
    } else {
      throw UsageError("unknown method \"" + name + "\" (expected dma, cca-t or iodm)");
    }
    methods.push_back(spec);
  }

  dmc::EvalOptions opts;
  opts.threads = g.threads;
  opts.dma.connectivity = connectivity_of(g);
  opts.dma.samples_per_object = a.samples_per_object;
  dmc::MetricsReport report = dmc::evaluate_images(images, kernel, methods, a.radius, g.seed, opts);
  report.notes = notes;

  const std::string table = dmc::report_to_table(report, a.macro);
  const fs::path prefix(a.out);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  write_text(fs::path(a.out + ".json"), dmc::report_to_json(report, a.macro).dump(2) + "\n");
  write_text(fs::path(a.out + ".txt"), table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Count and localize objects in density maps"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->default_val(0);
  app.add_option("--sigma", g.sigma, "Kernel standard deviation in pixels (isotropic)")
      ->check(CLI::PositiveNumber);
  app.add_option("--sigma-z", g.sigma_z, "Kernel standard deviation along z (3D)")
      ->check(CLI::PositiveNumber);
  app.add_option("--connectivity", g.connectivity, "Component connectivity")
      ->check(CLI::IsMember({"full", "face"}))
      ->default_val("full");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->default_val(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--preset", sa.preset)->check(CLI::IsMember({"vgg-like", "ellipse-like", "3d-small"}))->default_val("ellipse-like");
  synth->add_option("--n", sa.n, "Number of images")->default_val(10);
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--dims", sa.dims, "HxW or DxHxW");
  synth->add_option("--count-mean", sa.count_mean);
  synth->add_option("--count-std", sa.count_std);
  synth->add_option("--overlap-min", sa.overlap_min);
  synth->add_option("--overlap-max", sa.overlap_max);
  synth->add_option("--min-sep", sa.min_sep, "Minimum separation (sigma units)");
  synth->add_option("--noise", sa.noise)->check(CLI::IsMember({"default", "none"}))->default_val("default");
  synth->add_option("--gain-std", sa.gain_std);
  synth->add_option("--bump-rate", sa.bump_rate, "Background bumps per 1000 cells");
  synth->add_option("--white-noise", sa.white_noise);
  synth->add_option("--blur", sa.blur);

  std::string render_points, render_dims, render_out;
  auto* render = app.add_subcommand("render", "Render a points CSV into a DMAP density map");
  render->add_option("--points", render_points)->required();
  render->add_option("--dims", render_dims, "HxW or DxHxW")->required();
  render->add_option("--out", render_out)->required();

  AnalyzeArgs aa;
  auto* analyze = app.add_subcommand("analyze", "Count (and localize) objects in one map");
  analyze->add_option("--method", aa.method)->check(CLI::IsMember({"dma", "cca-t", "iodm"}))->default_val("dma");
  analyze->add_option("--input", aa.input)->required();
  analyze->add_option("--threshold", aa.threshold, "CCA-T threshold");
  analyze->add_option("--output", aa.output, "Centers CSV (default: <input>.centers.csv)");
  analyze->add_option("--samples-per-object", aa.samples_per_object)->default_val(2000);
  analyze->add_option("--candidates", aa.candidates, "Threshold candidates")->default_val(48);

  EvalArgs ea;
  auto add_eval = [&](CLI::App* sub, bool methods) {
    sub->add_option("--manifest", ea.manifest)->required();
    sub->add_option("--validation", ea.validation, "Manifest used for the CCA-T sweep");
    sub->add_option("--radius", ea.radius, "Match radius in pixels")->default_val(5.0);
    sub->add_option("--grid", ea.grid, "Sweep grid size")->default_val(32);
    sub->add_option("--sweep-objective", ea.objective)->check(CLI::IsMember({"f1", "mae"}))->default_val("f1");
    if (methods) {
      sub->add_option("--threshold", ea.threshold, "CCA-T threshold (default: swept)");
      sub->add_option("--out", ea.out, "Report path prefix")->default_val("report");
      sub->add_flag("--macro", ea.macro, "Report macro-averaged P/R/F");
      sub->add_option("--samples-per-object", ea.samples_per_object)->default_val(2000);
    }
  };
  auto* sweep = app.add_subcommand("sweep", "Find the best CCA-T threshold on a manifest");
  add_eval(sweep, false);
  auto* evaluate = app.add_subcommand("evaluate", "Score methods against ground truth");
  add_eval(evaluate, true);
  evaluate->add_option("--methods", ea.methods, "Comma-separated: dma,cca-t,iodm")->default_val("dma,cca-t,iodm");
  auto* compare = app.add_subcommand("compare", "Run DMA, CCA-T and IoDM and tabulate");
  add_eval(compare, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*synth) return run_synth(g, sa);
    if (*render) return run_render(g, render_points, render_dims, render_out);
    if (*analyze) return run_analyze(g, aa);
    if (*sweep) return run_sweep(g, ea);
    if (*evaluate) return run_evaluate(g, ea, false);
    if (*compare) return run_evaluate(g, ea, true);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
