// affcode: command-line driver for the labeling engine.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "affcode/datamodel.hpp"
#include "affcode/devset_theory.hpp"
#include "affcode/error.hpp"
#include "affcode/pipeline.hpp"
#include "affcode/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace affcode;

void add_model_flags(CLI::App& cmd, PipelineConfig& c) {
  cmd.add_option("--K", c.num_classes, "Number of classes")->capture_default_str();
  cmd.add_option("--tol", c.tol, "Relative log-likelihood tolerance")->capture_default_str();
  cmd.add_option("--max-iter", c.max_iter, "EM iteration cap")->capture_default_str();
  cmd.add_option("--restarts", c.restarts, "EM restarts per model")->capture_default_str();
  cmd.add_option("--var-floor", c.variance_floor, "Gaussian variance floor")->capture_default_str();
  cmd.add_option("--bernoulli-floor", c.bernoulli_floor, "Bernoulli parameter floor")
      ->capture_default_str();
  cmd.add_option("--seed", c.seed, "Global seed")->capture_default_str();
  cmd.add_option("--workers", c.workers, "Threads for base-model fits")->capture_default_str();
}

void add_planted_flags(CLI::App& cmd, PlantedSpec& s, std::string& family) {
  cmd.add_option("--N", s.n, "Instances, dev rows included")->capture_default_str();
  cmd.add_option("--good", s.alpha_good, "Informative functions")->capture_default_str();
  cmd.add_option("--noise", s.alpha_noise, "Noise functions")->capture_default_str();
  cmd.add_option("--separation", s.separation, "Same-class shift in noise deviations")
      ->capture_default_str();
  cmd.add_option("--noise-std", s.noise_std, "Score noise deviation")->capture_default_str();
  cmd.add_option("--dev-per-class", s.dev_per_class, "Dev rows per class")->capture_default_str();
  cmd.add_option("--data-seed", s.seed, "Generator seed")->capture_default_str();
  cmd.add_option("--family", family, "Score family")
      ->check(CLI::IsMember({"gaussian", "beta"}))
      ->capture_default_str();
}

ScoreFamily parse_family(const std::string& name) {
  return name == "beta" ? ScoreFamily::kBeta : ScoreFamily::kGaussian;
}

void emit(const std::optional<fs::path>& path, const std::string& text) {
  if (path) {
    write_file_atomic(*path, text);
  } else {
    std::fputs(text.c_str(), stdout);
  }
}

void report_run(const RunResult& r, const fs::path& output) {
  fmt::print("wrote {} labels (K = {}, alpha = {}) to {}\n", r.manifest.size(),
             r.dev.num_classes(), r.inference.base_fits.size(), output.string());
  if (r.accuracy) {
    fmt::print("non-dev accuracy {:.4f} over {} rows\n", r.accuracy->accuracy(), r.accuracy->rows);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affinity-coding labeling engine"};
  app.require_subcommand(1);

  PipelineConfig config;

  // label
  LabelPaths label_paths;
  std::string label_truth, label_cache;
  auto* label = app.add_subcommand("label", "Label instances from filter maps");
  label->add_option("--manifest", label_paths.manifest, "Dataset manifest")->required();
  label->add_option("--filtermaps", label_paths.filtermaps, "Directory of .ggfm files")
      ->required();
  label->add_option("--devset", label_paths.devset, "Dev set (id<TAB>class)")->required();
  label->add_option("--out", label_paths.output, "Label file to write")->required();
  label->add_option("--truth", label_truth, "Ground truth for an accuracy report");
  label->add_option("--cache-dir", label_cache, "Cache affinity matrix and base predictions");
  label->add_option("--Z", config.z, "Prototypes per image and layer")->capture_default_str();
  add_model_flags(*label, config);

  // label-from-affinity
  AffinityPaths aff_paths;
  std::string aff_truth, aff_cache;
  auto* from_aff =
      app.add_subcommand("label-from-affinity", "Label instances from a stored affinity matrix");
  from_aff->add_option("--affinity", aff_paths.affinity, "GGAM affinity file")->required();
  from_aff->add_option("--manifest", aff_paths.manifest, "Dataset manifest")->required();
  from_aff->add_option("--devset", aff_paths.devset, "Dev set (id<TAB>class)")->required();
  from_aff->add_option("--out", aff_paths.output, "Label file to write")->required();
  from_aff->add_option("--truth", aff_truth, "Ground truth for an accuracy report");
  from_aff->add_option("--cache-dir", aff_cache, "Dump per-function predictions here");
  add_model_flags(*from_aff, config);

  // theory
  int theory_k = 2;
  double eta = 0.0;
  std::optional<std::size_t> theory_d;
  std::optional<double> theory_p;
  std::optional<std::size_t> curve;
  std::optional<fs::path> theory_csv;
  std::size_t max_per_class = kDefaultMaxPerClass;
  bool literal_rho = false;
  auto* theory = app.add_subcommand("theory", "Dev-set size bound queries");
  theory->add_option("--K", theory_k, "Number of classes")->required();
  theory->add_option("--eta", eta, "Probability a dev example lands in its cluster")
      ->required()
      ->check(CLI::Range(0.0, 1.0));
  auto* d_opt = theory->add_option("--d", theory_d, "Dev examples per class");
  auto* p_opt = theory->add_option("--p", theory_p, "Target mapping confidence")
                    ->check(CLI::Range(0.0, 1.0));
  auto* curve_opt = theory->add_option("--curve", curve, "Tabulate the bound for d = 1..D");
  d_opt->excludes(p_opt)->excludes(curve_opt);
  p_opt->excludes(curve_opt);
  theory->add_option("--max-per-class", max_per_class, "Search cap for --p")->capture_default_str();
  theory->add_flag("--literal-rho", literal_rho, "Use rho = eta / (K - 1)");
  theory->add_option("--csv", theory_csv, "Write the CSV here instead of stdout");

  // synth
  PlantedSpec synth_spec;
  std::string synth_family = "gaussian";
  fs::path synth_dir;
  auto* synth = app.add_subcommand("synth", "Write a planted affinity instance");
  synth->add_option("--out-dir", synth_dir, "Output directory")->required();
  synth->add_option("--K", synth_spec.num_classes, "Planted classes")->capture_default_str();
  add_planted_flags(*synth, synth_spec, synth_family);

  // sweep
  PlantedSpec sweep_spec;
  std::string sweep_family = "gaussian";
  std::string axis_name;
  std::vector<std::size_t> grid;
  std::optional<fs::path> sweep_csv;
  auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy sweep on planted instances");
  sweep_cmd->add_option("--axis", axis_name, "Swept quantity")
      ->required()
      ->check(CLI::IsMember({"dev_size", "num_functions"}));
  sweep_cmd->add_option("--grid", grid, "Comma-separated grid values")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--csv", sweep_csv, "Write the CSV here instead of stdout");
  add_planted_flags(*sweep_cmd, sweep_spec, sweep_family);
  add_model_flags(*sweep_cmd, config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code_for(ErrorKind::kInput);
  }

  try {
    if (*label) {
      if (!label_truth.empty()) label_paths.truth = label_truth;
      if (!label_cache.empty()) label_paths.cache_dir = label_cache;
      report_run(run_label(config, label_paths), label_paths.output);
    } else if (*from_aff) {
      if (!aff_truth.empty()) aff_paths.truth = aff_truth;
      if (!aff_cache.empty()) aff_paths.cache_dir = aff_cache;
      report_run(run_from_affinity(config, aff_paths), aff_paths.output);
    } else if (*theory) {
      const auto rho = literal_rho ? RhoConvention::kLiteral : RhoConvention::kNormalized;
      std::string csv;
      if (theory_p) {
        if (literal_rho) throw InputError("--literal-rho applies to --d and --curve only");
        const auto req = min_devset_size(theory_k, eta, *theory_p, max_per_class);
        fmt::print("K = {}, eta = {}, p = {}: d* = {} per class, m* = {}, bound = {:.6f}\n",
                   theory_k, eta, *theory_p, req.per_class, req.total, req.bound);
        csv = fmt::format("K,eta,p,d_star,m_star,bound\n{},{},{},{},{},{:.17g}\n", theory_k, eta,
                          *theory_p, req.per_class, req.total, req.bound);
      } else if (theory_d) {
        const double pl = pl_correct_class(theory_k, eta, *theory_d, rho);
        const double bound = mapping_probability_bound(theory_k, eta, *theory_d, rho);
        fmt::print("K = {}, eta = {}, d = {}: Pl = {:.6f}, bound = {:.6f}\n", theory_k, eta,
                   *theory_d, pl, bound);
        csv = fmt::format("K,eta,d,m,pl,bound\n{},{},{},{},{:.17g},{:.17g}\n", theory_k, eta,
                          *theory_d, *theory_d * static_cast<std::size_t>(theory_k), pl, bound);
      } else if (curve) {
        csv = "K,eta,d,m,pl,bound\n";
        for (const auto& pt : bound_curve(theory_k, eta, *curve, rho)) {
          csv += fmt::format("{},{},{},{},{:.17g},{:.17g}\n", theory_k, eta, pt.per_class,
                             pt.per_class * static_cast<std::size_t>(theory_k), pt.pl, pt.bound);
        }
        fmt::print("K = {}, eta = {}: bound for d = 1..{}\n", theory_k, eta, *curve);
      } else {
        throw InputError("theory needs one of --d, --p or --curve");
      }
      emit(theory_csv, csv);
    } else if (*synth) {
      synth_spec.family = parse_family(synth_family);
      const auto inst = generate_planted(synth_spec);
      fs::create_directories(synth_dir);
      save_affinity(inst.affinity, synth_dir / "affinity.ggam");
      write_manifest(inst.manifest, synth_dir / "manifest.txt");
      write_file_atomic(synth_dir / "devset.tsv", format_devset(inst.dev));
      write_file_atomic(synth_dir / "truth.tsv", format_truth(inst.manifest, inst.labels));
      fmt::print("wrote planted instance (N = {}, alpha = {}, dev {} per class) to {}\n",
                 inst.manifest.size(), inst.affinity.num_functions(), inst.dev.per_class(),
                 synth_dir.string());
    } else if (*sweep_cmd) {
      sweep_spec.family = parse_family(sweep_family);
      sweep_spec.num_classes = config.num_classes;
      const auto axis = axis_name == "dev_size" ? SweepAxis::kDevSize : SweepAxis::kNumFunctions;
      const auto points = sweep(axis, grid, sweep_spec, config);
      emit(sweep_csv, format_sweep_csv(points));
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code_for(ErrorKind::kInput);
  } catch (const std::exception& e) {
    fmt::print(stderr, "internal error: {}\n", e.what());
    return exit_code_for(ErrorKind::kInternal);
  }
  return 0;
}
