// okfeb: streaming kernel feature extraction on a budget.
//
// Subcommands wire data sources into the budgeted subspace tracker and the
// downstream linear learners, emitting JSON-lines metrics.
#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "okfeb/cli.hpp"

namespace {

using okfeb::cli::CliError;
using okfeb::cli::RunConfig;

void add_input_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--input,-i", cfg.input_path, "input file ('-' for stdin)");
  cmd->add_option("--format", cfg.format, "input format: libsvm|csv")->capture_default_str();
  cmd->add_option("--dim,-d", cfg.dim, "declared feature dimension (libsvm)");
  cmd->add_flag("!--csv-unlabeled", cfg.csv_labeled, "csv rows carry no label column");
  cmd->add_option("--synthetic", cfg.synthetic,
                  "generate input: two-spheres|dynamic-spheroids|sine-norm");
  cmd->add_option("--n", cfg.n, "synthetic sample count");
  cmd->add_option("--sigma", cfg.sigma, "two-sphere noise std")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "rng seed (env OKFEB_SEED overrides)")->capture_default_str();
  cmd->add_flag("--standardize", cfg.standardize, "two-pass standardization before streaming");
}

void add_model_options(CLI::App* cmd, RunConfig& cfg) {
  const std::map<std::string, okfeb::KernelFamily> families{
      {"gaussian", okfeb::KernelFamily::gaussian},
      {"polynomial", okfeb::KernelFamily::polynomial},
      {"linear", okfeb::KernelFamily::linear}};
  cmd->add_option("--kernel", cfg.kernel.family, "kernel family")
      ->transform(CLI::CheckedTransformer(families, CLI::ignore_case))
      ->default_str("gaussian");
  cmd->add_option("--gamma", cfg.kernel.gamma, "gaussian bandwidth")->capture_default_str();
  cmd->add_option("--degree", cfg.kernel.degree, "polynomial degree")->capture_default_str();
  cmd->add_option("--offset", cfg.kernel.offset, "polynomial offset")->capture_default_str();
  cmd->add_option("--rank,-r", cfg.rank, "subspace rank r")->capture_default_str();
  cmd->add_option("--budget,-B", cfg.budget, "support budget B (0 = unbounded)")
      ->capture_default_str();
  cmd->add_option("--lambda", cfg.lambda, "subspace regularization")->capture_default_str();
  cmd->add_option("--beta", cfg.beta, "recency forgetting factor in (0,1]")->capture_default_str();
  cmd->add_option("--epsilon", cfg.epsilon, "censoring threshold (number or 'auto')")
      ->capture_default_str();
  cmd->add_option("--target-rate", cfg.target_rate, "update-rate target for --epsilon auto")
      ->capture_default_str();
  cmd->add_option("--censor-window", cfg.censor_window, "adaptive censor window")
      ->capture_default_str();
  cmd->add_option("--step", cfg.step, "step rule: harmonic|harmonic-sq|inv-qnorm|constant")
      ->capture_default_str();
  cmd->add_option("--step-scale", cfg.step_scale, "step scale c")->capture_default_str();
  cmd->add_option("--init", cfg.init, "factor init: random|ones")->capture_default_str();
  cmd->add_option("--rule", cfg.rule, "removal rule: recency-min-norm|brute-force|fifo")
      ->capture_default_str();
}

void add_output_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--out,-o", cfg.out_path, "metrics output path (default stdout)");
  cmd->add_flag("--csv-out", cfg.csv_out, "emit CSV rows instead of JSON lines");
  cmd->add_flag("--timings", cfg.timings, "include per-sample elapsed_ns (non-deterministic)");
  cmd->add_option("--cadence", cfg.cadence, "emit every k-th sample")->capture_default_str();
  cmd->add_option("--segments", cfg.segments, "segment boundaries for the fit summary");
  cmd->add_option("--mismatch-window", cfg.mismatch_window,
                  "trailing-window kernel mismatch on emitted lines (track)");
}

// Table-2 style presets; explicit flags win.
void apply_dataset_preset(const CLI::App* cmd, RunConfig& cfg, const std::string& name) {
  if (name.empty()) return;
  struct Preset {
    int rank;
    std::int64_t budget;
    double gamma;
    double C;
  };
  const std::map<std::string, Preset> presets{
      {"adult", {50, 60, 20.0, 10.0}},  // B = 1.2 r
      {"cadata", {5, 8, 7e7, 0.01}},    // B = 1.5 r, rounded up
      {"slice", {10, 12, 50.0, 0.01}},  // B = 1.2 r
      {"year", {10, 12, 5e7, 0.01}},    // B = 1.2 r
  };
  const auto it = presets.find(name);
  if (it == presets.end()) throw CliError("unknown dataset preset '" + name + "'");
  if (!cmd->count("--rank")) cfg.rank = it->second.rank;
  if (!cmd->count("--budget")) cfg.budget = it->second.budget;
  if (!cmd->count("--gamma")) cfg.kernel.gamma = it->second.gamma;
  if (!cmd->count("--svm-c")) cfg.C = it->second.C;
}

int dispatch(const RunConfig& cfg, const std::string& command) {
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!cfg.out_path.empty() && cfg.out_path != "-") {
    file.open(cfg.out_path);
    if (!file) throw CliError("cannot open output file '" + cfg.out_path + "'");
    out = &file;
  }
  if (command == "synth") return okfeb::cli::run_synth(cfg, *out);
  const auto samples = okfeb::cli::load_samples(cfg);
  if (command == "track") return okfeb::cli::run_track(cfg, samples, *out);
  if (command == "classify") return okfeb::cli::run_classify(cfg, samples, *out);
  if (command == "regress") return okfeb::cli::run_regress(cfg, samples, *out);
  if (command == "approx") return okfeb::cli::run_approx(cfg, samples, *out);
  if (command == "check-bounds") return okfeb::cli::run_check_bounds(cfg, samples, *out);
  throw CliError("unknown command '" + command + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"okfeb: online kernel feature extraction on a budget"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string dataset;
  double lms_mu_value = 0.0;

  auto* synth = app.add_subcommand("synth", "generate a synthetic stream");
  add_input_options(synth, cfg);

  auto* track = app.add_subcommand("track", "stream the subspace tracker, emit fit metrics");
  auto* classify = app.add_subcommand("classify", "progressive hinge classification on features");
  auto* regress = app.add_subcommand("regress", "progressive LMS regression on features");
  auto* approx = app.add_subcommand("approx", "windowed kernel-approximation mismatch");
  auto* bounds = app.add_subcommand("check-bounds", "verify the deterministic error bounds");
  for (auto* cmd : {track, classify, regress, approx, bounds}) {
    add_input_options(cmd, cfg);
    add_model_options(cmd, cfg);
    add_output_options(cmd, cfg);
  }
  CLI::Option* lms_mu_opt = nullptr;
  for (auto* cmd : {classify, regress}) {
    cmd->add_option("--svm-c", cfg.C, "hinge regularization C")->capture_default_str();
    cmd->add_option("--lms-lambda", cfg.lms_lambda, "LMS weight decay")->capture_default_str();
    auto* opt = cmd->add_option("--lms-mu", lms_mu_value, "fixed LMS step (default adaptive)");
    if (cmd == regress) lms_mu_opt = opt;
    cmd->add_flag("--raw-features", cfg.raw_features, "bypass the tracker, learn on raw inputs");
    cmd->add_option("--dataset", dataset, "preset: adult|cadata|slice|year");
  }
  approx->add_option("--window", cfg.window, "mismatch window length N_wind")->capture_default_str();
  approx->add_option("--ranks", cfg.ranks, "rank sweep, e.g. --ranks 5 10 15");
  approx->add_option("--cap", cfg.cap, "max stream length")->capture_default_str();
  bounds->add_option("--ridge-lambda", cfg.ridge_lambda, "ridge regularization")
      ->capture_default_str();
  bounds->add_option("--ridge-y", cfg.ridge_y, "ridge targets: labels|random|auto")
      ->capture_default_str();
  bounds->add_option("--cap", cfg.cap, "max dataset size (quadratic memory guard)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
    if (const char* env_seed = std::getenv("OKFEB_SEED"))
      cfg.seed = std::strtoull(env_seed, nullptr, 10);
    CLI::App* cmd = app.get_subcommands().front();
    if (cmd == classify || cmd == regress) {
      apply_dataset_preset(cmd, cfg, dataset);
      if (lms_mu_opt && cmd->count("--lms-mu")) cfg.lms_mu = lms_mu_value;
    }
    if (cfg.budget > 0 && cfg.budget < static_cast<std::int64_t>(std::ceil(1.5 * cfg.rank)) &&
        cmd != synth)
      std::cerr << "{\"warning\":\"budget below 1.5x rank; tracking quality may degrade\"}\n";
    return dispatch(cfg, cmd->get_name());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "{\"error\":" << nlohmann::json(std::string(e.what())).dump() << "}\n";
    return 2;
  } catch (const CliError& e) {
    std::cerr << "{\"error\":" << nlohmann::json(std::string(e.what())).dump() << "}\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":" << nlohmann::json(std::string(e.what())).dump() << "}\n";
    return 1;
  }
}
