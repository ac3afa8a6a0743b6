#pragma once

#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "okfeb/okfeb.hpp"

namespace okfeb::cli {

using json = nlohmann::ordered_json;

struct CliError : std::runtime_error {
  int code;
  explicit CliError(const std::string& what, int exit_code = 2)
      : std::runtime_error(what), code(exit_code) {}
};

struct RunConfig {
  // input
  std::string input_path;          // file path, "-" for stdin
  std::string format = "libsvm";   // libsvm | csv
  int dim = 0;                     // declared dimension for libsvm
  bool csv_labeled = true;
  std::string synthetic;           // two-spheres | dynamic-spheroids | sine-norm
  int n = 0;                       // synthetic sample count (0 = per-kind default)
  double sigma = 0.1;
  std::uint64_t seed = 1;
  bool standardize = false;

  // model
  KernelSpec kernel{KernelFamily::gaussian, 100.0, 2, 0.0};
  int rank = 7;
  std::int64_t budget = 0;         // 0 = unbounded
  double lambda = 1e-3;
  double beta = 1.0;
  std::string epsilon = "0";       // literal value or "auto"
  double target_rate = 0.5;
  int censor_window = 100;
  std::string step = "inv-qnorm";  // harmonic | harmonic-sq | inv-qnorm | constant
  double step_scale = 1.0;
  std::string init = "random";     // random | ones
  std::string rule = "recency-min-norm";  // recency-min-norm | brute-force | fifo

  // learners
  double C = 10.0;
  double lms_lambda = 1e-4;
  std::optional<double> lms_mu;
  bool raw_features = false;       // bypass the tracker, feed x directly

  // bounds / windowed approximation
  double ridge_lambda = 0.1;
  int cap = 2000;
  std::string ridge_y = "auto";    // labels | random | auto
  int window = 100;                // N_wind
  std::vector<int> ranks;          // approx sweep; empty = {rank}

  // output
  std::string out_path;            // empty = stdout
  bool csv_out = false;
  bool timings = false;
  int cadence = 1;
  std::vector<std::int64_t> segments;  // segment boundaries for summaries
  int mismatch_window = 0;         // trailing-window kernel mismatch on cadence ticks
};

namespace detail {

inline double parse_epsilon(const std::string& text) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    if (v < 0.0) throw CliError("epsilon must be >= 0");
    return v;
  } catch (const CliError&) {
    throw;
  } catch (const std::exception&) {
    throw CliError("epsilon must be a number or 'auto', got '" + text + "'");
  }
}

inline StepSchedule make_schedule(const RunConfig& cfg) {
  StepSchedule s;
  s.c = cfg.step_scale;
  if (cfg.step == "harmonic") s.mode = StepMode::harmonic;
  else if (cfg.step == "harmonic-sq") s.mode = StepMode::harmonic_sq;
  else if (cfg.step == "inv-qnorm") s.mode = StepMode::inv_feature_norm;
  else if (cfg.step == "constant") s.mode = StepMode::constant;
  else throw CliError("unknown step mode '" + cfg.step + "'");
  if (!(s.c > 0.0)) throw CliError("step scale must be > 0");
  return s;
}

inline CensorPolicy make_censor(const RunConfig& cfg) {
  if (cfg.epsilon == "auto") return CensorPolicy::adaptive(cfg.target_rate, cfg.censor_window);
  return CensorPolicy::fixed(parse_epsilon(cfg.epsilon));
}

inline BudgetPolicy make_budget(const RunConfig& cfg) {
  BudgetPolicy p;
  p.B = cfg.budget > 0 ? cfg.budget : BudgetPolicy::kUnbounded;
  p.beta = cfg.beta;
  if (cfg.rule == "recency-min-norm") p.rule = BudgetRule::recency_min_norm;
  else if (cfg.rule == "brute-force") p.rule = BudgetRule::brute_force;
  else if (cfg.rule == "fifo") p.rule = BudgetRule::fifo;
  else throw CliError("unknown budget rule '" + cfg.rule + "'");
  p.validate();
  return p;
}

inline SubspaceModel make_model(const RunConfig& cfg, const Vec& x0) {
  const InitKind init = cfg.init == "ones" ? InitKind::ones : InitKind::random;
  if (cfg.init != "ones" && cfg.init != "random")
    throw CliError("unknown init '" + cfg.init + "'");
  return SubspaceModel(cfg.kernel, x0, cfg.rank, cfg.lambda, init, cfg.seed);
}

inline std::vector<Sample> synthesize(const RunConfig& cfg) {
  if (cfg.synthetic == "two-spheres") {
    const int n = cfg.n > 0 ? cfg.n : 5000;
    return gen_two_spheres(n, cfg.sigma, cfg.seed);
  }
  if (cfg.synthetic == "dynamic-spheroids") {
    const int n = cfg.n > 0 ? cfg.n : 2000;
    return gen_dynamic_spheroids(n, cfg.seed);
  }
  if (cfg.synthetic == "sine-norm") {
    const int n = cfg.n > 0 ? cfg.n : 5000;
    auto samples = gen_two_spheres(n, cfg.sigma, cfg.seed);
    for (auto& s : samples) s.y = std::sin(s.x.norm());
    return samples;
  }
  throw CliError("unknown synthetic stream '" + cfg.synthetic + "'");
}

}  // namespace detail

inline std::vector<Sample> load_samples(const RunConfig& cfg) {
  std::vector<Sample> samples;
  if (!cfg.synthetic.empty()) {
    samples = detail::synthesize(cfg);
  } else {
    std::ifstream file;
    std::istream* in = &std::cin;
    if (!cfg.input_path.empty() && cfg.input_path != "-") {
      file.open(cfg.input_path);
      if (!file) throw CliError("cannot open input file '" + cfg.input_path + "'");
      in = &file;
    }
    try {
      if (cfg.format == "libsvm") {
        if (cfg.dim < 1) throw CliError("libsvm input requires --dim");
        samples = parse_libsvm(*in, cfg.dim);
      } else if (cfg.format == "csv") {
        samples = parse_csv(*in, cfg.csv_labeled);
      } else {
        throw CliError("unknown input format '" + cfg.format + "'");
      }
    } catch (const ParseError& e) {
      throw CliError(std::string("parse error: ") + e.what());
    }
  }
  if (cfg.standardize) standardize_two_pass(samples);
  return samples;
}

namespace detail {

// Serializes metric records as JSON lines or CSV rows with a fixed column set.
class MetricsWriter {
 public:
  MetricsWriter(std::ostream& out, bool csv) : out_(out), csv_(csv) {}

  void record(const json& line) {
    if (!csv_) {
      out_ << line.dump() << '\n';
      return;
    }
    if (!wrote_header_) {
      bool first = true;
      for (const auto& [key, value] : line.items()) {
        (void)value;
        out_ << (first ? "" : ",") << key;
        first = false;
      }
      out_ << '\n';
      wrote_header_ = true;
    }
    bool first = true;
    for (const auto& [key, value] : line.items()) {
      (void)key;
      out_ << (first ? "" : ",");
      if (value.is_null()) {
        // empty cell
      } else if (value.is_string()) {
        out_ << value.get<std::string>();
      } else {
        out_ << value.dump();
      }
      first = false;
    }
    out_ << '\n';
  }

  // Summaries stay JSON even in CSV mode, marked with a leading '#'.
  void summary(const json& line) {
    if (csv_) out_ << "# ";
    out_ << line.dump() << '\n';
  }

 private:
  std::ostream& out_;
  bool csv_;
  bool wrote_header_ = false;
};

inline json segment_summaries(const std::vector<double>& fits,
                              const std::vector<std::int64_t>& boundaries) {
  json segments = json::array();
  std::vector<std::int64_t> bounds = boundaries;
  std::sort(bounds.begin(), bounds.end());
  std::int64_t begin = 0;
  auto flush = [&](std::int64_t end) {
    if (end <= begin) return;
    double mean = 0.0;
    for (std::int64_t i = begin; i < end; ++i) mean += fits[static_cast<std::size_t>(i)];
    mean /= static_cast<double>(end - begin);
    double var = 0.0;
    for (std::int64_t i = begin; i < end; ++i) {
      const double d = fits[static_cast<std::size_t>(i)] - mean;
      var += d * d;
    }
    var /= static_cast<double>(end - begin);
    segments.push_back({{"begin", begin + 1}, {"end", end}, {"mean_fit", mean}, {"var_fit", var}});
    begin = end;
  };
  const std::int64_t n = static_cast<std::int64_t>(fits.size());
  for (const auto b : bounds)
    if (b > 0 && b < n) flush(b);
  flush(n);
  return segments;
}

// Trailing-window kernel mismatch against the current model snapshot.
inline double trailing_mismatch(const SubspaceModel& model, const std::vector<Sample>& samples,
                                std::size_t end_index, int window) {
  if (end_index + 1 < static_cast<std::size_t>(window)) return -1.0;
  std::vector<Vec> xs;
  for (std::size_t i = end_index + 1 - static_cast<std::size_t>(window); i <= end_index; ++i)
    xs.push_back(samples[i].x);
  Mat Q(model.rank(), window);
  for (int j = 0; j < window; ++j) Q.col(j) = model.extract_feature(xs[static_cast<std::size_t>(j)]);
  return kernel_mismatch(kernel_matrix(model.kernel_spec(), xs), approx_kernel_matrix(model, Q));
}

}  // namespace detail

/// Streams OK-FEB over the input, emitting one metrics record per sample (at
/// the configured cadence) and a final summary.
inline int run_track(const RunConfig& cfg, const std::vector<Sample>& samples, std::ostream& out) {
  detail::MetricsWriter writer(out, cfg.csv_out);
  if (samples.empty()) {
    writer.summary({{"summary", {{"samples", 0}, {"updates", 0}}}});
    return 0;
  }
  auto censor = detail::make_censor(cfg);
  const auto budget = detail::make_budget(cfg);
  const auto schedule = detail::make_schedule(cfg);
  SubspaceModel model = detail::make_model(cfg, samples.front().x);

  std::vector<double> fits;
  fits.reserve(samples.size());
  double fit_sum = 0.0;
  std::int64_t updates = 0;

  const auto emit = [&](std::int64_t n, double fit, bool censored,
                        const std::optional<Eigen::Index>& removed, Eigen::Index sv_count,
                        std::int64_t elapsed_ns) {
    if (cfg.cadence > 1 && n % cfg.cadence != 0) return;
    json line{{"n", n},
              {"ls_fit", fit},
              {"censored", censored},
              {"sv_count", sv_count},
              {"removed_index", removed ? json(*removed) : json(nullptr)},
              {"cum_avg_fit", fit_sum / static_cast<double>(n)}};
    if (cfg.mismatch_window > 1) {
      const double wm = detail::trailing_mismatch(model, samples, static_cast<std::size_t>(n - 1),
                                                  cfg.mismatch_window);
      line["window_mismatch"] = wm < 0.0 ? json(nullptr) : json(wm);
    }
    if (cfg.timings) line["elapsed_ns"] = elapsed_ns;
    writer.record(line);
  };

  {  // the first sample seeds the model
    const Vec q0 = model.extract_feature(samples.front().x);
    const double fit0 = model.ls_fit(samples.front().x, q0);
    fits.push_back(fit0);
    fit_sum += fit0;
    ++updates;
    emit(1, fit0, false, std::nullopt, model.support_size(), 0);
  }
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const StepResult res = okfeb_step(model, samples[i].x, censor, budget, schedule);
    const auto t1 = std::chrono::steady_clock::now();
    fits.push_back(res.fit);
    fit_sum += res.fit;
    if (!res.censored) ++updates;
    emit(static_cast<std::int64_t>(i) + 1, res.fit, res.censored, res.removed_index, res.sv_count,
         std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  }

  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  json summary{{"samples", n},
               {"updates", updates},
               {"censor_rate", 1.0 - static_cast<double>(updates) / static_cast<double>(n)},
               {"final_sv_count", model.support_size()},
               {"final_epsilon", std::isfinite(censor.epsilon) ? json(censor.epsilon) : json(nullptr)},
               {"mean_fit", fit_sum / static_cast<double>(n)},
               {"segments", detail::segment_summaries(fits, cfg.segments)}};
  writer.summary({{"summary", summary}});
  return 0;
}

/// Progressive-validation classification or regression over extracted
/// features (or raw inputs with cfg.raw_features).
inline int run_learn(const RunConfig& cfg, const std::vector<Sample>& samples, std::ostream& out,
                     bool classification) {
  detail::MetricsWriter writer(out, cfg.csv_out);
  if (samples.empty()) {
    writer.summary({{"summary", {{"samples", 0}}}});
    return 0;
  }
  for (const auto& s : samples)
    if (!s.y) throw CliError("labeled input required for classify/regress");

  auto censor = detail::make_censor(cfg);
  const auto budget = detail::make_budget(cfg);
  const auto schedule = detail::make_schedule(cfg);

  std::optional<SubspaceModel> model;
  Mat factor;
  std::uint64_t factor_revision = ~0ull;
  if (!cfg.raw_features) model.emplace(detail::make_model(cfg, samples.front().x));

  PegasosSvm svm;
  svm.C = cfg.C;
  LmsRegressor lms;
  lms.lambda_reg = cfg.lms_lambda;
  lms.mu = cfg.lms_mu;

  double correct = 0.0;
  double se_sum = 0.0;
  std::vector<double> fits;

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& s = samples[i];
    Vec z;
    double fit = 0.0;
    bool censored = false;
    Eigen::Index sv_count = 0;
    if (cfg.raw_features) {
      z = s.x;
    } else {
      if (model->revision() != factor_revision) {
        factor = feature_map_factor(*model);
        factor_revision = model->revision();
      }
      z = feature_map_z(factor, model->extract_feature(s.x));
    }
    // Predict before any update touches the learner or the tracker.
    if (classification) {
      const int label = *s.y > 0 ? 1 : -1;
      if (classify(svm, z) == label) correct += 1.0;
      svm_step(svm, z, static_cast<double>(label));
    } else {
      const double err = *s.y - predict(lms, z);
      se_sum += err * err;
      lms_step(lms, z, *s.y);
    }
    if (!cfg.raw_features && i > 0) {
      const StepResult res = okfeb_step(*model, s.x, censor, budget, schedule);
      fit = res.fit;
      censored = res.censored;
      sv_count = res.sv_count;
    } else if (!cfg.raw_features) {
      fit = model->ls_fit(s.x, model->extract_feature(s.x));
      sv_count = 1;
    }
    const auto t1 = std::chrono::steady_clock::now();
    fits.push_back(fit);
    const std::int64_t n = static_cast<std::int64_t>(i) + 1;
    if (cfg.cadence <= 1 || n % cfg.cadence == 0) {
      json line{{"n", n}};
      if (classification)
        line["accuracy_so_far"] = correct / static_cast<double>(n);
      else
        line["mse_so_far"] = se_sum / static_cast<double>(n);
      line["ls_fit"] = fit;
      line["censored"] = censored;
      line["sv_count"] = sv_count;
      if (cfg.timings)
        line["elapsed_ns"] = std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count();
      writer.record(line);
    }
  }

  const double n = static_cast<double>(samples.size());
  json summary{{"samples", samples.size()}};
  if (classification)
    summary["accuracy"] = correct / n;
  else
    summary["mse"] = se_sum / n;
  if (!cfg.raw_features) summary["final_sv_count"] = (*model).support_size();
  writer.summary({{"summary", summary}});
  return 0;
}

inline int run_classify(const RunConfig& cfg, const std::vector<Sample>& samples, std::ostream& out) {
  return run_learn(cfg, samples, out, true);
}

inline int run_regress(const RunConfig& cfg, const std::vector<Sample>& samples, std::ostream& out) {
  return run_learn(cfg, samples, out, false);
}

/// Fits OK-FEB, materializes K and K-hat, and verifies the deterministic
/// kernel-approximation and ridge-stability bounds. Nonzero exit when an
/// enforceable bound fails.
inline int run_check_bounds(const RunConfig& cfg, const std::vector<Sample>& samples,
                            std::ostream& out) {
  detail::MetricsWriter writer(out, cfg.csv_out);
  if (samples.empty()) {
    writer.summary({{"summary", {{"samples", 0}}}});
    return 0;
  }
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  if (n > cfg.cap)
    throw CliError("check-bounds materializes an N x N kernel matrix; input has " +
                   std::to_string(n) + " samples, cap is " + std::to_string(cfg.cap) +
                   " (--cap to raise)");

  auto censor = detail::make_censor(cfg);
  const auto budget = detail::make_budget(cfg);
  const auto schedule = detail::make_schedule(cfg);
  SubspaceModel model = detail::make_model(cfg, samples.front().x);
  for (std::size_t i = 1; i < samples.size(); ++i)
    okfeb_step(model, samples[i].x, censor, budget, schedule);

  std::vector<Vec> xs;
  for (const auto& s : samples) xs.push_back(s.x);
  Mat Q(model.rank(), n);
  std::vector<ErrorRecord> errors;
  for (Eigen::Index i = 0; i < n; ++i) {
    Q.col(i) = model.extract_feature(xs[static_cast<std::size_t>(i)]);
    errors.push_back({model.ls_fit(xs[static_cast<std::size_t>(i)], Q.col(i)),
                      samples[static_cast<std::size_t>(i)].y});
  }
  const Mat K = kernel_matrix(cfg.kernel, xs);
  const Mat K_hat = approx_kernel_matrix(model, Q);

  const auto p4 = check_prop4(errors, K, K_hat);
  writer.record({{"bound", "kernel-mismatch"},
                 {"lhs", p4.lhs},
                 {"rhs", p4.rhs},
                 {"holds", p4.holds},
                 {"slack", p4.slack},
                 {"hypothesis_ok", p4.hypothesis_ok}});

  Vec y(n);
  bool have_labels = true;
  for (const auto& s : samples) have_labels = have_labels && s.y.has_value();
  if (cfg.ridge_y == "labels" && !have_labels)
    throw CliError("--ridge-y labels requires labeled input");
  if (cfg.ridge_y == "labels" || (cfg.ridge_y == "auto" && have_labels)) {
    for (Eigen::Index i = 0; i < n; ++i) y[i] = *samples[static_cast<std::size_t>(i)].y;
  } else {
    std::mt19937_64 g(cfg.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = unif(g);
  }
  const auto p7 = check_prop7(K, K_hat, y, cfg.ridge_lambda);
  writer.record({{"bound", "ridge-stability"},
                 {"lhs", p7.lhs},
                 {"rhs", p7.rhs},
                 {"holds", p7.holds},
                 {"slack", p7.slack},
                 {"hypothesis_ok", p7.hypothesis_ok}});

  const bool fail = (p4.hypothesis_ok && !p4.holds) || !p7.holds;
  writer.summary({{"summary",
                   {{"samples", n},
                    {"final_sv_count", model.support_size()},
                    {"bounds_enforced", !fail}}}});
  return fail ? 1 : 0;
}

/// Sliding-window kernel mismatch of OK-FEB runs, optionally swept over
/// ranks (budget defaults to 2 r when unset).
inline int run_approx(const RunConfig& cfg, const std::vector<Sample>& samples, std::ostream& out) {
  detail::MetricsWriter writer(out, cfg.csv_out);
  if (samples.empty()) {
    writer.summary({{"summary", {{"samples", 0}}}});
    return 0;
  }
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  if (n > cfg.cap)
    throw CliError("approx stores per-sample model snapshots; input has " + std::to_string(n) +
                   " samples, cap is " + std::to_string(cfg.cap) + " (--cap to raise)");
  if (cfg.window < 2 || n <= cfg.window)
    throw CliError("approx requires 2 <= --window < n");

  std::vector<Vec> xs;
  for (const auto& s : samples) xs.push_back(s.x);
  std::vector<int> ranks = cfg.ranks.empty() ? std::vector<int>{cfg.rank} : cfg.ranks;

  for (const int r : ranks) {
    RunConfig run_cfg = cfg;
    run_cfg.rank = r;
    if (cfg.budget <= 0) run_cfg.budget = 2 * r;
    auto censor = detail::make_censor(run_cfg);
    const auto budget = detail::make_budget(run_cfg);
    const auto schedule = detail::make_schedule(run_cfg);
    SubspaceModel model = detail::make_model(run_cfg, xs.front());
    std::vector<SubspaceModel> trajectory;
    trajectory.reserve(static_cast<std::size_t>(n));
    trajectory.push_back(model);
    for (Eigen::Index i = 1; i < n; ++i) {
      okfeb_step(model, xs[static_cast<std::size_t>(i)], censor, budget, schedule);
      trajectory.push_back(model);
    }
    const double wm = windowed_mismatch(
        xs,
        [&](Eigen::Index end) -> const SubspaceModel& {
          return trajectory[static_cast<std::size_t>(end)];
        },
        run_cfg.kernel, cfg.window);
    writer.record({{"rank", r},
                   {"budget", run_cfg.budget},
                   {"window", cfg.window},
                   {"windowed_mismatch", wm},
                   {"final_sv_count", model.support_size()}});
  }
  writer.summary({{"summary", {{"samples", n}, {"ranks", ranks}}}});
  return 0;
}

/// Writes a synthetic stream in libsvm or csv form.
inline int run_synth(const RunConfig& cfg, std::ostream& out) {
  const auto samples = detail::synthesize(cfg);
  if (cfg.format == "libsvm") {
    for (const auto& s : samples)
      if (!s.y) throw CliError("libsvm output requires labeled samples; use --format csv");
    write_libsvm(out, samples);
  } else if (cfg.format == "csv") {
    write_csv(out, samples);
  } else {
    throw CliError("unknown output format '" + cfg.format + "'");
  }
  return 0;
}

}  // namespace okfeb::cli
