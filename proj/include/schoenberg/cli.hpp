#ifndef SCHOENBERG_CLI_HPP_
#define SCHOENBERG_CLI_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "schoenberg/definetti_mc.hpp"
#include "schoenberg/error.hpp"
#include "schoenberg/mixture_lab.hpp"
#include "schoenberg/radial_core.hpp"
#include "schoenberg/recover.hpp"

namespace schoenberg::cli {

using nlohmann::json;

/// Seed used by randomized commands when --seed is omitted outside --ci.
inline constexpr std::uint64_t kDefaultSeed = 20061015;

inline constexpr int kExitPass = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFailed = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Outcome {
  json results;
  bool pass;
  std::string summary;
};

inline bool looks_like_file(const std::string& spec) { return std::filesystem::exists(spec); }

/// Catalog id ("gaussian", "cauchy", "exp-mixture", "triangle") or a t,f CSV path.
inline RadialProfile resolve_profile(const std::string& spec) {
  if (RadialProfile::is_catalog_id(spec)) return RadialProfile::from_catalog(spec);
  if (looks_like_file(spec)) return load_profile_csv(spec);
  throw UsageError("unknown profile '" + spec + "' (not a catalog id or an existing CSV file)");
}

/// "delta:<s>", "exp", "levy" or a measure JSON path.
inline MixingMeasure resolve_measure(const std::string& spec, bool renormalize) {
  if (spec.rfind("delta:", 0) == 0) {
    try {
      return MixingMeasure::dirac(std::stod(spec.substr(6)));
    } catch (const std::logic_error&) {
      throw UsageError("malformed measure id '" + spec + "'");
    }
  }
  if (spec == "exp") return exponential_measure();
  if (spec == "levy") return levy_measure();
  if (looks_like_file(spec)) return load_measure_json(spec, renormalize);
  throw UsageError("unknown measure '" + spec + "' (not delta:<s>, exp, levy or an existing JSON file)");
}

/// Reference mixing measure of a catalog profile, if it has one.
inline std::optional<MixingMeasure> catalog_truth(const std::string& profile_id) {
  if (profile_id == "gaussian") return MixingMeasure::dirac(1.0);
  if (profile_id == "exp-mixture") return exponential_measure();
  if (profile_id == "cauchy") return levy_measure();
  return std::nullopt;
}

inline json points_to_json(const PointSet& points) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < points.size(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < points.dimension(); ++j) row.push_back(points.points()(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

struct CertifyArgs {
  std::string profile;
  int dim = 2;
  std::size_t trials = 1000;
  int kmax = 48;
  double tol = 1e-8;
  double box = 3.0;
};

inline Outcome cmd_certify(const CertifyArgs& args, std::uint64_t seed, unsigned threads) {
  const RadialProfile f = resolve_profile(args.profile);
  CertifyOptions options;
  options.dimension = args.dim;
  options.trials = args.trials;
  options.k_max = args.kmax;
  options.tolerance = args.tol;
  options.seed = seed;
  options.box_half_width = args.box;
  options.threads = threads;
  const PsdReport report = certify_psd(f, options);

  json results = {{"profile", f.label()},
                  {"verdict", to_string(report.verdict)},
                  {"min_eigenvalue", report.min_eigenvalue},
                  {"tolerance", report.tolerance},
                  {"trials_run", report.trials_run},
                  {"points", points_to_json(report.point_set)}};
  if (report.witness) {
    const auto& c = report.witness->coefficients;
    results["witness"] = {{"coefficients", std::vector<double>(c.data(), c.data() + c.size())},
                          {"quadratic_form", report.witness->quadratic_form}};
  }
  const bool pass = report.verdict == Verdict::certified;
  return {std::move(results), pass,
          std::string("certify ") + f.label() + ": " + to_string(report.verdict) + " after " +
              std::to_string(report.trials_run) + " trials"};
}

struct DecomposeArgs {
  std::string profile;
  double t_max = 4.0;
  std::size_t t_count = 41;
  double s_min = 1e-2;
  double s_max = 1e2;
  std::size_t s_count = 201;
  double ridge = 1e-10;
  bool no_normalize = false;
  double residual_threshold = 1e-4;
  std::string out;
};

inline Outcome cmd_decompose(const DecomposeArgs& args) {
  RecoveryProblem problem;
  std::string label;
  if (RadialProfile::is_catalog_id(args.profile)) {
    const RadialProfile f = RadialProfile::from_catalog(args.profile);
    label = f.label();
    problem = RecoveryProblem::from_profile(f, linspace(0.0, args.t_max, args.t_count),
                                            logspace(args.s_min, args.s_max, args.s_count));
  } else if (looks_like_file(args.profile)) {
    ProfileTable table = read_profile_csv(args.profile);
    RadialProfile::tabulated(table.t, table.f, args.profile);  // validates the table
    label = args.profile;
    problem.t_grid = std::move(table.t);
    problem.f_values = std::move(table.f);
    problem.s_grid = logspace(args.s_min, args.s_max, args.s_count);
  } else {
    throw UsageError("unknown profile '" + args.profile + "'");
  }
  problem.options.ridge = args.ridge;
  problem.options.normalize_mass = !args.no_normalize;

  const RecoveryResult result = recover_mixing(problem);
  const json diagnostics = {{"residual_norm", result.residual_norm},
                            {"iterations", result.iterations},
                            {"mass_deficit", result.mass_deficit}};
  json results = {{"profile", label}, {"measure", to_json(result.measure)}, {"diagnostics", diagnostics}};
  if (const auto truth = catalog_truth(args.profile)) {
    results["reference"] = {{"label", truth->label()},
                            {"w1", wasserstein1(result.measure, *truth)},
                            {"ks", ks_distance(result.measure, *truth)}};
  }
  if (!args.out.empty()) {
    json doc = to_json(result.measure);
    doc["diagnostics"] = diagnostics;
    std::ofstream out(args.out);
    if (!out) throw InvalidInput("cannot write '" + args.out + "'");
    out << doc.dump(2) << '\n';
  }
  const bool pass = result.residual_norm <= args.residual_threshold;
  std::ostringstream summary;
  summary << "decompose " << label << ": " << result.measure.size() << " atoms, residual "
          << result.residual_norm << (pass ? "" : " (above threshold)");
  return {std::move(results), pass, summary.str()};
}

struct SimulateArgs {
  std::string measure;
  std::size_t n = 1000;
  std::size_t reps = 10000;
  std::string out;
  std::string measure_out;
  std::size_t bins = 64;
  std::string metric = "w1";
  double threshold = 0.05;
};

inline Outcome cmd_simulate(const SimulateArgs& args, bool renormalize, std::uint64_t seed,
                            unsigned threads) {
  const MixingMeasure measure = resolve_measure(args.measure, renormalize);
  const EmpiricalMeasure estimate = estimate_mixing(measure, args.n, args.reps, seed, threads);
  const double w1 = wasserstein1(estimate, measure);
  const double ks = ks_distance(estimate, measure);
  const auto& v = estimate.values();
  json results = {{"measure", measure.label()},
                  {"count", estimate.size()},
                  {"w1", w1},
                  {"ks", ks},
                  {"mean_L", estimate.mean()},
                  {"min_L", v.front()},
                  {"max_L", v.back()},
                  {"all_zero", v.back() == 0.0},
                  {"metric", args.metric},
                  {"threshold", args.threshold}};
  if (!args.out.empty()) {
    std::ofstream out(args.out);
    if (!out) throw InvalidInput("cannot write '" + args.out + "'");
    estimate.write_csv(out);
  }
  if (!args.measure_out.empty()) {
    std::ofstream out(args.measure_out);
    if (!out) throw InvalidInput("cannot write '" + args.measure_out + "'");
    out << to_json(estimate.to_mixing_measure(args.bins, "estimated:" + measure.label())).dump(2) << '\n';
  }
  const double value = args.metric == "ks" ? ks : w1;
  const bool pass = value <= args.threshold;
  std::ostringstream summary;
  summary << "simulate " << measure.label() << ": W1 " << w1 << ", KS " << ks;
  return {std::move(results), pass, summary.str()};
}

struct VerifyArgs {
  std::string profile;
  std::string measure;
  std::vector<double> t{1.0};
  std::size_t n = 1000;
  std::size_t reps = 100000;
  std::size_t baseline_n = 10;
  double match_tol = 0.05;
};

inline Outcome cmd_verify_identity(const VerifyArgs& args, bool renormalize, std::uint64_t seed,
                                   unsigned threads) {
  const RadialProfile f = resolve_profile(args.profile);
  const MixingMeasure measure = resolve_measure(args.measure, renormalize);
  KeyIdentityOptions options;
  options.match_tolerance = args.match_tol;
  options.threads = threads;

  json per_t = json::array();
  bool pass = true;
  for (double t : args.t) {
    const auto main = key_identity_mc(f, measure, {t, args.n, args.reps, seed}, options);
    const auto base = key_identity_mc(f, measure, {t, args.baseline_n, args.reps, seed}, options);
    const bool agree = std::abs(main.lhs - main.rhs) <= 3.0 * main.combined_se();
    const double gap = std::abs(main.lhs - main.f_of_t);
    const double base_gap = std::abs(base.lhs - base.f_of_t);
    // Below 1e-12 both gaps are rounding noise and their order carries no information.
    const bool shrinks = gap < base_gap || gap <= 1e-12;
    pass = pass && agree && shrinks;
    per_t.push_back({{"t", t},
                     {"lhs", main.lhs},
                     {"rhs", main.rhs},
                     {"lhs_se", main.lhs_se},
                     {"rhs_se", main.rhs_se},
                     {"f_of_t", main.f_of_t},
                     {"baseline_lhs", base.lhs},
                     {"agree", agree},
                     {"limit_gap", gap},
                     {"baseline_limit_gap", base_gap},
                     {"gap_shrinks", shrinks}});
  }
  return {{{"profile", f.label()}, {"measure", measure.label()}, {"checks", per_t}}, pass,
          std::string("verify-identity ") + f.label() + (pass ? ": identity holds" : ": identity check failed")};
}

struct ConsistencyArgs {
  std::string measure;
  int dim = 1;
  std::size_t count = 10000;
  double alpha = 0.01;
  double corrupt_scale = 1.0;
};

inline Outcome cmd_consistency(const ConsistencyArgs& args, bool renormalize, std::uint64_t seed,
                               unsigned threads) {
  const MixingMeasure measure = resolve_measure(args.measure, renormalize);
  ConsistencyOptions options;
  options.alpha = args.alpha;
  options.corrupt_scale = args.corrupt_scale;
  options.threads = threads;
  const auto report = marginal_consistency_check(GaussianScaleMixture(measure, args.dim), args.count, seed, options);
  json results = {{"measure", measure.label()},
                  {"dimension", args.dim},
                  {"ks_first_coordinate", report.ks_first_coordinate},
                  {"ks_squared_norm", report.ks_squared_norm},
                  {"critical_value", report.critical_value}};
  std::ostringstream summary;
  summary << "consistency " << measure.label() << " n=" << args.dim << ": KS " << report.ks_first_coordinate
          << ", " << report.ks_squared_norm << " vs critical " << report.critical_value;
  return {std::move(results), report.pass, summary.str()};
}

struct CmArgs {
  std::string profile;
  int max_order = 4;
  double u_min = 0.1;
  double u_max = 4.0;
  double u_step = 0.1;
  double h = 0.1;
  double eps_scale = 1e-10;
};

inline Outcome cmd_cm_check(const CmArgs& args) {
  const RadialProfile f = resolve_profile(args.profile);
  if (!(args.u_step > 0.0) || !(args.u_max >= args.u_min))
    throw UsageError("cm-check: need u-step > 0 and u-max >= u-min");
  CmOptions options;
  options.max_order = args.max_order;
  options.step = args.h;
  options.epsilon_scale = args.eps_scale;
  const auto count = static_cast<std::size_t>(std::llround((args.u_max - args.u_min) / args.u_step)) + 1;
  for (std::size_t i = 0; i < count; ++i) options.grid.push_back(args.u_min + args.u_step * static_cast<double>(i));
  const CmReport report = complete_monotonicity_check(f, options);

  json orders = json::array();
  for (const auto& o : report.orders)
    orders.push_back({{"order", o.order}, {"worst", o.worst}, {"worst_u", o.worst_u}, {"pass", o.pass}});
  json results = {{"profile", f.label()}, {"epsilon", report.epsilon}, {"orders", orders}};
  results["first_failing_order"] =
      report.first_failing_order ? json(*report.first_failing_order) : json(nullptr);
  return {std::move(results), report.pass,
          "cm-check " + f.label() + (report.pass ? ": completely monotone on the grid"
                                                 : ": fails at order " + std::to_string(*report.first_failing_order))};
}

/// Parses argv, runs one subcommand, writes the JSON report to `out` and a
/// one-line summary to `err`. Returns 0 on pass, 2 on a failed check and 1 on
/// usage or runtime errors.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Positive-definiteness and Gaussian scale mixture toolkit", "schoenberg_lab"};
  app.require_subcommand(1);
  unsigned threads_flag = 0;
  bool ci = false;
  bool renormalize = false;
  std::optional<std::uint64_t> seed_flag;
  app.add_option("--threads", threads_flag, "Worker threads (default: $SCHOENBERG_LAB_THREADS or all cores)");
  app.add_flag("--ci", ci, "Require an explicit --seed for randomized commands");
  app.add_flag("--renormalize", renormalize, "Rescale loaded measure weights to sum to one");

  const auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_flag, "Random seed");
  };

  CertifyArgs certify;
  auto* c = app.add_subcommand("certify", "Search for point sets refuting positive semi-definiteness");
  c->add_option("profile", certify.profile, "Catalog id or t,f CSV")->required();
  c->add_option("--dim", certify.dim)->capture_default_str();
  c->add_option("--trials", certify.trials)->capture_default_str();
  c->add_option("--kmax", certify.kmax)->capture_default_str();
  c->add_option("--tol", certify.tol)->capture_default_str();
  c->add_option("--box", certify.box, "Half width L of the random box")->capture_default_str();
  add_seed(c);

  DecomposeArgs decompose;
  auto* d = app.add_subcommand("decompose", "Recover the mixing measure of a profile by NNLS");
  d->add_option("profile", decompose.profile, "Catalog id or t,f CSV")->required();
  d->add_option("--t-max", decompose.t_max)->capture_default_str();
  d->add_option("--t-count", decompose.t_count)->capture_default_str();
  d->add_option("--s-min", decompose.s_min)->capture_default_str();
  d->add_option("--s-max", decompose.s_max)->capture_default_str();
  d->add_option("--s-count", decompose.s_count)->capture_default_str();
  d->add_option("--ridge", decompose.ridge)->capture_default_str();
  d->add_flag("--no-normalize", decompose.no_normalize);
  d->add_option("--residual-threshold", decompose.residual_threshold)->capture_default_str();
  d->add_option("--out", decompose.out, "Write the recovered measure JSON here");

  SimulateArgs simulate;
  auto* s = app.add_subcommand("simulate", "Estimate a mixing measure from exchangeable draws");
  s->add_option("measure", simulate.measure, "delta:<s>, exp, levy or measure JSON")->required();
  s->add_option("--n", simulate.n)->capture_default_str();
  s->add_option("--reps", simulate.reps)->capture_default_str();
  s->add_option("--out", simulate.out, "Write the L sample as CSV");
  s->add_option("--measure-out", simulate.measure_out, "Write the binned estimate as measure JSON");
  s->add_option("--bins", simulate.bins)->capture_default_str();
  s->add_option("--metric", simulate.metric)->check(CLI::IsMember({"w1", "ks"}))->capture_default_str();
  s->add_option("--threshold", simulate.threshold)->capture_default_str();
  add_seed(s);

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify-identity", "Monte Carlo check of the two-sided expectation identity");
  v->add_option("profile", verify.profile)->required();
  v->add_option("measure", verify.measure)->required();
  v->add_option("--t", verify.t)->delimiter(',')->capture_default_str();
  v->add_option("--n", verify.n)->capture_default_str();
  v->add_option("--reps", verify.reps)->capture_default_str();
  v->add_option("--baseline-n", verify.baseline_n)->capture_default_str();
  v->add_option("--match-tol", verify.match_tol)->capture_default_str();
  add_seed(v);

  ConsistencyArgs consistency;
  auto* k = app.add_subcommand("consistency", "KS check that mu_n is the marginal of mu_{n+1}");
  k->add_option("measure", consistency.measure)->required();
  k->add_option("--dim", consistency.dim)->capture_default_str();
  k->add_option("--count", consistency.count)->capture_default_str();
  k->add_option("--alpha", consistency.alpha)->capture_default_str();
  k->add_option("--corrupt-scale", consistency.corrupt_scale)->capture_default_str();
  add_seed(k);

  CmArgs cm;
  auto* m = app.add_subcommand("cm-check", "Finite-difference complete monotonicity check of f(sqrt(u))");
  m->add_option("profile", cm.profile)->required();
  m->add_option("--max-order", cm.max_order)->capture_default_str();
  m->add_option("--u-min", cm.u_min)->capture_default_str();
  m->add_option("--u-max", cm.u_max)->capture_default_str();
  m->add_option("--u-step", cm.u_step)->capture_default_str();
  m->add_option("--step", cm.h, "Difference step h")->capture_default_str();
  m->add_option("--eps-scale", cm.eps_scale)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitPass : kExitError;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string command = chosen->get_name();
  const bool randomized = chosen == c || chosen == s || chosen == v || chosen == k;
  const unsigned threads = resolve_threads(threads_flag);
  const auto started = std::chrono::steady_clock::now();

  json config;
  for (const CLI::Option* opt : chosen->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "--seed") continue;
    const auto values = opt->results();
    std::string name = opt->get_name();
    if (values.empty()) {
      config[name] = opt->get_default_str();
    } else if (values.size() == 1) {
      config[name] = values.front();
    } else {
      config[name] = values;
    }
  }
  config["threads"] = threads;
  config["renormalize"] = renormalize;

  try {
    if (randomized && ci && !seed_flag) throw UsageError(command + ": --ci requires an explicit --seed");
    const std::uint64_t seed = seed_flag.value_or(kDefaultSeed);
    if (randomized) config["seed"] = seed;

    Outcome outcome;
    if (chosen == c) outcome = cmd_certify(certify, seed, threads);
    else if (chosen == d) outcome = cmd_decompose(decompose);
    else if (chosen == s) outcome = cmd_simulate(simulate, renormalize, seed, threads);
    else if (chosen == v) outcome = cmd_verify_identity(verify, renormalize, seed, threads);
    else if (chosen == k) outcome = cmd_consistency(consistency, renormalize, seed, threads);
    else outcome = cmd_cm_check(cm);

    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    const json report = {{"command", command},
                         {"config", config},
                         {"results", outcome.results},
                         {"pass", outcome.pass},
                         {"wall_time_ms", elapsed.count()}};
    out << report.dump(2) << '\n';
    err << outcome.summary << '\n';
    return outcome.pass ? kExitPass : kExitFailed;
  } catch (const std::exception& e) {
    const json report = {{"command", command}, {"config", config}, {"error", e.what()}, {"pass", false}};
    out << report.dump(2) << '\n';
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace schoenberg::cli

#endif  // SCHOENBERG_CLI_HPP_
