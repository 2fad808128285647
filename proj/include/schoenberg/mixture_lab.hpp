#ifndef SCHOENBERG_MIXTURE_LAB_HPP_
#define SCHOENBERG_MIXTURE_LAB_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "schoenberg/error.hpp"
#include "schoenberg/radial_core.hpp"
#include "schoenberg/random.hpp"

namespace schoenberg {

struct Atom {
  double scale;   // s >= 0
  double weight;  // w > 0
};

class MixingMeasure;

/// Called with every probability measure that passes validation. Empty by
/// default; test harnesses install one to audit measures globally.
inline std::function<void(const MixingMeasure&)>& measure_observer() {
  static std::function<void(const MixingMeasure&)> observer;
  return observer;
}

/// Discrete measure sum_k w_k delta_{s_k} on [0, inf) with strictly increasing
/// scales and positive weights. A probability measure (the default) has total
/// mass 1 within 1e-9; recovery without mass normalisation produces finite
/// measures of arbitrary mass.
class MixingMeasure {
 public:
  static constexpr double kMassTolerance = 1e-9;

  MixingMeasure(std::vector<Atom> atoms, std::string label)
      : MixingMeasure(std::move(atoms), std::move(label), true) {}

  /// Rescales the weights so they sum to one.
  static MixingMeasure normalized(std::vector<Atom> atoms, std::string label) {
    const double mass = sum_weights(atoms);
    if (!(mass > 0.0) || !std::isfinite(mass)) throw InvalidInput("measure has no finite positive mass");
    for (auto& a : atoms) a.weight /= mass;
    return MixingMeasure(std::move(atoms), std::move(label), true);
  }

  static MixingMeasure finite(std::vector<Atom> atoms, std::string label) {
    return MixingMeasure(std::move(atoms), std::move(label), false);
  }

  static MixingMeasure dirac(double scale) {
    std::ostringstream label;
    label << "delta(" << scale << ")";
    return MixingMeasure({{scale, 1.0}}, label.str());
  }

  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  const std::string& label() const noexcept { return label_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  bool is_probability() const noexcept { return probability_; }
  double total_mass() const noexcept { return sum_weights(atoms_); }

  double mean() const noexcept {
    double m = 0.0;
    for (const auto& a : atoms_) m += a.weight * a.scale;
    return m;
  }

  /// Mass lost by truncating a continuous density to a finite grid; zero for
  /// measures that were not produced by discretize_density.
  double truncation_deficit() const noexcept { return truncation_deficit_; }
  MixingMeasure& set_truncation_deficit(double deficit) {
    truncation_deficit_ = deficit;
    return *this;
  }

 private:
  MixingMeasure(std::vector<Atom> atoms, std::string label, bool probability)
      : atoms_(std::move(atoms)), label_(std::move(label)), probability_(probability) {
    if (atoms_.empty()) throw InvalidInput("mixing measure needs at least one atom");
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const Atom& a = atoms_[k];
      if (!std::isfinite(a.scale) || a.scale < 0.0)
        throw InvalidInput("mixing measure scales must be finite and nonnegative");
      if (!std::isfinite(a.weight) || !(a.weight > 0.0))
        throw InvalidInput("mixing measure weights must be finite and positive");
      if (k > 0 && !(a.scale > atoms_[k - 1].scale))
        throw InvalidInput("mixing measure scales must be strictly increasing");
    }
    if (probability_ && std::abs(sum_weights(atoms_) - 1.0) > kMassTolerance)
      throw InvalidInput("mixing measure weights must sum to 1");
    if (probability_ && measure_observer()) measure_observer()(*this);
  }

  static double sum_weights(const std::vector<Atom>& atoms) noexcept {
    double mass = 0.0;
    for (const auto& a : atoms) mass += a.weight;
    return mass;
  }

  std::vector<Atom> atoms_;
  std::string label_;
  bool probability_;
  double truncation_deficit_ = 0.0;
};

struct DiscretizationOptions {
  std::size_t atoms = 400;
  double lower = 1e-3;
  double upper = 1e3;
};

/// Midpoint rule on a log-spaced grid: cell [e_i, e_{i+1}] becomes an atom at
/// the geometric midpoint with weight density(mid) * (e_{i+1} - e_i). Weights
/// are renormalised to sum to one; `outside_mass` is the probability the
/// density puts outside [lower, upper] and is recorded on the measure and in
/// its label.
inline MixingMeasure discretize_density(const std::function<double(double)>& density,
                                        double outside_mass, const std::string& name,
                                        const DiscretizationOptions& options = {}) {
  if (options.atoms < 1 || !(options.lower > 0.0) || !(options.upper > options.lower))
    throw InvalidInput("discretization needs atoms >= 1 and 0 < lower < upper");
  const double log_lo = std::log(options.lower);
  const double step = (std::log(options.upper) - log_lo) / static_cast<double>(options.atoms);
  std::vector<Atom> atoms;
  atoms.reserve(options.atoms);
  for (std::size_t i = 0; i < options.atoms; ++i) {
    const double left = std::exp(log_lo + step * i);
    const double right = std::exp(log_lo + step * (i + 1));
    const double mid = std::sqrt(left * right);
    const double w = density(mid) * (right - left);
    if (w > 0.0) atoms.push_back({mid, w});
  }
  std::ostringstream label;
  label << name << " [" << options.atoms << " atoms on [" << options.lower << ", " << options.upper
        << "], truncated mass " << outside_mass << "]";
  auto measure = MixingMeasure::normalized(std::move(atoms), label.str());
  measure.set_truncation_deficit(outside_mass);
  return measure;
}

/// Exp(1) mixing law; its transform is (1 + t^2/2)^{-1}, the exp-mixture profile.
inline MixingMeasure exponential_measure(const DiscretizationOptions& options = {}) {
  const double outside = 1.0 - (std::exp(-options.lower) - std::exp(-options.upper));
  return discretize_density([](double s) { return std::exp(-s); }, outside, "exp(1)", options);
}

/// Positive 1/2-stable (Levy) law with density (2 pi)^{-1/2} s^{-3/2} e^{-1/(2s)};
/// its transform is e^{-t}, the cauchy profile. No mean: tails are heavy.
inline MixingMeasure levy_measure(const DiscretizationOptions& options = {}) {
  const auto cdf = [](double s) { return std::erfc(std::sqrt(0.5 / s)); };
  const double outside = 1.0 - (cdf(options.upper) - cdf(options.lower));
  return discretize_density(
      [](double s) { return std::exp(-0.5 / s) / (std::sqrt(2.0 * std::numbers::pi) * s * std::sqrt(s)); },
      outside, "levy(1/2)", options);
}

/// sum_k w_k exp(-t^2 s_k / 2).
inline double mixture_laplace(const MixingMeasure& measure, double t) {
  if (!std::isfinite(t) || t < 0.0) throw InvalidInput("mixture_laplace: t must be finite and >= 0");
  const double half_t2 = 0.5 * t * t;
  double total = 0.0;
  for (const auto& a : measure.atoms()) total += a.weight * std::exp(-half_t2 * a.scale);
  return total;
}

/// The radial profile t -> mixture_laplace(measure, t).
inline RadialProfile mixture_profile(const MixingMeasure& measure) {
  auto shared = std::make_shared<const MixingMeasure>(measure);
  return RadialProfile::from_function([shared](double t) { return mixture_laplace(*shared, t); },
                                      "mixture:" + measure.label());
}

/// mu_n: the law of sqrt(S) Z with S ~ measure and Z standard normal in R^n.
class GaussianScaleMixture {
 public:
  GaussianScaleMixture(MixingMeasure measure, int dimension)
      : measure_(std::move(measure)), dimension_(dimension) {
    if (dimension_ < 1) throw InvalidInput("gaussian scale mixture needs dimension >= 1");
  }

  const MixingMeasure& measure() const noexcept { return measure_; }
  int dimension() const noexcept { return dimension_; }

 private:
  MixingMeasure measure_;
  int dimension_;
};

/// Characteristic function of mu_n at x. Computed as
/// mixture_laplace(measure, |x|), so radiality holds bit for bit.
inline double mixture_cf(const GaussianScaleMixture& mixture, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(mixture.dimension()))
    throw InvalidInput("mixture_cf: argument dimension does not match the mixture");
  return mixture_laplace(mixture.measure(), euclidean_norm(x));
}

/// Draws scales from a mixing measure by inverse-CDF lookup: one uniform u,
/// then the first atom whose cumulative weight exceeds u * total (binary
/// search). Consumes exactly one uniform per draw.
class ScaleSampler {
 public:
  explicit ScaleSampler(const MixingMeasure& measure) {
    cumulative_.reserve(measure.size());
    scales_.reserve(measure.size());
    double running = 0.0;
    for (const auto& a : measure.atoms()) {
      running += a.weight;
      cumulative_.push_back(running);
      scales_.push_back(a.scale);
    }
  }

  double operator()(Stream& rng) const {
    const double target = rng.uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    if (it == cumulative_.end()) --it;
    return scales_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

 private:
  std::vector<double> cumulative_;
  std::vector<double> scales_;
};

/// count points from mu_n, one per row. Point i uses substream i of the seed.
inline Eigen::MatrixXd sample_mixture(const GaussianScaleMixture& mixture, std::size_t count,
                                      std::uint64_t seed, unsigned threads = 0) {
  if (count < 1) throw InvalidInput("sample_mixture: count must be >= 1");
  const ScaleSampler draw_scale(mixture.measure());
  const int n = mixture.dimension();
  Eigen::MatrixXd points(static_cast<Eigen::Index>(count), n);
  parallel_for(count, threads, [&](std::size_t i) {
    Stream rng = Stream::derived(seed, i);
    const double sigma = std::sqrt(draw_scale(rng));
    for (int j = 0; j < n; ++j) points(static_cast<Eigen::Index>(i), j) = sigma * rng.normal();
  });
  return points;
}

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InvalidInput("ks_statistic: samples must be nonempty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

/// Asymptotic two-sample critical value c(alpha) sqrt((na + nb) / (na nb)),
/// c(alpha) = sqrt(-ln(alpha / 2) / 2).
inline double ks_critical_value(double alpha, std::size_t na, std::size_t nb) {
  const double c = std::sqrt(-0.5 * std::log(0.5 * alpha));
  return c * std::sqrt(static_cast<double>(na + nb) / (static_cast<double>(na) * nb));
}

struct ConsistencyOptions {
  double alpha = 0.01;
  /// Multiplies every draw from mu_{n+1}; anything but 1 breaks consistency
  /// and serves as a negative control.
  double corrupt_scale = 1.0;
  unsigned threads = 0;
};

struct ConsistencyReport {
  double ks_first_coordinate;
  double ks_squared_norm;
  double critical_value;
  std::size_t count;
  bool pass;
};

/// Compares the first n coordinates of mu_{n+1} draws with mu_n draws, on the
/// first coordinate and on the squared norm of the n-dimensional projection.
inline ConsistencyReport marginal_consistency_check(const GaussianScaleMixture& mixture,
                                                    std::size_t count, std::uint64_t seed,
                                                    const ConsistencyOptions& options = {}) {
  if (count < 100) throw InvalidInput("marginal_consistency_check: count must be >= 100");
  const int n = mixture.dimension();
  const GaussianScaleMixture larger(mixture.measure(), n + 1);
  Eigen::MatrixXd upper = sample_mixture(larger, count, derive_seed(seed, 0), options.threads);
  upper *= options.corrupt_scale;
  const Eigen::MatrixXd lower = sample_mixture(mixture, count, derive_seed(seed, 1), options.threads);

  std::vector<double> first_upper(count), first_lower(count), norm_upper(count), norm_lower(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    first_upper[i] = upper(r, 0);
    first_lower[i] = lower(r, 0);
    norm_upper[i] = upper.row(r).head(n).squaredNorm();
    norm_lower[i] = lower.row(r).squaredNorm();
  }
  ConsistencyReport report{ks_statistic(std::move(first_upper), std::move(first_lower)),
                           ks_statistic(std::move(norm_upper), std::move(norm_lower)),
                           ks_critical_value(options.alpha, count, count), count, false};
  report.pass = report.ks_first_coordinate < report.critical_value &&
                report.ks_squared_norm < report.critical_value;
  return report;
}

// JSON: {"label": str, "atoms": [{"s": float, "w": float}, ...]}

inline nlohmann::json to_json(const MixingMeasure& measure) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : measure.atoms()) atoms.push_back({{"s", a.scale}, {"w", a.weight}});
  return {{"label", measure.label()}, {"atoms", std::move(atoms)}};
}

/// Rejects unsorted, duplicated, nonpositive or non-normalised atoms unless
/// `renormalize` is set, in which case weights are rescaled to sum to one.
inline MixingMeasure measure_from_json(const nlohmann::json& doc, bool renormalize = false) {
  if (!doc.is_object() || !doc.contains("atoms") || !doc["atoms"].is_array())
    throw InvalidInput("measure JSON must be an object with an 'atoms' array");
  std::string label = doc.value("label", std::string("unnamed"));
  std::vector<Atom> atoms;
  for (const auto& entry : doc["atoms"]) {
    if (!entry.is_object() || !entry.contains("s") || !entry.contains("w") ||
        !entry["s"].is_number() || !entry["w"].is_number())
      throw InvalidInput("measure JSON atoms must be objects with numeric 's' and 'w'");
    atoms.push_back({entry["s"].get<double>(), entry["w"].get<double>()});
  }
  return renormalize ? MixingMeasure::normalized(std::move(atoms), std::move(label))
                     : MixingMeasure(std::move(atoms), std::move(label));
}

inline MixingMeasure load_measure_json(const std::string& path, bool renormalize = false) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open measure JSON '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("measure JSON '" + path + "' does not parse: " + e.what());
  }
  return measure_from_json(doc, renormalize);
}

}  // namespace schoenberg

#endif  // SCHOENBERG_MIXTURE_LAB_HPP_
