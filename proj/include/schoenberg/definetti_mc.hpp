#ifndef SCHOENBERG_DEFINETTI_MC_HPP_
#define SCHOENBERG_DEFINETTI_MC_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "schoenberg/error.hpp"
#include "schoenberg/mixture_lab.hpp"
#include "schoenberg/radial_core.hpp"
#include "schoenberg/random.hpp"

namespace schoenberg {

/// Y_1..Y_n drawn conditionally i.i.d. N(0, S) given one latent scale S.
struct ExchangeableSample {
  std::vector<double> values;
  std::optional<double> latent_scale;
};

namespace detail {

/// The exact draw sequence of sample_exchangeable: one uniform for S, then n
/// normals. `sink(y)` receives each Y_i = sqrt(S) Z_i.
template <class Sink>
double draw_exchangeable(const ScaleSampler& draw_scale, std::size_t n, Stream& rng, Sink&& sink) {
  const double scale = draw_scale(rng);
  const double sigma = std::sqrt(scale);
  for (std::size_t i = 0; i < n; ++i) sink(sigma * rng.normal());
  return scale;
}

}  // namespace detail

inline ExchangeableSample sample_exchangeable(const MixingMeasure& measure, std::size_t n,
                                              std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample_exchangeable: n must be >= 1");
  Stream rng(seed);
  ExchangeableSample sample;
  sample.values.reserve(n);
  sample.latent_scale = detail::draw_exchangeable(ScaleSampler(measure), n, rng,
                                                  [&](double y) { sample.values.push_back(y); });
  return sample;
}

/// (1/n) sum Y_i^2.
inline double lln_statistic(const ExchangeableSample& sample) {
  if (sample.values.empty()) throw InvalidInput("lln_statistic: sample is empty");
  double sum = 0.0;
  for (double y : sample.values) sum += y * y;
  return sum / static_cast<double>(sample.values.size());
}

/// Sorted sample of nonnegative L-values with its step CDF.
class EmpiricalMeasure {
 public:
  explicit EmpiricalMeasure(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw InvalidInput("empirical measure needs at least one value");
    for (double v : values_)
      if (!std::isfinite(v) || v < 0.0)
        throw InvalidInput("empirical measure values must be finite and nonnegative");
    std::sort(values_.begin(), values_.end());
  }

  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Fraction of values <= x.
  double cdf(double x) const {
    const auto it = std::upper_bound(values_.begin(), values_.end(), x);
    return static_cast<double>(it - values_.begin()) / static_cast<double>(values_.size());
  }

  double mean() const {
    double sum = 0.0;
    for (double v : values_) sum += v;
    return sum / static_cast<double>(values_.size());
  }

  /// Single-column CSV with header "L".
  void write_csv(std::ostream& out) const {
    out << "L\n";
    out.precision(17);
    for (double v : values_) out << v << '\n';
  }

  /// Equal-mass histogram: the sorted sample is cut into `bins` consecutive
  /// groups of (nearly) equal size, each group becomes an atom at its mean with
  /// weight size/N. Groups with equal means are merged.
  MixingMeasure to_mixing_measure(std::size_t bins = 64, std::string label = "empirical") const {
    if (bins < 1) throw InvalidInput("histogram needs at least one bin");
    bins = std::min(bins, values_.size());
    const double total = static_cast<double>(values_.size());
    std::vector<Atom> atoms;
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t begin = b * values_.size() / bins;
      const std::size_t end = (b + 1) * values_.size() / bins;
      if (begin == end) continue;
      double sum = 0.0;
      for (std::size_t i = begin; i < end; ++i) sum += values_[i];
      const double mid = sum / static_cast<double>(end - begin);
      const double weight = static_cast<double>(end - begin) / total;
      if (!atoms.empty() && !(mid > atoms.back().scale)) {
        atoms.back().weight += weight;
      } else {
        atoms.push_back({mid, weight});
      }
    }
    return MixingMeasure::normalized(std::move(atoms), std::move(label));
  }

 private:
  std::vector<double> values_;
};

/// Runs `reps` independent exchangeable draws (replicate r on substream r of
/// the seed) and collects their LLN statistics.
inline EmpiricalMeasure estimate_mixing(const MixingMeasure& measure, std::size_t n,
                                        std::size_t reps, std::uint64_t seed,
                                        unsigned threads = 0) {
  if (n < 1) throw InvalidInput("estimate_mixing: n must be >= 1");
  if (reps < 100) throw InvalidInput("estimate_mixing: reps must be >= 100");
  const ScaleSampler draw_scale(measure);
  std::vector<double> l_values(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    Stream rng = Stream::derived(seed, r);
    double sum = 0.0;
    detail::draw_exchangeable(draw_scale, n, rng, [&](double y) { sum += y * y; });
    l_values[r] = sum / static_cast<double>(n);
  });
  return EmpiricalMeasure(std::move(l_values));
}

struct NoiseConfig {
  double t = 1.0;        // standard deviation of the X_i
  std::size_t n = 1000;  // sample length
  std::size_t reps = 100000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(t > 0.0) || !std::isfinite(t)) throw InvalidInput("noise config: t must be positive");
    if (n < 1) throw InvalidInput("noise config: n must be >= 1");
    if (reps < 1) throw InvalidInput("noise config: reps must be >= 1");
  }
};

struct KeyIdentityResult {
  double lhs;
  double rhs;
  double lhs_se;
  double rhs_se;
  double f_of_t;

  double combined_se() const { return std::sqrt(lhs_se * lhs_se + rhs_se * rhs_se); }
};

struct KeyIdentityOptions {
  /// Largest |f(t) - mixture_laplace(measure, t)| tolerated on the check grid.
  double match_tolerance = 0.05;
  unsigned threads = 0;
};

/// Verifies f and the measure describe the same profile on five radii
/// spread over min(4, domain of f).
inline void require_profile_matches(const RadialProfile& f, const MixingMeasure& measure,
                                    double tolerance) {
  const double span = std::min(4.0, f.domain_max().value_or(4.0));
  for (double fraction : {0.0625, 0.125, 0.25, 0.5, 1.0}) {
    const double t = fraction * span;
    const double gap = std::abs(f(t) - mixture_laplace(measure, t));
    if (!(gap <= tolerance)) {
      std::ostringstream msg;
      msg << "profile '" << f.label() << "' is not the transform of measure '" << measure.label()
          << "': |difference| = " << gap << " at t = " << t;
      throw InconsistentInputs(msg.str());
    }
  }
}

namespace detail {

struct MeanAndError {
  double mean;
  double standard_error;
};

inline MeanAndError mean_and_error(const std::vector<double>& values) {
  const double count = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / count;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (count - 1.0)) / std::sqrt(count)};
}

}  // namespace detail

/// Monte Carlo estimates of both sides of
///   E f(sqrt((1/n) sum X_i^2)) = E exp(-(t^2 / 2n) sum Y_i^2),
/// X_i i.i.d. N(0, t^2) and Y exchangeable from the measure. The two sides use
/// independent substreams (0 and 1) of the seed.
inline KeyIdentityResult key_identity_mc(const RadialProfile& f, const MixingMeasure& measure,
                                         const NoiseConfig& config,
                                         const KeyIdentityOptions& options = {}) {
  config.validate();
  require_profile_matches(f, measure, options.match_tolerance);

  const double n = static_cast<double>(config.n);
  const double t = config.t;
  const std::uint64_t lhs_seed = derive_seed(config.seed, 0);
  const std::uint64_t rhs_seed = derive_seed(config.seed, 1);
  const ScaleSampler draw_scale(measure);

  std::vector<double> lhs(config.reps), rhs(config.reps);
  parallel_for(config.reps, options.threads, [&](std::size_t r) {
    Stream noise = Stream::derived(lhs_seed, r);
    double sum_x2 = 0.0;
    for (std::size_t i = 0; i < config.n; ++i) {
      const double x = t * noise.normal();
      sum_x2 += x * x;
    }
    lhs[r] = f(std::sqrt(sum_x2 / n));

    Stream mixture = Stream::derived(rhs_seed, r);
    double sum_y2 = 0.0;
    detail::draw_exchangeable(draw_scale, config.n, mixture, [&](double y) { sum_y2 += y * y; });
    rhs[r] = std::exp(-(t * t / (2.0 * n)) * sum_y2);
  });

  const auto l = detail::mean_and_error(lhs);
  const auto rr = detail::mean_and_error(rhs);
  return {l.mean, rr.mean, l.standard_error, rr.standard_error, f(t)};
}

}  // namespace schoenberg

#endif  // SCHOENBERG_DEFINETTI_MC_HPP_
