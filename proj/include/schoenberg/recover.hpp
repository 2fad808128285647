#ifndef SCHOENBERG_RECOVER_HPP_
#define SCHOENBERG_RECOVER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "schoenberg/definetti_mc.hpp"
#include "schoenberg/error.hpp"
#include "schoenberg/mixture_lab.hpp"

namespace schoenberg {

inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count < 1) throw InvalidInput("linspace: count must be >= 1");
  if (count == 1) return {lo};
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  out.back() = hi;
  return out;
}

/// count points with equal ratios from lo to hi (both included).
inline std::vector<double> logspace(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo)) throw InvalidInput("logspace: need 0 < lo <= hi");
  std::vector<double> exponents = linspace(std::log10(lo), std::log10(hi), count);
  for (double& e : exponents) e = std::pow(10.0, e);
  exponents.front() = lo;
  exponents.back() = hi;
  return exponents;
}

/// t in [0, 4], 41 equispaced points.
inline std::vector<double> default_t_grid() { return linspace(0.0, 4.0, 41); }

/// s log-spaced on [1e-2, 1e2] with 201 points, i.e. 50 per decade; s = 1 is a node.
inline std::vector<double> default_s_grid() { return logspace(1e-2, 1e2, 201); }

/// A[j][k] = exp(-t_j^2 s_k / 2).
inline Eigen::MatrixXd design_matrix(std::span<const double> t_grid, std::span<const double> s_grid) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(t_grid.size()), static_cast<Eigen::Index>(s_grid.size()));
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    const double half_t2 = 0.5 * t_grid[j] * t_grid[j];
    for (std::size_t k = 0; k < s_grid.size(); ++k)
      a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = std::exp(-half_t2 * s_grid[k]);
  }
  return a;
}

struct NnlsResult {
  Eigen::VectorXd weights;
  std::size_t iterations;
  double kkt_residual;  // max_k of |grad_k| on w_k > 0 and max(0, -grad_k) on w_k = 0
};

namespace detail {

inline Eigen::VectorXd solve_passive(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                     const std::vector<bool>& passive) {
  std::vector<Eigen::Index> columns;
  for (Eigen::Index k = 0; k < a.cols(); ++k)
    if (passive[static_cast<std::size_t>(k)]) columns.push_back(k);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(a.cols());
  if (columns.empty()) return z;
  Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(columns[c]);
  const Eigen::VectorXd coef = sub.colPivHouseholderQr().solve(b);
  for (std::size_t c = 0; c < columns.size(); ++c) z(columns[c]) = coef(static_cast<Eigen::Index>(c));
  return z;
}

/// A^T (b - A z) for z the least-squares fit on the passive columns, evaluated
/// as in Lawson-Hanson on the rows left over after a Householder reduction of
/// the passive block. Heavily weighted rows (such as a mass penalty) are then
/// absorbed by the reduction instead of swamping the gradient with rounding.
inline Eigen::VectorXd projected_descent(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                         const std::vector<bool>& passive) {
  std::vector<Eigen::Index> columns;
  for (Eigen::Index k = 0; k < a.cols(); ++k)
    if (passive[static_cast<std::size_t>(k)]) columns.push_back(k);
  if (columns.empty()) return a.transpose() * b;
  const auto used = static_cast<Eigen::Index>(columns.size());
  if (used >= a.rows()) return Eigen::VectorXd::Zero(a.cols());
  Eigen::MatrixXd sub(a.rows(), used);
  for (Eigen::Index c = 0; c < used; ++c) sub.col(c) = a.col(columns[static_cast<std::size_t>(c)]);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(sub);
  const Eigen::MatrixXd qa = qr.householderQ().adjoint() * a;
  const Eigen::VectorXd qb = qr.householderQ().adjoint() * b;
  const Eigen::Index rest = a.rows() - used;
  Eigen::VectorXd descent = qa.bottomRows(rest).transpose() * qb.tail(rest);
  for (Eigen::Index k : columns) descent(k) = 0.0;
  // A column whose remainder after the reduction is at rounding level would
  // enter with an arbitrary coefficient; treat it as already spanned.
  const double floor = 100.0 * std::numeric_limits<double>::epsilon();
  for (Eigen::Index k = 0; k < a.cols(); ++k)
    if (qa.bottomRows(rest).col(k).norm() <= floor * a.col(k).norm()) descent(k) = 0.0;
  return descent;
}

inline double kkt_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
  const Eigen::VectorXd grad = a.transpose() * (a * x - b);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k)
    worst = std::max(worst, x(k) > 0.0 ? std::abs(grad(k)) : std::max(0.0, -grad(k)));
  return worst;
}

}  // namespace detail

/// Lawson-Hanson active-set solver for
///   min |A w - b|^2 + ridge |w|^2  subject to  w >= 0.
/// The ridge term is handled by stacking sqrt(ridge) I under A. Iterations
/// (outer additions plus inner backtracking steps) are capped at 10 * cols
/// unless `max_iterations` says otherwise.
inline NnlsResult nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double ridge = 0.0,
                       std::optional<std::size_t> max_iterations = std::nullopt) {
  if (a.rows() != b.size()) throw InvalidInput("nnls: rows(A) must equal len(b)");
  if (a.cols() == 0) throw InvalidInput("nnls: A has no columns");
  if (!a.allFinite() || !b.allFinite()) throw InvalidInput("nnls: non-finite input");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw InvalidInput("nnls: ridge must be >= 0");

  const Eigen::Index cols = a.cols();
  Eigen::MatrixXd lhs = a;
  Eigen::VectorXd rhs = b;
  if (ridge > 0.0) {
    lhs.resize(a.rows() + cols, cols);
    lhs << a, std::sqrt(ridge) * Eigen::MatrixXd::Identity(cols, cols);
    rhs.resize(b.size() + cols);
    rhs << b, Eigen::VectorXd::Zero(cols);
  }

  const std::size_t cap = max_iterations.value_or(10 * static_cast<std::size_t>(cols));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(cols);
  std::vector<bool> passive(static_cast<std::size_t>(cols), false);
  std::vector<bool> blocked(static_cast<std::size_t>(cols), false);
  std::size_t iterations = 0;
  double objective = rhs.squaredNorm();

  const auto fail = [&] {
    throw NonConvergence("nnls: iteration cap exceeded",
                         std::vector<double>(x.data(), x.data() + x.size()), iterations);
  };

  while (true) {
    const Eigen::VectorXd descent = detail::projected_descent(lhs, rhs, passive);
    Eigen::Index entering = -1;
    double best = 0.0;
    for (Eigen::Index k = 0; k < cols; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      if (!passive[uk] && !blocked[uk] && descent(k) > best) {
        best = descent(k);
        entering = k;
      }
    }
    if (entering < 0) break;
    if (++iterations > cap) fail();

    const Eigen::VectorXd x_before = x;
    const std::vector<bool> passive_before = passive;
    passive[static_cast<std::size_t>(entering)] = true;
    Eigen::VectorXd z = detail::solve_passive(lhs, rhs, passive);
    if (!(z(entering) > 0.0)) {
      // Column is numerically dependent on the passive set; skip it until x moves.
      passive[static_cast<std::size_t>(entering)] = false;
      blocked[static_cast<std::size_t>(entering)] = true;
      continue;
    }

    while (true) {
      Eigen::Index leaving = -1;
      double alpha = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < cols; ++k) {
        if (!passive[static_cast<std::size_t>(k)] || z(k) > 0.0) continue;
        const double step = x(k) / (x(k) - z(k));
        if (step < alpha) {
          alpha = step;
          leaving = k;
        }
      }
      if (leaving < 0) break;
      if (++iterations > cap) fail();
      x += alpha * (z - x);
      for (Eigen::Index k = 0; k < cols; ++k) {
        const auto uk = static_cast<std::size_t>(k);
        if (passive[uk] && (k == leaving || x(k) <= 0.0)) {
          passive[uk] = false;
          x(k) = 0.0;
        }
      }
      z = detail::solve_passive(lhs, rhs, passive);
    }

    // Each accepted step must lower the objective; at rounding level that
    // fails, and undoing the step prevents the active set from cycling.
    const double updated = (rhs - lhs * z).squaredNorm();
    if (!(updated < objective)) {
      x = x_before;
      passive = passive_before;
      blocked[static_cast<std::size_t>(entering)] = true;
      continue;
    }
    objective = updated;
    std::fill(blocked.begin(), blocked.end(), false);
    x = z;
  }

  return {x, iterations, detail::kkt_residual(lhs, rhs, x)};
}

struct RecoveryOptions {
  bool normalize_mass = true;
  double ridge = 1e-10;
};

struct RecoveryProblem {
  std::vector<double> t_grid;    // strictly increasing, starts at 0
  std::vector<double> f_values;  // in [0, 1], f(0) = 1 (both up to 1e-9)
  std::vector<double> s_grid;    // strictly increasing, positive
  RecoveryOptions options{};

  /// Samples a profile on the given grids.
  static RecoveryProblem from_profile(const RadialProfile& f, std::vector<double> t_grid = default_t_grid(),
                                      std::vector<double> s_grid = default_s_grid(),
                                      RecoveryOptions options = {}) {
    std::vector<double> values(t_grid.size());
    for (std::size_t j = 0; j < t_grid.size(); ++j) values[j] = f(t_grid[j]);
    return {std::move(t_grid), std::move(values), std::move(s_grid), options};
  }

  void validate() const {
    if (t_grid.empty() || s_grid.empty()) throw InvalidInput("recovery: grids must be nonempty");
    if (t_grid.size() != f_values.size()) throw InvalidInput("recovery: f_values must match t_grid");
    if (t_grid.front() != 0.0) throw InvalidInput("recovery: t_grid must start at 0");
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
      if (!std::isfinite(t_grid[j]) || !std::isfinite(f_values[j]))
        throw InvalidInput("recovery: non-finite grid or profile value");
      if (j > 0 && !(t_grid[j] > t_grid[j - 1]))
        throw InvalidInput("recovery: t_grid must be strictly increasing");
      if (f_values[j] < 0.0 || f_values[j] > 1.0 + MixingMeasure::kMassTolerance)
        throw InvalidInput("recovery: profile values must lie in [0, 1]");
    }
    if (std::abs(f_values.front() - 1.0) > MixingMeasure::kMassTolerance)
      throw InvalidInput("recovery: f(0) must equal 1");
    for (std::size_t k = 0; k < s_grid.size(); ++k) {
      if (!std::isfinite(s_grid[k]) || !(s_grid[k] > 0.0))
        throw InvalidInput("recovery: s_grid values must be finite and positive");
      if (k > 0 && !(s_grid[k] > s_grid[k - 1]))
        throw InvalidInput("recovery: s_grid must be strictly increasing");
    }
    if (!(options.ridge >= 0.0)) throw InvalidInput("recovery: ridge must be >= 0");
  }
};

struct RecoveryResult {
  MixingMeasure measure;
  double residual_norm;  // RMS of mixture_laplace(measure, t_j) - f_j
  std::size_t iterations;
  double mass_deficit;   // 1 - sum of solver weights before pruning and renormalisation
};

inline constexpr double kPruneThreshold = 1e-12;

/// Nonnegative least-squares fit of f(t) = sum_k w_k exp(-t^2 s_k / 2).
/// With normalize_mass, a row of weight 1e3 * |A|_inf asks for sum w = 1 and
/// the pruned weights are then rescaled to sum to one exactly.
inline RecoveryResult recover_mixing(const RecoveryProblem& problem) {
  problem.validate();
  Eigen::MatrixXd a = design_matrix(problem.t_grid, problem.s_grid);
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(problem.f_values.data(),
                                                        static_cast<Eigen::Index>(problem.f_values.size()));
  if (problem.options.normalize_mass) {
    const double penalty = 1e3 * a.cwiseAbs().rowwise().sum().maxCoeff();
    a.conservativeResize(a.rows() + 1, Eigen::NoChange);
    a.row(a.rows() - 1).setConstant(penalty);
    b.conservativeResize(b.size() + 1);
    b(b.size() - 1) = penalty;
  }
  const NnlsResult solved = nnls(a, b, problem.options.ridge);

  std::vector<Atom> atoms;
  for (std::size_t k = 0; k < problem.s_grid.size(); ++k) {
    const double w = solved.weights(static_cast<Eigen::Index>(k));
    if (w >= kPruneThreshold) atoms.push_back({problem.s_grid[k], w});
  }
  if (atoms.empty()) throw InvalidInput("recovery: every weight was pruned; the profile carries no mass");

  const double mass = solved.weights.sum();
  MixingMeasure measure = problem.options.normalize_mass
                              ? MixingMeasure::normalized(std::move(atoms), "recovered")
                              : MixingMeasure::finite(std::move(atoms), "recovered");
  double ss = 0.0;
  for (std::size_t j = 0; j < problem.t_grid.size(); ++j) {
    const double r = mixture_laplace(measure, problem.t_grid[j]) - problem.f_values[j];
    ss += r * r;
  }
  return {std::move(measure), std::sqrt(ss / static_cast<double>(problem.t_grid.size())),
          solved.iterations, 1.0 - mass};
}

/// Right-continuous step CDF: cumulative[i] = P(X <= support[i]).
struct StepDistribution {
  std::vector<double> support;
  std::vector<double> cumulative;
};

inline StepDistribution to_step(const MixingMeasure& measure) {
  StepDistribution d;
  const double mass = measure.total_mass();
  double running = 0.0;
  for (const auto& a : measure.atoms()) {
    running += a.weight;
    d.support.push_back(a.scale);
    d.cumulative.push_back(running / mass);
  }
  d.cumulative.back() = 1.0;
  return d;
}

inline StepDistribution to_step(const EmpiricalMeasure& measure) {
  StepDistribution d;
  const auto& v = measure.values();
  const double total = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
    d.support.push_back(v[i]);
    d.cumulative.push_back(static_cast<double>(i + 1) / total);
  }
  return d;
}

namespace detail {

/// Walks the merged support calling visit(x, next_x, F_a(x), F_b(x)); next_x
/// is +inf after the last point.
template <class Visit>
void merge_cdfs(const StepDistribution& a, const StepDistribution& b, Visit&& visit) {
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0;
  while (i < a.support.size() || j < b.support.size()) {
    const double xa = i < a.support.size() ? a.support[i] : std::numeric_limits<double>::infinity();
    const double xb = j < b.support.size() ? b.support[j] : std::numeric_limits<double>::infinity();
    const double x = std::min(xa, xb);
    if (xa == x) fa = a.cumulative[i++];
    if (xb == x) fb = b.cumulative[j++];
    const double na = i < a.support.size() ? a.support[i] : std::numeric_limits<double>::infinity();
    const double nb = j < b.support.size() ? b.support[j] : std::numeric_limits<double>::infinity();
    visit(x, std::min(na, nb), fa, fb);
  }
}

}  // namespace detail

/// W1 = integral of |F_a - F_b|, exact for step CDFs.
template <class A, class B>
double wasserstein1(const A& a, const B& b) {
  double total = 0.0;
  detail::merge_cdfs(to_step(a), to_step(b), [&](double x, double next, double fa, double fb) {
    if (std::isfinite(next)) total += std::abs(fa - fb) * (next - x);
  });
  return total;
}

/// sup |F_a - F_b| over the merged support.
template <class A, class B>
double ks_distance(const A& a, const B& b) {
  double worst = 0.0;
  detail::merge_cdfs(to_step(a), to_step(b), [&](double, double, double fa, double fb) {
    worst = std::max(worst, std::abs(fa - fb));
  });
  return worst;
}

}  // namespace schoenberg

#endif  // SCHOENBERG_RECOVER_HPP_
