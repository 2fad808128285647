#ifndef SCHOENBERG_RADIAL_CORE_HPP_
#define SCHOENBERG_RADIAL_CORE_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cctype>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "schoenberg/error.hpp"
#include "schoenberg/random.hpp"

namespace schoenberg {

namespace detail {

/// Shape-preserving piecewise cubic Hermite interpolant (Fritsch-Carlson
/// slopes with the weighted harmonic mean of Fritsch-Butland). Monotone data
/// yields a monotone interpolant.
class MonotoneCubic {
 public:
  MonotoneCubic(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)), d_(x_.size(), 0.0) {
    const std::size_t n = x_.size();
    if (n < 2) return;
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t k = 0; k + 1 < n; ++k) {
      h[k] = x_[k + 1] - x_[k];
      delta[k] = (y_[k + 1] - y_[k]) / h[k];
    }
    if (n == 2) {
      d_[0] = d_[1] = delta[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] * delta[k] <= 0.0) continue;
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

  double operator()(double t) const {
    if (x_.size() == 1) return y_.front();
    auto it = std::upper_bound(x_.begin(), x_.end(), t);
    std::size_t k = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    if (k >= x_.size() - 1) k = x_.size() - 2;
    const double h = x_[k + 1] - x_[k];
    const double s = (t - x_[k]) / h;
    if (s == 0.0) return y_[k];
    if (s == 1.0) return y_[k + 1];
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    const double h10 = s3 - 2.0 * s2 + s;
    const double h01 = -2.0 * s3 + 3.0 * s2;
    const double h11 = s3 - s2;
    return h00 * y_[k] + h10 * h * d_[k] + h01 * y_[k + 1] + h11 * h * d_[k + 1];
  }

 private:
  static double end_slope(double h0, double h1, double m0, double m1) {
    double d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (std::signbit(d) != std::signbit(m0) || m0 == 0.0) {
      d = 0.0;
    } else if (std::signbit(m0) != std::signbit(m1) && std::abs(d) > 3.0 * std::abs(m0)) {
      d = 3.0 * m0;
    }
    return d;
  }

  std::vector<double> x_, y_, d_;
};

}  // namespace detail

enum class ProfileKind { gaussian, cauchy, exp_mixture, triangle, tabulated, function };

/// A radial profile f: [0, inf) -> [0, inf) normalised so that f(0) = 1.
///
/// Catalog entries are closed forms. Tabulated profiles interpolate their
/// nodes with a monotone cubic clamped at zero and refuse to extrapolate past
/// the last node.
class RadialProfile {
 public:
  static RadialProfile gaussian() {
    return {ProfileKind::gaussian, "gaussian", [](double t) { return std::exp(-0.5 * t * t); },
            std::nullopt};
  }
  /// e^{-t}; the name follows the Cauchy characteristic function.
  static RadialProfile cauchy() {
    return {ProfileKind::cauchy, "cauchy", [](double t) { return std::exp(-t); }, std::nullopt};
  }
  static RadialProfile exp_mixture() {
    return {ProfileKind::exp_mixture, "exp-mixture",
            [](double t) { return 1.0 / (1.0 + 0.5 * t * t); }, std::nullopt};
  }
  static RadialProfile triangle() {
    return {ProfileKind::triangle, "triangle", [](double t) { return std::max(0.0, 1.0 - t); },
            std::nullopt};
  }

  static bool is_catalog_id(std::string_view id) {
    return id == "gaussian" || id == "cauchy" || id == "exp-mixture" || id == "triangle";
  }

  static RadialProfile from_catalog(std::string_view id) {
    if (id == "gaussian") return gaussian();
    if (id == "cauchy") return cauchy();
    if (id == "exp-mixture") return exp_mixture();
    if (id == "triangle") return triangle();
    throw InvalidInput("unknown profile id '" + std::string(id) + "'");
  }

  /// Nodes must be strictly increasing in t, start exactly at (0, 1) and carry
  /// finite nonnegative values.
  static RadialProfile tabulated(std::vector<double> t, std::vector<double> f,
                                 std::string label = "tabulated") {
    if (t.empty() || t.size() != f.size())
      throw InvalidInput("tabulated profile needs matching, nonempty t and f columns");
    if (t.front() != 0.0 || f.front() != 1.0)
      throw InvalidInput("tabulated profile must start with the node (t=0, f=1)");
    for (std::size_t k = 0; k < t.size(); ++k) {
      if (!std::isfinite(t[k]) || !std::isfinite(f[k]))
        throw InvalidInput("tabulated profile contains a non-finite value");
      if (f[k] < 0.0) throw InvalidInput("tabulated profile contains a negative value");
      if (k > 0 && !(t[k] > t[k - 1]))
        throw InvalidInput("tabulated profile t column must be strictly increasing");
    }
    const double t_max = t.back();
    auto spline = std::make_shared<const detail::MonotoneCubic>(std::move(t), std::move(f));
    return {ProfileKind::tabulated, std::move(label),
            [spline](double x) { return std::max(0.0, (*spline)(x)); }, t_max};
  }

  /// Wraps an arbitrary evaluator; the caller vouches for f(0) = 1 and f >= 0.
  static RadialProfile from_function(std::function<double(double)> fn, std::string label,
                                     std::optional<double> domain_max = std::nullopt) {
    return {ProfileKind::function, std::move(label), std::move(fn), domain_max};
  }

  double operator()(double t) const {
    if (!std::isfinite(t) || t < 0.0)
      throw InvalidInput("radial profile evaluated at a negative or non-finite radius");
    if (domain_max_ && t > *domain_max_)
      throw InvalidInput("radial profile '" + label_ + "' evaluated beyond its last node");
    return fn_(t);
  }

  ProfileKind kind() const noexcept { return kind_; }
  const std::string& label() const noexcept { return label_; }
  std::optional<double> domain_max() const noexcept { return domain_max_; }

 private:
  RadialProfile(ProfileKind kind, std::string label, std::function<double(double)> fn,
                std::optional<double> domain_max)
      : kind_(kind), label_(std::move(label)), fn_(std::move(fn)), domain_max_(domain_max) {}

  ProfileKind kind_;
  std::string label_;
  std::function<double(double)> fn_;
  std::optional<double> domain_max_;
};

struct ProfileTable {
  std::vector<double> t;
  std::vector<double> f;
};

/// Reads a two-column CSV with header "t,f".
inline ProfileTable read_profile_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open profile CSV '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("profile CSV '" + path + "' is empty");
  line.erase(std::remove_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }),
             line.end());
  if (line != "t,f") throw InvalidInput("profile CSV header must be 't,f', got '" + line + "'");
  ProfileTable table;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidInput("malformed profile CSV row '" + line + "'");
    try {
      table.t.push_back(std::stod(line.substr(0, comma)));
      table.f.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::logic_error&) {
      throw InvalidInput("malformed profile CSV row '" + line + "'");
    }
  }
  return table;
}

inline RadialProfile load_profile_csv(const std::string& path) {
  ProfileTable table = read_profile_csv(path);
  return RadialProfile::tabulated(std::move(table.t), std::move(table.f), path);
}

/// k points in R^n, stored one per row.
class PointSet {
 public:
  explicit PointSet(Eigen::MatrixXd points) : points_(std::move(points)) {
    if (points_.rows() < 1 || points_.cols() < 1)
      throw InvalidInput("point set needs at least one point of dimension >= 1");
    if (!points_.allFinite()) throw InvalidInput("point set contains non-finite coordinates");
  }

  Eigen::Index size() const noexcept { return points_.rows(); }
  Eigen::Index dimension() const noexcept { return points_.cols(); }
  const Eigen::MatrixXd& points() const noexcept { return points_; }
  Eigen::RowVectorXd point(Eigen::Index i) const { return points_.row(i); }

 private:
  Eigen::MatrixXd points_;
};

inline double euclidean_norm(std::span<const double> x) {
  double sum = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidInput("vector has a non-finite component");
    sum += v * v;
  }
  return std::sqrt(sum);
}

/// f(|x|_n).
inline double eval_radial(const RadialProfile& f, std::span<const double> x) {
  return f(euclidean_norm(x));
}

/// G_ij = f(|x_i - x_j|). The diagonal is exactly 1, the f(0) of a valid
/// profile, and the upper triangle is mirrored so G is exactly symmetric.
inline Eigen::MatrixXd gram_matrix(const RadialProfile& f, const PointSet& points) {
  const Eigen::Index k = points.size();
  const Eigen::MatrixXd& x = points.points();
  Eigen::MatrixXd g(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    g(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const double value = f((x.row(i) - x.row(j)).norm());
      g(i, j) = value;
      g(j, i) = value;
    }
  }
  return g;
}

/// Re(c^* G c).
inline double quadratic_form(const Eigen::MatrixXd& g, std::span<const std::complex<double>> c) {
  if (g.rows() != g.cols() || static_cast<std::size_t>(g.rows()) != c.size())
    throw InvalidInput("quadratic form: coefficient length does not match the matrix");
  double total = 0.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      total += g(i, j) * (std::conj(c[i]) * c[j]).real();
    }
  }
  return total;
}

inline double quadratic_form(const Eigen::MatrixXd& g, const Eigen::VectorXd& c) {
  if (g.rows() != g.cols() || g.rows() != c.size())
    throw InvalidInput("quadratic form: coefficient length does not match the matrix");
  return c.dot(g * c);
}

namespace detail {

inline void require_symmetric(const Eigen::MatrixXd& g) {
  if (g.rows() != g.cols() || g.rows() == 0) throw InvalidInput("matrix must be square and nonempty");
  if (!g.allFinite()) throw InvalidInput("matrix contains non-finite entries");
  const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
  if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidInput("matrix is not symmetric");
}

}  // namespace detail

struct EigenPair {
  double value;
  Eigen::VectorXd vector;
  double spectral_norm;
};

/// Smallest eigenvalue with its unit eigenvector, plus max |eigenvalue|.
inline EigenPair smallest_eigenpair(const Eigen::MatrixXd& g) {
  detail::require_symmetric(g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g);
  if (solver.info() != Eigen::Success) throw InvalidInput("symmetric eigensolver failed");
  const auto& values = solver.eigenvalues();  // ascending
  return {values(0), solver.eigenvectors().col(0),
          std::max(std::abs(values(0)), std::abs(values(values.size() - 1)))};
}

inline double min_eigenvalue(const Eigen::MatrixXd& g) {
  detail::require_symmetric(g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw InvalidInput("symmetric eigensolver failed");
  return solver.eigenvalues()(0);
}

enum class Verdict { certified, refuted, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::certified: return "certified";
    case Verdict::refuted: return "refuted";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

struct Witness {
  Eigen::VectorXd coefficients;  // real unit eigenvector of the refuting Gram matrix
  double quadratic_form;
};

struct PsdReport {
  PointSet point_set;  // the refuting configuration, else the one attaining min_eigenvalue
  double min_eigenvalue;
  double tolerance;
  Verdict verdict;
  std::optional<Witness> witness;  // present iff refuted
  std::size_t trials_run;
};

struct CertifyOptions {
  int dimension = 2;
  std::size_t trials = 1000;
  int k_max = 48;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  double box_half_width = 3.0;  // L: random boxes are [-L, L]^n, lattices span up to 2L
  unsigned threads = 0;
};

enum class Configuration { random_box, line_lattice, plane_lattice };

namespace detail {

/// Random orthonormal directions in R^n (Gram-Schmidt on Gaussian vectors).
inline Eigen::MatrixXd random_frame(Stream& rng, int n, int count) {
  Eigen::MatrixXd frame(n, count);
  for (int c = 0; c < count; ++c) {
    Eigen::VectorXd v(n);
    double norm = 0.0;
    do {
      for (int i = 0; i < n; ++i) v(i) = rng.normal();
      for (int p = 0; p < c; ++p) v -= frame.col(p).dot(v) * frame.col(p);
      norm = v.norm();
    } while (norm < 1e-8);
    frame.col(c) = v / norm;
  }
  return frame;
}

/// Trial i uses configuration i mod 3; plane lattices fall back to lines in R^1.
inline Configuration configuration_for(std::size_t trial, int dimension) {
  switch (trial % 3) {
    case 0: return Configuration::random_box;
    case 1: return Configuration::line_lattice;
    default: return dimension >= 2 ? Configuration::plane_lattice : Configuration::line_lattice;
  }
}

inline PointSet draw_configuration(Stream& rng, Configuration kind, int n, int k_max,
                                   double half_width) {
  const int k = static_cast<int>(rng.integer(2, static_cast<std::uint64_t>(k_max)));
  switch (kind) {
    case Configuration::random_box: {
      Eigen::MatrixXd x(k, n);
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) x(i, j) = rng.uniform(-half_width, half_width);
      return PointSet(std::move(x));
    }
    case Configuration::line_lattice: {
      const double extent = 2.0 * half_width * (1.0 - rng.uniform());  // (0, 2L]
      const double spacing = extent / (k - 1);
      const Eigen::VectorXd direction = random_frame(rng, n, 1).col(0);
      Eigen::MatrixXd x(k, n);
      for (int i = 0; i < k; ++i) x.row(i) = (i * spacing) * direction.transpose();
      return PointSet(std::move(x));
    }
    case Configuration::plane_lattice: {
      const bool hexagonal = rng.uniform() < 0.5;
      const int rows = static_cast<int>(rng.integer(2, static_cast<std::uint64_t>(std::max(2, k / 2))));
      const int cols = std::max(1, k / rows);
      const double extent = 2.0 * half_width * (1.0 - rng.uniform());
      const double spacing = extent / std::max(1, std::max(rows, cols) - 1);
      const Eigen::MatrixXd frame = random_frame(rng, n, 2);
      Eigen::MatrixXd x(rows * cols, n);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          const double u = hexagonal ? c + 0.5 * (r % 2) : c;
          const double v = hexagonal ? r * std::sqrt(3.0) / 2.0 : r;
          x.row(r * cols + c) = (spacing * (u * frame.col(0) + v * frame.col(1))).transpose();
        }
      }
      return PointSet(std::move(x));
    }
  }
  throw InvalidInput("unknown configuration kind");
}

}  // namespace detail

/// Searches for a point configuration whose Gram matrix has an eigenvalue
/// below -tol * max(1, |G|_2). Trials draw random boxes, 1-D lattices and
/// (for n >= 2) square or hexagonal plane lattices in round robin, each from
/// its own substream of the seed, so the report does not depend on the number
/// of threads. The first refuting trial in index order wins.
inline PsdReport certify_psd(const RadialProfile& f, const CertifyOptions& options) {
  if (options.dimension < 1) throw InvalidInput("certify_psd: dimension must be >= 1");
  if (options.trials < 1) throw InvalidInput("certify_psd: trials must be >= 1");
  if (options.k_max < 2) throw InvalidInput("certify_psd: k_max must be >= 2");
  if (!(options.tolerance >= 0.0)) throw InvalidInput("certify_psd: tolerance must be >= 0");

  struct TrialOutcome {
    std::optional<PointSet> points;
    EigenPair pair{0.0, {}, 0.0};
    bool computed = false;
  };
  std::vector<TrialOutcome> outcomes(options.trials);
  std::atomic<std::size_t> first_refuting{options.trials};

  parallel_for(options.trials, options.threads, [&](std::size_t trial) {
    if (trial > first_refuting.load(std::memory_order_relaxed)) return;
    Stream rng = Stream::derived(options.seed, trial);
    PointSet points = detail::draw_configuration(
        rng, detail::configuration_for(trial, options.dimension), options.dimension, options.k_max,
        options.box_half_width);
    const Eigen::MatrixXd g = gram_matrix(f, points);
    EigenPair pair = smallest_eigenpair(g);
    const bool refutes = pair.value < -options.tolerance * std::max(1.0, pair.spectral_norm);
    outcomes[trial] = {std::move(points), std::move(pair), true};
    if (refutes) {
      std::size_t current = first_refuting.load();
      while (trial < current && !first_refuting.compare_exchange_weak(current, trial)) {
      }
    }
  });

  const std::size_t last = std::min(first_refuting.load(), options.trials - 1);
  std::size_t argmin = 0;
  for (std::size_t i = 0; i <= last; ++i) {
    if (outcomes[i].pair.value < outcomes[argmin].pair.value) argmin = i;
  }

  if (first_refuting.load() < options.trials) {
    const TrialOutcome& hit = outcomes[first_refuting.load()];
    const Eigen::MatrixXd g = gram_matrix(f, *hit.points);
    const double form = quadratic_form(g, hit.pair.vector);
    const bool confirmed = form < -options.tolerance;
    return PsdReport{*hit.points,
                     outcomes[argmin].pair.value,
                     options.tolerance,
                     confirmed ? Verdict::refuted : Verdict::inconclusive,
                     confirmed ? std::optional<Witness>(Witness{hit.pair.vector, form}) : std::nullopt,
                     first_refuting.load() + 1};
  }
  return PsdReport{*outcomes[argmin].points, outcomes[argmin].pair.value, options.tolerance,
                   Verdict::certified, std::nullopt, options.trials};
}

struct CmOrderResult {
  int order;
  double worst;    // min over the grid of (-1)^m Delta_h^m g(u)
  double worst_u;  // where it was attained
  bool pass;
};

struct CmReport {
  std::vector<CmOrderResult> orders;  // m = 0..max_order
  double epsilon;                     // violations below -epsilon fail
  double max_abs_g;
  bool pass;
  std::optional<int> first_failing_order;
};

struct CmOptions {
  int max_order = 4;
  std::vector<double> grid;  // u values, all > 0
  double step = 0.1;         // h
  double epsilon_scale = 1e-10;
};

/// u = 0.1, 0.2, ..., 4.0.
inline std::vector<double> default_cm_grid() {
  std::vector<double> u(40);
  for (int i = 0; i < 40; ++i) u[i] = 0.1 * (i + 1);
  return u;
}

/// Finite-difference test of complete monotonicity of g(u) = f(sqrt(u)).
/// For every grid point u and order m, (-1)^m Delta_h^m g(u) =
/// sum_j (-1)^j C(m, j) g(u + j h) must be >= -epsilon_scale * max|g|.
inline CmReport complete_monotonicity_check(const RadialProfile& f, const CmOptions& options) {
  if (options.max_order < 1) throw InvalidInput("cm-check: max_order must be >= 1");
  if (options.grid.empty()) throw InvalidInput("cm-check: grid is empty");
  if (!(options.step > 0.0)) throw InvalidInput("cm-check: step must be positive");
  for (double u : options.grid)
    if (!(u > 0.0) || !std::isfinite(u)) throw InvalidInput("cm-check: grid points must be positive");
  const double u_max = *std::max_element(options.grid.begin(), options.grid.end());
  if (const auto dmax = f.domain_max();
      dmax && std::sqrt(u_max + options.max_order * options.step) > *dmax)
    throw InvalidInput("cm-check: tabulated profile range ends before u + max_order * h");

  const int m_max = options.max_order;
  std::vector<std::vector<double>> samples(options.grid.size());
  double max_abs = 0.0;
  for (std::size_t i = 0; i < options.grid.size(); ++i) {
    samples[i].resize(m_max + 1);
    for (int j = 0; j <= m_max; ++j) {
      samples[i][j] = f(std::sqrt(options.grid[i] + j * options.step));
      max_abs = std::max(max_abs, std::abs(samples[i][j]));
    }
  }

  CmReport report{{}, options.epsilon_scale * max_abs, max_abs, true, std::nullopt};
  for (int m = 0; m <= m_max; ++m) {
    std::vector<double> binom(m + 1, 1.0);
    for (int j = 1; j <= m; ++j) binom[j] = binom[j - 1] * (m - j + 1) / j;
    CmOrderResult result{m, std::numeric_limits<double>::infinity(), 0.0, true};
    for (std::size_t i = 0; i < options.grid.size(); ++i) {
      double diff = 0.0;
      for (int j = 0; j <= m; ++j) diff += ((j % 2) ? -binom[j] : binom[j]) * samples[i][j];
      if (diff < result.worst) {
        result.worst = diff;
        result.worst_u = options.grid[i];
      }
    }
    result.pass = result.worst >= -report.epsilon;
    if (!result.pass) {
      report.pass = false;
      if (!report.first_failing_order) report.first_failing_order = m;
    }
    report.orders.push_back(result);
  }
  return report;
}

}  // namespace schoenberg

#endif  // SCHOENBERG_RADIAL_CORE_HPP_
