#pragma once

// Learning from demonstration: trajectory preprocessing and per-axis
// Gaussian process regression on the point index.

#include "tims/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace tims {

struct DegenerateDemoError : Error {
  explicit DegenerateDemoError(const std::string& what) : Error("degenerate-demo", what) {}
};

struct ExtrapolationError : Error {
  explicit ExtrapolationError(const std::string& what) : Error("extrapolation", what) {}
};

template <typename Scalar>
struct DemonstrationT {
  PathT<Scalar> points;
  std::string source_id;
};

using Demonstration = DemonstrationT<double>;

template <typename Scalar>
struct DemonstrationSetT {
  std::vector<DemonstrationT<Scalar>> demos;
  int resample_count = 200;
};

using DemonstrationSet = DemonstrationSetT<double>;

template <typename Scalar>
struct GprHyperparamsT {
  Scalar length_scale = Scalar(1);     // index units
  Scalar signal_variance = Scalar(1);  // um^2
  Scalar noise_variance = Scalar(1);   // um^2

  void validate() const {
    if (!(length_scale > 0) || !(signal_variance > 0) || !(noise_variance > 0))
      throw ConfigError("GPR hyperparameters must be strictly positive");
  }
};

using GprHyperparams = GprHyperparamsT<double>;

template <typename Scalar>
struct GuidePathT {
  PathT<Scalar> points;        // posterior means, um
  PathT<Scalar> ci_halfwidth;  // 1.96 * posterior std per axis, um

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

using GuidePath = GuidePathT<double>;

/// Squared-exponential kernel on scalar inputs.
template <typename Scalar>
Scalar rbf_kernel(Scalar a, Scalar b, const GprHyperparamsT<Scalar>& h) {
  const Scalar d = a - b;
  return h.signal_variance * std::exp(-d * d / (Scalar(2) * h.length_scale * h.length_scale));
}

/// Drop consecutive duplicates (max component difference below 1e-6 um) and
/// resample to `count` points uniformly in arc length. Endpoints are kept
/// bit-exact.
template <typename Scalar>
DemonstrationT<Scalar> preprocess(const PathT<Scalar>& raw, int count, std::string source_id = {}) {
  if (count < 2) throw ConfigError("preprocess: resample count must be at least 2");
  constexpr Scalar kDuplicateTol = Scalar(1e-6);

  PathT<Scalar> pts;
  pts.reserve(raw.size());
  for (const auto& p : raw) {
    if (!p.allFinite()) throw ValidationError("preprocess: non-finite demonstration point");
    if (pts.empty() || (p - pts.back()).cwiseAbs().maxCoeff() >= kDuplicateTol) pts.push_back(p);
  }
  if (pts.size() < 2)
    throw DegenerateDemoError("demonstration '" + source_id +
                              "' has fewer than 2 distinct points");

  std::vector<Scalar> arc(pts.size(), Scalar(0));
  for (std::size_t i = 1; i < pts.size(); ++i) arc[i] = arc[i - 1] + (pts[i] - pts[i - 1]).norm();
  const Scalar total = arc.back();

  DemonstrationT<Scalar> out;
  out.source_id = std::move(source_id);
  out.points.resize(static_cast<std::size_t>(count));
  out.points.front() = pts.front();
  out.points.back() = pts.back();
  std::size_t seg = 1;
  for (int j = 1; j + 1 < count; ++j) {
    const Scalar s = total * Scalar(j) / Scalar(count - 1);
    while (seg + 1 < arc.size() && arc[seg] < s) ++seg;
    const Scalar len = arc[seg] - arc[seg - 1];
    const Scalar u = len > 0 ? (s - arc[seg - 1]) / len : Scalar(0);
    out.points[static_cast<std::size_t>(j)] = pts[seg - 1] + u * (pts[seg] - pts[seg - 1]);
  }
  return out;
}

/// One scalar GP over the index grid 0..N-1. Replicated demos are folded
/// into per-index means with noise variance sigma_n^2 / D, which gives the
/// same posterior as the full replicated problem; the log marginal
/// likelihood carries the within-index residual term so it equals the
/// full-data value exactly.
template <typename Scalar>
class AxisGpT {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  static constexpr std::array<Scalar, 5> kJitterSchedule = {Scalar(0), Scalar(1e-12), Scalar(1e-10),
                                                            Scalar(1e-8), Scalar(1e-6)};

  /// `targets` is D x N: one row per demonstration.
  AxisGpT(const Matrix& targets, const GprHyperparamsT<Scalar>& hyper) : hyper_(hyper) {
    hyper_.validate();
    const Eigen::Index demos = targets.rows();
    n_ = targets.cols();
    demo_count_ = demos;
    offset_ = targets.mean();
    const Vector means = targets.colwise().mean().transpose();
    const Vector centered = means.array() - offset_;

    Matrix gram(n_, n_);
    for (Eigen::Index i = 0; i < n_; ++i)
      for (Eigen::Index j = 0; j < n_; ++j) gram(i, j) = rbf_kernel(Scalar(i), Scalar(j), hyper_);
    const Scalar reduced_noise = hyper_.noise_variance / Scalar(demos);

    bool ok = false;
    for (Scalar rel : kJitterSchedule) {
      jitter_ = rel * hyper_.signal_variance;
      Matrix system = gram;
      system.diagonal().array() += reduced_noise + jitter_;
      llt_.compute(system);
      if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().minCoeff() > Scalar(0)) {
        ok = true;
        break;
      }
    }
    if (!ok)
      throw NumericalError("GPR kernel matrix not positive definite at the jitter ceiling 1e-6 * signal_variance (" +
                           std::to_string(double(jitter_)) + ")");
    weights_ = llt_.solve(centered);

    const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
    const Scalar log_det = Scalar(2) * llt_.matrixLLT().diagonal().array().log().sum();
    Scalar lml = Scalar(-0.5) * centered.dot(weights_) - Scalar(0.5) * log_det -
                 Scalar(0.5) * Scalar(n_) * std::log(two_pi);
    const Scalar residual = (targets.rowwise() - means.transpose()).squaredNorm();
    const Scalar s = hyper_.noise_variance;
    lml += -residual / (Scalar(2) * s) -
           Scalar(0.5) * Scalar(n_ * (demos - 1)) * std::log(two_pi * s) -
           Scalar(0.5) * Scalar(n_) * std::log(Scalar(demos));
    log_marginal_likelihood_ = lml;
  }

  /// Posterior mean and latent variance at a fractional index.
  std::pair<Scalar, Scalar> predict(Scalar t) const {
    Vector k(n_);
    for (Eigen::Index i = 0; i < n_; ++i) k(i) = rbf_kernel(t, Scalar(i), hyper_);
    const Scalar mean = offset_ + k.dot(weights_);
    const Vector v = llt_.matrixL().solve(k);
    const Scalar var = std::max(Scalar(0), hyper_.signal_variance - v.squaredNorm());
    return {mean, var};
  }

  const GprHyperparamsT<Scalar>& hyper() const { return hyper_; }
  Scalar log_marginal_likelihood() const { return log_marginal_likelihood_; }
  Scalar jitter() const { return jitter_; }
  Eigen::Index size() const { return n_; }

 private:
  GprHyperparamsT<Scalar> hyper_;
  Eigen::Index n_ = 0;
  Eigen::Index demo_count_ = 0;
  Scalar offset_ = 0;
  Scalar jitter_ = 0;
  Scalar log_marginal_likelihood_ = 0;
  Eigen::LLT<Matrix> llt_;
  Vector weights_;
};

template <typename Scalar>
struct PredictionT {
  Vec3T<Scalar> mean;
  Vec3T<Scalar> ci_halfwidth;
};

/// Three independent per-axis GPs. Immutable after construction.
template <typename Scalar>
class GprModelT {
 public:
  GprModelT(std::array<AxisGpT<Scalar>, 3> axes, int count) : axes_(std::move(axes)), count_(count) {}

  int count() const { return count_; }
  const AxisGpT<Scalar>& axis(int i) const { return axes_[static_cast<std::size_t>(i)]; }

  PredictionT<Scalar> predict(Scalar t) const {
    if (!(t >= Scalar(0) && t <= Scalar(count_ - 1)))
      throw ExtrapolationError("GPR predict: index " + std::to_string(double(t)) + " outside [0, " +
                               std::to_string(count_ - 1) + "]");
    PredictionT<Scalar> out;
    for (int a = 0; a < 3; ++a) {
      const auto [m, v] = axes_[static_cast<std::size_t>(a)].predict(t);
      out.mean(a) = m;
      out.ci_halfwidth(a) = Scalar(1.96) * std::sqrt(v);
    }
    return out;
  }

  GuidePathT<Scalar> guide_path() const {
    GuidePathT<Scalar> path;
    path.points.reserve(static_cast<std::size_t>(count_));
    path.ci_halfwidth.reserve(static_cast<std::size_t>(count_));
    for (int i = 0; i < count_; ++i) {
      const auto p = predict(Scalar(i));
      path.points.push_back(p.mean);
      path.ci_halfwidth.push_back(p.ci_halfwidth);
    }
    return path;
  }

 private:
  std::array<AxisGpT<Scalar>, 3> axes_;
  int count_;
};

using GprModel = GprModelT<double>;

template <typename Scalar>
struct FitOptionsT {
  Scalar noise_variance = Scalar(1);
  int length_scale_steps = 8;
  std::array<Scalar, 3> variance_factors = {Scalar(0.5), Scalar(1), Scalar(2)};
};

template <typename Scalar>
struct FitResultT {
  GprModelT<Scalar> model;
  GuidePathT<Scalar> guide;
};

using FitResult = FitResultT<double>;
using FitOptions = FitOptionsT<double>;

namespace detail {

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> axis_targets(const DemonstrationSetT<Scalar>& set,
                                                                   int axis) {
  const auto demos = static_cast<Eigen::Index>(set.demos.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> y(demos, set.resample_count);
  for (Eigen::Index d = 0; d < demos; ++d)
    for (int i = 0; i < set.resample_count; ++i)
      y(d, i) = set.demos[static_cast<std::size_t>(d)].points[static_cast<std::size_t>(i)](axis);
  return y;
}

template <typename Scalar>
void check_set(const DemonstrationSetT<Scalar>& set) {
  if (set.demos.empty()) throw ConfigError("GPR fit needs at least one demonstration");
  if (set.resample_count < 2) throw ConfigError("GPR fit needs at least 2 points per demonstration");
  for (const auto& d : set.demos)
    if (static_cast<int>(d.points.size()) != set.resample_count)
      throw ConfigError("demonstration '" + d.source_id + "' has " + std::to_string(d.points.size()) +
                        " points, expected " + std::to_string(set.resample_count));
}

}  // namespace detail

/// Hyperparameter grid for one axis: length scales log-spaced over
/// [N/64, N/2], signal variance scaled from the target variance (floored at
/// the noise variance so constant axes stay well posed).
template <typename Scalar>
std::vector<GprHyperparamsT<Scalar>> hyperparameter_grid(int count, Scalar target_variance,
                                                         const FitOptionsT<Scalar>& opt) {
  std::vector<GprHyperparamsT<Scalar>> grid;
  const Scalar lo = Scalar(count) / Scalar(64);
  const Scalar hi = Scalar(count) / Scalar(2);
  const Scalar base = std::max(target_variance, opt.noise_variance);
  for (int k = 0; k < opt.length_scale_steps; ++k) {
    const Scalar u = opt.length_scale_steps > 1 ? Scalar(k) / Scalar(opt.length_scale_steps - 1) : Scalar(0);
    const Scalar ell = lo * std::pow(hi / lo, u);
    for (Scalar f : opt.variance_factors) grid.push_back({ell, base * f, opt.noise_variance});
  }
  return grid;
}

/// Fit with fixed per-axis hyperparameters.
template <typename Scalar>
FitResultT<Scalar> fit_with(const DemonstrationSetT<Scalar>& set,
                            const std::array<GprHyperparamsT<Scalar>, 3>& hyper) {
  detail::check_set(set);
  std::array<AxisGpT<Scalar>, 3> axes = {AxisGpT<Scalar>(detail::axis_targets(set, 0), hyper[0]),
                                         AxisGpT<Scalar>(detail::axis_targets(set, 1), hyper[1]),
                                         AxisGpT<Scalar>(detail::axis_targets(set, 2), hyper[2])};
  GprModelT<Scalar> model(std::move(axes), set.resample_count);
  auto guide = model.guide_path();
  return {std::move(model), std::move(guide)};
}

/// Fit with log-marginal-likelihood maximization over the grid, per axis.
template <typename Scalar>
FitResultT<Scalar> fit(const DemonstrationSetT<Scalar>& set, const FitOptionsT<Scalar>& opt = {}) {
  detail::check_set(set);
  std::array<GprHyperparamsT<Scalar>, 3> best;
  for (int a = 0; a < 3; ++a) {
    const auto y = detail::axis_targets(set, a);
    const Scalar var = (y.array() - y.mean()).square().mean();
    Scalar best_lml = -std::numeric_limits<Scalar>::infinity();
    for (const auto& h : hyperparameter_grid(set.resample_count, var, opt)) {
      const AxisGpT<Scalar> gp(y, h);
      if (gp.log_marginal_likelihood() > best_lml) {
        best_lml = gp.log_marginal_likelihood();
        best[static_cast<std::size_t>(a)] = h;
      }
    }
  }
  return fit_with(set, best);
}

}  // namespace tims
