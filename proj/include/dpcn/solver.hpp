#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "dpcn/errors.hpp"
#include "dpcn/types.hpp"

namespace dpcn {

// Componentwise soft threshold with a scalar threshold.
template <typename Derived>
typename Derived::PlainObject soft_threshold(const Eigen::MatrixBase<Derived>& v,
                                             typename Derived::Scalar t) {
  using Scalar = typename Derived::Scalar;
  if (t < Scalar(0)) throw ParameterError("soft_threshold: negative threshold");
  return (v.array().sign() * (v.array().abs() - t).max(Scalar(0))).matrix();
}

// Componentwise soft threshold with per-component thresholds.
template <typename D1, typename D2>
typename D1::PlainObject soft_threshold(const Eigen::MatrixBase<D1>& v,
                                        const Eigen::MatrixBase<D2>& t) {
  using Scalar = typename D1::Scalar;
  if (v.size() != t.size())
    throw DimensionError("soft_threshold: threshold size mismatch");
  if (t.size() > 0 && t.minCoeff() < Scalar(0))
    throw ParameterError("soft_threshold: negative threshold");
  return (v.array().sign() * (v.array().abs() - t.array()).max(Scalar(0))).matrix();
}

// Momentum schedule tau_{i+1} = (1 + sqrt(4 tau_i^2 + 1)) / 2.
template <typename Scalar>
Scalar tau_next(Scalar tau) {
  return (Scalar(1) + std::sqrt(Scalar(4) * tau * tau + Scalar(1))) / Scalar(2);
}

// Iterate bookkeeping for one accelerated proximal-gradient variable.
// The step bound grows under backtracking and is kept across steps.
template <typename Scalar>
struct FistaState {
  VectorX<Scalar> point;
  VectorX<Scalar> momentum_point;
  Scalar tau = Scalar(1);
  Scalar lipschitz = Scalar(1);
};

template <typename Scalar>
FistaState<Scalar> make_fista_state(const VectorX<Scalar>& x0, Scalar L0) {
  if (!(L0 > 0)) throw ParameterError("make_fista_state: L0 must be positive");
  if (!x0.allFinite()) throw NumericError("make_fista_state: non-finite start");
  return {x0, x0, Scalar(1), L0};
}

namespace detail {

// Backtracks the step bound until the proximal candidate satisfies the
// quadratic majorisation at z. Mutates L; throws after 64 growths.
template <typename Scalar, typename ValueFn, typename Weights>
VectorX<Scalar> backtrack(const VectorX<Scalar>& z, Scalar fz,
                          const VectorX<Scalar>& g, Scalar& L, Scalar eta,
                          ValueFn&& value, const Weights& weights,
                          Scalar& fp_out) {
  VectorX<Scalar> p;
  for (int attempt = 0; attempt <= 64; ++attempt) {
    p = soft_threshold((z - g / L).eval(), (weights / L).eval());
    const Scalar fp = value(p);
    const VectorX<Scalar> d = p - z;
    const Scalar bound = fz + g.dot(d) + Scalar(0.5) * L * d.squaredNorm();
    const Scalar slack = Scalar(1e-12) * (Scalar(1) + std::abs(bound));
    if (std::isfinite(fp) && fp <= bound + slack) {
      fp_out = fp;
      return p;
    }
    if (attempt == 64)
      throw DivergenceError("fista_step: line search exceeded 64 backtracks");
    L *= eta;
  }
  return p;  // unreachable
}

template <typename Scalar, typename Derived>
Scalar weighted_l1(const VectorX<Scalar>& v, const Eigen::MatrixBase<Derived>& w) {
  return v.cwiseAbs().dot(w);
}

}  // namespace detail

// One accelerated proximal-gradient step on F(x) = value(x) + weights'|x|.
// `value`/`grad` evaluate the smooth part; `weights` is a nonnegative
// per-component l1 weight vector. The objective at the returned point
// never exceeds the objective at the incoming point: an ascending
// momentum candidate triggers a restart (tau reset, plain proximal step
// from the current point).
template <typename Scalar, typename ValueFn, typename GradFn, typename Derived>
FistaState<Scalar> fista_step_impl(FistaState<Scalar> fs, ValueFn&& value,
                                   GradFn&& grad, const Eigen::MatrixBase<Derived>& weights,
                                   Scalar eta) {
  if (!(eta > 1)) throw ParameterError("fista_step: eta must exceed 1");
  if (weights.size() != fs.point.size())
    throw DimensionError("fista_step: weight size mismatch");
  if (weights.size() > 0 && weights.minCoeff() < Scalar(0))
    throw ParameterError("fista_step: negative weights");

  const VectorX<Scalar>& z = fs.momentum_point;
  const VectorX<Scalar> g = grad(z);
  if (!g.allFinite()) throw NumericError("fista_step: non-finite gradient");
  const Scalar fz = value(z);
  if (!std::isfinite(fz)) throw NumericError("fista_step: non-finite value");

  Scalar fp = Scalar(0);
  const VectorX<Scalar> p =
      detail::backtrack(z, fz, g, fs.lipschitz, eta, value, weights, fp);

  const Scalar obj_p = fp + detail::weighted_l1(p, weights);
  const Scalar fx = value(fs.point);
  const Scalar obj_x = fx + detail::weighted_l1(fs.point, weights);
  const Scalar slack = Scalar(1e-12) * (Scalar(1) + std::abs(obj_x));

  if (obj_p <= obj_x + slack) {
    const Scalar tau_new = tau_next(fs.tau);
    fs.momentum_point = p + ((fs.tau - 1) / tau_new) * (p - fs.point);
    fs.point = p;
    fs.tau = tau_new;
    return fs;
  }

  // Momentum overshot: restart the schedule and take a plain proximal
  // step from the current point, which cannot increase the objective.
  const VectorX<Scalar> g2 = grad(fs.point);
  if (!g2.allFinite()) throw NumericError("fista_step: non-finite gradient");
  Scalar fp2 = Scalar(0);
  const VectorX<Scalar> p2 =
      detail::backtrack(fs.point, fx, g2, fs.lipschitz, eta, value, weights, fp2);
  const Scalar obj_p2 = fp2 + detail::weighted_l1(p2, weights);
  if (obj_p2 <= obj_x + slack) fs.point = p2;
  fs.tau = tau_next(Scalar(1));
  fs.momentum_point = fs.point;
  return fs;
}

template <typename Scalar, typename ValueFn, typename GradFn>
FistaState<Scalar> fista_step(FistaState<Scalar> fs, ValueFn&& value, GradFn&& grad,
                              const VectorX<Scalar>& weights, Scalar eta) {
  return fista_step_impl(std::move(fs), std::forward<ValueFn>(value),
                         std::forward<GradFn>(grad), weights, eta);
}

template <typename Scalar, typename ValueFn, typename GradFn>
FistaState<Scalar> fista_step(FistaState<Scalar> fs, ValueFn&& value, GradFn&& grad,
                              Scalar weight, Scalar eta) {
  const VectorX<Scalar> w = VectorX<Scalar>::Constant(fs.point.size(), weight);
  return fista_step_impl(std::move(fs), std::forward<ValueFn>(value),
                         std::forward<GradFn>(grad), w, eta);
}

// Runs fista_step until the relative change of the point drops below
// tol or max_iters steps have been taken.
template <typename Scalar, typename ValueFn, typename GradFn>
VectorX<Scalar> fista_solve(const VectorX<Scalar>& x0, ValueFn&& value, GradFn&& grad,
                            const VectorX<Scalar>& weights, Scalar eta, Scalar L0,
                            int max_iters, Scalar tol) {
  FistaState<Scalar> fs = make_fista_state(x0, L0);
  for (int it = 0; it < max_iters; ++it) {
    const VectorX<Scalar> old = fs.point;
    fs = fista_step(std::move(fs), value, grad, weights, eta);
    const Scalar denom = std::max(Scalar(1), old.norm());
    if ((fs.point - old).norm() / denom < tol) break;
  }
  return fs.point;
}

}  // namespace dpcn
