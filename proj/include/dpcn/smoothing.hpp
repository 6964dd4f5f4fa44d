#pragma once

#include <Eigen/Dense>

#include "dpcn/errors.hpp"

namespace dpcn {

// Componentwise projection onto the unit l-infinity ball.
template <typename Derived>
typename Derived::PlainObject project_linf(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (!v.allFinite()) throw NumericError("project_linf: non-finite input");
  return v.array().max(Scalar(-1)).min(Scalar(1)).matrix();
}

// Maximiser of a'e - (mu/2)||a||^2 over ||a||_inf <= 1. This is also
// the gradient of smoothed_l1 with respect to e.
template <typename Derived>
typename Derived::PlainObject alpha_star(const Eigen::MatrixBase<Derived>& e,
                                         typename Derived::Scalar mu) {
  if (!(mu > 0)) throw ParameterError("alpha_star: mu must be positive");
  return project_linf((e / mu).eval());
}

// Smoothed l1 norm: max over ||a||_inf <= 1 of a'e - (mu/2)||a||^2.
// Componentwise it equals the Huber function with knee at |e_i| = mu,
// and it underestimates ||e||_1 by at most mu * size / 2.
template <typename Derived>
typename Derived::Scalar smoothed_l1(const Eigen::MatrixBase<Derived>& e,
                                     typename Derived::Scalar mu) {
  using Scalar = typename Derived::Scalar;
  const typename Derived::PlainObject a = alpha_star(e, mu);
  return a.dot(e) - Scalar(0.5) * mu * a.squaredNorm();
}

}  // namespace dpcn
