#pragma once

#include <utility>
#include <vector>

#include "dpcn/types.hpp"

namespace dpcn {

// Per-state sparsity weights gamma_k = gamma0 * (1 + exp(-[B u]_k)) / 2.
// Always strictly positive.
Vector gamma_from_causes(const Vector& u, const Matrix& B, Real gamma0);

// Exact (unsmoothed) single-member state energy:
//   0.5 ||y - C x||^2 + lambda ||x - A x_prev||_1 + sum_k gamma_k |x_k|.
Real state_energy(const Vector& y, const Vector& x, const Vector& x_prev,
                  const Vector& gamma, const Matrix& C, const Matrix& A,
                  Real lambda);

// Smooth part of the state objective with the temporal term smoothed:
//   0.5 ||y - C x||^2 + lambda f_mu(x - A x_prev).
Real state_smooth_value(const Vector& y, const Vector& x, const Vector& x_prev,
                        const Matrix& C, const Matrix& A, Real lambda, Real mu);

// Gradient of state_smooth_value: C'(C x - y) + lambda alpha*(x - A x_prev).
Vector state_smooth_gradient(const Vector& y, const Vector& x,
                             const Vector& x_prev, const Matrix& C,
                             const Matrix& A, Real lambda, Real mu);

// Minimises the smoothed state objective plus the weighted l1 term from
// a zero start. gamma is held fixed.
Vector infer_states(const Vector& y, const Vector& x_prev, const Vector& gamma,
                    const Matrix& C, const Matrix& A, const HyperParams& hyper);

// Componentwise sum of magnitudes across group members.
Vector pool_states(const std::vector<Vector>& group);

// Smooth part of the cause objective and its gradient:
//   h(u) = sum_k gamma0 (1 + exp(-[B u]_k)) / 2 * s_k  [+ 0.5 ||u - u_hat||^2]
// with s the pooled state magnitudes. u_hat may be null.
std::pair<Real, Vector> cause_smooth_value_grad(const Vector& u, const Vector& s,
                                                const Matrix& B, Real gamma0,
                                                const Vector* u_hat = nullptr);

// Minimises h(u) + beta ||u||_1 from a zero start, s held fixed.
Vector infer_causes(const Vector& s, const Matrix& B, const HyperParams& hyper,
                    const Vector* u_hat = nullptr);

// Full block objective at (x_group, u): summed member state energies with
// gamma taken from u, plus beta ||u||_1 and the optional top-down term.
Real unified_energy(const std::vector<Vector>& y_group,
                    const std::vector<Vector>& x_group,
                    const std::vector<Vector>& x_prev_group, const Vector& u,
                    const LayerParams& params, const HyperParams& hyper,
                    const Vector* u_hat = nullptr);

// Alternating inference of the N member states and the shared causes of
// one block. Both start at zero; one accelerated proximal step per
// variable per sweep, with step bounds kept across sweeps. Stops when
// the joint relative change of (x, u) drops below hyper.tol.
LayerState joint_infer(const std::vector<Vector>& y_group,
                       const std::vector<Vector>& x_prev_group,
                       const LayerParams& params, const HyperParams& hyper,
                       const Vector* u_hat = nullptr);

// Keep-or-zero state prediction from the layer above: component k of
// A x_prev survives iff gamma0 * exp(-[B u_hat]_k) / 2 < lambda.
Vector predict_states(const Vector& x_prev, const Matrix& A, const Matrix& B,
                      const Vector& u_hat, Real lambda, Real gamma0);

// Cause prediction passed down to a child block: C x_hat.
Vector predict_causes(const Vector& x_hat, const Matrix& C);

}  // namespace dpcn
