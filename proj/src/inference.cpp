#include "dpcn/inference.hpp"

#include <cmath>
#include <string>

#include "dpcn/smoothing.hpp"
#include "dpcn/solver.hpp"

namespace dpcn {

namespace {

void check_vec(const Vector& v, Index n, const char* what) {
  if (v.size() != n)
    throw DimensionError(std::string(what) + ": expected length " +
                         std::to_string(n) + ", got " + std::to_string(v.size()));
}

}  // namespace

Vector gamma_from_causes(const Vector& u, const Matrix& B, Real gamma0) {
  if (!(gamma0 > 0)) throw ParameterError("gamma_from_causes: gamma0 must be > 0");
  check_vec(u, B.cols(), "gamma_from_causes: u");
  return gamma0 * (1.0 + (-(B * u).array()).exp()) / 2.0;
}

Real state_energy(const Vector& y, const Vector& x, const Vector& x_prev,
                  const Vector& gamma, const Matrix& C, const Matrix& A,
                  Real lambda) {
  check_vec(y, C.rows(), "state_energy: y");
  check_vec(x, C.cols(), "state_energy: x");
  check_vec(x_prev, A.cols(), "state_energy: x_prev");
  check_vec(gamma, x.size(), "state_energy: gamma");
  if (A.rows() != x.size()) throw DimensionError("state_energy: A rows");
  return 0.5 * (y - C * x).squaredNorm() + lambda * (x - A * x_prev).lpNorm<1>() +
         gamma.dot(x.cwiseAbs());
}

Real state_smooth_value(const Vector& y, const Vector& x, const Vector& x_prev,
                        const Matrix& C, const Matrix& A, Real lambda, Real mu) {
  check_vec(y, C.rows(), "state_smooth_value: y");
  check_vec(x, C.cols(), "state_smooth_value: x");
  check_vec(x_prev, A.cols(), "state_smooth_value: x_prev");
  Real v = 0.5 * (y - C * x).squaredNorm();
  if (lambda != 0) v += lambda * smoothed_l1((x - A * x_prev).eval(), mu);
  return v;
}

Vector state_smooth_gradient(const Vector& y, const Vector& x,
                             const Vector& x_prev, const Matrix& C,
                             const Matrix& A, Real lambda, Real mu) {
  check_vec(y, C.rows(), "state_smooth_gradient: y");
  check_vec(x, C.cols(), "state_smooth_gradient: x");
  check_vec(x_prev, A.cols(), "state_smooth_gradient: x_prev");
  Vector g = C.transpose() * (C * x - y);
  if (lambda != 0) g += lambda * alpha_star((x - A * x_prev).eval(), mu);
  return g;
}

Vector infer_states(const Vector& y, const Vector& x_prev, const Vector& gamma,
                    const Matrix& C, const Matrix& A, const HyperParams& hyper) {
  hyper.validate();
  check_vec(y, C.rows(), "infer_states: y");
  check_vec(x_prev, A.cols(), "infer_states: x_prev");
  check_vec(gamma, C.cols(), "infer_states: gamma");
  if (gamma.minCoeff() < 0)
    throw ParameterError("infer_states: gamma must be nonnegative");

  const Index K = C.cols();
  const Matrix G = C.transpose() * C;
  const Vector b = C.transpose() * y;
  const Real ynorm2 = y.squaredNorm();
  const Vector m = A * x_prev;
  const Real lambda = hyper.lambda;
  const Real mu = hyper.mu;

  auto value = [&](const Vector& x) {
    Real v = 0.5 * x.dot(G * x) - b.dot(x) + 0.5 * ynorm2;
    if (lambda != 0) v += lambda * smoothed_l1((x - m).eval(), mu);
    return v;
  };
  auto grad = [&](const Vector& x) {
    Vector g = G * x - b;
    if (lambda != 0) g += lambda * alpha_star((x - m).eval(), mu);
    return g;
  };
  return fista_solve(Vector::Zero(K).eval(), value, grad, gamma, hyper.eta,
                     hyper.L0_x, hyper.max_iters, hyper.tol);
}

Vector pool_states(const std::vector<Vector>& group) {
  if (group.empty()) throw DimensionError("pool_states: empty group");
  Vector s = group[0].cwiseAbs();
  for (std::size_t n = 1; n < group.size(); ++n) {
    check_vec(group[n], s.size(), "pool_states: member");
    s += group[n].cwiseAbs();
  }
  return s;
}

std::pair<Real, Vector> cause_smooth_value_grad(const Vector& u, const Vector& s,
                                                const Matrix& B, Real gamma0,
                                                const Vector* u_hat) {
  if (!(gamma0 > 0))
    throw ParameterError("cause_smooth_value_grad: gamma0 must be > 0");
  check_vec(u, B.cols(), "cause_smooth_value_grad: u");
  check_vec(s, B.rows(), "cause_smooth_value_grad: s");
  const Eigen::ArrayXd e = (-(B * u).array()).exp();
  Real v = (gamma0 * (1.0 + e) / 2.0 * s.array()).sum();
  Vector g = -(gamma0 / 2.0) * (B.transpose() * (e * s.array()).matrix());
  if (u_hat) {
    check_vec(*u_hat, u.size(), "cause_smooth_value_grad: u_hat");
    v += 0.5 * (u - *u_hat).squaredNorm();
    g += u - *u_hat;
  }
  return {v, g};
}

Vector infer_causes(const Vector& s, const Matrix& B, const HyperParams& hyper,
                    const Vector* u_hat) {
  hyper.validate();
  check_vec(s, B.rows(), "infer_causes: s");
  if (s.minCoeff() < 0) throw ParameterError("infer_causes: s must be nonnegative");
  const Index D = B.cols();
  auto value = [&](const Vector& u) {
    return cause_smooth_value_grad(u, s, B, hyper.gamma0, u_hat).first;
  };
  auto grad = [&](const Vector& u) {
    return cause_smooth_value_grad(u, s, B, hyper.gamma0, u_hat).second;
  };
  const Vector w = Vector::Constant(D, hyper.beta);
  return fista_solve(Vector::Zero(D).eval(), value, grad, w, hyper.eta,
                     hyper.L0_u, hyper.max_iters, hyper.tol);
}

Real unified_energy(const std::vector<Vector>& y_group,
                    const std::vector<Vector>& x_group,
                    const std::vector<Vector>& x_prev_group, const Vector& u,
                    const LayerParams& params, const HyperParams& hyper,
                    const Vector* u_hat) {
  params.validate();
  if (y_group.size() != x_group.size() || y_group.size() != x_prev_group.size())
    throw DimensionError("unified_energy: group size mismatch");
  if (y_group.empty()) throw DimensionError("unified_energy: empty group");
  const Vector gamma = gamma_from_causes(u, params.B, hyper.gamma0);
  Real e = 0;
  for (std::size_t n = 0; n < y_group.size(); ++n)
    e += state_energy(y_group[n], x_group[n], x_prev_group[n], gamma, params.C,
                      params.A, hyper.lambda);
  e += hyper.beta * u.lpNorm<1>();
  if (u_hat) {
    check_vec(*u_hat, u.size(), "unified_energy: u_hat");
    e += 0.5 * (u - *u_hat).squaredNorm();
  }
  return e;
}

LayerState joint_infer(const std::vector<Vector>& y_group,
                       const std::vector<Vector>& x_prev_group,
                       const LayerParams& params, const HyperParams& hyper,
                       const Vector* u_hat) {
  params.validate();
  hyper.validate();
  const std::size_t N = static_cast<std::size_t>(params.N);
  if (y_group.size() != N)
    throw DimensionError("joint_infer: expected " + std::to_string(params.N) +
                         " group members, got " + std::to_string(y_group.size()));
  if (x_prev_group.size() != N)
    throw DimensionError("joint_infer: x_prev group size mismatch");
  for (std::size_t n = 0; n < N; ++n) {
    check_vec(y_group[n], params.P, "joint_infer: y member");
    check_vec(x_prev_group[n], params.K, "joint_infer: x_prev member");
  }
  if (u_hat) check_vec(*u_hat, params.D, "joint_infer: u_hat");

  const Matrix G = params.C.transpose() * params.C;
  const Real lambda = hyper.lambda;
  const Real mu = hyper.mu;
  std::vector<Vector> b(N), m(N);
  std::vector<Real> ynorm2(N);
  for (std::size_t n = 0; n < N; ++n) {
    b[n] = params.C.transpose() * y_group[n];
    m[n] = params.A * x_prev_group[n];
    ynorm2[n] = y_group[n].squaredNorm();
  }

  std::vector<FistaState<Real>> xs(
      N, make_fista_state(Vector::Zero(params.K).eval(), hyper.L0_x));
  FistaState<Real> us = make_fista_state(Vector::Zero(params.D).eval(), hyper.L0_u);
  const Vector beta_w = Vector::Constant(params.D, hyper.beta);
  Vector s = Vector::Zero(params.K);

  auto cause_value = [&](const Vector& u) {
    return cause_smooth_value_grad(u, s, params.B, hyper.gamma0, u_hat).first;
  };
  auto cause_grad = [&](const Vector& u) {
    return cause_smooth_value_grad(u, s, params.B, hyper.gamma0, u_hat).second;
  };

  for (int it = 0; it < hyper.max_iters; ++it) {
    Real old_norm2 = us.point.squaredNorm();
    Real delta2 = 0;
    const Vector gamma = gamma_from_causes(us.point, params.B, hyper.gamma0);

    for (std::size_t n = 0; n < N; ++n) {
      auto value = [&](const Vector& x) {
        Real v = 0.5 * x.dot(G * x) - b[n].dot(x) + 0.5 * ynorm2[n];
        if (lambda != 0) v += lambda * smoothed_l1((x - m[n]).eval(), mu);
        return v;
      };
      auto grad = [&](const Vector& x) {
        Vector g = G * x - b[n];
        if (lambda != 0) g += lambda * alpha_star((x - m[n]).eval(), mu);
        return g;
      };
      old_norm2 += xs[n].point.squaredNorm();
      const Vector old = xs[n].point;
      try {
        xs[n] = fista_step(std::move(xs[n]), value, grad, gamma, hyper.eta);
      } catch (const DivergenceError& e) {
        throw InferenceError(e.what(), -1, static_cast<int>(n));
      }
      delta2 += (xs[n].point - old).squaredNorm();
    }

    std::vector<Vector> points(N);
    for (std::size_t n = 0; n < N; ++n) points[n] = xs[n].point;
    s = pool_states(points);

    const Vector old_u = us.point;
    try {
      us = fista_step(std::move(us), cause_value, cause_grad, beta_w, hyper.eta);
    } catch (const DivergenceError& e) {
      throw InferenceError(e.what(), -1, -1);
    }
    delta2 += (us.point - old_u).squaredNorm();

    if (std::sqrt(delta2) / std::max(1.0, std::sqrt(old_norm2)) < hyper.tol) break;
  }

  LayerState st;
  st.x.resize(N);
  for (std::size_t n = 0; n < N; ++n) st.x[n] = xs[n].point;
  st.x_prev = x_prev_group;
  st.u = us.point;
  return st;
}

Vector predict_states(const Vector& x_prev, const Matrix& A, const Matrix& B,
                      const Vector& u_hat, Real lambda, Real gamma0) {
  if (!(gamma0 > 0)) throw ParameterError("predict_states: gamma0 must be > 0");
  if (!(lambda >= 0)) throw ParameterError("predict_states: lambda must be >= 0");
  check_vec(x_prev, A.cols(), "predict_states: x_prev");
  check_vec(u_hat, B.cols(), "predict_states: u_hat");
  if (A.rows() != B.rows()) throw DimensionError("predict_states: A/B rows");
  const Vector m = A * x_prev;
  const Eigen::ArrayXd gate = (-(B * u_hat).array()).exp() / 2.0;
  return ((gamma0 * gate < lambda).select(m.array(), 0.0)).matrix();
}

Vector predict_causes(const Vector& x_hat, const Matrix& C) {
  check_vec(x_hat, C.cols(), "predict_causes: x_hat");
  return C * x_hat;
}

}  // namespace dpcn
