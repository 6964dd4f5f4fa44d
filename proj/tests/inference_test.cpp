#include <cmath>
#include <random>

#include <doctest.h>

#include "dpcn/inference.hpp"
#include "dpcn/rng.hpp"
#include "dpcn/smoothing.hpp"

using namespace dpcn;

namespace {

Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, Real sd = 1.0) {
  std::normal_distribution<Real> gauss(0.0, sd);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = gauss(rng);
  return m;
}

Vector random_vector(Index n, std::mt19937_64& rng, Real sd = 1.0) {
  std::normal_distribution<Real> gauss(0.0, sd);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = gauss(rng);
  return v;
}

}  // namespace

TEST_CASE("gamma_from_causes point values") {
  Matrix B = Matrix::Identity(3, 3);
  CHECK(gamma_from_causes(Vector::Zero(3), B, 1.0).isApproxToConstant(1.0));

  // [Bu]_k large -> gamma0/2.
  Vector u = Vector::Constant(3, 50.0);
  CHECK(gamma_from_causes(u, B, 1.0).isApproxToConstant(0.5));

  // [Bu]_k = -ln 3, gamma0 = 2 -> 2 * (1 + 3) / 2 = 4.
  u = Vector::Constant(3, -std::log(3.0));
  CHECK(gamma_from_causes(u, B, 2.0).isApproxToConstant(4.0));

  CHECK_THROWS_AS(gamma_from_causes(u, B, 0.0), ParameterError);
  CHECK_THROWS_AS(gamma_from_causes(Vector::Zero(2), B, 1.0), DimensionError);
}

TEST_CASE("state_energy closed cases and independent oracle") {
  auto rng = make_rng(21, 0);
  const Index P = 5, K = 4;
  Matrix C = random_matrix(P, K, rng);
  Matrix A = random_matrix(K, K, rng);
  Vector y = random_vector(P, rng);
  Vector gamma = Vector::Constant(K, 0.3);

  // x = 0, x_prev = 0 -> 0.5 ||y||^2.
  CHECK(state_energy(y, Vector::Zero(K), Vector::Zero(K), gamma, C, A, 0.7) ==
        doctest::Approx(0.5 * y.squaredNorm()));

  // Perfect fit with gamma = 0 -> 0.
  Vector x_prev = random_vector(K, rng);
  Vector x = A * x_prev;
  CHECK(state_energy((C * x).eval(), x, x_prev, Vector::Zero(K), C, A, 0.7) ==
        doctest::Approx(0.0));

  // Random instance vs term-by-term sum.
  x = random_vector(K, rng);
  const Real lambda = 0.45;
  Real expect = 0.5 * (y - C * x).squaredNorm();
  Vector e = x - A * x_prev;
  for (Index i = 0; i < K; ++i) expect += lambda * std::fabs(e(i));
  for (Index i = 0; i < K; ++i) expect += gamma(i) * std::fabs(x(i));
  CHECK(state_energy(y, x, x_prev, gamma, C, A, lambda) == doctest::Approx(expect));
}

TEST_CASE("state smooth gradient matches central differences") {
  auto rng = make_rng(22, 0);
  const Index P = 6, K = 5;
  const Real lambda = 0.4, mu = 0.07;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix C = random_matrix(P, K, rng);
    Matrix A = random_matrix(K, K, rng);
    Vector y = random_vector(P, rng);
    Vector x = random_vector(K, rng);
    Vector x_prev = random_vector(K, rng);
    Vector g = state_smooth_gradient(y, x, x_prev, C, A, lambda, mu);
    const Real h = 1e-6;
    for (Index i = 0; i < K; ++i) {
      Vector xp = x, xm = x;
      xp(i) += h;
      xm(i) -= h;
      const Real fd = (state_smooth_value(y, xp, x_prev, C, A, lambda, mu) -
                       state_smooth_value(y, xm, x_prev, C, A, lambda, mu)) /
                      (2 * h);
      CHECK(std::fabs(fd - g(i)) < 1e-5 * std::max(1.0, std::fabs(g(i))));
    }
  }
}

TEST_CASE("state smooth gradient reductions") {
  auto rng = make_rng(23, 0);
  const Index P = 4, K = 4;
  Matrix C = random_matrix(P, K, rng);
  Matrix A = random_matrix(K, K, rng);
  Vector x_prev = random_vector(K, rng);

  // Stationary at a perfect fit.
  Vector x = A * x_prev;
  Vector g = state_smooth_gradient((C * x).eval(), x, x_prev, C, A, 0.6, 0.05);
  CHECK(g.norm() < 1e-12);

  // lambda = 0 reduces to the data term gradient.
  Vector y = random_vector(P, rng);
  x = random_vector(K, rng);
  g = state_smooth_gradient(y, x, x_prev, C, A, 0.0, 0.05);
  CHECK(g.isApprox((C.transpose() * (C * x - y)).eval(), 1e-12));
}

TEST_CASE("infer_states solves the scalar lasso") {
  Matrix C = Matrix::Identity(1, 1);
  Matrix A = Matrix::Identity(1, 1);
  HyperParams h;
  h.lambda = 0.0;
  h.max_iters = 300;
  h.tol = 1e-12;
  Vector y(1), x_prev(1);
  y << 1.0;
  x_prev << 0.0;

  Vector x = infer_states(y, x_prev, Vector::Constant(1, 0.3), C, A, h);
  CHECK(x(0) == doctest::Approx(0.7).epsilon(1e-8));

  x = infer_states(y, x_prev, Vector::Constant(1, 50.0), C, A, h);
  CHECK(x(0) == doctest::Approx(0.0));

  x = infer_states(Vector::Zero(1), x_prev, Vector::Constant(1, 0.3), C, A, h);
  CHECK(x(0) == doctest::Approx(0.0));
}

TEST_CASE("infer_states energy does not exceed the zero vector") {
  auto rng = make_rng(24, 0);
  const Index P = 8, K = 10;
  HyperParams h;
  h.lambda = 0.3;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix C = random_matrix(P, K, rng);
    Matrix A = random_matrix(K, K, rng, 0.5);
    Vector y = random_vector(P, rng);
    Vector x_prev = random_vector(K, rng, 0.5);
    Vector gamma = Vector::Constant(K, 0.2);
    Vector x = infer_states(y, x_prev, gamma, C, A, h);
    CHECK(state_energy(y, x, x_prev, gamma, C, A, h.lambda) <=
          state_energy(y, Vector::Zero(K), x_prev, gamma, C, A, h.lambda) + 1e-9);
  }
}

TEST_CASE("pool_states sums absolute values") {
  Vector a(2), b(2);
  a << 1.0, -1.0;
  b << -2.0, 0.0;
  Vector s = pool_states({a, b});
  CHECK(s(0) == doctest::Approx(3.0));
  CHECK(s(1) == doctest::Approx(1.0));

  CHECK(pool_states({a}).isApprox(a.cwiseAbs()));
  CHECK(pool_states({Vector::Zero(3), Vector::Zero(3)}).norm() == doctest::Approx(0.0));
  CHECK_THROWS_AS(pool_states({}), DimensionError);
  CHECK_THROWS_AS(pool_states({a, Vector::Zero(3)}), DimensionError);
}

TEST_CASE("cause smooth value and gradient") {
  auto rng = make_rng(25, 0);
  const Index K = 6, D = 4;
  Matrix B = random_matrix(K, D, rng).cwiseAbs();

  // s = 0, no u_hat -> flat in u, gradient 0.
  auto [v0, g0] = cause_smooth_value_grad(Vector::Zero(D), Vector::Zero(K), B, 1.0, nullptr);
  CHECK(v0 == doctest::Approx(0.0));
  CHECK(g0.norm() == doctest::Approx(0.0));

  // u_hat = u zeroes the quadratic contribution.
  Vector u = random_vector(D, rng);
  Vector s = random_vector(K, rng).cwiseAbs();
  auto [v1, g1] = cause_smooth_value_grad(u, s, B, 0.8, nullptr);
  Vector uh = u;
  auto [v2, g2] = cause_smooth_value_grad(u, s, B, 0.8, &uh);
  CHECK(v2 == doctest::Approx(v1));
  CHECK(g2.isApprox(g1, 1e-12));

  // Central differences.
  for (int trial = 0; trial < 20; ++trial) {
    Vector ut = random_vector(D, rng, 0.5);
    Vector uht = random_vector(D, rng, 0.5);
    auto [val, grad] = cause_smooth_value_grad(ut, s, B, 0.8, &uht);
    (void)val;
    const Real h = 1e-6;
    for (Index i = 0; i < D; ++i) {
      Vector up = ut, um = ut;
      up(i) += h;
      um(i) -= h;
      const Real fd = (cause_smooth_value_grad(up, s, B, 0.8, &uht).first -
                       cause_smooth_value_grad(um, s, B, 0.8, &uht).first) /
                      (2 * h);
      CHECK(std::fabs(fd - grad(i)) < 1e-5 * std::max(1.0, std::fabs(grad(i))));
    }
  }
}

TEST_CASE("infer_causes closed cases and 1-D grid oracle") {
  HyperParams h;
  h.beta = 0.4;
  h.max_iters = 500;
  h.tol = 1e-12;

  // s = 0 -> only beta ||u||_1 remains -> u = 0.
  Matrix B = Matrix::Constant(3, 2, 0.5);
  Vector u = infer_causes(Vector::Zero(3), B, h, nullptr);
  CHECK(u.norm() == doctest::Approx(0.0));

  // Huge beta dominates.
  HyperParams hb = h;
  hb.beta = 1e6;
  u = infer_causes(Vector::Constant(3, 2.0), B, hb, nullptr);
  CHECK(u.norm() == doctest::Approx(0.0));

  // D = K = 1: grid-search the full objective.
  Matrix B1 = Matrix::Constant(1, 1, 1.3);
  Vector s1 = Vector::Constant(1, 2.0);
  HyperParams h1;
  h1.beta = 0.2;
  h1.gamma0 = 0.9;
  h1.max_iters = 2000;
  h1.tol = 1e-14;
  Vector got = infer_causes(s1, B1, h1, nullptr);
  Real best = 1e30, bu = 0;
  for (Real cand = -5.0; cand <= 5.0; cand += 1e-4) {
    const Real v = h1.gamma0 * (1 + std::exp(-B1(0, 0) * cand)) / 2 * s1(0) +
                   h1.beta * std::fabs(cand);
    if (v < best) {
      best = v;
      bu = cand;
    }
  }
  CHECK(std::fabs(got(0) - bu) < 1e-3);
}

TEST_CASE("joint_infer descends the unified energy") {
  auto rng = make_rng(26, 0);
  const Index P = 6, K = 8, D = 3, N = 2;
  HyperParams h;
  h.max_iters = 150;
  int ok = 0;
  const int trials = 40;
  for (int trial = 0; trial < trials; ++trial) {
    LayerParams p;
    p.K = K;
    p.P = P;
    p.D = D;
    p.N = N;
    p.C = random_matrix(P, K, rng);
    for (Index j = 0; j < K; ++j) p.C.col(j).normalize();
    p.A = Matrix::Identity(K, K);
    p.B = random_matrix(K, D, rng).cwiseAbs();
    for (Index j = 0; j < D; ++j) p.B.col(j).normalize();

    std::vector<Vector> y(N), x_prev(N);
    for (Index n = 0; n < N; ++n) {
      y[(std::size_t)n] = random_vector(P, rng);
      x_prev[(std::size_t)n] = Vector::Zero(K);
    }
    LayerState r = joint_infer(y, x_prev, p, h, nullptr);
    std::vector<Vector> zeros(N, Vector::Zero(K));
    const Real e0 = unified_energy(y, zeros, x_prev, Vector::Zero(D), p, h, nullptr);
    const Real e1 = unified_energy(y, r.x, x_prev, r.u, p, h, nullptr);
    if (e1 <= e0 + 1e-9) ++ok;
  }
  CHECK(ok >= trials * 95 / 100);
}

TEST_CASE("joint_infer with B = 0 decouples to plain state inference") {
  auto rng = make_rng(27, 0);
  const Index P = 5, K = 6, D = 2;
  LayerParams p;
  p.K = K;
  p.P = P;
  p.D = D;
  p.N = 1;
  p.C = random_matrix(P, K, rng);
  for (Index j = 0; j < K; ++j) p.C.col(j).normalize();
  p.A = Matrix::Identity(K, K);
  p.B = Matrix::Zero(K, D);

  HyperParams h;
  h.max_iters = 400;
  h.tol = 1e-10;
  Vector y = random_vector(P, rng);
  LayerState r = joint_infer({y}, {Vector::Zero(K)}, p, h, nullptr);

  // B = 0 pins gamma at gamma0 and the cause objective at beta||u||_1.
  Vector direct = infer_states(y, Vector::Zero(K), Vector::Constant(K, h.gamma0),
                               p.C, p.A, h);
  CHECK((r.x[0] - direct).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(r.u.norm() == doctest::Approx(0.0));
}

TEST_CASE("joint_infer zero input gives zero output") {
  LayerParams p = new_layer(LayerDims{4, 3, 2, 2}, 5);
  HyperParams h;
  std::vector<Vector> y(2, Vector::Zero(3)), x_prev(2, Vector::Zero(4));
  LayerState r = joint_infer(y, x_prev, p, h, nullptr);
  CHECK(r.x[0].norm() == doctest::Approx(0.0));
  CHECK(r.x[1].norm() == doctest::Approx(0.0));
  CHECK(r.u.norm() == doctest::Approx(0.0));
}

TEST_CASE("predict_states keep-or-zero rule") {
  const Index K = 4;
  Matrix A = Matrix::Identity(K, K) * 2.0;
  Matrix B = Matrix::Identity(K, K);
  Vector x_prev = Vector::Constant(K, 1.0);
  HyperParams h;
  h.gamma0 = 1.0;

  // u_hat = 0: gamma0 * 1 / 2 = 0.5 vs lambda.
  Vector xh = predict_states(x_prev, A, B, Vector::Zero(K), 0.6, h.gamma0);
  CHECK(xh.isApprox((A * x_prev).eval()));

  xh = predict_states(x_prev, A, B, Vector::Zero(K), 0.4, h.gamma0);
  CHECK(xh.norm() == doctest::Approx(0.0));
}

TEST_CASE("predict_states mixed mask matches the coordinate oracle") {
  // Per component the prediction objective argmin_x lambda|x - m| +
  // gamma0 exp(-[Bu]_k)/2 |x| keeps m when the weighted l1 price of m is
  // below lambda and zeroes it otherwise.
  auto rng = make_rng(28, 0);
  const Index K = 12, D = 3;
  std::normal_distribution<Real> gauss(0.0, 1.0);
  HyperParams h;
  h.gamma0 = 1.0;
  h.lambda = 0.5;
  for (int trial = 0; trial < 50; ++trial) {
    Matrix A = random_matrix(K, K, rng, 0.7);
    Matrix B = random_matrix(K, D, rng);  // mixed signs straddle the threshold
    Vector u_hat = random_vector(D, rng);
    Vector x_prev = random_vector(K, rng);
    Vector xh = predict_states(x_prev, A, B, u_hat, h.lambda, h.gamma0);
    Vector m = A * x_prev;
    Vector gate = (-(B * u_hat).array()).exp().matrix();
    for (Index k = 0; k < K; ++k) {
      const Real price = h.gamma0 * gate(k) / 2;
      // 1-D subgradient: x = m iff lambda beats the sparsity price.
      const Real expect = price < h.lambda ? m(k) : 0.0;
      CHECK(xh(k) == doctest::Approx(expect));
    }
  }
}

TEST_CASE("predict_causes maps through C") {
  auto rng = make_rng(29, 0);
  const Index P = 5, K = 4;
  Matrix C = random_matrix(P, K, rng);

  CHECK(predict_causes(Vector::Zero(K), C).norm() == doctest::Approx(0.0));

  for (Index k = 0; k < K; ++k) {
    Vector e = Vector::Zero(K);
    e(k) = 1.0;
    CHECK(predict_causes(e, C).isApprox(C.col(k).eval()));
  }

  Vector xh = random_vector(K, rng);
  Vector expect = Vector::Zero(P);
  for (Index i = 0; i < P; ++i)
    for (Index k = 0; k < K; ++k) expect(i) += C(i, k) * xh(k);
  CHECK(predict_causes(xh, C).isApprox(expect, 1e-12));
}
