#include "dpcn/types.hpp"

#include <cmath>

#include "dpcn/rng.hpp"

namespace dpcn {

void LayerParams::validate() const {
  if (K <= 0 || P <= 0 || D <= 0 || N <= 0)
    throw DimensionError("LayerParams: sizes must be positive");
  if (A.rows() != K || A.cols() != K)
    throw DimensionError("LayerParams: A must be K x K");
  if (C.rows() != P || C.cols() != K)
    throw DimensionError("LayerParams: C must be P x K");
  if (B.rows() != K || B.cols() != D)
    throw DimensionError("LayerParams: B must be K x D");
  if (!A.allFinite() || !C.allFinite() || !B.allFinite())
    throw NumericError("LayerParams: non-finite entries");
  if (B.minCoeff() < 0) throw ParameterError("LayerParams: B must be nonnegative");
}

void HyperParams::validate() const {
  if (!(lambda >= 0)) throw ParameterError("HyperParams: lambda must be >= 0");
  if (!(gamma0 > 0)) throw ParameterError("HyperParams: gamma0 must be > 0");
  if (!(beta >= 0)) throw ParameterError("HyperParams: beta must be >= 0");
  if (!(mu > 0)) throw ParameterError("HyperParams: mu must be > 0");
  if (!(eta > 1)) throw ParameterError("HyperParams: eta must be > 1");
  if (!(L0_x > 0) || !(L0_u > 0))
    throw ParameterError("HyperParams: step bounds must be > 0");
  if (max_iters <= 0) throw ParameterError("HyperParams: max_iters must be > 0");
  if (!(tol > 0)) throw ParameterError("HyperParams: tol must be > 0");
  if (!(learn_rate > 0)) throw ParameterError("HyperParams: learn_rate must be > 0");
  if (batch_size <= 0) throw ParameterError("HyperParams: batch_size must be > 0");
  if (!(param_smooth >= 0) || !(param_smooth < 1))
    throw ParameterError("HyperParams: param_smooth must be in [0, 1)");
  if (epochs <= 0) throw ParameterError("HyperParams: epochs must be > 0");
}

namespace {

void normalize_columns(Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j) {
    const Real n = m.col(j).norm();
    if (n > 0)
      m.col(j) /= n;
    else
      m.col(j).setConstant(Real(1) / std::sqrt(Real(m.rows())));
  }
}

}  // namespace

LayerParams new_layer(const LayerDims& dims, std::uint64_t seed) {
  if (dims.K <= 0 || dims.P <= 0 || dims.D <= 0 || dims.N <= 0)
    throw DimensionError("new_layer: sizes must be positive");
  auto rng = make_rng(seed);
  std::normal_distribution<Real> gauss(0.0, 1.0);

  LayerParams lp;
  lp.K = dims.K;
  lp.P = dims.P;
  lp.D = dims.D;
  lp.N = dims.N;
  lp.A = Matrix::Identity(dims.K, dims.K);
  lp.C.resize(dims.P, dims.K);
  for (Index j = 0; j < dims.K; ++j)
    for (Index i = 0; i < dims.P; ++i) lp.C(i, j) = gauss(rng);
  lp.B.resize(dims.K, dims.D);
  for (Index j = 0; j < dims.D; ++j)
    for (Index i = 0; i < dims.K; ++i) lp.B(i, j) = std::abs(gauss(rng));
  normalize_columns(lp.C);
  normalize_columns(lp.B);
  lp.validate();
  return lp;
}

}  // namespace dpcn
