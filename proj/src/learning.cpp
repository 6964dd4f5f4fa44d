#include "dpcn/learning.hpp"

#include <cmath>
#include <string>

#include "dpcn/inference.hpp"
#include "dpcn/smoothing.hpp"

namespace dpcn {

BatchBuffer::BatchBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ParameterError("BatchBuffer: capacity must be > 0");
  tuples_.reserve(capacity);
}

void BatchBuffer::push(BatchTuple t) {
  if (full()) throw StateError("BatchBuffer: push on full buffer");
  if (t.y.size() != t.x.size() || t.y.size() != t.x_prev.size() || t.y.empty())
    throw DimensionError("BatchBuffer: inconsistent tuple");
  tuples_.push_back(std::move(t));
}

ParamGradients param_gradients(const BatchBuffer& batch, const LayerParams& params,
                               const HyperParams& hyper) {
  params.validate();
  hyper.validate();
  if (batch.empty()) throw StateError("param_gradients: empty batch");

  ParamGradients g;
  g.dA = Matrix::Zero(params.K, params.K);
  g.dC = Matrix::Zero(params.P, params.K);
  g.dB = Matrix::Zero(params.K, params.D);

  for (const BatchTuple& t : batch.tuples()) {
    if (t.y.size() != static_cast<std::size_t>(params.N))
      throw DimensionError("param_gradients: tuple group size mismatch");
    for (std::size_t n = 0; n < t.y.size(); ++n) {
      const Vector& y = t.y[n];
      const Vector& x = t.x[n];
      const Vector& xp = t.x_prev[n];
      if (y.size() != params.P || x.size() != params.K || xp.size() != params.K)
        throw DimensionError("param_gradients: tuple member shape mismatch");
      g.dC.noalias() += (params.C * x - y) * x.transpose();
      if (hyper.lambda != 0) {
        const Vector a = alpha_star((x - params.A * xp).eval(), hyper.mu);
        g.dA.noalias() -= hyper.lambda * a * xp.transpose();
      }
    }
    if (t.u.size() != params.D)
      throw DimensionError("param_gradients: tuple cause size mismatch");
    const Vector s = pool_states(t.x);
    const Eigen::ArrayXd e = (-(params.B * t.u).array()).exp();
    g.dB.noalias() -=
        (hyper.gamma0 / 2.0) * (e * s.array()).matrix() * t.u.transpose();
  }

  const Real inv = 1.0 / static_cast<Real>(batch.size());
  g.dA *= inv;
  g.dC *= inv;
  g.dB *= inv;
  return g;
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

Real params_norm(const LayerParams& p) {
  return std::sqrt(p.A.squaredNorm() + p.C.squaredNorm() + p.B.squaredNorm());
}

Real params_delta(const LayerParams& a, const LayerParams& b) {
  return std::sqrt((a.A - b.A).squaredNorm() + (a.C - b.C).squaredNorm() +
                   (a.B - b.B).squaredNorm());
}

}  // namespace

LayerParams apply_update(const LayerParams& params, const ParamGradients& grads,
                         const HyperParams& hyper) {
  params.validate();
  hyper.validate();
  if (grads.dA.rows() != params.K || grads.dA.cols() != params.K ||
      grads.dC.rows() != params.P || grads.dC.cols() != params.K ||
      grads.dB.rows() != params.K || grads.dB.cols() != params.D)
    throw DimensionError("apply_update: gradient shape mismatch");
  if (!grads.dA.allFinite() || !grads.dC.allFinite() || !grads.dB.allFinite())
    throw NumericError("apply_update: non-finite gradients");

  const Real keep = hyper.param_smooth;
  LayerParams out = params;
  out.A = keep * params.A + (1.0 - keep) * (params.A - hyper.learn_rate * grads.dA);
  out.C = keep * params.C + (1.0 - keep) * (params.C - hyper.learn_rate * grads.dC);
  out.B = keep * params.B + (1.0 - keep) * (params.B - hyper.learn_rate * grads.dB);
  if (!out.A.allFinite() || !out.C.allFinite() || !out.B.allFinite())
    throw NumericError("apply_update: non-finite parameters");
  normalize_columns(out.C);
  out.B = out.B.cwiseMax(0.0);
  normalize_columns(out.B);
  out.validate();
  return out;
}

LayerParams train_layer(const std::vector<GroupSequence>& streams,
                        const LayerDims& dims, const HyperParams& hyper,
                        std::uint64_t seed, std::ostream* log) {
  hyper.validate();
  LayerParams params = new_layer(dims, seed);
  const std::size_t N = static_cast<std::size_t>(dims.N);

  for (const GroupSequence& stream : streams)
    for (const GroupFrame& frame : stream) {
      if (frame.size() != N)
        throw DimensionError("train_layer: group size mismatch in stream");
      for (const Vector& y : frame)
        if (y.size() != dims.P)
          throw DimensionError("train_layer: input length mismatch in stream");
    }

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const LayerParams epoch_start = params;
    BatchBuffer batch(static_cast<std::size_t>(hyper.batch_size));
    int batch_index = 0;

    auto flush = [&]() {
      if (batch.empty()) return;
      Real energy = 0;
      for (const BatchTuple& t : batch.tuples())
        energy += unified_energy(t.y, t.x, t.x_prev, t.u, params, hyper);
      energy /= static_cast<Real>(batch.size());
      const ParamGradients grads = param_gradients(batch, params, hyper);
      const LayerParams updated = apply_update(params, grads, hyper);
      const Real change = params_delta(updated, params);
      params = updated;
      if (log)
        (*log) << epoch << '\t' << batch_index << '\t' << energy << '\t' << change
               << '\n';
      ++batch_index;
      batch.clear();
    };

    for (std::size_t si = 0; si < streams.size(); ++si) {
      std::vector<Vector> x_prev(N, Vector::Zero(dims.K));
      for (std::size_t t = 0; t < streams[si].size(); ++t) {
        LayerState st;
        try {
          st = joint_infer(streams[si][t], x_prev, params, hyper);
        } catch (const InferenceError& e) {
          throw TrainingError("train_layer: inference failed in stream " +
                                  std::to_string(si) + " at timestep " +
                                  std::to_string(t) + ": " + e.what(),
                              static_cast<long>(t));
        }
        batch.push({streams[si][t], st.x, x_prev, st.u});
        x_prev = st.x;
        if (batch.full()) flush();
      }
    }
    flush();

    const Real rel = params_delta(params, epoch_start) /
                     std::max(1.0, params_norm(epoch_start));
    if (rel < 1e-3) break;
  }
  return params;
}

LayerParams train_layer(const GroupSequence& stream, const LayerDims& dims,
                        const HyperParams& hyper, std::uint64_t seed,
                        std::ostream* log) {
  return train_layer(std::vector<GroupSequence>{stream}, dims, hyper, seed, log);
}

}  // namespace dpcn
