#include "dpcn/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "dpcn/inference.hpp"
#include "dpcn/rng.hpp"

namespace dpcn {

void SimSpec::validate() const {
  if (K <= 0 || P <= 0 || T <= 0)
    throw ParameterError("SimSpec: K, P and T must be positive");
  if (active <= 0 || active > K)
    throw ParameterError("SimSpec: active must be in [1, K]");
  if (P > K) throw ParameterError("SimSpec: P must not exceed K");
  if (obs_noise_var < 0) throw ParameterError("SimSpec: negative noise variance");
  if (switch_mean < 0) throw ParameterError("SimSpec: negative switch mean");
}

SimData simulate_sparse_dynamics(const SimSpec& spec) {
  spec.validate();
  auto rng = make_rng(spec.seed, 1);
  std::normal_distribution<Real> gauss(0.0, 1.0);
  std::uniform_int_distribution<Index> coord(0, spec.K - 1);

  SimData sim;
  sim.states.setZero(spec.K, spec.T);
  sim.transitions.assign(static_cast<std::size_t>(spec.T),
                         Matrix::Identity(spec.K, spec.K));

  // Observation map: diagonal scaling, then a fixed random projection
  // when the observation is lower-dimensional than the state.
  Matrix scale = Matrix::Zero(spec.K, spec.K);
  std::uniform_real_distribution<Real> s(0.5, 1.5);
  for (Index i = 0; i < spec.K; ++i) scale(i, i) = s(rng);
  if (spec.P < spec.K) {
    Matrix proj(spec.P, spec.K);
    for (Index j = 0; j < spec.K; ++j) {
      for (Index i = 0; i < spec.P; ++i) proj(i, j) = gauss(rng);
      proj.col(j) /= proj.col(j).norm();
    }
    sim.observation_matrix = proj * scale;
  } else {
    sim.observation_matrix = scale;
  }

  // Initial sparse state. Spike magnitudes are bounded away from zero so the
  // support stays identifiable above the observation noise.
  std::vector<Index> idx(static_cast<std::size_t>(spec.K));
  std::iota(idx.begin(), idx.end(), Index(0));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_real_distribution<Real> mag(2.0, 4.0);
  std::uniform_int_distribution<int> sign(0, 1);
  Vector x = Vector::Zero(spec.K);
  for (Index i = 0; i < spec.active; ++i)
    x(idx[static_cast<std::size_t>(i)]) = (sign(rng) ? 1.0 : -1.0) * mag(rng);
  sim.states.col(0) = x;

  std::poisson_distribution<int> switches(spec.switch_mean > 0 ? spec.switch_mean
                                                               : 1.0);
  const Real noise_sd = std::sqrt(spec.obs_noise_var);

  for (int t = 1; t < spec.T; ++t) {
    // Fresh random permutation.
    std::vector<Index> perm(static_cast<std::size_t>(spec.K));
    std::iota(perm.begin(), perm.end(), Index(0));
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix A = Matrix::Zero(spec.K, spec.K);
    Vector next = Vector::Zero(spec.K);
    for (Index i = 0; i < spec.K; ++i) {
      A(perm[static_cast<std::size_t>(i)], i) = 1.0;
      next(perm[static_cast<std::size_t>(i)]) = x(i);
    }

    // Sparse innovation: swap active coordinates with random targets.
    const int count = spec.switch_mean > 0 ? switches(rng) : 0;
    for (int c = 0; c < count; ++c) {
      std::vector<Index> support;
      for (Index i = 0; i < spec.K; ++i)
        if (next(i) != 0) support.push_back(i);
      if (support.empty()) break;
      std::uniform_int_distribution<std::size_t> pick(0, support.size() - 1);
      const Index from = support[pick(rng)];
      const Index to = coord(rng);
      std::swap(next(from), next(to));
    }

    sim.transitions[static_cast<std::size_t>(t)] = A;
    sim.states.col(t) = next;
    x = next;
  }

  sim.observations.resize(spec.P, spec.T);
  for (int t = 0; t < spec.T; ++t) {
    Vector y = sim.observation_matrix * sim.states.col(t);
    for (Index i = 0; i < spec.P; ++i) y(i) += noise_sd * gauss(rng);
    sim.observations.col(t) = y;
  }
  return sim;
}

Real rmse(const Vector& x_est, const Vector& x_true) {
  if (x_est.size() != x_true.size()) throw DimensionError("rmse: size mismatch");
  const Real denom = x_true.norm();
  if (denom == 0) throw MetricError("rmse: zero true norm");
  return (x_est - x_true).norm() / denom;
}

Matrix kalman_baseline(const Matrix& observations,
                       const std::vector<Matrix>& transitions, const Matrix& H,
                       Real process_var, Real obs_var) {
  const Index K = H.cols();
  const Index P = H.rows();
  const Index T = observations.cols();
  if (observations.rows() != P) throw DimensionError("kalman_baseline: H/obs rows");
  if (transitions.size() != static_cast<std::size_t>(T))
    throw DimensionError("kalman_baseline: one transition per step required");
  if (process_var < 0 || obs_var < 0)
    throw ParameterError("kalman_baseline: negative variance");

  const Matrix Q = process_var * Matrix::Identity(K, K);
  const Matrix R = obs_var * Matrix::Identity(P, P);
  const Matrix I = Matrix::Identity(K, K);

  Vector x = Vector::Zero(K);
  Matrix cov = Matrix::Identity(K, K);
  Matrix out(K, T);

  for (Index t = 0; t < T; ++t) {
    const Matrix& A = transitions[static_cast<std::size_t>(t)];
    if (A.rows() != K || A.cols() != K)
      throw DimensionError("kalman_baseline: transition shape mismatch");
    x = A * x;
    cov = A * cov * A.transpose() + Q;

    const Matrix S = H * cov * H.transpose() + R;
    if (!S.allFinite()) throw NumericError("kalman_baseline: non-finite innovation");
    Eigen::LDLT<Matrix> ldlt(S);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericError("kalman_baseline: singular innovation covariance");
    const Matrix gain = cov * H.transpose() * ldlt.solve(Matrix::Identity(P, P));
    x = x + gain * (observations.col(t) - H * x);
    cov = (I - gain * H) * cov;
    out.col(t) = x;
  }
  return out;
}

Matrix sparse_coding_baseline(const Matrix& observations, const Matrix& H,
                              Real gamma, const HyperParams& hyper) {
  if (gamma < 0) throw ParameterError("sparse_coding_baseline: gamma must be >= 0");
  const Index K = H.cols();
  const Index T = observations.cols();
  if (observations.rows() != H.rows())
    throw DimensionError("sparse_coding_baseline: H/obs rows");

  HyperParams h = hyper;
  h.lambda = 0;
  const Vector g = Vector::Constant(K, gamma);
  const Vector zero = Vector::Zero(K);
  const Matrix eye = Matrix::Identity(K, K);

  Matrix out(K, T);
  for (Index t = 0; t < T; ++t)
    out.col(t) = infer_states(observations.col(t), zero, g, H, eye, h);
  return out;
}

Matrix dpcn_estimator(const Matrix& observations,
                      const std::vector<Matrix>& transitions, const Matrix& H,
                      const HyperParams& hyper) {
  const Index K = H.cols();
  const Index T = observations.cols();
  if (observations.rows() != H.rows())
    throw DimensionError("dpcn_estimator: H/obs rows");
  if (transitions.size() != static_cast<std::size_t>(T))
    throw DimensionError("dpcn_estimator: one transition per step required");

  const Vector g = Vector::Constant(K, hyper.gamma0);
  Matrix out(K, T);
  Vector x_prev = Vector::Zero(K);
  for (Index t = 0; t < T; ++t) {
    const Matrix& A = transitions[static_cast<std::size_t>(t)];
    if (A.rows() != K || A.cols() != K)
      throw DimensionError("dpcn_estimator: transition shape mismatch");
    out.col(t) = infer_states(observations.col(t), x_prev, g, H, A, hyper);
    x_prev = out.col(t);
  }
  return out;
}

Real BenchCell::rmse_mean() const {
  if (run_rmse.empty()) return 0;
  return std::accumulate(run_rmse.begin(), run_rmse.end(), 0.0) /
         static_cast<Real>(run_rmse.size());
}

Real BenchCell::rmse_std() const {
  if (run_rmse.size() < 2) return 0;
  const Real m = rmse_mean();
  Real ss = 0;
  for (Real v : run_rmse) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<Real>(run_rmse.size() - 1));
}

const BenchCell& BenchResult::cell(const std::string& method, Index P) const {
  for (const BenchCell& c : cells)
    if (c.method == method && c.P == P) return c;
  throw MetricError("BenchResult: no cell for " + method + " at P=" +
                    std::to_string(P));
}

namespace {

constexpr int kSteadySkip = 50;

Real steady_rmse(const Matrix& estimates, const Matrix& truth) {
  const Index T = truth.cols();
  Real sum = 0;
  int count = 0;
  for (Index t = kSteadySkip; t < T; ++t) {
    sum += rmse(estimates.col(t), truth.col(t));
    ++count;
  }
  return sum / static_cast<Real>(count);
}

struct RunOutcome {
  Real kalman = 0, sc = 0, dpcn = 0;
  Real kalman_s = 0, sc_s = 0, dpcn_s = 0;
};

RunOutcome run_one(const SimSpec& spec, const HyperParams& hyper, Real kalman_q) {
  using clock = std::chrono::steady_clock;
  const SimData sim = simulate_sparse_dynamics(spec);
  RunOutcome o;

  auto t0 = clock::now();
  const Matrix kal = kalman_baseline(sim.observations, sim.transitions,
                                     sim.observation_matrix, kalman_q,
                                     spec.obs_noise_var);
  auto t1 = clock::now();
  const Matrix sc = sparse_coding_baseline(sim.observations, sim.observation_matrix,
                                           hyper.gamma0, hyper);
  auto t2 = clock::now();
  const Matrix dp = dpcn_estimator(sim.observations, sim.transitions,
                                   sim.observation_matrix, hyper);
  auto t3 = clock::now();

  o.kalman = steady_rmse(kal, sim.states);
  o.sc = steady_rmse(sc, sim.states);
  o.dpcn = steady_rmse(dp, sim.states);
  o.kalman_s = std::chrono::duration<Real>(t1 - t0).count();
  o.sc_s = std::chrono::duration<Real>(t2 - t1).count();
  o.dpcn_s = std::chrono::duration<Real>(t3 - t2).count();
  return o;
}

std::uint64_t run_seed(const SimSpec& base, Index P, int run) {
  return split_seed(base.seed, static_cast<std::uint64_t>(P) * 100003ULL +
                                   static_cast<std::uint64_t>(run));
}

// Picks the process variance once on pilot simulations.
Real tune_kalman(const SimSpec& base, const std::vector<Index>& P_grid) {
  static const Real grid[] = {1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0, 3.0};
  std::vector<Index> sorted = P_grid;
  std::sort(sorted.begin(), sorted.end());
  const Index pilot_p = sorted[sorted.size() / 2];

  Real best_q = grid[0];
  Real best = std::numeric_limits<Real>::infinity();
  for (Real q : grid) {
    Real total = 0;
    for (int i = 0; i < 3; ++i) {
      SimSpec spec = base;
      spec.P = pilot_p;
      spec.seed = split_seed(base.seed, 777000ULL + static_cast<std::uint64_t>(i));
      const SimData sim = simulate_sparse_dynamics(spec);
      const Matrix est = kalman_baseline(sim.observations, sim.transitions,
                                         sim.observation_matrix, q,
                                         spec.obs_noise_var);
      total += steady_rmse(est, sim.states);
    }
    if (total < best) {
      best = total;
      best_q = q;
    }
  }
  return best_q;
}

}  // namespace

BenchResult benchmark_state_estimation(const SimSpec& base,
                                       const std::vector<Index>& P_grid, int runs,
                                       const HyperParams& hyper, int threads) {
  if (P_grid.empty()) throw ParameterError("benchmark: empty P grid");
  if (runs <= 0) throw ParameterError("benchmark: runs must be positive");
  if (threads <= 0) threads = 1;
  if (base.T <= kSteadySkip)
    throw ParameterError("benchmark: T must exceed the steady-state skip of " +
                         std::to_string(kSteadySkip));
  hyper.validate();

  BenchResult result;
  result.kalman_process_var = tune_kalman(base, P_grid);

  for (Index P : P_grid) {
    SimSpec spec = base;
    spec.P = P;
    spec.validate();

    std::vector<RunOutcome> outcomes(static_cast<std::size_t>(runs));
    const int workers = std::min(threads, runs);
    if (workers <= 1) {
      for (int r = 0; r < runs; ++r) {
        SimSpec rs = spec;
        rs.seed = run_seed(base, P, r);
        outcomes[static_cast<std::size_t>(r)] =
            run_one(rs, hyper, result.kalman_process_var);
      }
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
          for (int r = w; r < runs; r += workers) {
            SimSpec rs = spec;
            rs.seed = run_seed(base, P, r);
            outcomes[static_cast<std::size_t>(r)] =
                run_one(rs, hyper, result.kalman_process_var);
          }
        });
      for (std::thread& th : pool) th.join();
    }

    BenchCell kal{"kalman", P, {}, 0};
    BenchCell sc{"sparse_coding", P, {}, 0};
    BenchCell dp{"dpcn", P, {}, 0};
    for (const RunOutcome& o : outcomes) {
      kal.run_rmse.push_back(o.kalman);
      sc.run_rmse.push_back(o.sc);
      dp.run_rmse.push_back(o.dpcn);
      kal.seconds += o.kalman_s;
      sc.seconds += o.sc_s;
      dp.seconds += o.dpcn_s;
    }
    result.cells.push_back(std::move(kal));
    result.cells.push_back(std::move(sc));
    result.cells.push_back(std::move(dp));
  }
  return result;
}

void write_benchmark_csv(const BenchResult& result, const std::string& path,
                         bool include_timings) {
  std::ofstream os(path);
  if (!os) throw IoError("write_benchmark_csv: cannot open " + path);
  os << "method,P,runs,rmse_mean,rmse_std,seconds\n";
  char line[256];
  for (const BenchCell& c : result.cells) {
    std::snprintf(line, sizeof(line), "%s,%lld,%zu,%.9g,%.9g,%.3f\n",
                  c.method.c_str(), static_cast<long long>(c.P),
                  c.run_rmse.size(), c.rmse_mean(), c.rmse_std(),
                  include_timings ? c.seconds : 0.0);
    os << line;
  }
  if (!os) throw IoError("write_benchmark_csv: write failed for " + path);
}

namespace {

// Regularised incomplete beta via the standard continued fraction.
Real betacf(Real a, Real b, Real x) {
  constexpr int kMaxIter = 200;
  constexpr Real eps = 3e-12;
  constexpr Real fpmin = 1e-300;
  const Real qab = a + b, qap = a + 1, qam = a - 1;
  Real c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < fpmin) d = fpmin;
  d = 1 / d;
  Real h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    Real aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < fpmin) d = fpmin;
    c = 1 + aa / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1 / d;
    const Real del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

Real inc_beta(Real a, Real b, Real x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const Real ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                  a * std::log(x) + b * std::log1p(-x);
  const Real front = std::exp(ln);
  if (x < (a + 1) / (a + b + 2)) return front * betacf(a, b, x) / a;
  return 1 - front * betacf(b, a, 1 - x) / b;
}

Real student_cdf(Real t, Real dof) {
  const Real x = dof / (dof + t * t);
  const Real tail = 0.5 * inc_beta(0.5 * dof, 0.5, x);
  return t >= 0 ? 1 - tail : tail;
}

}  // namespace

Real paired_t_pvalue(const std::vector<Real>& a, const std::vector<Real>& b) {
  if (a.size() != b.size()) throw DimensionError("paired_t_pvalue: size mismatch");
  const std::size_t n = a.size();
  if (n < 2) throw MetricError("paired_t_pvalue: need at least two pairs");

  Real mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<Real>(n);
  Real ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Real d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const Real sd = std::sqrt(ss / static_cast<Real>(n - 1));
  if (sd == 0) return mean < 0 ? 0.0 : 1.0;
  const Real t = mean / (sd / std::sqrt(static_cast<Real>(n)));
  return student_cdf(t, static_cast<Real>(n - 1));
}

SeparabilityResult cluster_separability(const Matrix& features,
                                        const std::vector<std::uint32_t>& labels,
                                        int restarts, std::uint64_t seed) {
  const Index T = features.rows();
  if (labels.size() != static_cast<std::size_t>(T))
    throw DimensionError("cluster_separability: one label per row required");
  if (restarts <= 0)
    throw ParameterError("cluster_separability: restarts must be positive");

  std::vector<std::uint32_t> classes = labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  const int k = static_cast<int>(classes.size());
  if (k < 2) throw MetricError("cluster_separability: need at least two classes");

  std::vector<int> truth(static_cast<std::size_t>(T));
  for (Index i = 0; i < T; ++i)
    truth[static_cast<std::size_t>(i)] = static_cast<int>(
        std::lower_bound(classes.begin(), classes.end(), labels[static_cast<std::size_t>(i)]) -
        classes.begin());

  bool degenerate = true;
  for (Index i = 1; i < T && degenerate; ++i)
    if ((features.row(i) - features.row(0)).norm() > 0) degenerate = false;
  if (degenerate) return {1.0 / static_cast<Real>(k), true};

  std::vector<int> best_assign;
  Real best_sse = std::numeric_limits<Real>::infinity();

  for (int r = 0; r < restarts; ++r) {
    auto rng = make_rng(seed, 50000ULL + static_cast<std::uint64_t>(r));
    std::uniform_int_distribution<Index> row(0, T - 1);

    // k-means++ seeding.
    Matrix centers(k, features.cols());
    centers.row(0) = features.row(row(rng));
    Vector d2 = (features.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const Real total = d2.sum();
      Index pick = 0;
      if (total > 0) {
        std::uniform_real_distribution<Real> u(0.0, total);
        Real target = u(rng), acc = 0;
        for (Index i = 0; i < T; ++i) {
          acc += d2(i);
          if (acc >= target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = row(rng);
      }
      centers.row(c) = features.row(pick);
      d2 = d2.cwiseMin(
          (features.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<std::size_t>(T), -1);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (Index i = 0; i < T; ++i) {
        int arg = 0;
        Real best_d = std::numeric_limits<Real>::infinity();
        for (int c = 0; c < k; ++c) {
          const Real d = (features.row(i) - centers.row(c)).squaredNorm();
          if (d < best_d) {
            best_d = d;
            arg = c;
          }
        }
        if (assign[static_cast<std::size_t>(i)] != arg) {
          assign[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      if (!changed) break;

      for (int c = 0; c < k; ++c) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(features.cols());
        int count = 0;
        for (Index i = 0; i < T; ++i)
          if (assign[static_cast<std::size_t>(i)] == c) {
            sum += features.row(i);
            ++count;
          }
        if (count > 0) {
          centers.row(c) = sum / count;
        } else {
          // Reseed an empty cluster at the point farthest from its centre.
          Index far = 0;
          Real far_d = -1;
          for (Index i = 0; i < T; ++i) {
            const int a = assign[static_cast<std::size_t>(i)];
            const Real d = (features.row(i) - centers.row(a)).squaredNorm();
            if (d > far_d) {
              far_d = d;
              far = i;
            }
          }
          centers.row(c) = features.row(far);
        }
      }
    }

    Real sse = 0;
    for (Index i = 0; i < T; ++i)
      sse += (features.row(i) -
              centers.row(assign[static_cast<std::size_t>(i)]))
                 .squaredNorm();
    if (sse < best_sse) {
      best_sse = sse;
      best_assign = assign;
    }
  }

  // Confusion counts, then the best cluster-to-class mapping.
  std::vector<std::vector<int>> confusion(static_cast<std::size_t>(k),
                                          std::vector<int>(static_cast<std::size_t>(k), 0));
  for (Index i = 0; i < T; ++i)
    ++confusion[static_cast<std::size_t>(best_assign[static_cast<std::size_t>(i)])]
               [static_cast<std::size_t>(truth[static_cast<std::size_t>(i)])];

  long best_correct = 0;
  if (k <= 8) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      long correct = 0;
      for (int c = 0; c < k; ++c)
        correct += confusion[static_cast<std::size_t>(c)]
                            [static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])];
      best_correct = std::max(best_correct, correct);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    // Greedy matching for many classes.
    std::vector<bool> used(static_cast<std::size_t>(k), false);
    for (int c = 0; c < k; ++c) {
      int arg = -1, best = -1;
      for (int l = 0; l < k; ++l)
        if (!used[static_cast<std::size_t>(l)] &&
            confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)] > best) {
          best = confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(l)];
          arg = l;
        }
      used[static_cast<std::size_t>(arg)] = true;
      best_correct += best;
    }
  }
  return {static_cast<Real>(best_correct) / static_cast<Real>(T), false};
}

}  // namespace dpcn
