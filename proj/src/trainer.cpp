#include "ifsdf/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "ifsdf/errors.hpp"
#include "ifsdf/parallel.hpp"
#include "ifsdf/rng.hpp"

namespace ifsdf::train {

void TrainConfig::validate() const {
  if (iterations < 0) throw InputError("iterations must be nonnegative");
  if (!(learning_rate > 0.0)) throw InputError("learning_rate must be positive");
  if (batch_queries < 1) throw InputError("batch_queries must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw InputError("adam betas must lie in [0, 1)");
  if (hidden.empty()) throw InputError("network needs at least one hidden layer");
  if (!(init_radius > 0.0)) throw InputError("init_radius must be positive");
}

void adam_step(std::vector<double>& params, const ad::ParamGrad& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
  if (grad.size() != params.size()) throw InputError("adam_step: gradient shape mismatch");
  if (!grad.finite()) throw TrainingError("adam_step: non-finite gradient");
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad.v[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

namespace {

std::vector<int> pick_batch(std::vector<int>& pool, int want, Rng& rng) {
  const int n = static_cast<int>(pool.size());
  if (want >= n) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  // Partial Fisher-Yates over a persistent pool: without replacement per step.
  for (int i = 0; i < want; ++i) {
    const int j = i + static_cast<int>(rng.below(n - i));
    std::swap(pool[i], pool[j]);
  }
  return {pool.begin(), pool.begin() + want};
}

}  // namespace

std::pair<net::MlpField, TrainLog> train(const geom::PointCloud& cloud,
                                         const filter::FilterConfig& fcfg,
                                         const TrainConfig& tcfg) {
  tcfg.validate();
  fcfg.validate();
  if (cloud.count() < fcfg.k_filter + 1)
    throw InputError("train: cloud smaller than the filter neighborhood");
  const Aabb box = cloud.bounds();
  for (int a = 0; a < 3; ++a)
    if (std::max(std::abs(box.lo[a]), std::abs(box.hi[a])) > 1.0)
      throw InputError("train: expects a normalized cloud (coordinates within [-1, 1])");

  const int threads = tcfg.deterministic ? 1
                      : tcfg.threads > 0 ? tcfg.threads
                                         : default_threads();

  geom::QueryBatch batch =
      geom::sample_queries(cloud, fcfg.per_point, fcfg.sigma_k, fcfg.k_filter, tcfg.seed);
  net::MlpField field = net::geometric_init(tcfg.hidden, tcfg.init_radius, tcfg.seed + 1,
                                            cloud.dim(), tcfg.net_beta, tcfg.skip_layer);
  field.norm = tcfg.norm;

  TrainLog log;
  log.history.reserve(tcfg.iterations);
  log.wall_ms.reserve(tcfg.iterations);
  if (tcfg.iterations == 0 || batch.size() == 0) {
    if (!tcfg.checkpoint_path.empty()) net::save_checkpoint(field, tcfg.checkpoint_path);
    if (!tcfg.log_path.empty()) write_log_csv(tcfg.log_path, log);
    return {std::move(field), std::move(log)};
  }

  Rng rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> pool(batch.size());
  std::iota(pool.begin(), pool.end(), 0);
  AdamState adam;
  ad::ParamGrad grad;
  std::vector<double> last_good = field.params();

  auto persist = [&](const std::vector<double>& params) {
    if (tcfg.checkpoint_path.empty()) return;
    net::MlpField snapshot = field;
    snapshot.params() = params;
    net::save_checkpoint(snapshot, tcfg.checkpoint_path);
  };

  for (int it = 1; it <= tcfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    filter::BatchPlan plan;
    plan.ids = pick_batch(pool, tcfg.batch_queries, rng);

    filter::FilterTermBreakdown terms;
    filter::DegenerateStats stats;
    try {
      terms = filter::eval_loss_grad(field, batch, cloud, fcfg, plan, grad, threads, &stats);
    } catch (const TrainingError&) {
      persist(last_good);
      if (!tcfg.log_path.empty()) write_log_csv(tcfg.log_path, log);
      throw;
    }
    if (stats.degenerate_pull * 2 > stats.queries) {
      persist(last_good);
      if (!tcfg.log_path.empty()) write_log_csv(tcfg.log_path, log);
      throw TrainingError("field collapse: " + std::to_string(stats.degenerate_pull) + " of " +
                          std::to_string(stats.queries) +
                          " queries have vanishing gradients at iteration " + std::to_string(it));
    }

    adam_step(field.params(), grad, adam, tcfg.learning_rate, tcfg.beta1, tcfg.beta2,
              tcfg.adam_eps);
    last_good = field.params();

    const auto t1 = std::chrono::steady_clock::now();
    log.history.push_back(terms);
    log.wall_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());

    if (tcfg.checkpoint_every > 0 && it % tcfg.checkpoint_every == 0) persist(field.params());
  }

  if (!tcfg.checkpoint_path.empty()) net::save_checkpoint(field, tcfg.checkpoint_path);
  if (!tcfg.log_path.empty()) write_log_csv(tcfg.log_path, log);
  return {std::move(field), std::move(log)};
}

void write_log_csv(const std::string& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write log: " + path);
  out << "iteration,l_dist,l_zero,l_field,l_cd,total\n";
  out.precision(12);
  for (std::size_t i = 0; i < log.history.size(); ++i) {
    const auto& h = log.history[i];
    out << i + 1 << ',' << h.l_dist << ',' << h.l_zero << ',' << h.l_field << ',' << h.l_cd
        << ',' << h.total << '\n';
  }
  if (!out) throw InputError("failed writing log: " + path);
}

}  // namespace ifsdf::train
