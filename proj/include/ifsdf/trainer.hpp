#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ifsdf/autodiff.hpp"
#include "ifsdf/filter.hpp"
#include "ifsdf/geom.hpp"
#include "ifsdf/net.hpp"

namespace ifsdf::train {

struct TrainConfig {
  int iterations = 10000;
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int batch_queries = 1000;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  std::uint64_t seed = 42;

  // Network architecture.
  std::vector<int> hidden = {64, 64, 64, 64};
  int skip_layer = -2;  // -2 = middle hidden layer
  double net_beta = 100.0;
  double init_radius = 0.5;

  int threads = 0;  // 0 = hardware concurrency
  bool deterministic = false;

  // Stamped onto the field so checkpoints can map outputs back to the raw
  // input frame.
  geom::NormalizationTransform norm{};

  std::string checkpoint_path;  // written when non-empty
  std::string log_path;         // per-iteration CSV when non-empty

  void validate() const;
};

struct TrainLog {
  std::vector<filter::FilterTermBreakdown> history;  // one entry per iteration
  std::vector<double> wall_ms;                       // not part of the CSV
};

struct AdamState {
  std::vector<double> m, v;
  long long t = 0;
};

// One Adam update with bias correction. Throws TrainingError on a non-finite
// gradient.
void adam_step(std::vector<double>& params, const ad::ParamGrad& grad, AdamState& state,
               double lr, double beta1, double beta2, double eps);

// Fit a field to a normalized cloud by minimizing the filtering objective.
// Deterministic for a fixed seed and thread count; `deterministic` pins one
// worker thread. On a numerical abort the last healthy checkpoint is kept.
std::pair<net::MlpField, TrainLog> train(const geom::PointCloud& cloud,
                                         const filter::FilterConfig& fcfg,
                                         const TrainConfig& tcfg);

void write_log_csv(const std::string& path, const TrainLog& log);

}  // namespace ifsdf::train
