#pragma once

#include <string>
#include <vector>

#include "amkt/data.hpp"
#include "amkt/nn.hpp"

namespace amkt {

enum class ValMetric { accuracy, kappa };
enum class OptimizerKind { adam, sgd };

std::string val_metric_name(ValMetric m);
ValMetric val_metric_from(const std::string& s);

struct TrainConfig {
  int batch_size = 128;
  int iterations = 1000;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  int val_period = 50;
  ValMetric metric = ValMetric::accuracy;
  uint64_t seed = 1;
  bool use_soft_targets = true;  // honored when the data carries soft labels
  int64_t eval_chunk = 256;
  double init_scale = 1.0;
  std::vector<int> snapshot_iters;  // copies of the net taken mid-run
};

struct CurvePoint {
  int batch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;
};

struct TrainResult {
  Network net;  // best-validation parameters (final ones if no validation ran)
  double best_metric = 0.0;
  int best_batch = 0;
  double final_metric = 0.0;
  std::vector<CurvePoint> curve;
  std::vector<std::pair<int, Network>> snapshots;
};

// Seeded shuffled epochs over train, cross-entropy on the class
// probabilities, periodic validation with best-checkpoint tracking. The
// returned network's validation metric is >= the final iteration's.
TrainResult train_network(Network net, const LabeledDataset& train, const LabeledDataset& val,
                          const TrainConfig& cfg);

// Builds the architecture with an init stream derived from cfg.seed, then
// trains it.
TrainResult train_classifier(const ArchitectureSpec& arch, const LabeledDataset& train,
                             const LabeledDataset& val, const TrainConfig& cfg);

double evaluate_metric(const Network& net, const LabeledDataset& data, ValMetric metric,
                       int64_t chunk = 256);
double evaluate_loss(const Network& net, const LabeledDataset& data, bool use_soft_targets = true,
                     int64_t chunk = 256);

// Target rows for a dataset subset: soft rows when present and requested,
// one-hot otherwise.
Tensor target_rows(const LabeledDataset& d, const std::vector<int>& idx, bool use_soft);

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

}  // namespace amkt
