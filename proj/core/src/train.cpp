#include "amkt/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "amkt/io.hpp"
#include "amkt/metrics.hpp"
#include "amkt/optim.hpp"

namespace amkt {

std::string val_metric_name(ValMetric m) { return m == ValMetric::accuracy ? "accuracy" : "kappa"; }

ValMetric val_metric_from(const std::string& s) {
  if (s == "accuracy") return ValMetric::accuracy;
  if (s == "kappa") return ValMetric::kappa;
  fail("unknown validation metric '", s, "'");
}

Tensor target_rows(const LabeledDataset& d, const std::vector<int>& idx, bool use_soft) {
  Tensor t({static_cast<int64_t>(idx.size()), d.classes});
  if (use_soft && d.has_soft()) {
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy(d.soft.data() + idx[i] * d.classes, d.soft.data() + (idx[i] + 1) * d.classes,
                t.data() + static_cast<int64_t>(i) * d.classes);
  } else {
    for (size_t i = 0; i < idx.size(); ++i)
      t.at(static_cast<int64_t>(i), d.labels[static_cast<size_t>(idx[i])]) = 1.0f;
  }
  return t;
}

namespace {

Tensor gather_batch(const Tensor& x, const std::vector<int>& idx) {
  const int64_t ex = x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = static_cast<int64_t>(idx.size());
  Tensor out(s);
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy(x.data() + idx[i] * ex, x.data() + (idx[i] + 1) * ex,
              out.data() + static_cast<int64_t>(i) * ex);
  return out;
}

}  // namespace

double evaluate_metric(const Network& net, const LabeledDataset& data, ValMetric metric,
                       int64_t chunk) {
  check(data.size() > 0, "evaluating on an empty dataset");
  const Tensor probs = net.predict(data.x, chunk);
  const std::vector<int> pred = argmax_rows(probs);
  const ConfusionMatrix m = confusion(data.labels, pred, data.classes);
  return metric == ValMetric::accuracy ? m.accuracy() : m.kappa();
}

double evaluate_loss(const Network& net, const LabeledDataset& data, bool use_soft_targets,
                     int64_t chunk) {
  check(data.size() > 0, "evaluating on an empty dataset");
  const Tensor probs = net.predict(data.x, chunk);
  const bool soft = use_soft_targets && data.has_soft();
  double loss = 0.0;
  for (int64_t i = 0; i < data.size(); ++i) {
    if (soft) {
      for (int j = 0; j < data.classes; ++j) {
        const double t = data.soft.at(i, j);
        if (t != 0.0)
          loss -= t * std::log(std::max(static_cast<double>(probs.at(i, j)), 1e-12));
      }
    } else {
      loss -= std::log(
          std::max(static_cast<double>(probs.at(i, data.labels[static_cast<size_t>(i)])), 1e-12));
    }
  }
  return loss / static_cast<double>(data.size());
}

TrainResult train_network(Network net, const LabeledDataset& train, const LabeledDataset& val,
                          const TrainConfig& cfg) {
  train.validate();
  if (val.size() > 0) val.validate();
  check(train.classes == net.spec().output_units(), "network '", net.spec().name, "' has ",
        net.spec().output_units(), " outputs but the data has ", train.classes, " classes");
  check(cfg.batch_size >= 1 && cfg.iterations >= 1 && cfg.val_period >= 1, "bad training config");

  Rng base(cfg.seed);
  Rng shuffle_rng = base.derive(0x5f);
  Rng dropout_rng = base.derive(0xd0);

  Adam adam(cfg.lr);
  Sgd sgd(cfg.lr);

  TrainResult res;
  res.best_metric = -2.0;  // below any kappa

  std::vector<int> order = shuffle_rng.permutation(static_cast<int>(train.size()));
  size_t cursor = 0;
  double loss_accum = 0.0;
  int loss_count = 0;
  std::vector<Tensor> best_params;
  auto snapshot_it = cfg.snapshot_iters;
  std::sort(snapshot_it.begin(), snapshot_it.end());

  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        shuffle_rng.shuffle(order);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    const Tensor bx = gather_batch(train.x, idx);
    const Tensor bt = target_rows(train, idx, cfg.use_soft_targets);

    Tape tape;
    double batch_loss = 0.0;
    try {
      const Network::Forward f = net.forward(tape, bx, true, &dropout_rng, true);
      const int loss = tape.cross_entropy(f.out, bt);
      batch_loss = tape.value(loss)[0];
      tape.backward(loss);
      std::vector<Tensor*> params;
      std::vector<const Tensor*> grads;
      for (size_t p = 0; p < net.params().size(); ++p) {
        params.push_back(&net.params()[p]);
        grads.push_back(&tape.grad(f.param_ids[p]));
      }
      if (cfg.optimizer == OptimizerKind::adam)
        adam.step(params, grads);
      else
        sgd.step(params, grads);
    } catch (const Error& e) {
      fail("training '", net.spec().name, "' aborted at batch ", it + 1, ": ", e.what());
    }
    loss_accum += batch_loss;
    ++loss_count;

    if (!snapshot_it.empty() && it + 1 == snapshot_it.front()) {
      res.snapshots.emplace_back(it + 1, net);
      snapshot_it.erase(snapshot_it.begin());
    }

    const bool last = it + 1 == cfg.iterations;
    if (val.size() > 0 && ((it + 1) % cfg.val_period == 0 || last)) {
      CurvePoint pt;
      pt.batch = it + 1;
      pt.train_loss = loss_accum / std::max(loss_count, 1);
      pt.val_loss = evaluate_loss(net, val, cfg.use_soft_targets, cfg.eval_chunk);
      pt.val_metric = evaluate_metric(net, val, cfg.metric, cfg.eval_chunk);
      res.curve.push_back(pt);
      loss_accum = 0.0;
      loss_count = 0;
      if (pt.val_metric > res.best_metric) {
        res.best_metric = pt.val_metric;
        res.best_batch = pt.batch;
        best_params = net.params();
      }
      if (last) res.final_metric = pt.val_metric;
    }
  }

  if (!best_params.empty()) {
    res.net = net;
    res.net.params() = std::move(best_params);
  } else {
    res.net = std::move(net);
    res.best_metric = res.final_metric;
    res.best_batch = cfg.iterations;
  }
  return res;
}

TrainResult train_classifier(const ArchitectureSpec& arch, const LabeledDataset& train,
                             const LabeledDataset& val, const TrainConfig& cfg) {
  Rng init_rng = Rng(cfg.seed).derive(0xb1);
  Network net = Network::build(arch, init_rng, cfg.init_scale);
  return train_network(std::move(net), train, val, cfg);
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os << "batch,train_loss,val_loss,val_metric\n";
  for (const CurvePoint& p : curve)
    os << p.batch << "," << p.train_loss << "," << p.val_loss << "," << p.val_metric << "\n";
  write_text_file(path, os.str());
}

}  // namespace amkt
