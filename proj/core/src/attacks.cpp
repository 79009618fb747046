#include "amkt/attacks.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "amkt/catalog.hpp"
#include "amkt/error.hpp"
#include "amkt/learners.hpp"
#include "amkt/metrics.hpp"
#include "amkt/rng.hpp"

namespace amkt {

namespace {

// Sub-stream tags; every model trained inside an attack derives its seed
// from the attack seed so reports are reproducible end to end.
constexpr uint64_t kDiscardTag = 0x646973636172645full;
constexpr uint64_t kAdversaryTag = 0x616476657273615full;
constexpr uint64_t kIdentityTag = 0x6964656e745f5f5full;
constexpr uint64_t kTeacherTag = 0x746561636865725full;
constexpr uint64_t kUserTag = 0x757365725f5f5f5full;
constexpr uint64_t kGenTag = 0x67656e5f5f5f5f5full;
constexpr uint64_t kMiTag = 0x6d695f5f5f5f5f5full;
constexpr uint64_t kSvmTag = 0x73766d5f5f5f5f5full;
constexpr uint64_t kForestTag = 0x666f726573745f5full;
constexpr uint64_t kDenseTag = 0x64656e73655f5f5full;
constexpr uint64_t kConvTag = 0x636f6e765f5f5f5full;

Recording slice_recording(const Recording& r, int64_t minute0, int64_t minute1) {
  Recording out;
  out.name = r.name;
  const int64_t c = r.channels();
  const int64_t t0 = minute0 * 60;
  const int64_t len = (minute1 - minute0) * 60;
  out.signal = Tensor::zeros({c, len});
  for (int64_t ch = 0; ch < c; ++ch) {
    std::memcpy(out.signal.data() + ch * len, r.signal.data() + ch * r.seconds() + t0,
                static_cast<size_t>(len) * sizeof(float));
  }
  out.minute_labels.assign(r.minute_labels.begin() + minute0, r.minute_labels.begin() + minute1);
  return out;
}

// Evaluation bundle shared by every attack report: argmax predictions,
// per-class histograms and mean max probability grouped by predicted class.
AttackReport build_report(const std::string& kind, const Tensor& probs,
                          const std::vector<int>& reference, int classes, uint64_t seed) {
  if (probs.dim(0) != static_cast<int64_t>(reference.size())) {
    fail("attack report: ", probs.dim(0), " prediction rows vs ", reference.size(),
         " reference labels");
  }
  AttackReport rep;
  rep.kind = kind;
  rep.seed = seed;
  rep.predicted_histogram.assign(classes, 0);
  rep.reference_histogram.assign(classes, 0);
  rep.mean_max_probability.assign(classes, -1.0);

  const std::vector<int> preds = argmax_rows(probs);
  std::vector<double> prob_sum(classes, 0.0);
  const int64_t k = probs.dim(1);
  for (size_t i = 0; i < preds.size(); ++i) {
    const float* row = probs.data() + static_cast<int64_t>(i) * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    ++rep.predicted_histogram[preds[i]];
    ++rep.reference_histogram[reference[i]];
    prob_sum[preds[i]] += mx;
  }
  for (int c = 0; c < classes; ++c) {
    if (rep.predicted_histogram[c] > 0) {
      rep.mean_max_probability[c] = prob_sum[c] / static_cast<double>(rep.predicted_histogram[c]);
    }
  }
  rep.kappa = confusion(reference, preds, classes).kappa();
  rep.validate();
  return rep;
}

TrainConfig seeded(TrainConfig cfg, uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

// Validation-first split; frac 0 keeps everything in training and the
// trainer then returns the final iterate instead of a checkpoint.
std::pair<LabeledDataset, LabeledDataset> holdout_split(const LabeledDataset& d, double frac,
                                                        uint64_t seed) {
  if (frac <= 0.0) return {LabeledDataset{}, d};
  Rng rng(seed);
  return split_dataset(d, frac, rng);
}

Network fit_model(const ArchitectureSpec& arch, const LabeledDataset& data, double holdout,
                  const TrainConfig& cfg, uint64_t seed) {
  auto [val, train] = holdout_split(data, holdout, seed ^ 0x76616c5f5f5f5f5full);
  return train_classifier(arch, train, val, seeded(cfg, seed)).net;
}

}  // namespace

std::string open_case_name(OpenCase c) {
  switch (c) {
    case OpenCase::real: return "real";
    case OpenCase::stimuli: return "stimuli";
    case OpenCase::inhibitory_stimuli: return "inhibitory_stimuli";
  }
  fail("unknown open case");
}

OpenCase open_case_from(const std::string& s) {
  if (s == "real") return OpenCase::real;
  if (s == "stimuli") return OpenCase::stimuli;
  if (s == "inhibitory_stimuli") return OpenCase::inhibitory_stimuli;
  fail("unknown open case '", s, "'");
}

std::string probe_learner_name(ProbeLearner l) {
  switch (l) {
    case ProbeLearner::linear_svm: return "linear_svm";
    case ProbeLearner::random_forest: return "random_forest";
    case ProbeLearner::dense_net: return "dense_net";
    case ProbeLearner::conv_net: return "conv_net";
  }
  fail("unknown probe learner");
}

ProbeLearner probe_learner_from(const std::string& s) {
  if (s == "linear_svm") return ProbeLearner::linear_svm;
  if (s == "random_forest") return ProbeLearner::random_forest;
  if (s == "dense_net") return ProbeLearner::dense_net;
  if (s == "conv_net") return ProbeLearner::conv_net;
  fail("unknown probe learner '", s, "'");
}

void AttackReport::validate() const {
  int64_t pred_total = 0, ref_total = 0;
  for (int64_t v : predicted_histogram) pred_total += v;
  for (int64_t v : reference_histogram) ref_total += v;
  if (pred_total != ref_total) {
    fail("attack report histograms disagree: ", pred_total, " vs ", ref_total);
  }
  if (!(kappa >= -1.0 && kappa <= 1.0)) fail("attack report kappa ", kappa, " outside [-1,1]");
  if (predicted_histogram.size() != reference_histogram.size() ||
      predicted_histogram.size() != mean_max_probability.size()) {
    fail("attack report per-class vectors disagree in length");
  }
}

std::string AttackReport::to_json() const {
  nlohmann::json j;
  j["kind"] = kind;
  j["seed"] = seed;
  j["kappa"] = kappa;
  j["predicted_histogram"] = predicted_histogram;
  j["reference_histogram"] = reference_histogram;
  j["mean_max_probability"] = mean_max_probability;
  return j.dump(2);
}

std::string AttackReport::histogram_csv() const {
  std::string out = "class,predicted,reference,mean_max_probability\n";
  for (size_t c = 0; c < predicted_histogram.size(); ++c) {
    out += std::to_string(c) + "," + std::to_string(predicted_histogram[c]) + "," +
           std::to_string(reference_histogram[c]) + ",";
    if (mean_max_probability[c] >= 0.0) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", mean_max_probability[c]);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

BreachSplit make_breach_split(const std::vector<Recording>& recs, const BreachSplitConfig& cfg,
                              uint64_t seed) {
  if (recs.size() < 2) fail("breach split needs at least two recordings");
  BreachSplit split;
  for (const Recording& r : recs) {
    if (r.name.empty()) fail("breach split: recordings must be named");
    if (r.minutes() < 3) fail("recording '", r.name, "' is shorter than three minutes");
    if (r.seconds() != r.minutes() * 60) {
      fail("recording '", r.name, "': signal length ", r.seconds(), " does not cover ",
           r.minutes(), " labeled minutes");
    }
    if (r.channels() != recs.front().channels()) {
      fail("recording '", r.name, "' has a different channel layout");
    }
    if (std::count_if(recs.begin(), recs.end(),
                      [&](const Recording& o) { return o.name == r.name; }) != 1) {
      fail("duplicate recording name '", r.name, "'");
    }
    split.names.push_back(r.name);
  }

  std::vector<std::string> discard = cfg.discard;
  if (discard.empty() && cfg.random_discards > 0) {
    if (cfg.random_discards >= static_cast<int>(recs.size())) {
      fail("cannot discard ", cfg.random_discards, " of ", recs.size(), " recordings");
    }
    std::vector<std::string> pool = split.names;
    Rng rng(seed ^ kDiscardTag);
    rng.shuffle(pool);
    discard.assign(pool.begin(), pool.begin() + cfg.random_discards);
  }
  for (const std::string& name : discard) {
    if (std::find(split.names.begin(), split.names.end(), name) == split.names.end()) {
      fail("discard list names unknown recording '", name, "'");
    }
    if (std::count(discard.begin(), discard.end(), name) != 1) {
      fail("discard list repeats '", name, "'");
    }
  }
  split.discarded = discard;

  std::vector<Recording> breach_parts, open_parts, test_parts;
  for (size_t i = 0; i < recs.size(); ++i) {
    const Recording& r = recs[i];
    const int64_t third = r.minutes() / 3;
    breach_parts.push_back(slice_recording(r, 0, third));
    const bool kept =
        std::find(discard.begin(), discard.end(), r.name) == discard.end();
    if (kept) {
      split.kept.push_back(static_cast<int>(i));
      open_parts.push_back(slice_recording(r, third, 2 * third));
      test_parts.push_back(slice_recording(r, 2 * third, r.minutes()));
    }
  }
  if (split.kept.size() < 2) {
    fail("breach split leaves ", split.kept.size(), " usable recordings; need at least 2");
  }
  split.breach = window_recordings(breach_parts, cfg.normalize);
  split.open = window_recordings(open_parts, cfg.normalize);
  split.test = window_recordings(test_parts, cfg.normalize);
  return split;
}

AssociationOutcome recording_association_attack(const std::vector<Recording>& recordings,
                                                OpenCase open_case, const AssociationConfig& cfg,
                                                uint64_t seed) {
  BreachSplit split = make_breach_split(recordings, cfg.split, seed);
  const int all_classes = static_cast<int>(split.names.size());
  const int kept_classes = static_cast<int>(split.kept.size());
  const int width = static_cast<int>(split.breach.x.dim(1) * split.breach.x.dim(2));

  // The adversary learns to tell every breach recording apart.
  const ArchitectureSpec adv_arch =
      cfg.adversary.layers.empty() ? association_net(all_classes, width) : cfg.adversary;
  LabeledDataset breach_ids = split.breach.labeled_identity(true);
  Network adversary = fit_model(adv_arch, breach_ids, cfg.holdout_fraction, cfg.adversary_train,
                                seed ^ kAdversaryTag);

  LabeledDataset open_apnea = split.open.labeled_apnea(true);
  LabeledDataset open_ids = split.open.labeled_identity(true);

  Tensor open_x;                 // what the adversary sees
  std::vector<int> reference;    // recording classes in breach numbering
  LabeledDataset user_material;  // what the user trains apnea detection on

  if (open_case == OpenCase::real) {
    open_x = open_ids.x;
    reference.reserve(open_ids.labels.size());
    for (int local : open_ids.labels) reference.push_back(split.kept[local]);
    user_material = open_apnea;
  } else {
    if (cfg.stimulus.generator.layers.empty()) {
      fail("the ", open_case_name(open_case),
           " case requires a stimulus generator architecture");
    }
    const ArchitectureSpec teacher_arch =
        cfg.teacher.layers.empty() ? association_net(2, width) : cfg.teacher;
    Network teacher = fit_model(teacher_arch, open_apnea, cfg.holdout_fraction,
                                cfg.teacher_train, seed ^ kTeacherTag);

    const ArchitectureSpec id_arch =
        cfg.identity.layers.empty() ? association_net(kept_classes, width) : cfg.identity;
    Network identity = fit_model(id_arch, open_ids, cfg.holdout_fraction, cfg.identity_train,
                                 seed ^ kIdentityTag);

    StimulusDataset ds;
    if (open_case == OpenCase::stimuli) {
      ds = generate_stimulus_dataset(teacher, cfg.stimulus, cfg.stimulus_count, seed ^ kGenTag);
    } else {
      std::vector<double> marginal(kept_classes, 0.0);
      for (int local : open_ids.labels) marginal[local] += 1.0;
      for (double& m : marginal) m /= static_cast<double>(open_ids.labels.size());
      ds = inhibitory_generate(teacher, identity, marginal, cfg.stimulus, cfg.stimulus_count,
                               seed ^ kGenTag);
    }
    open_x = ds.stacked_data();
    const std::vector<int> beliefs = argmax_rows(identity.predict(open_x));
    reference.reserve(beliefs.size());
    for (int local : beliefs) reference.push_back(split.kept[local]);
    user_material = ds.as_labeled();
  }

  AssociationOutcome outcome;
  outcome.adversary = build_report("recording_association:" + open_case_name(open_case),
                                   adversary.predict(open_x), reference, all_classes, seed);

  const ArchitectureSpec user_arch =
      cfg.user.layers.empty() ? association_net(2, width) : cfg.user;
  Network user =
      fit_model(user_arch, user_material, cfg.holdout_fraction, cfg.user_train, seed ^ kUserTag);
  LabeledDataset test_apnea = split.test.labeled_apnea(true);
  outcome.user = build_report("user_task:" + open_case_name(open_case),
                              user.predict(test_apnea.x), test_apnea.labels, 2, seed);
  return outcome;
}

AttackReport membership_inference_attack(const Network& target, const LabeledDataset& train_sample,
                                         const LabeledDataset& test_sample,
                                         const MembershipConfig& cfg, uint64_t seed) {
  train_sample.validate();
  test_sample.validate();
  const int64_t n = train_sample.size();
  if (n == 0) fail("membership inference needs non-empty samples");
  if (n != test_sample.size()) {
    fail("membership samples must match in size: ", n, " vs ", test_sample.size());
  }
  if (n < 3) fail("membership samples of ", n, " are too small for a 2/3 attacker split");
  if (!same_shape(train_sample.x.shape(), test_sample.x.shape())) {
    fail("membership samples disagree in shape: ", shape_string(train_sample.x.shape()), " vs ",
         shape_string(test_sample.x.shape()));
  }
  const int64_t d = train_sample.x.numel() / n;
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      if (std::memcmp(train_sample.x.data() + i * d, test_sample.x.data() + j * d,
                      static_cast<size_t>(d) * sizeof(float)) == 0) {
        fail("membership samples overlap: train row ", i, " equals test row ", j);
      }
    }
  }

  // Featurize through the frozen target; member rows get label 1.
  const Tensor member_probs = target.predict(train_sample.x);
  const Tensor outside_probs = target.predict(test_sample.x);
  const int64_t k = member_probs.dim(1);

  // Stratified 2/3 - 1/3 attacker split within each membership class.
  LabeledDataset attacker_train, attacker_eval;
  attacker_train.classes = attacker_eval.classes = 2;
  const int64_t fit_count = (2 * n) / 3;
  attacker_train.x = Tensor::zeros({2 * fit_count, k});
  attacker_eval.x = Tensor::zeros({2 * (n - fit_count), k});
  Rng member_rng(seed ^ 0x6d656d6265725f5full);
  Rng outside_rng(seed ^ 0x6f757473696465ull);
  int64_t fit_at = 0, eval_at = 0;
  for (int group = 0; group < 2; ++group) {
    const Tensor& probs = group == 1 ? member_probs : outside_probs;
    std::vector<int> order = (group == 1 ? member_rng : outside_rng).permutation(
        static_cast<int>(n));
    for (int64_t i = 0; i < n; ++i) {
      const float* src = probs.data() + static_cast<int64_t>(order[i]) * k;
      if (i < fit_count) {
        std::memcpy(attacker_train.x.data() + fit_at * k, src,
                    static_cast<size_t>(k) * sizeof(float));
        attacker_train.labels.push_back(group);
        ++fit_at;
      } else {
        std::memcpy(attacker_eval.x.data() + eval_at * k, src,
                    static_cast<size_t>(k) * sizeof(float));
        attacker_eval.labels.push_back(group);
        ++eval_at;
      }
    }
  }

  const ArchitectureSpec mi_arch = membership_net(static_cast<int>(k), cfg.hidden);
  Network h_mi =
      fit_model(mi_arch, attacker_train, cfg.holdout_fraction, cfg.attack_train, seed ^ kMiTag);
  return build_report("membership_inference", h_mi.predict(attacker_eval.x),
                      attacker_eval.labels, 2, seed);
}

std::string NeighborReport::to_json() const {
  nlohmann::json j;
  j["nearest_index"] = nearest_index;
  j["nearest_distance"] = nearest_distance;
  j["min_synthetic"] = min_synthetic;
  j["min_real"] = min_real;
  j["min_distance"] = min_distance;
  j["recreations"] = recreations;
  return j.dump(2);
}

NeighborReport nearest_neighbor_leakage(const StimulusDataset& synthetic,
                                        const LabeledDataset& real_train, int jobs) {
  if (jobs < 1) fail("nearest neighbor search needs jobs >= 1");
  if (synthetic.size() == 0) fail("nearest neighbor search needs synthetic points");
  real_train.validate();
  if (real_train.size() == 0) fail("nearest neighbor search needs real training points");
  const Shape real_example(real_train.x.shape().begin() + 1, real_train.x.shape().end());
  if (!same_shape(real_example, synthetic.input_shape)) {
    fail("synthetic shape ", shape_string(synthetic.input_shape), " does not match real shape ",
         shape_string(real_example));
  }

  const Tensor sx = synthetic.stacked_data();
  const int64_t m = sx.dim(0);
  const int64_t n = real_train.size();
  const int64_t d = sx.numel() / m;
  const float* syn = sx.data();
  const float* real = real_train.x.data();

  NeighborReport rep;
  rep.nearest_index.assign(m, -1);
  rep.nearest_distance.assign(m, 0.0);
  std::vector<double> best(m, std::numeric_limits<double>::infinity());

  // Cache blocking: a strip of synthetic rows is compared against one block
  // of real rows at a time. Each pair accumulates sequentially in double, so
  // the result is independent of blocking and thread count.
  constexpr int64_t kSynBlock = 16;
  constexpr int64_t kRealBlock = 128;
  const int64_t blocks = (m + kSynBlock - 1) / kSynBlock;
  std::atomic<int64_t> next{0};

  auto sweep = [&]() {
    for (;;) {
      const int64_t b = next.fetch_add(1);
      if (b >= blocks) return;
      const int64_t i0 = b * kSynBlock;
      const int64_t i1 = std::min(m, i0 + kSynBlock);
      for (int64_t j0 = 0; j0 < n; j0 += kRealBlock) {
        const int64_t j1 = std::min(n, j0 + kRealBlock);
        for (int64_t i = i0; i < i1; ++i) {
          const float* a = syn + i * d;
          for (int64_t j = j0; j < j1; ++j) {
            const float* r = real + j * d;
            double acc = 0.0;
            for (int64_t t = 0; t < d; ++t) {
              const double diff = static_cast<double>(a[t]) - static_cast<double>(r[t]);
              acc += diff * diff;
            }
            if (acc < best[i]) {
              best[i] = acc;
              rep.nearest_index[i] = static_cast<int>(j);
            }
          }
        }
      }
    }
  };

  const int workers = static_cast<int>(std::min<int64_t>(jobs, blocks));
  if (workers <= 1) {
    sweep();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(sweep);
    for (std::thread& t : pool) t.join();
  }

  rep.min_distance = std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < m; ++i) {
    rep.nearest_distance[i] = std::sqrt(best[i]);
    if (rep.nearest_distance[i] < 1e-6) rep.recreations.push_back(static_cast<int>(i));
    if (rep.nearest_distance[i] < rep.min_distance) {
      rep.min_distance = rep.nearest_distance[i];
      rep.min_synthetic = static_cast<int>(i);
      rep.min_real = rep.nearest_index[i];
    }
  }
  return rep;
}

std::vector<ProbeResult> class_recognition_probe(const StimulusDataset& stimuli,
                                                 const LabeledDataset& real_train,
                                                 const LabeledDataset& real_test,
                                                 const std::vector<ProbeLearner>& learners,
                                                 const ProbeConfig& cfg, uint64_t seed) {
  if (stimuli.size() == 0) fail("class recognition probe needs a non-empty stimulus batch");
  real_train.validate();
  real_test.validate();
  if (real_train.size() == 0 || real_test.size() == 0) {
    fail("class recognition probe needs real train and test data");
  }
  if (real_train.classes != stimuli.classes || real_test.classes != stimuli.classes) {
    fail("probe class counts disagree: train ", real_train.classes, ", test ",
         real_test.classes, ", stimuli ", stimuli.classes);
  }
  const Shape real_example(real_train.x.shape().begin() + 1, real_train.x.shape().end());
  if (!same_shape(real_example, stimuli.input_shape)) {
    fail("stimulus shape ", shape_string(stimuli.input_shape),
         " does not match real example shape ", shape_string(real_example));
  }

  const int64_t d = shape_numel(real_example);
  const int classes = real_train.classes;
  const LabeledDataset stim_set = stimuli.as_labeled();

  // Flattened views for the shallow learners and the dense net; the conv
  // probe keeps the natural example shape.
  LabeledDataset flat_train;
  flat_train.x = real_train.x.reshaped({real_train.size(), d});
  flat_train.labels = real_train.labels;
  flat_train.classes = classes;
  Tensor flat_test = real_test.x.reshaped({real_test.size(), d});
  Tensor flat_stim = stim_set.x.reshaped({stim_set.size(), d});

  std::vector<ProbeResult> results;
  for (ProbeLearner learner : learners) {
    ProbeResult res;
    res.learner = probe_learner_name(learner);
    switch (learner) {
      case ProbeLearner::linear_svm: {
        LinearSvm svm = train_linear_svm(flat_train, cfg.svm_epochs, cfg.svm_lr,
                                         cfg.svm_regularization, seed ^ kSvmTag);
        res.baseline_accuracy = prediction_accuracy(svm.predict(flat_test), real_test.labels);
        res.stimulus_accuracy = prediction_accuracy(svm.predict(flat_stim), stim_set.labels);
        break;
      }
      case ProbeLearner::random_forest: {
        RandomForest forest = train_random_forest(flat_train, cfg.forest_trees,
                                                  cfg.forest_depth, seed ^ kForestTag);
        res.baseline_accuracy = prediction_accuracy(forest.predict(flat_test), real_test.labels);
        res.stimulus_accuracy = prediction_accuracy(forest.predict(flat_stim), stim_set.labels);
        break;
      }
      case ProbeLearner::dense_net: {
        ArchitectureSpec arch = cfg.dense;
        if (arch.layers.empty()) {
          arch.name = "dense_probe";
          arch.input = {d};
          arch.layers = {dense_layer(512, Activation::relu, 0.5),
                         dense_layer(256, Activation::relu),
                         dense_layer(classes, Activation::softmax)};
        }
        LabeledDataset probe_train = flat_train;
        Network net = fit_model(arch, probe_train, cfg.holdout_fraction, cfg.dense_train,
                                seed ^ kDenseTag);
        res.baseline_accuracy =
            prediction_accuracy(argmax_rows(net.predict(flat_test)), real_test.labels);
        res.stimulus_accuracy =
            prediction_accuracy(argmax_rows(net.predict(flat_stim)), stim_set.labels);
        break;
      }
      case ProbeLearner::conv_net: {
        if (cfg.conv.layers.empty()) {
          fail("the conv_net probe needs the teacher architecture in the config");
        }
        LabeledDataset probe_train = real_train;
        probe_train.soft = Tensor();  // probes learn from hard labels
        Network net = fit_model(cfg.conv, probe_train, cfg.holdout_fraction, cfg.conv_train,
                                seed ^ kConvTag);
        res.baseline_accuracy =
            prediction_accuracy(argmax_rows(net.predict(real_test.x)), real_test.labels);
        res.stimulus_accuracy =
            prediction_accuracy(argmax_rows(net.predict(stim_set.x)), stim_set.labels);
        break;
      }
    }
    results.push_back(res);
  }
  return results;
}

}  // namespace amkt
