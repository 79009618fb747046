#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amkt/data.hpp"
#include "amkt/nn.hpp"
#include "amkt/stimulus.hpp"
#include "amkt/train.hpp"

namespace amkt {

// Per-recording contiguous thirds: the adversary's breach set, the published
// open set and the task test set. Each part is floor(minutes/3) minutes long
// with the remainder going to the test part. Recordings named in the discard
// list keep their breach third but drop out of the open and test sets.
struct BreachSplitConfig {
  std::vector<std::string> discard;  // explicit names; empty draws by seed
  int random_discards = 4;
  bool normalize = true;  // per-window min-max normalization
};

struct BreachSplit {
  std::vector<std::string> names;     // adversary class = index into names
  std::vector<int> kept;              // indices still present in open/test
  std::vector<std::string> discarded;
  WindowSet breach;  // first thirds, every recording
  WindowSet open;    // middle thirds, kept recordings only
  WindowSet test;    // trailing thirds plus remainder, kept recordings only
};

BreachSplit make_breach_split(const std::vector<Recording>& recs, const BreachSplitConfig& cfg,
                              uint64_t seed);

// What the open dataset contains: the raw middle thirds, excitatory stimuli
// distilled from an apnea teacher trained on them, or inhibitory stimuli
// additionally steered away from the identity approximator's cues.
enum class OpenCase { real, stimuli, inhibitory_stimuli };
std::string open_case_name(OpenCase c);
OpenCase open_case_from(const std::string& s);

struct AttackReport {
  std::string kind;
  double kappa = 0.0;
  std::vector<int64_t> predicted_histogram;  // per class, attacker argmax counts
  std::vector<int64_t> reference_histogram;  // per class, reference label counts
  // Mean maximum output probability over the examples predicted as each
  // class; -1 marks classes that were never predicted.
  std::vector<double> mean_max_probability;
  uint64_t seed = 0;

  void validate() const;  // histogram totals agree, kappa within [-1,1]
  std::string to_json() const;
  std::string histogram_csv() const;
};

// Everything the association experiment trains is derived from the attack
// seed; the seed fields inside the nested TrainConfigs are ignored. Empty
// architecture specs fall back to association_net() matched to the data.
// Each model trains for its configured iteration count; holdout_fraction > 0
// switches to best-validation checkpointing over a carved-out split, but the
// default keeps every example in training because recording-scale holdouts
// saturate immediately and would freeze barely-trained checkpoints.
struct AssociationConfig {
  BreachSplitConfig split;
  ArchitectureSpec adversary;  // head = recording count
  ArchitectureSpec identity;   // head = kept recording count
  ArchitectureSpec teacher;    // apnea head trained on raw open data
  ArchitectureSpec user;       // apnea head trained on the open dataset
  TrainConfig adversary_train;
  TrainConfig identity_train;
  TrainConfig teacher_train;
  TrainConfig user_train;
  StimulusConfig stimulus;  // generator arch required for stimuli cases
  int64_t stimulus_count = 800;
  double holdout_fraction = 0.0;
};

struct AssociationOutcome {
  AttackReport adversary;  // identification over recording classes
  AttackReport user;       // apnea utility on the held-out test thirds
};

// Trains an adversary on the breach thirds to tell recordings apart, then
// scores its associations on the open dataset of the requested case. For the
// real case reference labels are the true recording ids; for stimuli cases
// they are the identity approximator's beliefs. The user report carries the
// apnea-task kappa of a model trained on the same open dataset.
AssociationOutcome recording_association_attack(const std::vector<Recording>& recordings,
                                                OpenCase open_case, const AssociationConfig& cfg,
                                                uint64_t seed);

struct MembershipConfig {
  TrainConfig attack_train;
  int hidden = 40;
  double holdout_fraction = 0.15;

  MembershipConfig() {
    attack_train.iterations = 600;
    attack_train.batch_size = 32;
  }
};

// Simplified membership inference: the attacker knows which sample is the
// target's training set and which is the test set, featurizes both through
// the target's output distribution, and fits a small dense net on 2/3 of
// each (the remaining thirds are the evaluation set, stratified).
AttackReport membership_inference_attack(const Network& target, const LabeledDataset& train_sample,
                                         const LabeledDataset& test_sample,
                                         const MembershipConfig& cfg, uint64_t seed);

struct NeighborReport {
  std::vector<int> nearest_index;  // per synthetic point, into real_train
  std::vector<double> nearest_distance;
  int min_synthetic = -1;
  int min_real = -1;
  double min_distance = 0.0;
  std::vector<int> recreations;  // synthetic indices with distance < 1e-6

  std::string to_json() const;
};

// Exact all-pairs nearest neighbor in l2 between synthetic points and the
// real training set. Per-pair distances accumulate sequentially in double;
// blocking and the jobs parameter only change pair visiting order, never
// the arithmetic, so results are bitwise reproducible at any parallelism.
NeighborReport nearest_neighbor_leakage(const StimulusDataset& synthetic,
                                        const LabeledDataset& real_train, int jobs = 1);

enum class ProbeLearner { linear_svm, random_forest, dense_net, conv_net };
std::string probe_learner_name(ProbeLearner l);
ProbeLearner probe_learner_from(const std::string& s);

struct ProbeConfig {
  int svm_epochs = 30;
  double svm_lr = 0.01;
  double svm_regularization = 1e-4;
  int forest_trees = 50;
  int forest_depth = 16;
  ArchitectureSpec dense;  // empty: 512-256 relu stack over flattened rows
  ArchitectureSpec conv;   // the teacher's own architecture; required for conv_net
  TrainConfig dense_train;
  TrainConfig conv_train;
  double holdout_fraction = 0.1;
};

struct ProbeResult {
  std::string learner;
  double baseline_accuracy = 0.0;  // on the real test set
  double stimulus_accuracy = 0.0;  // stimulus hard labels as reference
};

// Trains each requested learner on the real training data (hard labels) and
// reports accuracy on the real test set next to accuracy on the stimulus
// batch, scored against the stimuli's own hard labels.
std::vector<ProbeResult> class_recognition_probe(const StimulusDataset& stimuli,
                                                 const LabeledDataset& real_train,
                                                 const LabeledDataset& real_test,
                                                 const std::vector<ProbeLearner>& learners,
                                                 const ProbeConfig& cfg, uint64_t seed);

}  // namespace amkt
