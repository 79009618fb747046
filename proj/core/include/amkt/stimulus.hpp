#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amkt/data.hpp"
#include "amkt/nn.hpp"
#include "amkt/rng.hpp"

namespace amkt {

enum class NoiseKind { normal, uniform };
enum class StimulusMode { generator, editor };
enum class LabelMode { soft, hard };

std::string noise_kind_name(NoiseKind k);
NoiseKind noise_kind_from(const std::string& s);
std::string stimulus_mode_name(StimulusMode m);
StimulusMode stimulus_mode_from(const std::string& s);
std::string label_mode_name(LabelMode m);
LabelMode label_mode_from(const std::string& s);

// Settings for the anonymizing (inhibitory) variant. The acceptance bound is
// TH_U = threshold_multiplier * H(marginal); alternation interleaves
// excitatory_steps ascent steps on the task head with inhibitory_steps
// descent steps on the identity cross-entropy.
struct InhibitorySettings {
  double threshold_multiplier = 1.05;
  int excitatory_steps = 1;
  int inhibitory_steps = 1;
};

struct StimulusConfig {
  std::vector<double> thresholds{0.96, 0.98, 0.995};  // drawn uniformly per stimulus
  int reinit_period = 10;  // accepted stimuli per generator life
  int max_steps = 2000;    // optimization steps per attempt
  int max_retries = 3;     // extra attempts after a failed one
  NoiseKind noise = NoiseKind::normal;
  ArchitectureSpec generator;  // the editor architecture in editor mode
  StimulusMode mode = StimulusMode::generator;
  double edit_scale = 0.1;  // s in rescale(x0 + s * edit); editor mode only
  double am_lr = 1e-3;
  LabelMode labels = LabelMode::soft;
  double init_scale = 3.0;  // generator weight init multiplier
  InhibitorySettings inhibitory;
  int jobs = 1;

  void validate() const;
  // Canonical text rendering; its hash is the config digest in provenance
  // records, so field order here is part of the on-disk format.
  std::string signature() const;
};

struct Stimulus {
  Tensor data;              // per-example shape, inside the input bounds
  std::vector<float> soft;  // teacher distribution at acceptance
  int target = 0;
  double threshold = 0.0;
  int steps = 0;       // optimization steps taken by the accepting attempt
  int generation = 0;  // generator lineage (reinit block) index
  int reinits = 0;     // in-attempt generator reinitializations
  bool edited = false; // editor-mode provenance
};

struct StimulusDataset {
  std::vector<Stimulus> items;
  Shape input_shape;
  int classes = 0;
  std::string teacher_digest;
  std::string config_digest;
  uint64_t seed = 0;

  int64_t size() const { return static_cast<int64_t>(items.size()); }
  // Stacks the stimuli into a training set; targets become hard labels and
  // the stored teacher distributions ride along as soft labels.
  LabeledDataset as_labeled() const;
  Tensor stacked_data() const;

  void save(const std::string& dir) const;
  static StimulusDataset load(const std::string& dir);
};

// Digest over the parameter tensors in the weights-file byte convention.
std::string weights_digest(const Network& net);

// Natural-log entropy of a distribution; validates it sums to ~1.
double marginal_entropy(const std::vector<double>& marginal);
// -sum_u marginal[u] * log(max(probs[u], 1e-12)); the inhibitory loss L_U of
// one stimulus given the identity head's output row.
double cross_entropy_to_marginal(const float* probs, const std::vector<double>& marginal);

enum class AmOutcome { accepted, max_steps, non_finite };

// One activation-maximization run: ascend the target logit over the
// generator's parameters, drawing fresh noise every step, until the target
// class is the argmax and its probability exceeds the threshold. The emitted
// datapoint is the exact tensor that passed the test. The generator is
// updated in place; the teacher is read-only.
AmOutcome am_optimize(const Network& teacher, Network& generator, int target, double threshold,
                      const StimulusConfig& cfg, Rng& rng, Stimulus& out);

// Editor-mode run: a fixed uniform sample x0 is edited by the network and
// linearly rescaled back into the input bounds; the stopping rule is the
// same. Retried attempts draw a fresh x0 because rng carries over.
AmOutcome editor_generate(const Network& teacher, Network& editor, int target, double threshold,
                          const StimulusConfig& cfg, Rng& rng, Stimulus& out);

// Batch generation with the randomization policy: per stimulus the target
// class and threshold are drawn from an rng seeded with seed xor index, the
// generator lives for reinit_period acceptances, and failures reinitialize
// it. Deterministic for a fixed seed, independent of cfg.jobs.
StimulusDataset generate_stimulus_dataset(const Network& teacher, const StimulusConfig& cfg,
                                          int64_t count, uint64_t seed);

// Anonymizing variant: alternates excitatory steps on teacher_y with
// inhibitory steps that pull the identity head's output toward the marginal;
// emits only datapoints that satisfy both the threshold rule and
// L_U < TH_U = multiplier * H(marginal).
StimulusDataset inhibitory_generate(const Network& teacher_y, const Network& teacher_u,
                                    const std::vector<double>& marginal,
                                    const StimulusConfig& cfg, int64_t count, uint64_t seed);

// Teacher labels for a batch: soft returns the output distributions, hard a
// one-hot of each argmax.
Tensor label_stimuli(const Network& teacher, const Tensor& data, LabelMode mode);

// Re-evaluation audits; re-run the frozen nets on the stored stimuli and
// count stopping-rule violations.
struct StimulusAudit {
  int64_t checked = 0;
  int64_t violations = 0;
};
StimulusAudit audit_stimuli(const StimulusDataset& ds, const Network& teacher);
StimulusAudit audit_inhibitory(const StimulusDataset& ds, const Network& identity,
                               const std::vector<double>& marginal, double multiplier);

}  // namespace amkt
