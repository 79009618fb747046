#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amkt/attacks.hpp"
#include "amkt/data.hpp"
#include "amkt/stimulus.hpp"
#include "amkt/train.hpp"

namespace amkt {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum class DatasetKind { mnist, synthetic, recording_csv };
std::string dataset_kind_name(DatasetKind k);
DatasetKind dataset_kind_from(const std::string& s);

// Where the experiment's examples come from. MNIST reads the four IDX files
// from path; synthetic builds recordings in memory; recording_csv reads one
// CSV per file listed in paths. Recording-backed kinds window the signals
// and split windows into train/val/test by fraction.
struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic;
  std::string path;                 // mnist directory
  std::vector<std::string> paths;   // recording csv files
  SynthConfig synth;
  int64_t mnist_val = 5000;
  double test_fraction = 0.15;      // recording kinds only
  double val_fraction = 0.0;
  bool series_layout = true;        // (N,1,C*60) windows instead of flat rows
  int channel = -1;                 // restrict windows to one channel
  bool normalize = true;
  uint64_t split_seed = 77;
};

struct LoadedData {
  LabeledDataset train, val, test;
  // Identity labels aligned with the same window split; recording kinds only.
  LabeledDataset train_identity, val_identity, test_identity;
  std::vector<Recording> recordings;  // recording kinds keep the raw signals
};

LoadedData load_dataset(const DatasetConfig& cfg);

// One student variant: a display name, the architecture, and its training
// settings. The train.seed field is ignored; each repetition derives its own
// stream from the experiment seed.
struct StudentSpec {
  std::string name;
  ArchitectureSpec arch;
  TrainConfig train;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ArchitectureSpec teacher;
  TrainConfig teacher_train;
  StimulusConfig stimulus;
  int64_t stimulus_count = 1000;
  bool inhibitory = false;          // route generation through the identity head
  ArchitectureSpec identity;        // inhibitory runs only; empty = association_net
  TrainConfig identity_train;
  std::vector<StudentSpec> students;
  int repetitions = 1;
  bool include_baseline = false;    // also train each variant on the real data
  std::vector<std::string> attacks; // association | membership | neighbor | probe
  AssociationConfig association;
  MembershipConfig membership;
  int64_t membership_sample = 0;    // cap per membership class, 0 = all
  ProbeConfig probe;
  std::vector<ProbeLearner> probe_learners{ProbeLearner::linear_svm, ProbeLearner::random_forest,
                                           ProbeLearner::dense_net};
  std::string out_dir = "run";
  uint64_t seed = 1;
  int jobs = 1;

  void validate() const;  // architectures non-empty where required, paths exist
};

// Config files are JSON. Unknown keys are rejected so typos fail loudly;
// every field has the struct default. parse accepts the text form, load reads
// a file. Architectures are referenced by catalog name or by the builder
// forms "association_net:<classes>[:<width>]", "membership_net:<in>[:<hidden>]"
// and "waveform_generator:<len>".
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
ArchitectureSpec resolve_architecture(const std::string& token);

// Canonical JSON echo of a config: fixed key order, architectures rendered
// descriptively (name, input, layer count). Identical configs produce
// identical text; it is the manifest's config record, not a parse input.
std::string experiment_config_json(const ExperimentConfig& cfg);

struct StepTiming {
  std::string step;
  double seconds = 0.0;
};

struct SummaryRow {
  std::string variant;
  std::string metric;
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};

struct RunManifest {
  std::string version;
  uint64_t seed = 0;
  std::string config_echo;                      // canonical JSON text
  std::map<std::string, std::string> artifacts; // out-relative path -> sha256
  std::vector<StepTiming> timings;
  std::vector<SummaryRow> summary;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

// Four steps: train the teacher, distill the stimuli, train every student
// variant repetitions times on them, evaluate each on the real test set.
// Artifacts land under cfg.out_dir with the manifest at its root; identical
// config and seed reproduce identical artifact digests. repetitions = 0
// stops after stimulus generation.
RunManifest run_pipeline(const ExperimentConfig& cfg);

struct SweepPoint {
  int64_t batches = 0;
  double teacher_metric = 0.0;
  double student_metric = 0.0;
};

// Snapshots the teacher at each checkpoint, distills stimuli_per_point
// stimuli from every snapshot and trains the first student variant on them.
// Emits <out>/sweep.csv with columns batches,teacher_metric,student_metric.
std::vector<SweepPoint> run_teacher_age_sweep(const ExperimentConfig& cfg,
                                              const std::vector<int>& checkpoints,
                                              int64_t stimuli_per_point = 1000);

// report.csv columns: variant,metric,mean,stderr,n. The JSON twin carries
// the same rows under {"schema":"amkt-report/1","rows":[...]}.
void emit_report(const std::vector<SummaryRow>& rows, const std::string& dir,
                 const std::string& stem = "report");
std::string report_csv(const std::vector<SummaryRow>& rows);
std::string report_json(const std::vector<SummaryRow>& rows);

}  // namespace amkt
