#pragma once

#include <string>
#include <utility>
#include <vector>

#include "amkt/rng.hpp"
#include "amkt/tensor.hpp"

namespace amkt {

// Examples plus labels. Soft targets, when present, are (N,classes) rows
// that take precedence over hard labels during training; hard labels are
// always present (for soft-labeled data they are the row argmax).
struct LabeledDataset {
  Tensor x;
  std::vector<int> labels;
  Tensor soft;  // empty when the dataset is hard-labeled
  int classes = 0;

  int64_t size() const { return x.empty() ? 0 : x.dim(0); }
  bool has_soft() const { return !soft.empty(); }

  LabeledDataset subset(const std::vector<int>& idx) const;
  LabeledDataset slice(int64_t start, int64_t count) const;
  void append(const LabeledDataset& other);
  void validate() const;
};

// Deterministic split: shuffles indices with rng and puts round(frac*N)
// examples into the first part.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& d, double frac,
                                                        Rng& rng);

struct MnistData {
  LabeledDataset train, val, test;
};

// Loads the four canonical IDX files from dir. The last val_count training
// examples form the validation set; pixels are rescaled to [0,1].
MnistData load_mnist(const std::string& dir, int64_t val_count = 5000);

// A multichannel recording sampled at 1 Hz with per-minute binary labels.
struct Recording {
  std::string name;
  Tensor signal;  // (C, T)
  std::vector<int> minute_labels;

  int64_t channels() const { return signal.dim(0); }
  int64_t seconds() const { return signal.dim(1); }
  int64_t minutes() const { return static_cast<int64_t>(minute_labels.size()); }
};

// CSV round trip, one row per second: t,ch0..chN,label_minute.
Recording read_recording_csv(const std::string& path, const std::string& name);
void write_recording_csv(const std::string& path, const Recording& rec);

// Per-minute windows cut from recordings. Each window is (C,60); channels
// are min-max normalized within the window when normalize is set.
struct WindowSet {
  Tensor x;  // (N, C, 60)
  std::vector<int> apnea;
  std::vector<int> recording;  // index into names
  std::vector<int> minute;
  std::vector<std::string> names;

  int64_t size() const { return x.empty() ? 0 : x.dim(0); }
  WindowSet subset(const std::vector<int>& idx) const;

  // (N, C*60) channel-concatenated rows, or a single channel's (N, 60).
  Tensor as_dense(int channel = -1) const;
  // (N, 1, C*60) single-series layout for convolutional nets.
  Tensor as_series() const;

  LabeledDataset labeled_apnea(bool series_layout, int channel = -1) const;
  LabeledDataset labeled_identity(bool series_layout, int channel = -1) const;
};

WindowSet window_recordings(const std::vector<Recording>& recs, bool normalize = true);

// Synthetic sleep-like recordings. Each recording carries stable identity
// cues (per-channel carrier frequencies, harmonic mix) and label-dependent
// waveform changes in apneic minutes. Labels follow a two-state hazard
// chain: a non-apneic minute turns apneic with the start probability, an
// apneic one stays apneic with the stay probability, so a start probability
// of zero yields an all non-apneic recording. Apneic minutes carry one
// suppression event of at least ten seconds; non-apneic minutes may carry a
// shorter near-event, never reaching ten.
struct SynthConfig {
  int recordings = 8;
  int minutes = 240;
  int channels = 4;
  double apnea_start_prob = 0.20;
  double apnea_stay_prob = 0.65;
  uint64_t seed = 1;
};

std::vector<Recording> synth_recordings(const SynthConfig& cfg);

}  // namespace amkt
