#include "amkt/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "amkt/io.hpp"

namespace amkt {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  if (x.empty()) return {};
  const int64_t ex = x.numel() / x.dim(0);
  Shape s = x.shape();
  s[0] = static_cast<int64_t>(idx.size());
  Tensor out(s);
  for (size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < x.dim(0), "subset index ", idx[i], " out of range");
    std::copy(x.data() + idx[i] * ex, x.data() + (idx[i] + 1) * ex,
              out.data() + static_cast<int64_t>(i) * ex);
  }
  return out;
}

}  // namespace

void LabeledDataset::validate() const {
  check(classes >= 2, "dataset needs at least 2 classes, has ", classes);
  check(static_cast<int64_t>(labels.size()) == size(), "dataset has ", size(), " examples but ",
        labels.size(), " labels");
  for (int l : labels) check(l >= 0 && l < classes, "label ", l, " outside [0,", classes, ")");
  if (has_soft())
    check(soft.rank() == 2 && soft.dim(0) == size() && soft.dim(1) == classes,
          "soft targets must be (N,classes), got ", shape_string(soft.shape()));
}

LabeledDataset LabeledDataset::subset(const std::vector<int>& idx) const {
  LabeledDataset out;
  out.classes = classes;
  out.x = gather_rows(x, idx);
  out.labels.reserve(idx.size());
  for (int i : idx) out.labels.push_back(labels[static_cast<size_t>(i)]);
  if (has_soft()) out.soft = gather_rows(soft, idx);
  return out;
}

LabeledDataset LabeledDataset::slice(int64_t start, int64_t count) const {
  check(start >= 0 && count >= 0 && start + count <= size(), "slice [", start, ",", start + count,
        ") outside dataset of ", size());
  std::vector<int> idx(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = static_cast<int>(start + i);
  return subset(idx);
}

void LabeledDataset::append(const LabeledDataset& other) {
  if (size() == 0) {
    *this = other;
    return;
  }
  check(classes == other.classes, "appending datasets with different class counts");
  check(has_soft() == other.has_soft(), "appending soft-labeled to hard-labeled data");
  Shape s = x.shape();
  check(other.x.shape().size() == s.size(), "appending datasets with different example shapes");
  for (size_t i = 1; i < s.size(); ++i)
    check(s[i] == other.x.shape()[i], "appending datasets with different example shapes");
  s[0] += other.x.dim(0);
  Tensor nx(s);
  std::copy(x.data(), x.data() + x.numel(), nx.data());
  std::copy(other.x.data(), other.x.data() + other.x.numel(), nx.data() + x.numel());
  x = std::move(nx);
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  if (has_soft()) {
    Shape ss = soft.shape();
    ss[0] += other.soft.dim(0);
    Tensor nsoft(ss);
    std::copy(soft.data(), soft.data() + soft.numel(), nsoft.data());
    std::copy(other.soft.data(), other.soft.data() + other.soft.numel(),
              nsoft.data() + soft.numel());
    soft = std::move(nsoft);
  }
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& d, double frac,
                                                        Rng& rng) {
  check(frac >= 0.0 && frac <= 1.0, "split fraction must be in [0,1], got ", frac);
  std::vector<int> perm = rng.permutation(static_cast<int>(d.size()));
  const size_t first = static_cast<size_t>(std::llround(frac * static_cast<double>(d.size())));
  std::vector<int> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(first));
  std::vector<int> b(perm.begin() + static_cast<std::ptrdiff_t>(first), perm.end());
  return {d.subset(a), d.subset(b)};
}

MnistData load_mnist(const std::string& dir, int64_t val_count) {
  MnistData m;
  LabeledDataset full;
  full.x = read_idx_images(dir + "/train-images-idx3-ubyte");
  full.labels = read_idx_labels(dir + "/train-labels-idx1-ubyte");
  full.classes = 10;
  full.validate();
  check(val_count >= 0 && val_count < full.size(), "validation count ", val_count,
        " out of range for ", full.size(), " training examples");
  m.train = full.slice(0, full.size() - val_count);
  m.val = full.slice(full.size() - val_count, val_count);
  m.test.x = read_idx_images(dir + "/t10k-images-idx3-ubyte");
  m.test.labels = read_idx_labels(dir + "/t10k-labels-idx1-ubyte");
  m.test.classes = 10;
  m.test.validate();
  return m;
}

Recording read_recording_csv(const std::string& path, const std::string& name) {
  std::ifstream is(path);
  check(is.good(), "cannot open recording '", path, "'");
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "recording '", path, "' is empty");
  const auto header = split_csv_line(line);
  check(header.size() >= 3 && header.front() == "t" && header.back() == "label_minute",
        "recording '", path, "' header must be t,ch0..chN,label_minute");
  const int64_t channels = static_cast<int64_t>(header.size()) - 2;
  std::vector<std::vector<float>> cols(static_cast<size_t>(channels));
  std::vector<int> row_labels;
  int64_t t_expect = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto parts = split_csv_line(line);
    check(static_cast<int64_t>(parts.size()) == channels + 2, "recording '", path, "' row ",
          t_expect, " has ", parts.size(), " fields, expected ", channels + 2);
    check(std::stoll(parts[0]) == t_expect, "recording '", path, "' has a gap at t=", t_expect);
    for (int64_t c = 0; c < channels; ++c)
      cols[static_cast<size_t>(c)].push_back(std::stof(parts[static_cast<size_t>(c) + 1]));
    row_labels.push_back(std::stoi(parts.back()));
    ++t_expect;
  }
  check(t_expect > 0, "recording '", path, "' has no samples");
  Recording rec;
  rec.name = name;
  rec.signal = Tensor({channels, t_expect});
  for (int64_t c = 0; c < channels; ++c)
    std::copy(cols[static_cast<size_t>(c)].begin(), cols[static_cast<size_t>(c)].end(),
              rec.signal.data() + c * t_expect);
  const int64_t minutes = t_expect / 60;
  rec.minute_labels.resize(static_cast<size_t>(minutes));
  for (int64_t m = 0; m < minutes; ++m) {
    const int l = row_labels[static_cast<size_t>(m * 60)];
    for (int64_t s = 0; s < 60; ++s)
      check(row_labels[static_cast<size_t>(m * 60 + s)] == l, "recording '", path,
            "' has inconsistent labels inside minute ", m);
    rec.minute_labels[static_cast<size_t>(m)] = l;
  }
  return rec;
}

void write_recording_csv(const std::string& path, const Recording& rec) {
  ensure_parent_dir(path);
  std::ofstream os(path);
  check(os.good(), "cannot open '", path, "' for writing");
  os << "t";
  for (int64_t c = 0; c < rec.channels(); ++c) os << ",ch" << c;
  os << ",label_minute\n";
  const int64_t t_total = rec.seconds();
  for (int64_t t = 0; t < t_total; ++t) {
    os << t;
    for (int64_t c = 0; c < rec.channels(); ++c) os << "," << rec.signal.at(c, t);
    const int64_t m = t / 60;
    const int label = m < rec.minutes() ? rec.minute_labels[static_cast<size_t>(m)] : 0;
    os << "," << label << "\n";
  }
  check(os.good(), "write to '", path, "' failed");
}

WindowSet window_recordings(const std::vector<Recording>& recs, bool normalize) {
  check(!recs.empty(), "no recordings to window");
  const int64_t channels = recs.front().channels();
  int64_t total = 0;
  for (const Recording& r : recs) {
    check(r.channels() == channels, "recording '", r.name, "' has ", r.channels(),
          " channels, expected ", channels);
    total += std::min<int64_t>(r.seconds() / 60, r.minutes());
  }
  WindowSet ws;
  ws.x = Tensor({total, channels, 60});
  ws.apnea.reserve(static_cast<size_t>(total));
  ws.recording.reserve(static_cast<size_t>(total));
  ws.minute.reserve(static_cast<size_t>(total));
  int64_t row = 0;
  for (size_t ri = 0; ri < recs.size(); ++ri) {
    const Recording& r = recs[ri];
    ws.names.push_back(r.name);
    const int64_t minutes = std::min<int64_t>(r.seconds() / 60, r.minutes());
    for (int64_t m = 0; m < minutes; ++m, ++row) {
      for (int64_t c = 0; c < channels; ++c) {
        const float* src = r.signal.data() + c * r.seconds() + m * 60;
        float* dst = ws.x.data() + (row * channels + c) * 60;
        if (normalize) {
          float lo = src[0], hi = src[0];
          for (int64_t s = 1; s < 60; ++s) {
            lo = std::min(lo, src[s]);
            hi = std::max(hi, src[s]);
          }
          const float range = hi - lo;
          if (range < 1e-12f) {
            for (int64_t s = 0; s < 60; ++s) dst[s] = 0.5f;
          } else {
            for (int64_t s = 0; s < 60; ++s) dst[s] = (src[s] - lo) / range;
          }
        } else {
          std::copy(src, src + 60, dst);
        }
      }
      ws.apnea.push_back(r.minute_labels[static_cast<size_t>(m)]);
      ws.recording.push_back(static_cast<int>(ri));
      ws.minute.push_back(static_cast<int>(m));
    }
  }
  return ws;
}

WindowSet WindowSet::subset(const std::vector<int>& idx) const {
  WindowSet out;
  out.names = names;
  out.x = gather_rows(x, idx);
  for (int i : idx) {
    out.apnea.push_back(apnea[static_cast<size_t>(i)]);
    out.recording.push_back(recording[static_cast<size_t>(i)]);
    out.minute.push_back(minute[static_cast<size_t>(i)]);
  }
  return out;
}

Tensor WindowSet::as_dense(int channel) const {
  const int64_t n = size(), c = x.dim(1);
  if (channel >= 0) {
    check(channel < c, "channel ", channel, " out of range");
    Tensor out({n, 60});
    for (int64_t i = 0; i < n; ++i)
      std::copy(x.data() + (i * c + channel) * 60, x.data() + (i * c + channel + 1) * 60,
                out.data() + i * 60);
    return out;
  }
  return x.reshaped({n, c * 60});
}

Tensor WindowSet::as_series() const {
  const int64_t n = size(), c = x.dim(1);
  return x.reshaped({n, 1, c * 60});
}

LabeledDataset WindowSet::labeled_apnea(bool series_layout, int channel) const {
  LabeledDataset d;
  d.x = series_layout ? as_series() : as_dense(channel);
  d.labels = apnea;
  d.classes = 2;
  d.validate();
  return d;
}

LabeledDataset WindowSet::labeled_identity(bool series_layout, int channel) const {
  LabeledDataset d;
  d.x = series_layout ? as_series() : as_dense(channel);
  d.labels = recording;
  d.classes = static_cast<int>(names.size());
  d.validate();
  return d;
}

namespace {

// One minute's suppression plan: apneic minutes carry a single long event,
// non-apneic minutes often carry a shorter near-event that stays below the
// ten second rule. Movement artifacts are placed clear of the event core so
// they never break a suppression run.
struct MinutePlan {
  bool dip = false;
  double start = 0.0;
  double core = 0.0;
  bool artifact = false;
  double art_start = 0.0;
  double art_len = 0.0;
};

}  // namespace

std::vector<Recording> synth_recordings(const SynthConfig& cfg) {
  check(cfg.recordings >= 1 && cfg.minutes >= 2 && cfg.channels >= 1, "bad synth configuration");
  check(cfg.apnea_start_prob >= 0.0 && cfg.apnea_start_prob <= 1.0 &&
            cfg.apnea_stay_prob >= 0.0 && cfg.apnea_stay_prob <= 1.0,
        "apnea probabilities must lie in [0,1]");
  const double base_freq[4] = {0.25, 0.04, 0.20, 0.10};
  constexpr double kRamp = 0.7;        // gate ramp seconds on each event side
  constexpr double kNearProb = 0.6;
  constexpr double kArtifactProb = 0.25;
  std::vector<Recording> out;
  Rng root(cfg.seed);
  for (int r = 0; r < cfg.recordings; ++r) {
    Rng rng = root.derive(static_cast<uint64_t>(r) + 1);
    Recording rec;
    rec.name = "rec" + std::to_string(r);
    const int64_t seconds = static_cast<int64_t>(cfg.minutes) * 60;
    rec.signal = Tensor({cfg.channels, seconds});

    // Identity cues: per-channel carrier variation plus a recording-specific
    // pilot tone shared by all channels. Rate wander and slow amplitude drift
    // keep windows from the same recording from looking interchangeable.
    std::vector<double> freq(static_cast<size_t>(cfg.channels));
    std::vector<double> phase(static_cast<size_t>(cfg.channels));
    std::vector<double> amp(static_cast<size_t>(cfg.channels));
    std::vector<double> harmonic(static_cast<size_t>(cfg.channels));
    for (int c = 0; c < cfg.channels; ++c) {
      freq[static_cast<size_t>(c)] = base_freq[c % 4] * (0.75 + 0.5 * rng.uniform());
      phase[static_cast<size_t>(c)] = rng.uniform(0.0, kTau);
      amp[static_cast<size_t>(c)] = 0.8 + 0.4 * rng.uniform();
      harmonic[static_cast<size_t>(c)] = 0.2 + 0.5 * rng.uniform();
    }
    const double pilot = 0.30 + 0.02 * static_cast<double>(r % 10);
    const double pilot_phase = rng.uniform(0.0, kTau);
    const double wander_period = 45.0 + 45.0 * rng.uniform();
    const double wander_phase = rng.uniform(0.0, kTau);
    const double drift_period = 50.0 + 70.0 * rng.uniform();
    const double drift_phase = rng.uniform(0.0, kTau);

    // Event morphology is idiosyncratic the way real apneas carry personal
    // breathing patterns: suppression floor, recovery overshoot, pre-event
    // rate surge and in-event detune are all drawn per recording. Duration
    // alone separates the classes (events 12-16 s, near-events 4-7.5 s), so
    // an identity-free route to the apneic class always exists.
    const double floor_depth = 0.05 + 0.07 * rng.uniform();
    const double overshoot = 0.15 + 0.45 * rng.uniform();
    const double recovery_tau = 4.0 + 5.0 * rng.uniform();
    const double detune = 1.15 + 0.35 * rng.uniform();
    const double surge = 0.10 + 0.25 * rng.uniform();

    // Hazard chain over minutes: enter apnea with the start probability,
    // remain with the stay probability. A start probability of zero gives an
    // all non-apneic recording.
    rec.minute_labels.resize(static_cast<size_t>(cfg.minutes));
    rec.minute_labels[0] = rng.uniform() < cfg.apnea_start_prob ? 1 : 0;
    for (int m = 1; m < cfg.minutes; ++m) {
      const bool prev = rec.minute_labels[static_cast<size_t>(m - 1)] != 0;
      const double p = prev ? cfg.apnea_stay_prob : cfg.apnea_start_prob;
      rec.minute_labels[static_cast<size_t>(m)] = rng.uniform() < p ? 1 : 0;
    }
    // Degenerate draws would make a one-class recording; force both states
    // when the configuration admits them.
    bool any0 = false, any1 = false;
    for (int l : rec.minute_labels) (l ? any1 : any0) = true;
    if (!any1 && cfg.apnea_start_prob > 0.0)
      rec.minute_labels[static_cast<size_t>(cfg.minutes / 2)] = 1;
    if (!any0 && cfg.apnea_stay_prob < 1.0) rec.minute_labels[static_cast<size_t>(cfg.minutes / 2)] = 0;

    // Fixed number of draws per minute keeps the stream aligned regardless
    // of which branches fire.
    std::vector<MinutePlan> plan(static_cast<size_t>(cfg.minutes));
    for (int m = 0; m < cfg.minutes; ++m) {
      const double u_pos = rng.uniform();
      const double u_dur = rng.uniform();
      const double u_near = rng.uniform();
      const double u_art = rng.uniform();
      const double u_apos = rng.uniform();
      const double u_alen = rng.uniform();
      MinutePlan& p = plan[static_cast<size_t>(m)];
      const bool apneic = rec.minute_labels[static_cast<size_t>(m)] != 0;
      if (apneic) {
        p.dip = true;
        p.core = 12.0 + 4.0 * u_dur;
      } else if (u_near < kNearProb) {
        p.dip = true;
        p.core = 2.5 + 2.0 * u_dur;
      }
      if (p.dip) {
        const double lo = 2.0 + kRamp;
        const double hi = 58.0 - kRamp - p.core;
        p.start = lo + u_pos * (hi - lo);
      }
      if (u_art < kArtifactProb) {
        const double len = 1.0 + 2.0 * u_alen;
        if (!p.dip) {
          p.artifact = true;
          p.art_start = 1.0 + u_apos * (57.0 - len);
          p.art_len = len;
        } else {
          // Keep bursts clear of the suppression span so they cannot split
          // a run; fall into whichever side gap fits.
          const double lead = p.start - kRamp - 2.0 - len;
          const double tail_lo = p.start + p.core + kRamp + 2.0;
          const double tail = 58.0 - len - tail_lo;
          if (lead >= 1.0 && (tail < 0.0 || u_apos < 0.5)) {
            p.artifact = true;
            p.art_start = 1.0 + u_apos * (lead - 1.0);
            p.art_len = len;
          } else if (tail >= 0.0) {
            p.artifact = true;
            p.art_start = tail_lo + u_apos * tail;
            p.art_len = len;
          }
        }
      }
    }

    for (int c = 0; c < cfg.channels; ++c) {
      const double f = freq[static_cast<size_t>(c)];
      const double ph = phase[static_cast<size_t>(c)];
      const double a = amp[static_cast<size_t>(c)];
      const double h2 = harmonic[static_cast<size_t>(c)];
      float* line = rec.signal.data() + static_cast<int64_t>(c) * seconds;
      // Rate changes integrate into an accumulated phase; scaling the time
      // axis directly would send the instantaneous frequency past Nyquist.
      double carrier_phase = ph;
      for (int64_t t = 0; t < seconds; ++t) {
        const double td = static_cast<double>(t);
        const int m = static_cast<int>(t / 60);
        const double tm = td - 60.0 * static_cast<double>(m);
        const MinutePlan& p = plan[static_cast<size_t>(m)];
        double gate = 1.0;
        double f_eff = f;
        if (p.dip) {
          const double s0 = p.start;
          const double s1 = p.start + p.core;
          if (tm >= s0 - kRamp && tm < s0)
            gate = floor_depth + (1.0 - floor_depth) * (s0 - tm) / kRamp;
          else if (tm >= s0 && tm < s1)
            gate = floor_depth;
          else if (tm >= s1 && tm < s1 + kRamp)
            gate = floor_depth + (1.0 - floor_depth) * (tm - s1) / kRamp;
          else if (tm >= s1 + kRamp)
            // Post-event hyperpnea, scaled by event length so the bounce is
            // graded rather than a binary giveaway.
            gate = 1.0 + overshoot * (p.core / 13.0) *
                             std::exp(-(tm - s1 - kRamp) / recovery_tau);
          if (c % 4 == 2 && tm >= s0 - 8.0 && tm < s0)
            f_eff *= 1.0 + surge * (1.0 - (s0 - tm) / 8.0);
          if (c % 4 == 3 && tm >= s0 - kRamp && tm < s1 + kRamp) f_eff *= detune;
        }
        const double f_t = f_eff * (1.0 + 0.06 * std::sin(kTau * td / wander_period + wander_phase));
        const double a_t = a * (1.0 + 0.15 * std::sin(kTau * td / drift_period + drift_phase));
        double v = a_t * gate * (std::sin(carrier_phase) + h2 * std::sin(2.0 * carrier_phase));
        carrier_phase += kTau * f_t;
        v += 0.08 * std::sin(kTau * pilot * td + pilot_phase);
        if (p.artifact && tm >= p.art_start && tm < p.art_start + p.art_len)
          v += (t % 2 == 0 ? 0.9 : -0.7) * a;
        v += 0.07 * rng.normal();
        line[t] = static_cast<float>(v);
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace amkt
