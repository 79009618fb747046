#include "amkt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <utility>

#include <nlohmann/json.hpp>

#include "amkt/catalog.hpp"
#include "amkt/error.hpp"
#include "amkt/io.hpp"

namespace amkt {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr uint64_t kTeacherTag = 0x706c5f7465616368ULL;
constexpr uint64_t kIdentityTag = 0x706c5f6964656e74ULL;
constexpr uint64_t kStimulusTag = 0x706c5f7374696d75ULL;
constexpr uint64_t kStudentTag = 0x706c5f7374756465ULL;
constexpr uint64_t kBaselineTag = 0x706c5f6261736530ULL;
constexpr uint64_t kAttackTag = 0x706c5f617474636bULL;
constexpr uint64_t kSweepTag = 0x706c5f7377656570ULL;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_keys(const json& j, const std::string& scope,
                std::initializer_list<const char*> allowed) {
  check(j.is_object(), "config: ", scope, " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    check(known, "config: unknown key '", item.key(), "' in ", scope);
  }
}

OptimizerKind optimizer_from(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  fail("unknown optimizer '", s, "'");
}

std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd";
}

TrainConfig parse_train(const json& j, const std::string& scope) {
  TrainConfig t;
  check_keys(j, scope,
             {"batch_size", "iterations", "lr", "optimizer", "val_period", "metric",
              "use_soft_targets", "eval_chunk", "init_scale", "snapshots"});
  t.batch_size = j.value("batch_size", t.batch_size);
  t.iterations = j.value("iterations", t.iterations);
  t.lr = j.value("lr", t.lr);
  if (j.contains("optimizer")) t.optimizer = optimizer_from(j.at("optimizer").get<std::string>());
  t.val_period = j.value("val_period", t.val_period);
  if (j.contains("metric")) t.metric = val_metric_from(j.at("metric").get<std::string>());
  t.use_soft_targets = j.value("use_soft_targets", t.use_soft_targets);
  t.eval_chunk = j.value("eval_chunk", t.eval_chunk);
  t.init_scale = j.value("init_scale", t.init_scale);
  if (j.contains("snapshots")) t.snapshot_iters = j.at("snapshots").get<std::vector<int>>();
  return t;
}

ojson train_json(const TrainConfig& t) {
  ojson j;
  j["batch_size"] = t.batch_size;
  j["iterations"] = t.iterations;
  j["lr"] = t.lr;
  j["optimizer"] = optimizer_name(t.optimizer);
  j["val_period"] = t.val_period;
  j["metric"] = val_metric_name(t.metric);
  j["use_soft_targets"] = t.use_soft_targets;
  j["eval_chunk"] = t.eval_chunk;
  j["init_scale"] = t.init_scale;
  j["snapshots"] = t.snapshot_iters;
  return j;
}

void parse_stimulus_fields(const json& j, const std::string& scope, StimulusConfig& s) {
  if (j.contains("thresholds")) s.thresholds = j.at("thresholds").get<std::vector<double>>();
  if (j.contains("generator"))
    s.generator = resolve_architecture(j.at("generator").get<std::string>());
  if (j.contains("noise")) s.noise = noise_kind_from(j.at("noise").get<std::string>());
  if (j.contains("mode")) s.mode = stimulus_mode_from(j.at("mode").get<std::string>());
  if (j.contains("labels")) s.labels = label_mode_from(j.at("labels").get<std::string>());
  s.max_steps = j.value("max_steps", s.max_steps);
  s.max_retries = j.value("max_retries", s.max_retries);
  s.reinit_period = j.value("reinit_period", s.reinit_period);
  s.am_lr = j.value("am_lr", s.am_lr);
  s.init_scale = j.value("init_scale", s.init_scale);
  s.edit_scale = j.value("edit_scale", s.edit_scale);
  s.inhibitory.threshold_multiplier =
      j.value("inhibitory_multiplier", s.inhibitory.threshold_multiplier);
  s.inhibitory.excitatory_steps = j.value("excitatory_steps", s.inhibitory.excitatory_steps);
  s.inhibitory.inhibitory_steps = j.value("inhibitory_steps", s.inhibitory.inhibitory_steps);
  (void)scope;
}

constexpr std::initializer_list<const char*> kStimulusKeys = {
    "count",         "inhibitory",    "generator",        "thresholds",
    "noise",         "mode",          "labels",           "max_steps",
    "max_retries",   "reinit_period", "am_lr",            "init_scale",
    "edit_scale",    "inhibitory_multiplier", "excitatory_steps", "inhibitory_steps"};

ojson arch_json(const ArchitectureSpec& a) {
  if (a.layers.empty()) return nullptr;
  ojson j;
  j["name"] = a.name;
  j["input"] = a.input;
  j["layers"] = a.layers.size();
  return j;
}

ojson stimulus_json(const StimulusConfig& s) {
  ojson j;
  j["generator"] = arch_json(s.generator);
  j["thresholds"] = s.thresholds;
  j["noise"] = noise_kind_name(s.noise);
  j["mode"] = stimulus_mode_name(s.mode);
  j["labels"] = label_mode_name(s.labels);
  j["max_steps"] = s.max_steps;
  j["max_retries"] = s.max_retries;
  j["reinit_period"] = s.reinit_period;
  j["am_lr"] = s.am_lr;
  j["init_scale"] = s.init_scale;
  j["edit_scale"] = s.edit_scale;
  j["inhibitory_multiplier"] = s.inhibitory.threshold_multiplier;
  j["excitatory_steps"] = s.inhibitory.excitatory_steps;
  j["inhibitory_steps"] = s.inhibitory.inhibitory_steps;
  return j;
}

DatasetConfig parse_dataset(const json& j) {
  DatasetConfig d;
  check_keys(j, "dataset",
             {"kind", "path", "paths", "synth", "mnist_val", "test_fraction", "val_fraction",
              "series_layout", "channel", "normalize", "split_seed"});
  if (j.contains("kind")) d.kind = dataset_kind_from(j.at("kind").get<std::string>());
  d.path = j.value("path", d.path);
  if (j.contains("paths")) d.paths = j.at("paths").get<std::vector<std::string>>();
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    check_keys(s, "dataset.synth",
               {"recordings", "minutes", "channels", "start_prob", "stay_prob", "seed"});
    d.synth.recordings = s.value("recordings", d.synth.recordings);
    d.synth.minutes = s.value("minutes", d.synth.minutes);
    d.synth.channels = s.value("channels", d.synth.channels);
    d.synth.apnea_start_prob = s.value("start_prob", d.synth.apnea_start_prob);
    d.synth.apnea_stay_prob = s.value("stay_prob", d.synth.apnea_stay_prob);
    d.synth.seed = s.value("seed", d.synth.seed);
  }
  d.mnist_val = j.value("mnist_val", d.mnist_val);
  d.test_fraction = j.value("test_fraction", d.test_fraction);
  d.val_fraction = j.value("val_fraction", d.val_fraction);
  d.series_layout = j.value("series_layout", d.series_layout);
  d.channel = j.value("channel", d.channel);
  d.normalize = j.value("normalize", d.normalize);
  d.split_seed = j.value("split_seed", d.split_seed);
  return d;
}

ojson dataset_json(const DatasetConfig& d) {
  ojson j;
  j["kind"] = dataset_kind_name(d.kind);
  j["path"] = d.path;
  j["paths"] = d.paths;
  ojson s;
  s["recordings"] = d.synth.recordings;
  s["minutes"] = d.synth.minutes;
  s["channels"] = d.synth.channels;
  s["start_prob"] = d.synth.apnea_start_prob;
  s["stay_prob"] = d.synth.apnea_stay_prob;
  s["seed"] = d.synth.seed;
  j["synth"] = s;
  j["mnist_val"] = d.mnist_val;
  j["test_fraction"] = d.test_fraction;
  j["val_fraction"] = d.val_fraction;
  j["series_layout"] = d.series_layout;
  j["channel"] = d.channel;
  j["normalize"] = d.normalize;
  j["split_seed"] = d.split_seed;
  return j;
}

AssociationConfig parse_association(const json& j) {
  AssociationConfig a;
  check_keys(j, "association",
             {"discard", "random_discards", "normalize", "stimulus_count", "holdout_fraction",
              "adversary", "identity", "teacher", "user", "stimulus"});
  if (j.contains("discard")) a.split.discard = j.at("discard").get<std::vector<std::string>>();
  a.split.random_discards = j.value("random_discards", a.split.random_discards);
  a.split.normalize = j.value("normalize", a.split.normalize);
  a.stimulus_count = j.value("stimulus_count", a.stimulus_count);
  a.holdout_fraction = j.value("holdout_fraction", a.holdout_fraction);
  auto model = [&](const char* key, ArchitectureSpec& arch, TrainConfig& train) {
    if (!j.contains(key)) return;
    const json& m = j.at(key);
    check_keys(m, std::string("association.") + key, {"architecture", "train"});
    if (m.contains("architecture"))
      arch = resolve_architecture(m.at("architecture").get<std::string>());
    if (m.contains("train")) train = parse_train(m.at("train"), std::string("association.") + key);
  };
  model("adversary", a.adversary, a.adversary_train);
  model("identity", a.identity, a.identity_train);
  model("teacher", a.teacher, a.teacher_train);
  model("user", a.user, a.user_train);
  if (j.contains("stimulus")) {
    check_keys(j.at("stimulus"), "association.stimulus", kStimulusKeys);
    check(!j.at("stimulus").contains("count") && !j.at("stimulus").contains("inhibitory"),
          "config: association.stimulus takes its count from association.stimulus_count");
    parse_stimulus_fields(j.at("stimulus"), "association.stimulus", a.stimulus);
  }
  return a;
}

ojson association_json(const AssociationConfig& a) {
  ojson j;
  j["discard"] = a.split.discard;
  j["random_discards"] = a.split.random_discards;
  j["normalize"] = a.split.normalize;
  j["stimulus_count"] = a.stimulus_count;
  j["holdout_fraction"] = a.holdout_fraction;
  j["adversary"] = ojson{{"architecture", arch_json(a.adversary)},
                         {"train", train_json(a.adversary_train)}};
  j["identity"] =
      ojson{{"architecture", arch_json(a.identity)}, {"train", train_json(a.identity_train)}};
  j["teacher"] =
      ojson{{"architecture", arch_json(a.teacher)}, {"train", train_json(a.teacher_train)}};
  j["user"] = ojson{{"architecture", arch_json(a.user)}, {"train", train_json(a.user_train)}};
  j["stimulus"] = stimulus_json(a.stimulus);
  return j;
}

std::string basename_stem(const std::string& path) {
  const size_t slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const size_t dot = base.find_last_of('.');
  if (dot != std::string::npos && dot > 0) base = base.substr(0, dot);
  return base;
}

double row_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double row_stderr(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = row_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) /
         std::sqrt(static_cast<double>(v.size()));
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::synthetic: return "synthetic";
    case DatasetKind::recording_csv: return "recordings";
  }
  fail("bad dataset kind");
}

DatasetKind dataset_kind_from(const std::string& s) {
  if (s == "mnist") return DatasetKind::mnist;
  if (s == "synthetic") return DatasetKind::synthetic;
  if (s == "recordings") return DatasetKind::recording_csv;
  fail("unknown dataset kind '", s, "'");
}

ArchitectureSpec resolve_architecture(const std::string& token) {
  check(!token.empty(), "architecture token is empty");
  std::vector<std::string> parts;
  size_t start = 0;
  for (;;) {
    const size_t colon = token.find(':', start);
    parts.push_back(token.substr(start, colon - start));
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  auto arg = [&](size_t i) -> int {
    check(i < parts.size(), "architecture '", token, "' is missing argument ", i);
    try {
      return std::stoi(parts[i]);
    } catch (const std::exception&) {
      fail("architecture '", token, "': '", parts[i], "' is not a number");
    }
  };
  const std::string& head = parts[0];
  if (head == "association_net")
    return association_net(arg(1), parts.size() > 2 ? arg(2) : 240);
  if (head == "membership_net") return membership_net(arg(1), parts.size() > 2 ? arg(2) : 40);
  if (head == "waveform_generator") return waveform_generator(arg(1));
  check(parts.size() == 1, "architecture '", token, "': '", head, "' takes no arguments");
  return catalog_architecture(head);
}

LoadedData load_dataset(const DatasetConfig& cfg) {
  LoadedData out;
  if (cfg.kind == DatasetKind::mnist) {
    check(!cfg.path.empty(), "mnist dataset needs the directory in dataset.path");
    MnistData m = load_mnist(cfg.path, cfg.mnist_val);
    out.train = std::move(m.train);
    out.val = std::move(m.val);
    out.test = std::move(m.test);
    return out;
  }

  if (cfg.kind == DatasetKind::synthetic) {
    out.recordings = synth_recordings(cfg.synth);
  } else {
    check(!cfg.paths.empty(), "recordings dataset needs files in dataset.paths");
    out.recordings.reserve(cfg.paths.size());
    for (const std::string& p : cfg.paths) {
      check(file_exists(p), "recording file '", p, "' does not exist");
      out.recordings.push_back(read_recording_csv(p, basename_stem(p)));
    }
  }

  const WindowSet ws = window_recordings(out.recordings, cfg.normalize);
  const LabeledDataset apnea = ws.labeled_apnea(cfg.series_layout, cfg.channel);
  const LabeledDataset ident = ws.labeled_identity(cfg.series_layout, cfg.channel);

  const int64_t n = apnea.size();
  check(n > 0, "dataset produced no windows");
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(cfg.split_seed);
  for (int64_t i = n - 1; i > 0; --i)
    std::swap(idx[static_cast<size_t>(i)],
              idx[static_cast<size_t>(rng.uniform_int(static_cast<int>(i + 1)))]);

  const int64_t n_test = std::llround(cfg.test_fraction * static_cast<double>(n));
  const int64_t n_val = std::llround(cfg.val_fraction * static_cast<double>(n));
  check(n_test + n_val < n, "dataset split leaves no training windows");
  const auto take = [&](int64_t from, int64_t count) {
    return std::vector<int>(idx.begin() + from, idx.begin() + from + count);
  };
  const std::vector<int> test_idx = take(0, n_test);
  const std::vector<int> val_idx = take(n_test, n_val);
  const std::vector<int> train_idx = take(n_test + n_val, n - n_test - n_val);

  const auto part = [](const LabeledDataset& d, const std::vector<int>& which) {
    if (which.empty()) {
      LabeledDataset empty;
      empty.classes = d.classes;
      return empty;
    }
    return d.subset(which);
  };
  out.test = part(apnea, test_idx);
  out.val = part(apnea, val_idx);
  out.train = part(apnea, train_idx);
  out.test_identity = part(ident, test_idx);
  out.val_identity = part(ident, val_idx);
  out.train_identity = part(ident, train_idx);
  return out;
}

void ExperimentConfig::validate() const {
  check(!out_dir.empty(), "experiment: output directory is empty");
  check(!teacher.layers.empty(), "experiment: teacher architecture is empty");
  check(stimulus_count >= 0, "experiment: stimulus count is negative");
  check(repetitions >= 0, "experiment: repetitions is negative");
  check(jobs >= 1, "experiment: jobs must be at least 1");
  check(dataset.test_fraction >= 0 && dataset.test_fraction < 1, "experiment: bad test fraction");
  check(dataset.val_fraction >= 0 && dataset.val_fraction < 1, "experiment: bad val fraction");
  if (dataset.kind == DatasetKind::mnist) {
    check(file_exists(dataset.path), "mnist directory '", dataset.path, "' does not exist");
    check(!inhibitory, "inhibitory generation needs identity labels; mnist has none");
  }
  if (dataset.kind == DatasetKind::recording_csv)
    for (const std::string& p : dataset.paths)
      check(file_exists(p), "recording file '", p, "' does not exist");
  if (stimulus_count > 0) stimulus.validate();
  for (const StudentSpec& s : students) {
    check(!s.name.empty(), "experiment: a student variant has no name");
    check(!s.arch.layers.empty(), "student '", s.name, "' has an empty architecture");
  }
  for (const std::string& a : attacks)
    check(a == "association" || a == "membership" || a == "neighbor" || a == "probe",
          "unknown attack selector '", a, "'");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail("cannot parse experiment config: ", e.what());
  }
  check_keys(j, "experiment",
             {"seed", "out", "jobs", "dataset", "teacher", "identity", "stimuli", "students",
              "repetitions", "baseline", "attacks", "association", "membership", "probe"});
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out", c.out_dir);
  c.jobs = j.value("jobs", c.jobs);
  if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset"));
  if (j.contains("teacher")) {
    const json& t = j.at("teacher");
    check_keys(t, "teacher", {"architecture", "train"});
    check(t.contains("architecture"), "config: teacher.architecture is required");
    c.teacher = resolve_architecture(t.at("architecture").get<std::string>());
    if (t.contains("train")) c.teacher_train = parse_train(t.at("train"), "teacher.train");
  }
  if (j.contains("identity")) {
    const json& t = j.at("identity");
    check_keys(t, "identity", {"architecture", "train"});
    if (t.contains("architecture"))
      c.identity = resolve_architecture(t.at("architecture").get<std::string>());
    if (t.contains("train")) c.identity_train = parse_train(t.at("train"), "identity.train");
  }
  if (j.contains("stimuli")) {
    const json& s = j.at("stimuli");
    check_keys(s, "stimuli", kStimulusKeys);
    c.stimulus_count = s.value("count", c.stimulus_count);
    c.inhibitory = s.value("inhibitory", c.inhibitory);
    parse_stimulus_fields(s, "stimuli", c.stimulus);
  }
  if (j.contains("students")) {
    for (const json& s : j.at("students")) {
      check_keys(s, "students[]", {"name", "architecture", "train"});
      StudentSpec sp;
      sp.name = s.value("name", "");
      check(s.contains("architecture"), "config: students[].architecture is required");
      sp.arch = resolve_architecture(s.at("architecture").get<std::string>());
      if (s.contains("train")) sp.train = parse_train(s.at("train"), "students[].train");
      c.students.push_back(std::move(sp));
    }
  }
  c.repetitions = j.value("repetitions", c.repetitions);
  c.include_baseline = j.value("baseline", c.include_baseline);
  if (j.contains("attacks")) c.attacks = j.at("attacks").get<std::vector<std::string>>();
  if (j.contains("association")) c.association = parse_association(j.at("association"));
  if (j.contains("membership")) {
    const json& m = j.at("membership");
    check_keys(m, "membership", {"hidden", "holdout_fraction", "train", "sample"});
    c.membership.hidden = m.value("hidden", c.membership.hidden);
    c.membership.holdout_fraction = m.value("holdout_fraction", c.membership.holdout_fraction);
    if (m.contains("train"))
      c.membership.attack_train = parse_train(m.at("train"), "membership.train");
    c.membership_sample = m.value("sample", c.membership_sample);
  }
  if (j.contains("probe")) {
    const json& p = j.at("probe");
    check_keys(p, "probe",
               {"svm_epochs", "svm_lr", "svm_regularization", "forest_trees", "forest_depth",
                "dense", "conv", "dense_train", "conv_train", "holdout_fraction", "learners"});
    c.probe.svm_epochs = p.value("svm_epochs", c.probe.svm_epochs);
    c.probe.svm_lr = p.value("svm_lr", c.probe.svm_lr);
    c.probe.svm_regularization = p.value("svm_regularization", c.probe.svm_regularization);
    c.probe.forest_trees = p.value("forest_trees", c.probe.forest_trees);
    c.probe.forest_depth = p.value("forest_depth", c.probe.forest_depth);
    if (p.contains("dense")) c.probe.dense = resolve_architecture(p.at("dense").get<std::string>());
    if (p.contains("conv")) c.probe.conv = resolve_architecture(p.at("conv").get<std::string>());
    if (p.contains("dense_train"))
      c.probe.dense_train = parse_train(p.at("dense_train"), "probe.dense_train");
    if (p.contains("conv_train"))
      c.probe.conv_train = parse_train(p.at("conv_train"), "probe.conv_train");
    c.probe.holdout_fraction = p.value("holdout_fraction", c.probe.holdout_fraction);
    if (p.contains("learners")) {
      c.probe_learners.clear();
      for (const json& l : p.at("learners"))
        c.probe_learners.push_back(probe_learner_from(l.get<std::string>()));
    }
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_text_file(path));
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  ojson j;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  j["jobs"] = cfg.jobs;
  j["dataset"] = dataset_json(cfg.dataset);
  j["teacher"] = ojson{{"architecture", arch_json(cfg.teacher)},
                       {"train", train_json(cfg.teacher_train)}};
  j["identity"] = ojson{{"architecture", arch_json(cfg.identity)},
                        {"train", train_json(cfg.identity_train)}};
  ojson st = stimulus_json(cfg.stimulus);
  st["count"] = cfg.stimulus_count;
  st["inhibitory"] = cfg.inhibitory;
  j["stimuli"] = st;
  ojson students = ojson::array();
  for (const StudentSpec& s : cfg.students)
    students.push_back(ojson{{"name", s.name},
                             {"architecture", arch_json(s.arch)},
                             {"train", train_json(s.train)}});
  j["students"] = students;
  j["repetitions"] = cfg.repetitions;
  j["baseline"] = cfg.include_baseline;
  j["attacks"] = cfg.attacks;
  j["association"] = association_json(cfg.association);
  j["membership"] = ojson{{"hidden", cfg.membership.hidden},
                          {"holdout_fraction", cfg.membership.holdout_fraction},
                          {"train", train_json(cfg.membership.attack_train)},
                          {"sample", cfg.membership_sample}};
  ojson learners = ojson::array();
  for (ProbeLearner l : cfg.probe_learners) learners.push_back(probe_learner_name(l));
  j["probe"] = ojson{{"svm_epochs", cfg.probe.svm_epochs},
                     {"svm_lr", cfg.probe.svm_lr},
                     {"svm_regularization", cfg.probe.svm_regularization},
                     {"forest_trees", cfg.probe.forest_trees},
                     {"forest_depth", cfg.probe.forest_depth},
                     {"holdout_fraction", cfg.probe.holdout_fraction},
                     {"learners", learners}};
  return j.dump(2) + "\n";
}

std::string RunManifest::to_json() const {
  ojson j;
  j["kind"] = "amkt-run";
  j["version"] = version;
  j["seed"] = seed;
  j["config"] = ojson::parse(config_echo);
  ojson steps = ojson::array();
  for (const StepTiming& t : timings) steps.push_back(ojson{{"step", t.step}, {"seconds", t.seconds}});
  j["steps"] = steps;
  ojson arts;
  for (const auto& [path, digest] : artifacts) arts[path] = digest;
  j["artifacts"] = arts;
  ojson rows = ojson::array();
  for (const SummaryRow& r : summary)
    rows.push_back(ojson{{"variant", r.variant},
                         {"metric", r.metric},
                         {"mean", r.mean},
                         {"stderr", r.stderr_},
                         {"n", r.n}});
  j["summary"] = rows;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail("cannot parse run manifest: ", e.what());
  }
  check(j.value("kind", "") == "amkt-run", "not a run manifest");
  RunManifest m;
  m.version = j.value("version", "");
  m.seed = j.value("seed", uint64_t{0});
  m.config_echo = j.contains("config") ? j.at("config").dump(2) + "\n" : "";
  if (j.contains("steps"))
    for (const json& s : j.at("steps"))
      m.timings.push_back({s.value("step", ""), s.value("seconds", 0.0)});
  if (j.contains("artifacts"))
    for (const auto& item : j.at("artifacts").items())
      m.artifacts[item.key()] = item.value().get<std::string>();
  if (j.contains("summary"))
    for (const json& r : j.at("summary"))
      m.summary.push_back({r.value("variant", ""), r.value("metric", ""), r.value("mean", 0.0),
                           r.value("stderr", 0.0), r.value("n", 0)});
  return m;
}

std::string report_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "variant,metric,mean,stderr,n\n";
  for (const SummaryRow& r : rows) {
    out += r.variant + "," + r.metric + "," + format_double(r.mean) + "," +
           format_double(r.stderr_) + "," + std::to_string(r.n) + "\n";
  }
  return out;
}

std::string report_json(const std::vector<SummaryRow>& rows) {
  ojson j;
  j["schema"] = "amkt-report/1";
  ojson arr = ojson::array();
  for (const SummaryRow& r : rows)
    arr.push_back(ojson{{"variant", r.variant},
                        {"metric", r.metric},
                        {"mean", r.mean},
                        {"stderr", r.stderr_},
                        {"n", r.n}});
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

void emit_report(const std::vector<SummaryRow>& rows, const std::string& dir,
                 const std::string& stem) {
  ensure_dir(dir);
  write_text_file(dir + "/" + stem + ".csv", report_csv(rows));
  write_text_file(dir + "/" + stem + ".json", report_json(rows));
}

RunManifest run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  RunManifest man;
  man.version = kToolkitVersion;
  man.seed = cfg.seed;
  man.config_echo = experiment_config_json(cfg);
  ensure_dir(cfg.out_dir);

  const auto artifact = [&](const std::string& rel) {
    man.artifacts[rel] = sha256_file(cfg.out_dir + "/" + rel);
  };
  const auto timed = [&](const std::string& step, auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn();
    } catch (const Error& e) {
      fail("step '", step, "' failed: ", e.what());
    }
    man.timings.push_back({step, seconds_since(t0)});
  };

  write_text_file(cfg.out_dir + "/config.json", man.config_echo);
  artifact("config.json");

  LoadedData data;
  timed("load-dataset", [&] { data = load_dataset(cfg.dataset); });

  TrainResult teacher;
  timed("train-teacher", [&] {
    TrainConfig tc = cfg.teacher_train;
    tc.seed = cfg.seed ^ kTeacherTag;
    teacher = train_classifier(cfg.teacher, data.train, data.val, tc);
    teacher.net.save_weights(cfg.out_dir + "/teacher.amkt");
    write_curve_csv(cfg.out_dir + "/teacher_curve.csv", teacher.curve);
  });
  artifact("teacher.amkt");
  artifact("teacher_curve.csv");

  std::vector<SummaryRow> rows;
  rows.push_back({"teacher", val_metric_name(cfg.teacher_train.metric),
                  evaluate_metric(teacher.net, data.test, cfg.teacher_train.metric,
                                  cfg.teacher_train.eval_chunk),
                  0.0, 1});

  StimulusDataset stimuli;
  if (cfg.stimulus_count > 0) {
    timed("generate-stimuli", [&] {
      StimulusConfig sc = cfg.stimulus;
      sc.jobs = cfg.jobs;
      const uint64_t sseed = cfg.seed ^ kStimulusTag;
      if (cfg.inhibitory) {
        check(data.train_identity.size() > 0,
              "inhibitory generation needs identity labels from a recording dataset");
        ArchitectureSpec ia = cfg.identity;
        if (ia.layers.empty()) {
          check(cfg.dataset.series_layout,
                "the default identity architecture needs the series window layout");
          ia = association_net(data.train_identity.classes,
                              static_cast<int>(data.train_identity.x.dim(2)));
        }
        TrainConfig itc = cfg.identity_train;
        itc.seed = cfg.seed ^ kIdentityTag;
        Network identity =
            train_classifier(ia, data.train_identity, data.val_identity, itc).net;
        identity.save_weights(cfg.out_dir + "/identity.amkt");
        std::vector<double> marginal(static_cast<size_t>(data.train_identity.classes), 0.0);
        for (int l : data.train_identity.labels) marginal[static_cast<size_t>(l)] += 1.0;
        for (double& m : marginal) m /= static_cast<double>(data.train_identity.labels.size());
        stimuli = inhibitory_generate(teacher.net, identity, marginal, sc, cfg.stimulus_count,
                                      sseed);
      } else {
        stimuli = generate_stimulus_dataset(teacher.net, sc, cfg.stimulus_count, sseed);
      }
      stimuli.save(cfg.out_dir + "/stimuli");
    });
    if (cfg.inhibitory) artifact("identity.amkt");
    artifact("stimuli/manifest.json");
    artifact("stimuli/data.bin");
    artifact("stimuli/labels.bin");
  }

  if (cfg.repetitions > 0 && !cfg.students.empty()) {
    check(stimuli.size() > 0, "students need stimuli; set a positive stimulus count");
    const LabeledDataset stim_train = stimuli.as_labeled();
    timed("train-students", [&] {
      for (size_t si = 0; si < cfg.students.size(); ++si) {
        const StudentSpec& s = cfg.students[si];
        const std::string sdir = cfg.out_dir + "/students/" + s.name;
        ensure_dir(sdir);
        std::vector<double> vals, base_vals;
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
          TrainConfig tc = s.train;
          tc.seed = cfg.seed ^ kStudentTag ^ (static_cast<uint64_t>(si + 1) << 32) ^
                    static_cast<uint64_t>(rep + 1);
          TrainResult res = train_classifier(s.arch, stim_train, LabeledDataset{}, tc);
          const std::string stem = "rep" + std::to_string(rep);
          res.net.save_weights(sdir + "/" + stem + ".amkt");
          write_curve_csv(sdir + "/" + stem + "_curve.csv", res.curve);
          man.artifacts["students/" + s.name + "/" + stem + ".amkt"] =
              sha256_file(sdir + "/" + stem + ".amkt");
          man.artifacts["students/" + s.name + "/" + stem + "_curve.csv"] =
              sha256_file(sdir + "/" + stem + "_curve.csv");
          vals.push_back(evaluate_metric(res.net, data.test, s.train.metric, s.train.eval_chunk));
          if (cfg.include_baseline) {
            TrainConfig bc = s.train;
            bc.seed = cfg.seed ^ kBaselineTag ^ (static_cast<uint64_t>(si + 1) << 32) ^
                      static_cast<uint64_t>(rep + 1);
            TrainResult base = train_classifier(s.arch, data.train, data.val, bc);
            base_vals.push_back(
                evaluate_metric(base.net, data.test, s.train.metric, s.train.eval_chunk));
          }
        }
        rows.push_back({s.name, val_metric_name(s.train.metric), row_mean(vals), row_stderr(vals),
                        static_cast<int>(vals.size())});
        if (cfg.include_baseline)
          rows.push_back({s.name + "-real", val_metric_name(s.train.metric), row_mean(base_vals),
                          row_stderr(base_vals), static_cast<int>(base_vals.size())});
      }
    });
  }

  timed("evaluate", [&] { emit_report(rows, cfg.out_dir); });
  artifact("report.csv");
  artifact("report.json");
  man.summary = rows;

  for (const std::string& a : cfg.attacks) {
    timed("attack-" + a, [&] {
      if (a == "association") {
        check(!data.recordings.empty(), "the association attack needs a recording dataset");
        AssociationConfig ac = cfg.association;
        if (ac.stimulus.generator.layers.empty()) ac.stimulus = cfg.stimulus;
        ac.stimulus.jobs = cfg.jobs;
        for (OpenCase oc :
             {OpenCase::real, OpenCase::stimuli, OpenCase::inhibitory_stimuli}) {
          const AssociationOutcome outcome =
              recording_association_attack(data.recordings, oc, ac, cfg.seed ^ kAttackTag);
          ojson j;
          j["case"] = open_case_name(oc);
          j["adversary"] = ojson::parse(outcome.adversary.to_json());
          j["user"] = ojson::parse(outcome.user.to_json());
          const std::string stem = "association_" + open_case_name(oc);
          write_text_file(cfg.out_dir + "/" + stem + ".json", j.dump(2) + "\n");
          write_text_file(cfg.out_dir + "/" + stem + "_hist.csv",
                          outcome.adversary.histogram_csv());
          artifact(stem + ".json");
          artifact(stem + "_hist.csv");
        }
      } else if (a == "membership") {
        LabeledDataset train_sample = data.train;
        LabeledDataset test_sample = data.test;
        if (cfg.membership_sample > 0) {
          Rng mrng(cfg.seed ^ kAttackTag ^ 0x6d656dULL);
          const auto cap = [&](const LabeledDataset& d) {
            const int64_t want = std::min<int64_t>(cfg.membership_sample, d.size());
            std::vector<int> idx(static_cast<size_t>(d.size()));
            std::iota(idx.begin(), idx.end(), 0);
            for (int64_t i = d.size() - 1; i > 0; --i)
              std::swap(idx[static_cast<size_t>(i)],
                        idx[static_cast<size_t>(mrng.uniform_int(static_cast<int>(i + 1)))]);
            idx.resize(static_cast<size_t>(want));
            return d.subset(idx);
          };
          train_sample = cap(train_sample);
          test_sample = cap(test_sample);
        }
        const AttackReport rep = membership_inference_attack(
            teacher.net, train_sample, test_sample, cfg.membership, cfg.seed ^ kAttackTag);
        write_text_file(cfg.out_dir + "/membership.json", rep.to_json());
        artifact("membership.json");
      } else if (a == "neighbor") {
        check(stimuli.size() > 0, "the neighbor check needs stimuli");
        const NeighborReport rep = nearest_neighbor_leakage(stimuli, data.train, cfg.jobs);
        write_text_file(cfg.out_dir + "/neighbor.json", rep.to_json());
        artifact("neighbor.json");
      } else if (a == "probe") {
        check(stimuli.size() > 0, "the class probe needs stimuli");
        ProbeConfig pc = cfg.probe;
        if (pc.conv.layers.empty()) pc.conv = cfg.teacher;
        const std::vector<ProbeResult> res = class_recognition_probe(
            stimuli, data.train, data.test, cfg.probe_learners, pc, cfg.seed ^ kAttackTag);
        std::string csv = "learner,baseline_accuracy,stimulus_accuracy\n";
        for (const ProbeResult& r : res)
          csv += r.learner + "," + format_double(r.baseline_accuracy) + "," +
                 format_double(r.stimulus_accuracy) + "\n";
        write_text_file(cfg.out_dir + "/probe.csv", csv);
        artifact("probe.csv");
      }
    });
  }

  write_text_file(cfg.out_dir + "/manifest.json", man.to_json());
  return man;
}

std::vector<SweepPoint> run_teacher_age_sweep(const ExperimentConfig& cfg,
                                              const std::vector<int>& checkpoints,
                                              int64_t stimuli_per_point) {
  check(!checkpoints.empty(), "teacher age sweep: empty checkpoint list");
  for (size_t i = 1; i < checkpoints.size(); ++i)
    check(checkpoints[i] > checkpoints[i - 1],
          "teacher age sweep: checkpoints must be strictly increasing");
  check(checkpoints.front() > 0, "teacher age sweep: checkpoints must be positive");
  check(!cfg.students.empty(), "teacher age sweep: a student variant is required");
  check(stimuli_per_point > 0, "teacher age sweep: stimuli per point must be positive");
  cfg.validate();
  ensure_dir(cfg.out_dir);

  LoadedData data = load_dataset(cfg.dataset);

  TrainConfig tc = cfg.teacher_train;
  tc.seed = cfg.seed ^ kTeacherTag ^ kSweepTag;
  tc.snapshot_iters = checkpoints;
  tc.iterations = std::max(tc.iterations, checkpoints.back());
  const TrainResult teacher = train_classifier(cfg.teacher, data.train, data.val, tc);
  check(teacher.snapshots.size() == checkpoints.size(), "teacher age sweep: snapshots missing");

  StimulusConfig sc = cfg.stimulus;
  sc.jobs = cfg.jobs;
  const StudentSpec& student = cfg.students.front();

  std::vector<SweepPoint> points;
  points.reserve(checkpoints.size());
  for (size_t i = 0; i < teacher.snapshots.size(); ++i) {
    const auto& [batches, net] = teacher.snapshots[i];
    SweepPoint p;
    p.batches = batches;
    p.teacher_metric = evaluate_metric(net, data.test, tc.metric, tc.eval_chunk);
    const StimulusDataset ds = generate_stimulus_dataset(
        net, sc, stimuli_per_point, cfg.seed ^ kSweepTag ^ static_cast<uint64_t>(i + 1));
    TrainConfig st = student.train;
    st.seed = cfg.seed ^ kSweepTag ^ kStudentTag ^ static_cast<uint64_t>(i + 1);
    const TrainResult res = train_classifier(student.arch, ds.as_labeled(), LabeledDataset{}, st);
    p.student_metric = evaluate_metric(res.net, data.test, student.train.metric,
                                       student.train.eval_chunk);
    points.push_back(p);
  }

  std::string csv = "batches,teacher_metric,student_metric\n";
  for (const SweepPoint& p : points)
    csv += std::to_string(p.batches) + "," + format_double(p.teacher_metric) + "," +
           format_double(p.student_metric) + "\n";
  write_text_file(cfg.out_dir + "/sweep.csv", csv);
  return points;
}

}  // namespace amkt
