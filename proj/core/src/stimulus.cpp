#include "amkt/stimulus.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "amkt/io.hpp"
#include "amkt/optim.hpp"

namespace amkt {

std::string noise_kind_name(NoiseKind k) { return k == NoiseKind::normal ? "normal" : "uniform"; }

NoiseKind noise_kind_from(const std::string& s) {
  if (s == "normal") return NoiseKind::normal;
  if (s == "uniform") return NoiseKind::uniform;
  fail("unknown noise kind '", s, "'");
}

std::string stimulus_mode_name(StimulusMode m) {
  return m == StimulusMode::generator ? "generator" : "editor";
}

StimulusMode stimulus_mode_from(const std::string& s) {
  if (s == "generator") return StimulusMode::generator;
  if (s == "editor") return StimulusMode::editor;
  fail("unknown stimulus mode '", s, "'");
}

std::string label_mode_name(LabelMode m) { return m == LabelMode::soft ? "soft" : "hard"; }

LabelMode label_mode_from(const std::string& s) {
  if (s == "soft") return LabelMode::soft;
  if (s == "hard") return LabelMode::hard;
  fail("unknown label mode '", s, "'");
}

void StimulusConfig::validate() const {
  check(!thresholds.empty(), "threshold set is empty");
  for (double t : thresholds)
    check(t > 0.0 && t < 1.0, "threshold ", t, " outside (0,1)");
  check(reinit_period >= 1, "reinit period must be >= 1, got ", reinit_period);
  check(max_steps >= 1, "max steps must be >= 1, got ", max_steps);
  check(max_retries >= 0, "max retries must be >= 0, got ", max_retries);
  check(edit_scale >= 0.0, "edit scale must be >= 0, got ", edit_scale);
  check(am_lr > 0.0, "learning rate must be positive, got ", am_lr);
  check(init_scale > 0.0, "init scale must be positive, got ", init_scale);
  check(inhibitory.threshold_multiplier > 0.0, "inhibitory threshold multiplier must be positive");
  check(inhibitory.excitatory_steps >= 1 && inhibitory.inhibitory_steps >= 1,
        "alternation ratio entries must be >= 1");
  check(jobs >= 1, "jobs must be >= 1, got ", jobs);
  check(!generator.layers.empty(), "no generator architecture configured");
}

std::string StimulusConfig::signature() const {
  std::ostringstream os;
  os.precision(17);
  os << "thresholds";
  for (double t : thresholds) os << " " << t;
  os << "\nreinit_period " << reinit_period << "\nmax_steps " << max_steps << "\nmax_retries "
     << max_retries << "\nnoise " << noise_kind_name(noise) << "\nmode "
     << stimulus_mode_name(mode) << "\nedit_scale " << edit_scale << "\nam_lr " << am_lr
     << "\nlabels " << label_mode_name(labels) << "\ninit_scale " << init_scale << "\ninhibitory "
     << inhibitory.threshold_multiplier << " " << inhibitory.excitatory_steps << ":"
     << inhibitory.inhibitory_steps << "\n"
     << architecture_signature(generator);
  return os.str();
}

std::string weights_digest(const Network& net) {
  return sha256_hex(tensor_file_bytes(net.params()));
}

double marginal_entropy(const std::vector<double>& marginal) {
  check(!marginal.empty(), "empty marginal distribution");
  double sum = 0.0, h = 0.0;
  for (double p : marginal) {
    check(p >= 0.0, "marginal has a negative entry ", p);
    sum += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  check(std::abs(sum - 1.0) < 1e-6, "marginal sums to ", sum, ", expected 1");
  return h;
}

double cross_entropy_to_marginal(const float* probs, const std::vector<double>& marginal) {
  double l = 0.0;
  for (size_t u = 0; u < marginal.size(); ++u)
    if (marginal[u] != 0.0)
      l -= marginal[u] * std::log(std::max(static_cast<double>(probs[u]), 1e-12));
  return l;
}

namespace {

// Only the block index and the seed decide a generator's starting weights, so
// any worker producing a given block produces the same stimuli.
constexpr uint64_t kBlockTag = 0x67656e5f616d0000ull;
constexpr uint64_t kReinitTag = 0x7265696e69740000ull;

// Eq. (2): the target must be the argmax and clear the threshold strictly.
bool stop_rule(const float* row, int classes, int target, double threshold) {
  int best = 0;
  for (int j = 1; j < classes; ++j)
    if (row[j] > row[best]) best = j;
  return best == target && static_cast<double>(row[target]) > threshold;
}

Tensor draw_noise(const Shape& s, NoiseKind k, Rng& rng) {
  Tensor z(s);
  const int64_t n = z.numel();
  if (k == NoiseKind::normal) {
    for (int64_t i = 0; i < n; ++i) z[i] = static_cast<float>(rng.normal());
  } else {
    // zero-centered so both noise kinds feed the generator at a similar scale
    for (int64_t i = 0; i < n; ++i) z[i] = static_cast<float>(2.0 * rng.uniform() - 1.0);
  }
  return z;
}

Shape batched(const Shape& per_example) {
  Shape s;
  s.reserve(per_example.size() + 1);
  s.push_back(1);
  for (int64_t d : per_example) s.push_back(d);
  return s;
}

void adam_step(Adam& adam, Tape& tape, const std::vector<int>& ids) {
  std::vector<Tensor*> params;
  std::vector<const Tensor*> grads;
  params.reserve(ids.size());
  grads.reserve(ids.size());
  for (int id : ids) {
    params.push_back(&tape.value_mut(id));
    grads.push_back(&tape.grad(id));
  }
  adam.step(params, grads);
}

void pull_params(Network& net, Tape& tape, const std::vector<int>& ids) {
  for (size_t p = 0; p < ids.size(); ++p) net.params()[p] = tape.value(ids[static_cast<size_t>(p)]);
}

void fill_stimulus(Stimulus& out, const Tensor& x, const Tensor& probs, int target,
                   double threshold, int steps, bool edited) {
  Shape per = x.shape();
  per.erase(per.begin());
  out.data = x.reshaped(per);
  out.soft.assign(probs.data(), probs.data() + probs.numel());
  out.target = target;
  out.threshold = threshold;
  out.steps = steps;
  out.edited = edited;
}

void check_teacher_head(const Network& teacher, const char* who) {
  check(!teacher.spec().layers.empty() &&
            teacher.spec().layers.back().act == Activation::softmax,
        who, " '", teacher.spec().name, "' must end in a softmax head");
  check(teacher.spec().output_units() >= 2, who, " '", teacher.spec().name,
        "' needs at least 2 classes");
}

}  // namespace

AmOutcome am_optimize(const Network& teacher, Network& generator, int target, double threshold,
                      const StimulusConfig& cfg, Rng& rng, Stimulus& out) {
  check_teacher_head(teacher, "teacher");
  const int classes = teacher.spec().output_units();
  check(target >= 0 && target < classes, "target class ", target, " outside 0..", classes - 1);
  check(threshold > 0.0 && threshold < 1.0, "threshold ", threshold, " outside (0,1)");
  {
    const Shape got = validate_architecture(generator.spec()).back();
    check(same_shape(got, teacher.spec().input), "generator '", generator.spec().name,
          "' emits ", shape_string(got), " but the teacher consumes ",
          shape_string(teacher.spec().input));
  }

  Tape tape;
  const std::vector<int> gids = generator.push_params(tape, true);
  const std::vector<int> tids = teacher.push_params(tape, false);
  const size_t base = tape.size();
  const Shape zshape = batched(generator.spec().input);
  Adam adam(cfg.am_lr);

  for (int step = 0; step < cfg.max_steps; ++step) {
    tape.truncate(base);
    try {
      const int zn = tape.leaf(draw_noise(zshape, cfg.noise, rng), false);
      const auto gf = generator.forward_with(tape, zn, gids);
      const auto tf = teacher.forward_with(tape, gf.out, tids);
      const Tensor& probs = tape.value(tf.out);
      if (stop_rule(probs.data(), classes, target, threshold)) {
        fill_stimulus(out, tape.value(gf.out), probs, target, threshold, step, false);
        pull_params(generator, tape, gids);
        return AmOutcome::accepted;
      }
      const int loss = tape.affine(tape.pick(tf.pre_act, 0, target), -1.0, 0.0);
      tape.backward(loss);
      adam_step(adam, tape, gids);
    } catch (const NumericError&) {
      return AmOutcome::non_finite;
    }
  }
  pull_params(generator, tape, gids);
  return AmOutcome::max_steps;
}

AmOutcome editor_generate(const Network& teacher, Network& editor, int target, double threshold,
                          const StimulusConfig& cfg, Rng& rng, Stimulus& out) {
  check_teacher_head(teacher, "teacher");
  const int classes = teacher.spec().output_units();
  check(target >= 0 && target < classes, "target class ", target, " outside 0..", classes - 1);
  check(threshold > 0.0 && threshold < 1.0, "threshold ", threshold, " outside (0,1)");
  check(same_shape(editor.spec().input, teacher.spec().input), "editor '", editor.spec().name,
        "' reads ", shape_string(editor.spec().input), " but the teacher consumes ",
        shape_string(teacher.spec().input));
  {
    const Shape got = validate_architecture(editor.spec()).back();
    check(same_shape(got, teacher.spec().input), "editor '", editor.spec().name, "' emits ",
          shape_string(got), ", expected ", shape_string(teacher.spec().input));
  }

  const double s = cfg.edit_scale;
  Tape tape;
  const std::vector<int> eids = editor.push_params(tape, true);
  const std::vector<int> tids = teacher.push_params(tape, false);
  // the starting point is fixed for the whole attempt; X = [0,1] per element
  const int x0 = tape.leaf(Tensor::uniform(batched(teacher.spec().input), rng, 0.0, 1.0), false);
  const size_t base = tape.size();
  Adam adam(cfg.am_lr);

  // with a zero scale the edit cannot move x0, so one test decides the attempt
  const int limit = s == 0.0 ? 1 : cfg.max_steps;
  for (int step = 0; step < limit; ++step) {
    tape.truncate(base);
    try {
      const auto ef = editor.forward_with(tape, x0, eids);
      const int shifted = tape.add(x0, tape.affine(ef.out, s, 0.0));
      // shifted is in (-s, 1+s); map back onto [0,1]
      const int x = tape.affine(shifted, 1.0 / (1.0 + 2.0 * s), s / (1.0 + 2.0 * s));
      const auto tf = teacher.forward_with(tape, x, tids);
      const Tensor& probs = tape.value(tf.out);
      if (stop_rule(probs.data(), classes, target, threshold)) {
        fill_stimulus(out, tape.value(x), probs, target, threshold, step, true);
        pull_params(editor, tape, eids);
        return AmOutcome::accepted;
      }
      const int loss = tape.affine(tape.pick(tf.pre_act, 0, target), -1.0, 0.0);
      tape.backward(loss);
      adam_step(adam, tape, eids);
    } catch (const NumericError&) {
      return AmOutcome::non_finite;
    }
  }
  pull_params(editor, tape, eids);
  return AmOutcome::max_steps;
}

namespace {

// One alternating excitatory/inhibitory attempt; emits only when the
// threshold rule and the identity proximity bound hold simultaneously.
AmOutcome inhibitory_attempt(const Network& teacher_y, const Network& teacher_u,
                             const std::vector<double>& marginal, double th_u, Network& generator,
                             int target, double threshold, const StimulusConfig& cfg, Rng& rng,
                             Stimulus& out) {
  const int classes = teacher_y.spec().output_units();
  Tensor marg_row({1, static_cast<int64_t>(marginal.size())});
  for (size_t u = 0; u < marginal.size(); ++u) marg_row[static_cast<int64_t>(u)] = static_cast<float>(marginal[u]);

  Tape tape;
  const std::vector<int> gids = generator.push_params(tape, true);
  const std::vector<int> yids = teacher_y.push_params(tape, false);
  const std::vector<int> uids = teacher_u.push_params(tape, false);
  const size_t base = tape.size();
  const Shape zshape = batched(generator.spec().input);
  Adam adam(cfg.am_lr);
  const int period = cfg.inhibitory.excitatory_steps + cfg.inhibitory.inhibitory_steps;

  for (int step = 0; step < cfg.max_steps; ++step) {
    tape.truncate(base);
    try {
      const int zn = tape.leaf(draw_noise(zshape, cfg.noise, rng), false);
      const auto gf = generator.forward_with(tape, zn, gids);
      const auto yf = teacher_y.forward_with(tape, gf.out, yids);
      const auto uf = teacher_u.forward_with(tape, gf.out, uids);
      const Tensor& probs = tape.value(yf.out);
      const double lu = cross_entropy_to_marginal(tape.value(uf.out).data(), marginal);
      if (stop_rule(probs.data(), classes, target, threshold) && lu < th_u) {
        fill_stimulus(out, tape.value(gf.out), probs, target, threshold, step, false);
        pull_params(generator, tape, gids);
        return AmOutcome::accepted;
      }
      const bool excite = step % period < cfg.inhibitory.excitatory_steps;
      const int loss = excite ? tape.affine(tape.pick(yf.pre_act, 0, target), -1.0, 0.0)
                              : tape.cross_entropy(uf.out, marg_row);
      tape.backward(loss);
      adam_step(adam, tape, gids);
    } catch (const NumericError&) {
      return AmOutcome::non_finite;
    }
  }
  pull_params(generator, tape, gids);
  return AmOutcome::max_steps;
}

struct GenPlan {
  const Network* teacher_y = nullptr;
  const Network* teacher_u = nullptr;  // engaged only for inhibitory runs
  const std::vector<double>* marginal = nullptr;
  double th_u = 0.0;
  const StimulusConfig* cfg = nullptr;
  int64_t count = 0;
  uint64_t seed = 0;
  int classes = 0;
};

void run_block(const GenPlan& plan, int64_t block, std::vector<Stimulus>& items) {
  const StimulusConfig& cfg = *plan.cfg;
  Rng gen_rng(plan.seed ^ (kBlockTag + static_cast<uint64_t>(block)));
  Network gen = Network::build(cfg.generator, gen_rng, cfg.init_scale);

  const int64_t lo = block * cfg.reinit_period;
  const int64_t hi = std::min<int64_t>(plan.count, lo + cfg.reinit_period);
  for (int64_t i = lo; i < hi; ++i) {
    Rng rng(plan.seed ^ static_cast<uint64_t>(i));
    const int target = rng.uniform_int(plan.classes);
    const double threshold =
        cfg.thresholds[static_cast<size_t>(rng.uniform_int(static_cast<int>(cfg.thresholds.size())))];

    Stimulus st;
    int attempts = 0;
    for (;;) {
      AmOutcome oc;
      if (plan.teacher_u != nullptr)
        oc = inhibitory_attempt(*plan.teacher_y, *plan.teacher_u, *plan.marginal, plan.th_u, gen,
                                target, threshold, cfg, rng, st);
      else if (cfg.mode == StimulusMode::editor)
        oc = editor_generate(*plan.teacher_y, gen, target, threshold, cfg, rng, st);
      else
        oc = am_optimize(*plan.teacher_y, gen, target, threshold, cfg, rng, st);
      if (oc == AmOutcome::accepted) break;
      if (attempts >= cfg.max_retries)
        fail("stimulus ", i, " (class ", target, ", threshold ", threshold, "): gave up after ",
             attempts + 1, " attempts; last failure: ",
             oc == AmOutcome::max_steps ? "step budget exhausted" : "numerical blowup");
      // both failure kinds get a fresh generator; a blown-up one is unusable
      Rng rr(plan.seed ^
             (kReinitTag + (static_cast<uint64_t>(i) << 8) + static_cast<uint64_t>(attempts)));
      gen = Network::build(cfg.generator, rr, cfg.init_scale);
      ++attempts;
    }
    st.generation = static_cast<int>(block);
    st.reinits = attempts;
    items[static_cast<size_t>(i)] = std::move(st);
  }
}

std::vector<Stimulus> run_plan(const GenPlan& plan) {
  const StimulusConfig& cfg = *plan.cfg;
  const int64_t blocks = (plan.count + cfg.reinit_period - 1) / cfg.reinit_period;
  std::vector<Stimulus> items(static_cast<size_t>(plan.count));

  const int workers = static_cast<int>(std::min<int64_t>(cfg.jobs, blocks));
  if (workers <= 1) {
    for (int64_t b = 0; b < blocks; ++b) run_block(plan, b, items);
    return items;
  }

  std::atomic<int64_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int64_t b = next.fetch_add(1);
        if (b >= blocks) return;
        {
          std::lock_guard<std::mutex> lk(error_mu);
          if (first_error) return;
        }
        try {
          run_block(plan, b, items);
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return items;
}

void check_generator_fits(const StimulusConfig& cfg, const Network& teacher) {
  const Shape out = validate_architecture(cfg.generator).back();
  check(same_shape(out, teacher.spec().input), "generator '", cfg.generator.name, "' emits ",
        shape_string(out), " but the teacher consumes ", shape_string(teacher.spec().input));
  if (cfg.mode == StimulusMode::editor)
    check(same_shape(cfg.generator.input, teacher.spec().input), "editor '", cfg.generator.name,
          "' must read the teacher's input shape ", shape_string(teacher.spec().input), ", reads ",
          shape_string(cfg.generator.input));
}

}  // namespace

StimulusDataset generate_stimulus_dataset(const Network& teacher, const StimulusConfig& cfg,
                                          int64_t count, uint64_t seed) {
  cfg.validate();
  check(count >= 1, "stimulus count must be >= 1, got ", count);
  check_teacher_head(teacher, "teacher");
  check_generator_fits(cfg, teacher);

  GenPlan plan;
  plan.teacher_y = &teacher;
  plan.cfg = &cfg;
  plan.count = count;
  plan.seed = seed;
  plan.classes = teacher.spec().output_units();

  StimulusDataset ds;
  ds.items = run_plan(plan);
  ds.input_shape = teacher.spec().input;
  ds.classes = plan.classes;
  ds.teacher_digest = weights_digest(teacher);
  ds.config_digest = sha256_hex(cfg.signature());
  ds.seed = seed;
  return ds;
}

StimulusDataset inhibitory_generate(const Network& teacher_y, const Network& teacher_u,
                                    const std::vector<double>& marginal,
                                    const StimulusConfig& cfg, int64_t count, uint64_t seed) {
  cfg.validate();
  check(count >= 1, "stimulus count must be >= 1, got ", count);
  check_teacher_head(teacher_y, "teacher");
  check_teacher_head(teacher_u, "identity network");
  check(cfg.mode == StimulusMode::generator, "inhibitory generation runs in generator mode");
  check_generator_fits(cfg, teacher_y);
  check(same_shape(teacher_u.spec().input, teacher_y.spec().input),
        "identity network input ", shape_string(teacher_u.spec().input),
        " does not match the teacher's ", shape_string(teacher_y.spec().input));
  check(static_cast<int>(marginal.size()) == teacher_u.spec().output_units(),
        "marginal has ", marginal.size(), " entries but the identity network emits ",
        teacher_u.spec().output_units());
  const double h = marginal_entropy(marginal);
  check(h > 0.0,
        "identity marginal has zero entropy, so the proximity bound TH_U is 0 and no stimulus "
        "can satisfy L_U < TH_U; anonymization needs at least two plausible identities");
  const double th_u = cfg.inhibitory.threshold_multiplier * h;

  GenPlan plan;
  plan.teacher_y = &teacher_y;
  plan.teacher_u = &teacher_u;
  plan.marginal = &marginal;
  plan.th_u = th_u;
  plan.cfg = &cfg;
  plan.count = count;
  plan.seed = seed;
  plan.classes = teacher_y.spec().output_units();

  StimulusDataset ds;
  ds.items = run_plan(plan);
  ds.input_shape = teacher_y.spec().input;
  ds.classes = plan.classes;
  ds.teacher_digest = weights_digest(teacher_y);
  {
    std::ostringstream os;
    os.precision(17);
    os << cfg.signature() << "identity " << weights_digest(teacher_u) << "\nmarginal";
    for (double p : marginal) os << " " << p;
    os << "\n";
    ds.config_digest = sha256_hex(os.str());
  }
  ds.seed = seed;
  return ds;
}

Tensor label_stimuli(const Network& teacher, const Tensor& data, LabelMode mode) {
  check_teacher_head(teacher, "teacher");
  const Tensor probs = teacher.predict(data);
  if (mode == LabelMode::soft) return probs;
  const int64_t n = probs.dim(0), k = probs.dim(1);
  Tensor hard({n, k});
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j)
      if (probs.at(i, j) > probs.at(i, best)) best = j;
    hard.at(i, best) = 1.0f;
  }
  return hard;
}

Tensor StimulusDataset::stacked_data() const {
  check(!items.empty(), "stimulus dataset is empty");
  Shape s = batched(input_shape);
  s[0] = size();
  Tensor x(s);
  const int64_t ex = shape_numel(input_shape);
  for (int64_t i = 0; i < size(); ++i) {
    const Stimulus& st = items[static_cast<size_t>(i)];
    check(st.data.numel() == ex, "stimulus ", i, " has shape ", shape_string(st.data.shape()),
          ", dataset expects ", shape_string(input_shape));
    std::copy(st.data.data(), st.data.data() + ex, x.data() + i * ex);
  }
  return x;
}

LabeledDataset StimulusDataset::as_labeled() const {
  LabeledDataset d;
  d.classes = classes;
  d.x = stacked_data();
  d.labels.resize(static_cast<size_t>(size()));
  d.soft = Tensor({size(), classes});
  for (int64_t i = 0; i < size(); ++i) {
    const Stimulus& st = items[static_cast<size_t>(i)];
    check(static_cast<int>(st.soft.size()) == classes, "stimulus ", i, " carries ",
          st.soft.size(), " label entries, expected ", classes);
    d.labels[static_cast<size_t>(i)] = st.target;
    std::copy(st.soft.begin(), st.soft.end(), d.soft.data() + i * classes);
  }
  d.validate();
  return d;
}

void StimulusDataset::save(const std::string& dir) const {
  check(!items.empty(), "refusing to save an empty stimulus dataset");
  ensure_dir(dir);

  // thresholds are stored as indices into the manifest's threshold table so
  // the doubles survive the float32 tensor container exactly
  std::vector<double> table;
  Tensor meta({size(), 6});
  for (int64_t i = 0; i < size(); ++i) {
    const Stimulus& st = items[static_cast<size_t>(i)];
    size_t ti = 0;
    for (; ti < table.size(); ++ti)
      if (table[ti] == st.threshold) break;
    if (ti == table.size()) table.push_back(st.threshold);
    meta.at(i, 0) = static_cast<float>(st.target);
    meta.at(i, 1) = static_cast<float>(ti);
    meta.at(i, 2) = static_cast<float>(st.steps);
    meta.at(i, 3) = static_cast<float>(st.generation);
    meta.at(i, 4) = static_cast<float>(st.reinits);
    meta.at(i, 5) = st.edited ? 1.0f : 0.0f;
  }
  write_tensor_file(dir + "/data.bin", {stacked_data(), meta});

  Tensor soft({size(), classes});
  for (int64_t i = 0; i < size(); ++i)
    std::copy(items[static_cast<size_t>(i)].soft.begin(), items[static_cast<size_t>(i)].soft.end(),
              soft.data() + i * classes);
  write_tensor_file(dir + "/labels.bin", {soft});

  nlohmann::json m;
  m["kind"] = "stimulus-dataset";
  m["count"] = size();
  m["classes"] = classes;
  m["input_shape"] = input_shape;
  m["seed"] = seed;
  m["teacher_digest"] = teacher_digest;
  m["config_digest"] = config_digest;
  m["thresholds"] = table;
  write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
}

StimulusDataset StimulusDataset::load(const std::string& dir) {
  const std::string mpath = dir + "/manifest.json";
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    fail("cannot parse '", mpath, "': ", e.what());
  }
  check(m.value("kind", "") == "stimulus-dataset", "'", mpath, "' is not a stimulus dataset");

  StimulusDataset ds;
  ds.classes = m.at("classes").get<int>();
  ds.input_shape = m.at("input_shape").get<Shape>();
  ds.seed = m.at("seed").get<uint64_t>();
  ds.teacher_digest = m.at("teacher_digest").get<std::string>();
  ds.config_digest = m.at("config_digest").get<std::string>();
  const auto table = m.at("thresholds").get<std::vector<double>>();
  const int64_t count = m.at("count").get<int64_t>();

  const std::vector<Tensor> dd = read_tensor_file(dir + "/data.bin");
  check(dd.size() == 2, "'", dir, "/data.bin' should hold data and meta tensors, holds ",
        dd.size());
  const Tensor& x = dd[0];
  const Tensor& meta = dd[1];
  const std::vector<Tensor> ll = read_tensor_file(dir + "/labels.bin");
  check(ll.size() == 1, "'", dir, "/labels.bin' should hold one tensor, holds ", ll.size());
  const Tensor& soft = ll[0];

  check(x.dim(0) == count && meta.dim(0) == count && soft.dim(0) == count, "dataset '", dir,
        "' is inconsistent: manifest says ", count, " stimuli, files hold ", x.dim(0), "/",
        meta.dim(0), "/", soft.dim(0));
  check(meta.rank() == 2 && meta.dim(1) == 6, "meta tensor has shape ",
        shape_string(meta.shape()), ", expected (n,6)");
  check(soft.rank() == 2 && soft.dim(1) == ds.classes, "label tensor has shape ",
        shape_string(soft.shape()), ", expected (n,", ds.classes, ")");
  const int64_t ex = shape_numel(ds.input_shape);
  check(x.numel() == count * ex, "data tensor has shape ", shape_string(x.shape()),
        " which does not match input shape ", shape_string(ds.input_shape));

  ds.items.resize(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    Stimulus& st = ds.items[static_cast<size_t>(i)];
    st.data = Tensor(ds.input_shape);
    std::copy(x.data() + i * ex, x.data() + (i + 1) * ex, st.data.data());
    st.soft.assign(soft.data() + i * ds.classes, soft.data() + (i + 1) * ds.classes);
    st.target = static_cast<int>(meta.at(i, 0));
    const size_t ti = static_cast<size_t>(meta.at(i, 1));
    check(ti < table.size(), "stimulus ", i, " references threshold entry ", ti,
          " but the manifest lists ", table.size());
    st.threshold = table[ti];
    st.steps = static_cast<int>(meta.at(i, 2));
    st.generation = static_cast<int>(meta.at(i, 3));
    st.reinits = static_cast<int>(meta.at(i, 4));
    st.edited = meta.at(i, 5) != 0.0f;
  }
  return ds;
}

StimulusAudit audit_stimuli(const StimulusDataset& ds, const Network& teacher) {
  check_teacher_head(teacher, "teacher");
  check(teacher.spec().output_units() == ds.classes, "teacher emits ",
        teacher.spec().output_units(), " classes, dataset holds ", ds.classes);
  StimulusAudit a;
  for (const Stimulus& st : ds.items) {
    // batch of one mirrors the arithmetic of generation exactly
    const Tensor probs = teacher.predict(st.data.reshaped(batched(ds.input_shape)), 1);
    if (!stop_rule(probs.data(), ds.classes, st.target, st.threshold)) ++a.violations;
    ++a.checked;
  }
  return a;
}

StimulusAudit audit_inhibitory(const StimulusDataset& ds, const Network& identity,
                               const std::vector<double>& marginal, double multiplier) {
  check_teacher_head(identity, "identity network");
  check(static_cast<int>(marginal.size()) == identity.spec().output_units(),
        "marginal has ", marginal.size(), " entries but the identity network emits ",
        identity.spec().output_units());
  const double th_u = multiplier * marginal_entropy(marginal);
  StimulusAudit a;
  for (const Stimulus& st : ds.items) {
    const Tensor probs = identity.predict(st.data.reshaped(batched(ds.input_shape)), 1);
    if (!(cross_entropy_to_marginal(probs.data(), marginal) < th_u)) ++a.violations;
    ++a.checked;
  }
  return a;
}

}  // namespace amkt
