#include "amkt/learners.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>

#include "amkt/error.hpp"
#include "amkt/metrics.hpp"
#include "amkt/rng.hpp"

namespace amkt {

namespace {

int64_t row_width(const Tensor& x) {
  if (x.empty() || x.rank() < 1) fail("learner input must be a non-empty (N,...) tensor");
  return x.numel() / x.dim(0);
}

void check_training_data(const LabeledDataset& data, const char* who) {
  data.validate();
  if (data.size() == 0) fail(who, " needs a non-empty training set");
  std::set<int> seen(data.labels.begin(), data.labels.end());
  if (seen.size() < 2) fail(who, " needs at least two classes in the training data");
}

}  // namespace

Tensor LinearSvm::scores(const Tensor& x) const {
  const int64_t n = x.dim(0);
  const int64_t d = row_width(x);
  if (d != w.dim(1)) {
    fail("svm expects rows of width ", w.dim(1), ", got ", shape_string(x.shape()));
  }
  Tensor out = Tensor::zeros({n, static_cast<int64_t>(classes)});
  for (int64_t i = 0; i < n; ++i) {
    const float* row = x.data() + i * d;
    for (int k = 0; k < classes; ++k) {
      const float* wk = w.data() + static_cast<int64_t>(k) * d;
      double acc = bias.data()[k];
      for (int64_t j = 0; j < d; ++j) acc += static_cast<double>(wk[j]) * row[j];
      out.at(i, k) = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<int> LinearSvm::predict(const Tensor& x) const {
  return argmax_rows(scores(x));
}

LinearSvm train_linear_svm(const LabeledDataset& data, int epochs, double lr,
                           double regularization, uint64_t seed) {
  check_training_data(data, "linear svm");
  if (epochs < 1) fail("svm epochs must be >= 1");
  if (lr <= 0.0) fail("svm learning rate must be positive");
  if (regularization < 0.0) fail("svm regularization must be nonnegative");

  const int64_t n = data.size();
  const int64_t d = row_width(data.x);
  const int classes = data.classes;

  LinearSvm model;
  model.classes = classes;
  model.w = Tensor::zeros({static_cast<int64_t>(classes), d});
  model.bias = Tensor::zeros({static_cast<int64_t>(classes)});

  Rng rng(seed);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<int> order = rng.permutation(static_cast<int>(n));
    for (int idx : order) {
      const float* row = data.x.data() + static_cast<int64_t>(idx) * d;
      for (int k = 0; k < classes; ++k) {
        float* wk = model.w.data() + static_cast<int64_t>(k) * d;
        float& bk = model.bias.data()[k];
        const double y = data.labels[idx] == k ? 1.0 : -1.0;
        double margin = bk;
        for (int64_t j = 0; j < d; ++j) margin += static_cast<double>(wk[j]) * row[j];
        margin *= y;
        const float shrink = static_cast<float>(1.0 - lr * regularization);
        if (margin < 1.0) {
          const float step = static_cast<float>(lr * y);
          for (int64_t j = 0; j < d; ++j) wk[j] = shrink * wk[j] + step * row[j];
          bk += step;
        } else {
          for (int64_t j = 0; j < d; ++j) wk[j] *= shrink;
        }
      }
    }
  }
  return model;
}

int ForestTree::predict_row(const float* row) const {
  int cur = 0;
  while (nodes[cur].feature >= 0) {
    const ForestNode& nd = nodes[cur];
    cur = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
  }
  return nodes[cur].label;
}

std::vector<int> RandomForest::predict(const Tensor& x) const {
  const int64_t n = x.dim(0);
  const int64_t d = row_width(x);
  std::vector<int> out(n, 0);
  std::vector<int> votes(classes);
  for (int64_t i = 0; i < n; ++i) {
    const float* row = x.data() + i * d;
    std::fill(votes.begin(), votes.end(), 0);
    for (const ForestTree& t : trees) ++votes[t.predict_row(row)];
    out[i] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

namespace {

struct TreeBuilder {
  const Tensor& x;
  const std::vector<int>& labels;
  int64_t d;
  int classes;
  int max_depth;
  int mtry;
  Rng& rng;
  ForestTree& tree;
  std::vector<int> feature_pool;  // scratch for per-node feature sampling

  double gini(const std::vector<int64_t>& counts, int64_t total) const {
    double g = 1.0;
    for (int64_t c : counts) {
      const double p = static_cast<double>(c) / static_cast<double>(total);
      g -= p * p;
    }
    return g;
  }

  int majority(const std::vector<int64_t>& counts) const {
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  // Grows the subtree over `rows` (indices into x) and returns its node id.
  int build(std::vector<int>& rows, int depth) {
    std::vector<int64_t> counts(classes, 0);
    for (int r : rows) ++counts[labels[r]];
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[node_id].label = majority(counts);

    const int64_t n = static_cast<int64_t>(rows.size());
    const bool pure = *std::max_element(counts.begin(), counts.end()) == n;
    if (depth >= max_depth || pure || n < 2) return node_id;

    // Candidate features: mtry distinct indices via partial Fisher-Yates.
    for (int m = 0; m < mtry; ++m) {
      const int pick = m + rng.uniform_int(static_cast<int>(d - m));
      std::swap(feature_pool[m], feature_pool[pick]);
    }

    double best_score = 0.0;
    int best_feature = -1;
    float best_threshold = 0.f;
    std::vector<std::pair<float, int>> vals(n);
    std::vector<int64_t> left_counts(classes), right_counts(classes);
    for (int m = 0; m < mtry; ++m) {
      const int f = feature_pool[m];
      for (int64_t i = 0; i < n; ++i) {
        vals[i] = {x.data()[static_cast<int64_t>(rows[i]) * d + f], labels[rows[i]]};
      }
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;  // constant on this node
      std::fill(left_counts.begin(), left_counts.end(), 0);
      right_counts = counts;
      for (int64_t i = 0; i + 1 < n; ++i) {
        ++left_counts[vals[i].second];
        --right_counts[vals[i].second];
        const float lo = vals[i].first;
        const float hi = vals[i + 1].first;
        if (lo == hi) continue;
        const int64_t nl = i + 1;
        const int64_t nr = n - nl;
        const double score = (static_cast<double>(nl) * gini(left_counts, nl) +
                              static_cast<double>(nr) * gini(right_counts, nr)) /
                             static_cast<double>(n);
        if (best_feature < 0 || score < best_score) {
          best_score = score;
          best_feature = f;
          // Midpoint, pulled back to lo if rounding lands on hi so that
          // "value <= threshold" always separates lo from hi.
          float mid = 0.5f * (lo + hi);
          if (!(lo <= mid && mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return node_id;  // every candidate feature constant

    std::vector<int> left_rows, right_rows;
    for (int r : rows) {
      const float v = x.data()[static_cast<int64_t>(r) * d + best_feature];
      (v <= best_threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int left_id = build(left_rows, depth + 1);
    const int right_id = build(right_rows, depth + 1);
    tree.nodes[node_id].feature = best_feature;
    tree.nodes[node_id].threshold = best_threshold;
    tree.nodes[node_id].left = left_id;
    tree.nodes[node_id].right = right_id;
    return node_id;
  }
};

constexpr uint64_t kTreeTag = 0x666f726573740000ull;

}  // namespace

RandomForest train_random_forest(const LabeledDataset& data, int trees, int max_depth,
                                 uint64_t seed) {
  check_training_data(data, "random forest");
  if (trees < 1) fail("forest needs at least one tree");
  if (max_depth < 0) fail("forest max depth must be nonnegative");

  const int64_t n = data.size();
  const int64_t d = row_width(data.x);
  const int mtry = std::min<int64_t>(
      d, std::max<int64_t>(1, std::llround(std::sqrt(static_cast<double>(d)))));

  RandomForest forest;
  forest.classes = data.classes;
  forest.trees.resize(trees);
  for (int t = 0; t < trees; ++t) {
    Rng rng(seed ^ (kTreeTag + static_cast<uint64_t>(t)));
    std::vector<int> sample(n);
    for (int64_t i = 0; i < n; ++i) sample[i] = rng.uniform_int(static_cast<int>(n));
    TreeBuilder builder{data.x,   data.labels, d,   data.classes, max_depth,
                        int(mtry), rng,        forest.trees[t], {}};
    builder.feature_pool.resize(d);
    std::iota(builder.feature_pool.begin(), builder.feature_pool.end(), 0);
    builder.build(sample, 0);
  }
  return forest;
}

double prediction_accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) fail("prediction/label count mismatch");
  if (predicted.empty()) fail("accuracy over an empty set is undefined");
  int64_t hits = 0;
  for (size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

}  // namespace amkt
