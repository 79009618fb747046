#pragma once

#include <cstdint>
#include <vector>

#include "amkt/data.hpp"
#include "amkt/tensor.hpp"

namespace amkt {

// Shallow baseline learners used by the class-recognition probe. Both
// consume flattened example rows: a dataset of shape (N, ...) is treated
// as (N, d) with d the trailing element count.

// One-vs-rest linear SVM. Each class gets a hinge-loss binary subproblem
// (+1 for the class, -1 for the rest) minimized by stochastic subgradient
// descent with an l2 penalty on the weights (bias unregularized).
struct LinearSvm {
  Tensor w;     // (classes, d)
  Tensor bias;  // (classes)
  int classes = 0;

  // Raw decision values w*x+b, shape (n, classes).
  Tensor scores(const Tensor& x) const;
  // Argmax of scores per row; ties go to the lowest class index.
  std::vector<int> predict(const Tensor& x) const;
};

LinearSvm train_linear_svm(const LabeledDataset& data, int epochs = 30, double lr = 0.01,
                           double regularization = 1e-4, uint64_t seed = 1);

// CART random forest: each tree is grown on a bootstrap resample with Gini
// splits chosen over a fresh round(sqrt(d)) feature sample per node.
struct ForestNode {
  int feature = -1;  // -1 marks a leaf
  float threshold = 0.f;
  int left = -1;
  int right = -1;
  int label = 0;  // majority class when leaf
};

struct ForestTree {
  std::vector<ForestNode> nodes;

  int predict_row(const float* row) const;
};

struct RandomForest {
  std::vector<ForestTree> trees;
  int classes = 0;

  // Majority vote across trees; ties go to the lowest class index.
  std::vector<int> predict(const Tensor& x) const;
};

RandomForest train_random_forest(const LabeledDataset& data, int trees = 50, int max_depth = 16,
                                 uint64_t seed = 1);

// Fraction of rows where predicted == labels.
double prediction_accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

}  // namespace amkt
