#pragma once

#include <cstdint>
#include <vector>

#include "amkt/tensor.hpp"

namespace amkt {

// Row = reference class, column = predicted class. Counts are integers, so
// the derived rates are exact up to one floating-point division and do not
// depend on accumulation order.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  int classes() const { return classes_; }
  void add(int ref, int pred, int64_t n = 1);
  int64_t at(int ref, int pred) const;
  int64_t total() const;
  int64_t row_total(int ref) const;
  int64_t col_total(int pred) const;

  double accuracy() const;
  // Cohen's kappa, (p_o - p_e) / (1 - p_e). Raises Error when the chance
  // agreement p_e is exactly 1 (single-cell degenerate matrices).
  double kappa() const;
  // Binary only; class 1 is the positive class.
  double sensitivity() const;
  double specificity() const;

 private:
  int classes_;
  std::vector<int64_t> counts_;
};

ConfusionMatrix confusion(const std::vector<int>& ref, const std::vector<int>& pred, int classes);

std::vector<int> argmax_rows(const Tensor& probs);

struct MeanErr {
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};

// Mean and standard error (sample sd over sqrt(n)).
MeanErr mean_stderr(const std::vector<double>& v);

double median(std::vector<double> v);

}  // namespace amkt
