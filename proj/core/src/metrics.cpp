#include "amkt/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace amkt {

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  check(classes >= 2, "confusion matrix needs at least 2 classes");
  counts_.assign(static_cast<size_t>(classes) * static_cast<size_t>(classes), 0);
}

void ConfusionMatrix::add(int ref, int pred, int64_t n) {
  check(ref >= 0 && ref < classes_ && pred >= 0 && pred < classes_, "confusion entry (", ref, ",",
        pred, ") outside ", classes_, " classes");
  counts_[static_cast<size_t>(ref * classes_ + pred)] += n;
}

int64_t ConfusionMatrix::at(int ref, int pred) const {
  return counts_[static_cast<size_t>(ref * classes_ + pred)];
}

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (int64_t c : counts_) t += c;
  return t;
}

int64_t ConfusionMatrix::row_total(int ref) const {
  int64_t t = 0;
  for (int p = 0; p < classes_; ++p) t += at(ref, p);
  return t;
}

int64_t ConfusionMatrix::col_total(int pred) const {
  int64_t t = 0;
  for (int r = 0; r < classes_; ++r) t += at(r, pred);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const int64_t n = total();
  check(n > 0, "accuracy of an empty confusion matrix");
  int64_t agree = 0;
  for (int k = 0; k < classes_; ++k) agree += at(k, k);
  return static_cast<double>(agree) / static_cast<double>(n);
}

double ConfusionMatrix::kappa() const {
  const int64_t n = total();
  check(n > 0, "kappa of an empty confusion matrix");
  int64_t agree = 0;
  int64_t chance = 0;  // sum_k row_k * col_k
  for (int k = 0; k < classes_; ++k) {
    agree += at(k, k);
    chance += row_total(k) * col_total(k);
  }
  check(chance != n * n, "kappa is undefined: chance agreement is 1 (all mass in one cell)");
  const double po = static_cast<double>(agree) / static_cast<double>(n);
  const double pe = static_cast<double>(chance) / (static_cast<double>(n) * static_cast<double>(n));
  return (po - pe) / (1.0 - pe);
}

double ConfusionMatrix::sensitivity() const {
  check(classes_ == 2, "sensitivity is defined for binary matrices");
  const int64_t pos = row_total(1);
  check(pos > 0, "sensitivity is undefined without positive examples");
  return static_cast<double>(at(1, 1)) / static_cast<double>(pos);
}

double ConfusionMatrix::specificity() const {
  check(classes_ == 2, "specificity is defined for binary matrices");
  const int64_t neg = row_total(0);
  check(neg > 0, "specificity is undefined without negative examples");
  return static_cast<double>(at(0, 0)) / static_cast<double>(neg);
}

ConfusionMatrix confusion(const std::vector<int>& ref, const std::vector<int>& pred, int classes) {
  check(ref.size() == pred.size(), "confusion needs matching reference and prediction lengths, got ",
        ref.size(), " and ", pred.size());
  ConfusionMatrix m(classes);
  for (size_t i = 0; i < ref.size(); ++i) m.add(ref[i], pred[i]);
  return m;
}

std::vector<int> argmax_rows(const Tensor& probs) {
  check(probs.rank() == 2, "argmax_rows expects (N,K), got ", shape_string(probs.shape()));
  const int64_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    for (int64_t j = 1; j < k; ++j)
      if (probs.at(i, j) > probs.at(i, best)) best = static_cast<int>(j);
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

MeanErr mean_stderr(const std::vector<double>& v) {
  MeanErr r;
  r.n = static_cast<int>(v.size());
  if (v.empty()) return r;
  double sum = 0.0;
  for (double x : v) sum += x;
  r.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(ss / static_cast<double>(v.size() - 1)) /
                std::sqrt(static_cast<double>(v.size()));
  }
  return r;
}

double median(std::vector<double> v) {
  check(!v.empty(), "median of an empty list");
  std::sort(v.begin(), v.end());
  const size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace amkt
