#pragma once

#include <vector>

#include "amkt/tensor.hpp"

namespace amkt {

// Optimizers mutate parameter tensors in place given matching gradient
// buffers. State (for Adam) is keyed by position, so the same parameter list
// must be passed in the same order on every step.

template <typename T>
class SgdT {
 public:
  explicit SgdT(double lr) : lr_(lr) {}

  void step(const std::vector<TensorT<T>*>& params, const std::vector<const TensorT<T>*>& grads) {
    check(params.size() == grads.size(), "optimizer got ", params.size(), " params but ",
          grads.size(), " grads");
    for (size_t p = 0; p < params.size(); ++p) {
      TensorT<T>& w = *params[p];
      const TensorT<T>& g = *grads[p];
      check(same_shape(w.shape(), g.shape()), "gradient shape mismatch on parameter ", p);
      const T lr = static_cast<T>(lr_);
      for (int64_t i = 0; i < w.numel(); ++i) w[i] -= lr * g[i];
    }
  }

 private:
  double lr_;
};

template <typename T>
class AdamT {
 public:
  explicit AdamT(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<TensorT<T>*>& params, const std::vector<const TensorT<T>*>& grads) {
    check(params.size() == grads.size(), "optimizer got ", params.size(), " params but ",
          grads.size(), " grads");
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
      }
    }
    check(m_.size() == params.size(), "Adam state was built for ", m_.size(), " params, got ",
          params.size());
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t p = 0; p < params.size(); ++p) {
      TensorT<T>& w = *params[p];
      const TensorT<T>& g = *grads[p];
      check(same_shape(w.shape(), g.shape()), "gradient shape mismatch on parameter ", p);
      TensorT<T>& m = m_[p];
      TensorT<T>& v = v_[p];
      const T b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_);
      for (int64_t i = 0; i < w.numel(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const double mhat = static_cast<double>(m[i]) / c1;
        const double vhat = static_cast<double>(v[i]) / c2;
        w[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

 private:
  double lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<TensorT<T>> m_, v_;
};

using Sgd = SgdT<float>;
using Adam = AdamT<float>;

}  // namespace amkt
