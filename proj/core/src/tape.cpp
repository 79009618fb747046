#include "amkt/tape.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <utility>

namespace amkt {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

template <typename T>
bool buffer_finite(const TensorT<T>& t) {
  if (t.empty()) return true;
  return Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(t.data(), t.numel()).allFinite();
}

struct ConvGeom {
  int64_t out = 0;
  int64_t pad_begin = 0;
};

ConvGeom conv_geom(int64_t in, int64_t k, int64_t stride, Padding p, const char* op) {
  check(stride >= 1, op, ": stride must be >= 1");
  if (p == Padding::valid) {
    check(in >= k, op, ": input extent ", in, " smaller than kernel ", k, " with valid padding");
    return {(in - k) / stride + 1, 0};
  }
  const int64_t out = (in + stride - 1) / stride;
  const int64_t total = std::max<int64_t>((out - 1) * stride + k - in, 0);
  return {out, total / 2};
}

// Gathers convolution patches; cols is (N*OH*OW, C*KH*KW) row-major.
template <typename T>
void im2col2d(const TensorT<T>& x, int64_t kh, int64_t kw, int64_t stride, int64_t ph, int64_t pw,
              int64_t oh, int64_t ow, std::vector<T>& cols) {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  cols.assign(static_cast<size_t>(n * oh * ow * c * kh * kw), T(0));
  const T* xp = x.data();
  T* cp = cols.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        T* row = cp + (((in * oh) + oy) * ow + ox) * c * kh * kw;
        for (int64_t ic = 0; ic < c; ++ic) {
          const T* plane = xp + (in * c + ic) * h * w;
          for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t iy = oy * stride - ph + ky;
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t ix = ox * stride - pw + kx;
              T v = T(0);
              if (iy >= 0 && iy < h && ix >= 0 && ix < w) v = plane[iy * w + ix];
              *row++ = v;
            }
          }
        }
      }
    }
  }
}

// Scatter-add of patch gradients back onto the input layout.
template <typename T>
void col2im2d(const std::vector<T>& cols, TensorT<T>& dx, int64_t kh, int64_t kw, int64_t stride,
              int64_t ph, int64_t pw, int64_t oh, int64_t ow) {
  const int64_t n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  const T* cp = cols.data();
  T* xp = dx.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        const T* row = cp + (((in * oh) + oy) * ow + ox) * c * kh * kw;
        for (int64_t ic = 0; ic < c; ++ic) {
          T* plane = xp + (in * c + ic) * h * w;
          for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t iy = oy * stride - ph + ky;
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t ix = ox * stride - pw + kx;
              if (iy >= 0 && iy < h && ix >= 0 && ix < w) plane[iy * w + ix] += *row;
              ++row;
            }
          }
        }
      }
    }
  }
}

template <typename T>
void im2col1d(const TensorT<T>& x, int64_t k, int64_t stride, int64_t pad, int64_t ol,
              std::vector<T>& cols) {
  const int64_t n = x.dim(0), c = x.dim(1), l = x.dim(2);
  cols.assign(static_cast<size_t>(n * ol * c * k), T(0));
  const T* xp = x.data();
  T* cp = cols.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t o = 0; o < ol; ++o) {
      T* row = cp + ((in * ol) + o) * c * k;
      for (int64_t ic = 0; ic < c; ++ic) {
        const T* line = xp + (in * c + ic) * l;
        for (int64_t kk = 0; kk < k; ++kk) {
          const int64_t i = o * stride - pad + kk;
          *row++ = (i >= 0 && i < l) ? line[i] : T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im1d(const std::vector<T>& cols, TensorT<T>& dx, int64_t k, int64_t stride, int64_t pad,
              int64_t ol) {
  const int64_t n = dx.dim(0), c = dx.dim(1), l = dx.dim(2);
  const T* cp = cols.data();
  T* xp = dx.data();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t o = 0; o < ol; ++o) {
      const T* row = cp + ((in * ol) + o) * c * k;
      for (int64_t ic = 0; ic < c; ++ic) {
        T* line = xp + (in * c + ic) * l;
        for (int64_t kk = 0; kk < k; ++kk) {
          const int64_t i = o * stride - pad + kk;
          if (i >= 0 && i < l) line[i] += *row;
          ++row;
        }
      }
    }
  }
}

}  // namespace

int64_t conv_output_extent(int64_t in, int64_t kernel, int64_t stride, Padding p) {
  return conv_geom(in, kernel, stride, p, "conv").out;
}

int64_t deconv_output_extent(int64_t in, int64_t kernel, int64_t stride, Padding p) {
  check(stride >= 1 && kernel >= 1 && in >= 1, "deconv: bad geometry");
  return p == Padding::valid ? (in - 1) * stride + kernel : in * stride;
}

int64_t pool_output_extent(int64_t in, int64_t window, bool ceil_mode) {
  check(window >= 1, "maxpool: window must be >= 1");
  const int64_t out = ceil_mode ? (in + window - 1) / window : in / window;
  check(out >= 1, "maxpool: window ", window, " larger than input extent ", in);
  return out;
}

template <typename T>
void TapeT<T>::truncate(size_t n) {
  check(n <= nodes_.size(), "truncate(", n, ") past the tape end (", nodes_.size(), ")");
  nodes_.resize(n);
  for (Node& nd : nodes_) nd.grad = Ten();
}

template <typename T>
int TapeT<T>::push(Ten val, bool needs_grad, std::function<void(TapeT&)> bw, const char* op) {
  if (finite_checks_ && !buffer_finite(val)) fail_numeric(op, " produced a non-finite value");
  Node nd;
  nd.val = std::move(val);
  nd.requires_grad = needs_grad;
  nd.backward = std::move(bw);
  nd.op = op;
  nodes_.push_back(std::move(nd));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
void TapeT<T>::add_grad(int id, const Ten& g) {
  Ten& dst = grad(id);
  T* d = dst.data();
  const T* s = g.data();
  const int64_t n = dst.numel();
  for (int64_t i = 0; i < n; ++i) d[i] += s[i];
}

template <typename T>
typename TapeT<T>::Ten& TapeT<T>::grad(int id) {
  Node& nd = at(id);
  if (nd.grad.empty()) nd.grad = Ten(nd.val.shape());
  return nd.grad;
}

template <typename T>
int TapeT<T>::leaf(Ten v, bool requires_grad) {
  return push(std::move(v), requires_grad, nullptr, "leaf");
}

template <typename T>
void TapeT<T>::backward(int node) {
  Node& loss = at(node);
  check(loss.val.numel() == 1, "backward requires a scalar node, got shape ",
        shape_string(loss.val.shape()));
  grad(node)[0] += T(1);
  for (int i = node; i >= 0; --i) {
    Node& nd = nodes_[static_cast<size_t>(i)];
    if (nd.grad.empty()) continue;
    if (nd.backward) {
      nd.backward(*this);
      nd.grad = Ten();  // consumed; leaves keep theirs
    }
  }
}

template <typename T>
int TapeT<T>::matmul(int a, int b) {
  const Ten& av = value(a);
  const Ten& bv = value(b);
  check(av.rank() == 2 && bv.rank() == 2, "matmul expects rank-2 operands, got ",
        shape_string(av.shape()), " and ", shape_string(bv.shape()));
  check(av.dim(1) == bv.dim(0), "matmul inner dimensions disagree: ", shape_string(av.shape()),
        " x ", shape_string(bv.shape()));
  const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Ten out({m, n});
  MapM<T>(out.data(), m, n).noalias() = CMapM<T>(av.data(), m, k) * CMapM<T>(bv.data(), k, n);
  const bool req = requires_grad(a) || requires_grad(b);
  int id = push(std::move(out), req, nullptr, "matmul");
  at(id).backward = [a, b, id, m, k, n](TapeT& tp) {
    CMapM<T> g(tp.grad(id).data(), m, n);
    if (tp.requires_grad(a)) {
      MapM<T> da(tp.grad(a).data(), m, k);
      da.noalias() += g * CMapM<T>(tp.value(b).data(), k, n).transpose();
    }
    if (tp.requires_grad(b)) {
      MapM<T> db(tp.grad(b).data(), k, n);
      db.noalias() += CMapM<T>(tp.value(a).data(), m, k).transpose() * g;
    }
  };
  return id;
}

template <typename T>
int TapeT<T>::add(int a, int b) {
  const Ten& av = value(a);
  const Ten& bv = value(b);
  check(same_shape(av.shape(), bv.shape()), "add shape mismatch: ", shape_string(av.shape()),
        " vs ", shape_string(bv.shape()));
  Ten out(av.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = av[i] + bv[i];
  int id = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr, "add");
  at(id).backward = [a, b, id](TapeT& tp) {
    const Ten& g = tp.grad(id);
    if (tp.requires_grad(a)) tp.add_grad(a, g);
    if (tp.requires_grad(b)) tp.add_grad(b, g);
  };
  return id;
}

template <typename T>
int TapeT<T>::add_bias(int x, int b) {
  const Ten& xv = value(x);
  const Ten& bv = value(b);
  check(xv.rank() == 2 && bv.rank() == 1 && xv.dim(1) == bv.dim(0),
        "add_bias expects (M,N) plus (N), got ", shape_string(xv.shape()), " and ",
        shape_string(bv.shape()));
  const int64_t m = xv.dim(0), n = xv.dim(1);
  Ten out({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(i, j) = xv.at(i, j) + bv[j];
  int id = push(std::move(out), requires_grad(x) || requires_grad(b), nullptr, "add_bias");
  at(id).backward = [x, b, id, m, n](TapeT& tp) {
    const Ten& g = tp.grad(id);
    if (tp.requires_grad(x)) tp.add_grad(x, g);
    if (tp.requires_grad(b)) {
      Ten& db = tp.grad(b);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) db[j] += g[i * n + j];
    }
  };
  return id;
}

template <typename T>
int TapeT<T>::affine(int x, double alpha, double beta) {
  const Ten& xv = value(x);
  Ten out(xv.shape());
  const T a = static_cast<T>(alpha), c = static_cast<T>(beta);
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a * xv[i] + c;
  int id = push(std::move(out), requires_grad(x), nullptr, "affine");
  at(id).backward = [x, id, a](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    Ten& dx = tp.grad(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) dx[i] += a * g[i];
  };
  return id;
}

template <typename T>
int TapeT<T>::relu(int x) {
  const Ten& xv = value(x);
  Ten out(xv.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  int id = push(std::move(out), requires_grad(x), nullptr, "relu");
  at(id).backward = [x, id](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    const Ten& y = tp.value(id);
    Ten& dx = tp.grad(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i)
      if (y[i] > T(0)) dx[i] += g[i];
  };
  return id;
}

template <typename T>
int TapeT<T>::tanh_act(int x) {
  const Ten& xv = value(x);
  Ten out(xv.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = std::tanh(xv[i]);
  int id = push(std::move(out), requires_grad(x), nullptr, "tanh");
  at(id).backward = [x, id](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    const Ten& y = tp.value(id);
    Ten& dx = tp.grad(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) dx[i] += (T(1) - y[i] * y[i]) * g[i];
  };
  return id;
}

template <typename T>
int TapeT<T>::sigmoid(int x) {
  const Ten& xv = value(x);
  Ten out(xv.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = T(1) / (T(1) + std::exp(-xv[i]));
  int id = push(std::move(out), requires_grad(x), nullptr, "sigmoid");
  at(id).backward = [x, id](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    const Ten& y = tp.value(id);
    Ten& dx = tp.grad(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) dx[i] += y[i] * (T(1) - y[i]) * g[i];
  };
  return id;
}

template <typename T>
int TapeT<T>::elu(int x) {
  const Ten& xv = value(x);
  Ten out(xv.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = xv[i] > T(0) ? xv[i] : static_cast<T>(std::expm1(static_cast<double>(xv[i])));
  int id = push(std::move(out), requires_grad(x), nullptr, "elu");
  at(id).backward = [x, id](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    const Ten& y = tp.value(id);
    Ten& dx = tp.grad(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) dx[i] += (y[i] > T(0) ? T(1) : y[i] + T(1)) * g[i];
  };
  return id;
}

template <typename T>
int TapeT<T>::softmax_rows(int x) {
  const Ten& xv = value(x);
  check(xv.rank() == 2, "softmax expects rank-2 input, got ", shape_string(xv.shape()));
  const int64_t m = xv.dim(0), n = xv.dim(1);
  Ten out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    T mx = xv.at(i, 0);
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xv.at(i, j));
    T sum = T(0);
    for (int64_t j = 0; j < n; ++j) {
      const T e = std::exp(xv.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int64_t j = 0; j < n; ++j) out.at(i, j) /= sum;
  }
  int id = push(std::move(out), requires_grad(x), nullptr, "softmax");
  at(id).backward = [x, id, m, n](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    const Ten& y = tp.value(id);
    Ten& dx = tp.grad(x);
    for (int64_t i = 0; i < m; ++i) {
      T dot = T(0);
      for (int64_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (int64_t j = 0; j < n; ++j) dx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  };
  return id;
}

template <typename T>
int TapeT<T>::dropout(int x, double rate, Rng& rng) {
  check(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1), got ", rate);
  const Ten& xv = value(x);
  const int64_t n = xv.numel();
  auto mask = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (int64_t i = 0; i < n; ++i) (*mask)[static_cast<size_t>(i)] = rng.uniform() < rate ? T(0) : keep_scale;
  Ten out(xv.shape());
  for (int64_t i = 0; i < n; ++i) out[i] = xv[i] * (*mask)[static_cast<size_t>(i)];
  int id = push(std::move(out), requires_grad(x), nullptr, "dropout");
  at(id).backward = [x, id, mask](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    Ten& dx = tp.grad(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) dx[i] += g[i] * (*mask)[static_cast<size_t>(i)];
  };
  return id;
}

template <typename T>
int TapeT<T>::conv2d(int x, int w, int b, int stride, Padding p) {
  const Ten& xv = value(x);
  const Ten& wv = value(w);
  const Ten& bv = value(b);
  check(xv.rank() == 4, "conv2d input must be (N,C,H,W), got ", shape_string(xv.shape()));
  check(wv.rank() == 4, "conv2d kernel must be (Cout,Cin,KH,KW), got ", shape_string(wv.shape()));
  check(xv.dim(1) == wv.dim(1), "conv2d channel mismatch: input has ", xv.dim(1),
        ", kernel expects ", wv.dim(1));
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), iw = xv.dim(3);
  const int64_t co = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  check(bv.rank() == 1 && bv.dim(0) == co, "conv2d bias must have ", co, " entries");
  const ConvGeom gh = conv_geom(h, kh, stride, p, "conv2d");
  const ConvGeom gw = conv_geom(iw, kw, stride, p, "conv2d");
  const int64_t oh = gh.out, ow = gw.out, ckk = c * kh * kw;

  std::vector<T> cols;
  im2col2d(xv, kh, kw, stride, gh.pad_begin, gw.pad_begin, oh, ow, cols);
  Mat<T> out2d(n * oh * ow, co);
  out2d.noalias() = CMapM<T>(cols.data(), n * oh * ow, ckk) * CMapM<T>(wv.data(), co, ckk).transpose();

  Ten out({n, co, oh, ow});
  for (int64_t in = 0; in < n; ++in) {
    MapM<T> dst(out.data() + in * co * oh * ow, co, oh * ow);
    dst = out2d.middleRows(in * oh * ow, oh * ow).transpose();
    for (int64_t ic = 0; ic < co; ++ic) dst.row(ic).array() += bv[ic];
  }

  const bool req = requires_grad(x) || requires_grad(w) || requires_grad(b);
  int id = push(std::move(out), req, nullptr, "conv2d");
  const int64_t ph = gh.pad_begin, pw = gw.pad_begin;
  at(id).backward = [x, w, b, id, stride, ph, pw, oh, ow, kh, kw](TapeT& tp) {
    const Ten& xv = tp.value(x);
    const Ten& wv = tp.value(w);
    const Ten& g = tp.grad(id);
    const int64_t n = xv.dim(0), c = xv.dim(1);
    const int64_t co = wv.dim(0), ckk = c * kh * kw;
    Mat<T> g2d(n * oh * ow, co);
    for (int64_t in = 0; in < n; ++in)
      g2d.middleRows(in * oh * ow, oh * ow) =
          CMapM<T>(g.data() + in * co * oh * ow, co, oh * ow).transpose();
    if (tp.requires_grad(b)) {
      Ten& db = tp.grad(b);
      MapM<T>(db.data(), 1, co) += Mat<T>(g2d.colwise().sum());
    }
    if (tp.requires_grad(w) || tp.requires_grad(x)) {
      if (tp.requires_grad(w)) {
        std::vector<T> cols;
        im2col2d(xv, kh, kw, stride, ph, pw, oh, ow, cols);
        MapM<T> dw(tp.grad(w).data(), co, ckk);
        dw.noalias() += g2d.transpose() * CMapM<T>(cols.data(), n * oh * ow, ckk);
      }
      if (tp.requires_grad(x)) {
        std::vector<T> dcols(static_cast<size_t>(n * oh * ow * ckk));
        MapM<T>(dcols.data(), n * oh * ow, ckk).noalias() = g2d * CMapM<T>(wv.data(), co, ckk);
        col2im2d(dcols, tp.grad(x), kh, kw, stride, ph, pw, oh, ow);
      }
    }
  };
  return id;
}

template <typename T>
int TapeT<T>::conv1d(int x, int w, int b, int stride, Padding p) {
  const Ten& xv = value(x);
  const Ten& wv = value(w);
  const Ten& bv = value(b);
  check(xv.rank() == 3, "conv1d input must be (N,C,L), got ", shape_string(xv.shape()));
  check(wv.rank() == 3, "conv1d kernel must be (Cout,Cin,K), got ", shape_string(wv.shape()));
  check(xv.dim(1) == wv.dim(1), "conv1d channel mismatch: input has ", xv.dim(1),
        ", kernel expects ", wv.dim(1));
  const int64_t n = xv.dim(0), c = xv.dim(1), l = xv.dim(2);
  const int64_t co = wv.dim(0), k = wv.dim(2);
  check(bv.rank() == 1 && bv.dim(0) == co, "conv1d bias must have ", co, " entries");
  const ConvGeom gl = conv_geom(l, k, stride, p, "conv1d");
  const int64_t ol = gl.out, ck = c * k;

  std::vector<T> cols;
  im2col1d(xv, k, stride, gl.pad_begin, ol, cols);
  Mat<T> out2d(n * ol, co);
  out2d.noalias() = CMapM<T>(cols.data(), n * ol, ck) * CMapM<T>(wv.data(), co, ck).transpose();

  Ten out({n, co, ol});
  for (int64_t in = 0; in < n; ++in) {
    MapM<T> dst(out.data() + in * co * ol, co, ol);
    dst = out2d.middleRows(in * ol, ol).transpose();
    for (int64_t ic = 0; ic < co; ++ic) dst.row(ic).array() += bv[ic];
  }

  const bool req = requires_grad(x) || requires_grad(w) || requires_grad(b);
  int id = push(std::move(out), req, nullptr, "conv1d");
  const int64_t pad = gl.pad_begin;
  at(id).backward = [x, w, b, id, stride, pad, ol, k](TapeT& tp) {
    const Ten& xv = tp.value(x);
    const Ten& wv = tp.value(w);
    const Ten& g = tp.grad(id);
    const int64_t n = xv.dim(0), c = xv.dim(1);
    const int64_t co = wv.dim(0), ck = c * k;
    Mat<T> g2d(n * ol, co);
    for (int64_t in = 0; in < n; ++in)
      g2d.middleRows(in * ol, ol) = CMapM<T>(g.data() + in * co * ol, co, ol).transpose();
    if (tp.requires_grad(b)) {
      Ten& db = tp.grad(b);
      MapM<T>(db.data(), 1, co) += Mat<T>(g2d.colwise().sum());
    }
    if (tp.requires_grad(w)) {
      std::vector<T> cols;
      im2col1d(xv, k, stride, pad, ol, cols);
      MapM<T> dw(tp.grad(w).data(), co, ck);
      dw.noalias() += g2d.transpose() * CMapM<T>(cols.data(), n * ol, ck);
    }
    if (tp.requires_grad(x)) {
      std::vector<T> dcols(static_cast<size_t>(n * ol * ck));
      MapM<T>(dcols.data(), n * ol, ck).noalias() = g2d * CMapM<T>(wv.data(), co, ck);
      col2im1d(dcols, tp.grad(x), k, stride, pad, ol);
    }
  };
  return id;
}

template <typename T>
int TapeT<T>::deconv2d(int x, int w, int b, int stride, Padding p) {
  const Ten& xv = value(x);
  const Ten& wv = value(w);
  const Ten& bv = value(b);
  check(xv.rank() == 4, "deconv2d input must be (N,C,H,W), got ", shape_string(xv.shape()));
  check(wv.rank() == 4, "deconv2d kernel must be (Cin,Cout,KH,KW), got ", shape_string(wv.shape()));
  check(xv.dim(1) == wv.dim(0), "deconv2d channel mismatch: input has ", xv.dim(1),
        ", kernel expects ", wv.dim(0));
  const int64_t n = xv.dim(0), ci = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
  const int64_t co = wv.dim(1), kh = wv.dim(2), kw = wv.dim(3);
  check(bv.rank() == 1 && bv.dim(0) == co, "deconv2d bias must have ", co, " entries");
  const int64_t full_h = (ih - 1) * stride + kh, full_w = (iw - 1) * stride + kw;
  const int64_t oh = p == Padding::valid ? full_h : ih * stride;
  const int64_t ow = p == Padding::valid ? full_w : iw * stride;
  const int64_t ch = (full_h - oh) / 2, cw = (full_w - ow) / 2;  // crop offsets
  const int64_t ckk = co * kh * kw;

  Ten out({n, co, oh, ow});
  Mat<T> cols(ckk, ih * iw);
  for (int64_t in = 0; in < n; ++in) {
    cols.noalias() = CMapM<T>(wv.data(), ci, ckk).transpose() * CMapM<T>(xv.data() + in * ci * ih * iw, ci, ih * iw);
    T* op_ = out.data() + in * co * oh * ow;
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t ky = 0; ky < kh; ++ky)
        for (int64_t kx = 0; kx < kw; ++kx) {
          const T* src = cols.data() + ((oc * kh + ky) * kw + kx) * ih * iw;
          for (int64_t y = 0; y < ih; ++y) {
            const int64_t oy = y * stride + ky - ch;
            if (oy < 0 || oy >= oh) continue;
            for (int64_t xx = 0; xx < iw; ++xx) {
              const int64_t ox = xx * stride + kx - cw;
              if (ox >= 0 && ox < ow) op_[(oc * oh + oy) * ow + ox] += src[y * iw + xx];
            }
          }
        }
    for (int64_t oc = 0; oc < co; ++oc) {
      T* plane = op_ + oc * oh * ow;
      for (int64_t i = 0; i < oh * ow; ++i) plane[i] += bv[oc];
    }
  }

  const bool req = requires_grad(x) || requires_grad(w) || requires_grad(b);
  int id = push(std::move(out), req, nullptr, "deconv2d");
  at(id).backward = [x, w, b, id, stride, ch, cw, oh, ow, kh, kw](TapeT& tp) {
    const Ten& xv = tp.value(x);
    const Ten& wv = tp.value(w);
    const Ten& g = tp.grad(id);
    const int64_t n = xv.dim(0), ci = xv.dim(1), ih = xv.dim(2), iw = xv.dim(3);
    const int64_t co = wv.dim(1), ckk = co * kh * kw;
    Mat<T> dcols(ckk, ih * iw);
    for (int64_t in = 0; in < n; ++in) {
      const T* gp = g.data() + in * co * oh * ow;
      dcols.setZero();
      for (int64_t oc = 0; oc < co; ++oc)
        for (int64_t ky = 0; ky < kh; ++ky)
          for (int64_t kx = 0; kx < kw; ++kx) {
            T* dst = dcols.data() + ((oc * kh + ky) * kw + kx) * ih * iw;
            for (int64_t y = 0; y < ih; ++y) {
              const int64_t oy = y * stride + ky - ch;
              if (oy < 0 || oy >= oh) continue;
              for (int64_t xx = 0; xx < iw; ++xx) {
                const int64_t ox = xx * stride + kx - cw;
                if (ox >= 0 && ox < ow) dst[y * iw + xx] = gp[(oc * oh + oy) * ow + ox];
              }
            }
          }
      if (tp.requires_grad(x)) {
        MapM<T> dx(tp.grad(x).data() + in * ci * ih * iw, ci, ih * iw);
        dx.noalias() += CMapM<T>(wv.data(), ci, ckk) * dcols;
      }
      if (tp.requires_grad(w)) {
        MapM<T> dw(tp.grad(w).data(), ci, ckk);
        dw.noalias() += CMapM<T>(xv.data() + in * ci * ih * iw, ci, ih * iw) * dcols.transpose();
      }
      if (tp.requires_grad(b)) {
        Ten& db = tp.grad(b);
        for (int64_t oc = 0; oc < co; ++oc) {
          const T* plane = gp + oc * oh * ow;
          T s = T(0);
          for (int64_t i = 0; i < oh * ow; ++i) s += plane[i];
          db[oc] += s;
        }
      }
    }
  };
  return id;
}

template <typename T>
int TapeT<T>::deconv1d(int x, int w, int b, int stride, Padding p) {
  const Ten& xv = value(x);
  const Ten& wv = value(w);
  const Ten& bv = value(b);
  check(xv.rank() == 3, "deconv1d input must be (N,C,L), got ", shape_string(xv.shape()));
  check(wv.rank() == 3, "deconv1d kernel must be (Cin,Cout,K), got ", shape_string(wv.shape()));
  check(xv.dim(1) == wv.dim(0), "deconv1d channel mismatch: input has ", xv.dim(1),
        ", kernel expects ", wv.dim(0));
  const int64_t n = xv.dim(0), ci = xv.dim(1), il = xv.dim(2);
  const int64_t co = wv.dim(1), k = wv.dim(2);
  check(bv.rank() == 1 && bv.dim(0) == co, "deconv1d bias must have ", co, " entries");
  const int64_t full = (il - 1) * stride + k;
  const int64_t ol = p == Padding::valid ? full : il * stride;
  const int64_t cl = (full - ol) / 2;
  const int64_t ck = co * k;

  Ten out({n, co, ol});
  Mat<T> cols(ck, il);
  for (int64_t in = 0; in < n; ++in) {
    cols.noalias() = CMapM<T>(wv.data(), ci, ck).transpose() * CMapM<T>(xv.data() + in * ci * il, ci, il);
    T* op_ = out.data() + in * co * ol;
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t kk = 0; kk < k; ++kk) {
        const T* src = cols.data() + (oc * k + kk) * il;
        for (int64_t y = 0; y < il; ++y) {
          const int64_t oy = y * stride + kk - cl;
          if (oy >= 0 && oy < ol) op_[oc * ol + oy] += src[y];
        }
      }
    for (int64_t oc = 0; oc < co; ++oc) {
      T* line = op_ + oc * ol;
      for (int64_t i = 0; i < ol; ++i) line[i] += bv[oc];
    }
  }

  const bool req = requires_grad(x) || requires_grad(w) || requires_grad(b);
  int id = push(std::move(out), req, nullptr, "deconv1d");
  at(id).backward = [x, w, b, id, stride, cl, ol, k](TapeT& tp) {
    const Ten& xv = tp.value(x);
    const Ten& wv = tp.value(w);
    const Ten& g = tp.grad(id);
    const int64_t n = xv.dim(0), ci = xv.dim(1), il = xv.dim(2);
    const int64_t co = wv.dim(1), ck = co * k;
    Mat<T> dcols(ck, il);
    for (int64_t in = 0; in < n; ++in) {
      const T* gp = g.data() + in * co * ol;
      dcols.setZero();
      for (int64_t oc = 0; oc < co; ++oc)
        for (int64_t kk = 0; kk < k; ++kk) {
          T* dst = dcols.data() + (oc * k + kk) * il;
          for (int64_t y = 0; y < il; ++y) {
            const int64_t oy = y * stride + kk - cl;
            if (oy >= 0 && oy < ol) dst[y] = gp[oc * ol + oy];
          }
        }
      if (tp.requires_grad(x)) {
        MapM<T> dx(tp.grad(x).data() + in * ci * il, ci, il);
        dx.noalias() += CMapM<T>(wv.data(), ci, ck) * dcols;
      }
      if (tp.requires_grad(w)) {
        MapM<T> dw(tp.grad(w).data(), ci, ck);
        dw.noalias() += CMapM<T>(xv.data() + in * ci * il, ci, il) * dcols.transpose();
      }
      if (tp.requires_grad(b)) {
        Ten& db = tp.grad(b);
        for (int64_t oc = 0; oc < co; ++oc) {
          const T* line = gp + oc * ol;
          T s = T(0);
          for (int64_t i = 0; i < ol; ++i) s += line[i];
          db[oc] += s;
        }
      }
    }
  };
  return id;
}

template <typename T>
int TapeT<T>::maxpool2d(int x, int window, bool ceil_mode) {
  const Ten& xv = value(x);
  check(xv.rank() == 4, "maxpool2d input must be (N,C,H,W), got ", shape_string(xv.shape()));
  check(window >= 1, "maxpool2d window must be >= 1");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t oh = ceil_mode ? (h + window - 1) / window : h / window;
  const int64_t ow = ceil_mode ? (w + window - 1) / window : w / window;
  check(oh >= 1 && ow >= 1, "maxpool2d window ", window, " larger than input ", h, "x", w);
  Ten out({n, c, oh, ow});
  auto arg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
  const T* xp = xv.data();
  T* op_ = out.data();
  int64_t oi = 0;
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic) {
      const T* plane = xp + (in * c + ic) * h * w;
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox, ++oi) {
          const int64_t y0 = oy * window, x0 = ox * window;
          const int64_t y1 = std::min<int64_t>(y0 + window, h), x1 = std::min<int64_t>(x0 + window, w);
          T best = plane[y0 * w + x0];
          int64_t bi = y0 * w + x0;
          for (int64_t y = y0; y < y1; ++y)
            for (int64_t xx = x0; xx < x1; ++xx)
              if (plane[y * w + xx] > best) {
                best = plane[y * w + xx];
                bi = y * w + xx;
              }
          op_[oi] = best;
          (*arg)[static_cast<size_t>(oi)] = (in * c + ic) * h * w + bi;
        }
    }
  int id = push(std::move(out), requires_grad(x), nullptr, "maxpool2d");
  at(id).backward = [x, id, arg](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    Ten& dx = tp.grad(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) dx[(*arg)[static_cast<size_t>(i)]] += g[i];
  };
  return id;
}

template <typename T>
int TapeT<T>::maxpool1d(int x, int window, bool ceil_mode) {
  const Ten& xv = value(x);
  check(xv.rank() == 3, "maxpool1d input must be (N,C,L), got ", shape_string(xv.shape()));
  check(window >= 1, "maxpool1d window must be >= 1");
  const int64_t n = xv.dim(0), c = xv.dim(1), l = xv.dim(2);
  const int64_t ol = ceil_mode ? (l + window - 1) / window : l / window;
  check(ol >= 1, "maxpool1d window ", window, " larger than input length ", l);
  Ten out({n, c, ol});
  auto arg = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(out.numel()));
  const T* xp = xv.data();
  T* op_ = out.data();
  int64_t oi = 0;
  for (int64_t in = 0; in < n; ++in)
    for (int64_t ic = 0; ic < c; ++ic) {
      const T* line = xp + (in * c + ic) * l;
      for (int64_t o = 0; o < ol; ++o, ++oi) {
        const int64_t i0 = o * window, i1 = std::min<int64_t>(i0 + window, l);
        T best = line[i0];
        int64_t bi = i0;
        for (int64_t i = i0; i < i1; ++i)
          if (line[i] > best) {
            best = line[i];
            bi = i;
          }
        op_[oi] = best;
        (*arg)[static_cast<size_t>(oi)] = (in * c + ic) * l + bi;
      }
    }
  int id = push(std::move(out), requires_grad(x), nullptr, "maxpool1d");
  at(id).backward = [x, id, arg](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    const Ten& g = tp.grad(id);
    Ten& dx = tp.grad(x);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) dx[(*arg)[static_cast<size_t>(i)]] += g[i];
  };
  return id;
}

template <typename T>
int TapeT<T>::reshape(int x, Shape s) {
  Ten out = value(x).reshaped(std::move(s));
  int id = push(std::move(out), requires_grad(x), nullptr, "reshape");
  at(id).backward = [x, id](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    tp.add_grad(x, tp.grad(id).reshaped(tp.value(x).shape()));
  };
  return id;
}

template <typename T>
int TapeT<T>::flatten(int x) {
  const Ten& xv = value(x);
  check(xv.rank() >= 2, "flatten expects at least rank-2 input");
  return reshape(x, {xv.dim(0), xv.numel() / xv.dim(0)});
}

template <typename T>
int TapeT<T>::cross_entropy(int probs, Ten targets) {
  const Ten& pv = value(probs);
  check(pv.rank() == 2, "cross_entropy expects (N,K) probabilities");
  check(same_shape(pv.shape(), targets.shape()), "cross_entropy target shape ",
        shape_string(targets.shape()), " does not match predictions ", shape_string(pv.shape()));
  const int64_t m = pv.dim(0), k = pv.dim(1);
  const double eps = 1e-12;
  double loss = 0.0;
  for (int64_t i = 0; i < m * k; ++i) {
    const double t = static_cast<double>(targets[i]);
    if (t != 0.0) loss -= t * std::log(std::max(static_cast<double>(pv[i]), eps));
  }
  loss /= static_cast<double>(m);
  Ten out({1});
  out[0] = static_cast<T>(loss);
  auto tg = std::make_shared<Ten>(std::move(targets));
  int id = push(std::move(out), requires_grad(probs), nullptr, "cross_entropy");
  at(id).backward = [probs, id, tg, m, k, eps](TapeT& tp) {
    if (!tp.requires_grad(probs)) return;
    const T gs = tp.grad(id)[0];
    const Ten& pv = tp.value(probs);
    Ten& dp = tp.grad(probs);
    const T invm = static_cast<T>(1.0 / static_cast<double>(m));
    for (int64_t i = 0; i < m * k; ++i) {
      const double p = static_cast<double>(pv[i]);
      const double t = static_cast<double>((*tg)[i]);
      if (t != 0.0 && p > eps) dp[i] -= gs * static_cast<T>(t / p) * invm;
    }
  };
  return id;
}

template <typename T>
int TapeT<T>::pick(int x, int64_t row, int64_t col) {
  const Ten& xv = value(x);
  check(xv.rank() == 2, "pick expects a rank-2 node");
  check(row >= 0 && row < xv.dim(0) && col >= 0 && col < xv.dim(1), "pick index (", row, ",", col,
        ") outside ", shape_string(xv.shape()));
  Ten out({1});
  out[0] = xv.at(row, col);
  int id = push(std::move(out), requires_grad(x), nullptr, "pick");
  at(id).backward = [x, id, row, col](TapeT& tp) {
    if (!tp.requires_grad(x)) return;
    tp.grad(x).at(row, col) += tp.grad(id)[0];
  };
  return id;
}

template <typename T>
int TapeT<T>::add_scalar(int a, int b) {
  check(value(a).numel() == 1 && value(b).numel() == 1, "add_scalar expects scalar nodes");
  Ten out({1});
  out[0] = value(a)[0] + value(b)[0];
  int id = push(std::move(out), requires_grad(a) || requires_grad(b), nullptr, "add_scalar");
  at(id).backward = [a, b, id](TapeT& tp) {
    const T g = tp.grad(id)[0];
    if (tp.requires_grad(a)) tp.grad(a)[0] += g;
    if (tp.requires_grad(b)) tp.grad(b)[0] += g;
  };
  return id;
}

template class TapeT<float>;
template class TapeT<double>;

}  // namespace amkt
