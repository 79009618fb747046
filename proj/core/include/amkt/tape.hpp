#pragma once

#include <functional>
#include <vector>

#include "amkt/rng.hpp"
#include "amkt/tensor.hpp"

namespace amkt {

enum class Padding { valid, same };

// Output extents for the strided ops. valid requires the kernel to fit; same
// pads so the output covers ceil(in/stride) positions. Transposed convs
// mirror these: valid yields (in-1)*stride+k, same yields in*stride.
int64_t conv_output_extent(int64_t in, int64_t kernel, int64_t stride, Padding p);
int64_t deconv_output_extent(int64_t in, int64_t kernel, int64_t stride, Padding p);
int64_t pool_output_extent(int64_t in, int64_t window, bool ceil_mode);

// Reverse-mode automatic differentiation over a dynamically recorded tape.
//
// Every operation appends one node holding the forward value and a closure
// that routes this node's gradient to its parents. Nodes only ever reference
// earlier nodes, so walking the tape backward from the loss visits each
// operation exactly once in reverse topological order. Intermediate gradient
// buffers are released as soon as they have been consumed; leaf gradients
// persist and accumulate across repeated backward() calls.
//
// Values are checked for NaN/Inf at operation boundaries while finite checks
// are enabled (the default); a violation raises Error naming the operation.
template <typename T>
class TapeT {
 public:
  using Ten = TensorT<T>;

  // Registers an input. Only leaves with requires_grad receive gradients.
  int leaf(Ten v, bool requires_grad = false);

  int matmul(int a, int b);
  int add(int a, int b);
  int add_bias(int x, int b);
  int affine(int x, double alpha, double beta);

  int relu(int x);
  int tanh_act(int x);
  int sigmoid(int x);
  int elu(int x);
  int softmax_rows(int x);

  // Inverted dropout; scales kept units by 1/(1-rate). Training-time only,
  // callers skip the op entirely in inference mode.
  int dropout(int x, double rate, Rng& rng);

  // x: (N,C,H,W), w: (Cout,Cin,KH,KW), b: (Cout).
  int conv2d(int x, int w, int b, int stride, Padding p);
  // x: (N,C,L), w: (Cout,Cin,K), b: (Cout).
  int conv1d(int x, int w, int b, int stride, Padding p);
  // Transposed convolutions; w: (Cin,Cout,KH,KW) / (Cin,Cout,K).
  int deconv2d(int x, int w, int b, int stride, Padding p);
  int deconv1d(int x, int w, int b, int stride, Padding p);

  // Non-overlapping window maximum. ceil_mode keeps a partial window at the
  // trailing edge; otherwise the remainder is dropped.
  int maxpool2d(int x, int window, bool ceil_mode);
  int maxpool1d(int x, int window, bool ceil_mode);

  int reshape(int x, Shape s);
  int flatten(int x);  // (N, ...) -> (N, rest)

  // Mean over rows of -sum_j targets(i,j) * log(max(probs(i,j), 1e-12)).
  int cross_entropy(int probs, Ten targets);

  // Scalar view of one entry of a rank-2 node.
  int pick(int x, int64_t row, int64_t col);

  // Scalar sum of two scalar nodes.
  int add_scalar(int a, int b);

  void backward(int node);

  // Drops every node past the first n and clears the gradients of the kept
  // ones. Lets parameter leaves persist across repeated forward/backward
  // rounds without re-copying their values.
  void truncate(size_t n);

  const Ten& value(int id) const { return at(id).val; }
  Ten& value_mut(int id) { return at(id).val; }
  // Gradient buffer, allocated zero on first access.
  Ten& grad(int id);
  bool requires_grad(int id) const { return at(id).requires_grad; }
  bool is_leaf(int id) const { return !at(id).backward; }
  size_t size() const { return nodes_.size(); }

  void set_finite_checks(bool on) { finite_checks_ = on; }
  bool finite_checks() const { return finite_checks_; }

 private:
  struct Node {
    Ten val;
    Ten grad;
    bool requires_grad = false;
    std::function<void(TapeT&)> backward;
    const char* op = "leaf";
  };

  Node& at(int id) {
    check(id >= 0 && static_cast<size_t>(id) < nodes_.size(), "node ", id, " is not on the tape");
    return nodes_[static_cast<size_t>(id)];
  }
  const Node& at(int id) const {
    check(id >= 0 && static_cast<size_t>(id) < nodes_.size(), "node ", id, " is not on the tape");
    return nodes_[static_cast<size_t>(id)];
  }

  int push(Ten val, bool needs_grad, std::function<void(TapeT&)> bw, const char* op);
  void add_grad(int id, const Ten& g);

  std::vector<Node> nodes_;
  bool finite_checks_ = true;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

}  // namespace amkt
