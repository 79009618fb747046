#pragma once

#include <string>
#include <vector>

#include "amkt/tape.hpp"
#include "amkt/tensor.hpp"

namespace amkt {

enum class Activation { none, relu, tanh, sigmoid, elu, softmax };
enum class LayerKind { conv, maxpool, dense, deconv, reshape };

std::string activation_name(Activation a);
Activation activation_from(const std::string& s);
std::string padding_name(Padding p);
Padding padding_from(const std::string& s);
std::string layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int units = 0;      // dense width or conv/deconv output channels
  int kernel = 0;     // conv/deconv kernel extent
  int stride = 1;     // conv/deconv stride
  int window = 2;     // maxpool window; stride equals window
  Padding padding = Padding::valid;
  bool pool_ceil = false;  // keep the partial window at the trailing edge
  Activation act = Activation::none;
  double dropout = 0.0;  // rate on this layer's activations; 0 disables
  Shape reshape_to;      // target shape (per example) for reshape layers
};

// Helpers for building layer lists tersely.
LayerSpec conv_layer(int channels, int kernel, int stride = 1, Padding p = Padding::valid,
                     Activation act = Activation::relu, double dropout = 0.0);
LayerSpec deconv_layer(int channels, int kernel, int stride = 1, Padding p = Padding::valid,
                       Activation act = Activation::relu);
LayerSpec pool_layer(int window = 2, bool ceil_mode = false);
LayerSpec dense_layer(int units, Activation act = Activation::relu, double dropout = 0.0);
LayerSpec reshape_layer(Shape per_example);

struct ArchitectureSpec {
  std::string name;
  Shape input;  // per-example shape: (C,H,W), (C,L) or (D)
  std::vector<LayerSpec> layers;

  // Output width of the final parametric layer; for classifiers this is the
  // class count.
  int output_units() const;
};

// Size entry consumed by parse_structure: convs/deconvs read {units, kernel},
// dense layers read {units}.
struct SizeEntry {
  int units = 0;
  int kernel = 0;
};

struct ParseDefaults {
  int pool_window = 2;
  bool pool_ceil = false;
  Padding conv_padding = Padding::valid;
  int conv_stride = 1;
  Activation hidden_act = Activation::relu;
  Activation final_act = Activation::softmax;
  double dense_dropout = 0.0;  // applied to every dense layer except the last
};

// Builds a spec from a compact notation string: 'c' conv, 'm' maxpool,
// 'd' dense, 'u' transposed conv. Each 'c'/'d'/'u' consumes one size entry;
// 'm' consumes none and pools over the preceding layer's channels. Unknown
// letters and size-count mismatches raise Error.
ArchitectureSpec parse_structure(const std::string& notation, const std::vector<SizeEntry>& sizes,
                                 Shape input, const ParseDefaults& defaults = {});

// Canonical one-line-per-layer rendering; provenance digests hash this, so
// the format is load-bearing.
std::string architecture_signature(const ArchitectureSpec& spec);

// A built network: parameter tensors plus the spec that shaped them.
// Parameters are ordered layer by layer as weight, bias; pooling and reshape
// layers contribute none.
template <typename T>
class NetworkT {
 public:
  NetworkT() = default;

  // Fan-in scaled uniform initialization, U(-sqrt(3/fan_in), sqrt(3/fan_in))
  // times init_scale.
  static NetworkT build(const ArchitectureSpec& spec, Rng& rng, double init_scale = 1.0);

  const ArchitectureSpec& spec() const { return spec_; }
  std::vector<TensorT<T>>& params() { return params_; }
  const std::vector<TensorT<T>>& params() const { return params_; }
  int64_t count_parameters() const;

  struct Forward {
    int out = -1;      // final node (post-activation)
    int pre_act = -1;  // final layer pre-activation (the logits for softmax heads)
    std::vector<int> param_ids;  // leaf ids in parameter order
  };

  // Records a forward pass on the tape starting from an existing node, so
  // upstream graphs (e.g. a generator's output) backpropagate through this
  // network. Dropout draws from rng only when training is set.
  Forward forward(TapeT<T>& tape, int input_node, bool training = false, Rng* rng = nullptr,
                  bool params_require_grad = true) const;
  Forward forward(TapeT<T>& tape, const TensorT<T>& batch, bool training = false,
                  Rng* rng = nullptr, bool params_require_grad = true) const;

  // Pushes the parameters as tape leaves, in parameter order.
  std::vector<int> push_params(TapeT<T>& tape, bool requires_grad) const;
  // Forward pass over already-pushed parameter leaves; with truncate() this
  // avoids re-copying the weights on every optimization step.
  Forward forward_with(TapeT<T>& tape, int input_node, const std::vector<int>& param_ids,
                       bool training = false, Rng* rng = nullptr) const;

  // Inference-mode class probabilities, evaluated in chunks.
  TensorT<T> predict(const TensorT<T>& batch, int64_t chunk = 256) const;

  void save_weights(const std::string& path) const;
  void load_weights(const std::string& path);

 private:
  ArchitectureSpec spec_;
  std::vector<TensorT<T>> params_;
};

using Network = NetworkT<float>;
using Network64 = NetworkT<double>;

// Validates a spec and reports the per-layer input shapes (per example,
// flattening accounted for) followed by the network's output shape as the
// final entry. Raises on inconsistent compositions such as pooling after a
// dense layer.
std::vector<Shape> validate_architecture(const ArchitectureSpec& spec);

}  // namespace amkt
