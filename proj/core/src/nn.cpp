#include "amkt/nn.hpp"

#include <algorithm>
#include <cmath>

#include "amkt/io.hpp"

namespace amkt {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::elu: return "elu";
    case Activation::softmax: return "softmax";
  }
  return "none";
}

Activation activation_from(const std::string& s) {
  if (s == "none") return Activation::none;
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "elu") return Activation::elu;
  if (s == "softmax") return Activation::softmax;
  fail("unknown activation '", s, "'");
}

std::string padding_name(Padding p) { return p == Padding::valid ? "valid" : "same"; }

Padding padding_from(const std::string& s) {
  if (s == "valid") return Padding::valid;
  if (s == "same") return Padding::same;
  fail("unknown padding '", s, "'");
}

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::dense: return "dense";
    case LayerKind::deconv: return "deconv";
    case LayerKind::reshape: return "reshape";
  }
  return "?";
}

LayerSpec conv_layer(int channels, int kernel, int stride, Padding p, Activation act, double dropout) {
  LayerSpec l;
  l.kind = LayerKind::conv;
  l.units = channels;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = p;
  l.act = act;
  l.dropout = dropout;
  return l;
}

LayerSpec deconv_layer(int channels, int kernel, int stride, Padding p, Activation act) {
  LayerSpec l;
  l.kind = LayerKind::deconv;
  l.units = channels;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = p;
  l.act = act;
  return l;
}

LayerSpec pool_layer(int window, bool ceil_mode) {
  LayerSpec l;
  l.kind = LayerKind::maxpool;
  l.window = window;
  l.pool_ceil = ceil_mode;
  return l;
}

LayerSpec dense_layer(int units, Activation act, double dropout) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.units = units;
  l.act = act;
  l.dropout = dropout;
  return l;
}

LayerSpec reshape_layer(Shape per_example) {
  LayerSpec l;
  l.kind = LayerKind::reshape;
  l.reshape_to = std::move(per_example);
  l.act = Activation::none;
  return l;
}

int ArchitectureSpec::output_units() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    if (it->kind == LayerKind::conv || it->kind == LayerKind::dense || it->kind == LayerKind::deconv)
      return it->units;
  fail("architecture '", name, "' has no parametric layers");
}

ArchitectureSpec parse_structure(const std::string& notation, const std::vector<SizeEntry>& sizes,
                                 Shape input, const ParseDefaults& d) {
  check(!notation.empty(), "empty structure notation");
  ArchitectureSpec spec;
  spec.name = notation;
  spec.input = std::move(input);
  size_t next = 0;
  auto take = [&](char c) -> const SizeEntry& {
    check(next < sizes.size(), "notation '", notation, "' needs a size entry for layer '", c,
          "' at position ", next);
    return sizes[next++];
  };
  for (char c : notation) {
    switch (c) {
      case 'c': {
        const SizeEntry& e = take(c);
        check(e.kernel > 0, "conv size entries need a kernel extent");
        spec.layers.push_back(conv_layer(e.units, e.kernel, d.conv_stride, d.conv_padding, d.hidden_act));
        break;
      }
      case 'u': {
        const SizeEntry& e = take(c);
        check(e.kernel > 0, "deconv size entries need a kernel extent");
        spec.layers.push_back(deconv_layer(e.units, e.kernel, d.conv_stride, d.conv_padding, d.hidden_act));
        break;
      }
      case 'm':
        spec.layers.push_back(pool_layer(d.pool_window, d.pool_ceil));
        break;
      case 'd': {
        const SizeEntry& e = take(c);
        spec.layers.push_back(dense_layer(e.units, d.hidden_act, d.dense_dropout));
        break;
      }
      default:
        fail("unknown layer letter '", std::string(1, c), "' in notation '", notation, "'");
    }
  }
  check(next == sizes.size(), "notation '", notation, "' consumed ", next, " size entries but ",
        sizes.size(), " were given");
  // The head: final parametric layer carries the output activation, no dropout.
  for (auto it = spec.layers.rbegin(); it != spec.layers.rend(); ++it) {
    if (it->kind == LayerKind::conv || it->kind == LayerKind::dense || it->kind == LayerKind::deconv) {
      it->act = d.final_act;
      it->dropout = 0.0;
      break;
    }
  }
  validate_architecture(spec);
  return spec;
}

std::string architecture_signature(const ArchitectureSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "arch " << spec.name << " in " << shape_string(spec.input) << "\n";
  for (const LayerSpec& l : spec.layers) {
    os << layer_kind_name(l.kind);
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::deconv:
        os << " u" << l.units << " k" << l.kernel << " s" << l.stride << " "
           << padding_name(l.padding);
        break;
      case LayerKind::maxpool:
        os << " w" << l.window << (l.pool_ceil ? " ceil" : " trunc");
        break;
      case LayerKind::dense:
        os << " u" << l.units;
        break;
      case LayerKind::reshape:
        os << " " << shape_string(l.reshape_to);
        break;
    }
    os << " " << activation_name(l.act);
    if (l.dropout > 0.0) os << " drop" << l.dropout;
    os << "\n";
  }
  return os.str();
}

std::vector<Shape> validate_architecture(const ArchitectureSpec& spec) {
  check(!spec.input.empty(), "architecture '", spec.name, "' has an empty input shape");
  check(!spec.layers.empty(), "architecture '", spec.name, "' has no layers");
  std::vector<Shape> shapes;
  Shape cur = spec.input;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    shapes.push_back(cur);
    const std::string where = "architecture '" + spec.name + "' layer " + std::to_string(li) + " (" +
                              layer_kind_name(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::deconv: {
        check(l.units > 0 && l.kernel > 0 && l.stride > 0, where, ": bad units/kernel/stride");
        check(cur.size() == 2 || cur.size() == 3, where,
              ": needs a (C,L) or (C,H,W) input, got ", shape_string(cur));
        Shape out;
        out.push_back(l.units);
        for (size_t s = 1; s < cur.size(); ++s) {
          const int64_t e = l.kind == LayerKind::conv
                                ? conv_output_extent(cur[s], l.kernel, l.stride, l.padding)
                                : deconv_output_extent(cur[s], l.kernel, l.stride, l.padding);
          out.push_back(e);
        }
        cur = out;
        break;
      }
      case LayerKind::maxpool: {
        check(l.window > 0, where, ": bad window");
        check(cur.size() == 2 || cur.size() == 3, where,
              ": needs a (C,L) or (C,H,W) input, got ", shape_string(cur));
        Shape out;
        out.push_back(cur[0]);
        for (size_t s = 1; s < cur.size(); ++s)
          out.push_back(pool_output_extent(cur[s], l.window, l.pool_ceil));
        cur = out;
        break;
      }
      case LayerKind::dense: {
        check(l.units > 0, where, ": bad units");
        cur = {l.units};
        break;
      }
      case LayerKind::reshape: {
        check(!l.reshape_to.empty(), where, ": missing target shape");
        check(shape_numel(l.reshape_to) == shape_numel(cur), where, ": reshape from ",
              shape_string(cur), " to ", shape_string(l.reshape_to), " changes element count");
        cur = l.reshape_to;
        break;
      }
    }
  }
  shapes.push_back(cur);
  return shapes;
}

namespace {

template <typename T>
TensorT<T> init_weight(Shape shape, int64_t fan_in, Rng& rng, double scale) {
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in)) * scale;
  return TensorT<T>::uniform(std::move(shape), rng, -bound, bound);
}

}  // namespace

template <typename T>
NetworkT<T> NetworkT<T>::build(const ArchitectureSpec& spec, Rng& rng, double init_scale) {
  const std::vector<Shape> shapes = validate_architecture(spec);
  NetworkT<T> net;
  net.spec_ = spec;
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    const Shape& in = shapes[li];
    switch (l.kind) {
      case LayerKind::conv: {
        const int64_t cin = in[0];
        if (in.size() == 3) {
          const int64_t fan = cin * l.kernel * l.kernel;
          net.params_.push_back(init_weight<T>({l.units, cin, l.kernel, l.kernel}, fan, rng, init_scale));
        } else {
          net.params_.push_back(init_weight<T>({l.units, cin, l.kernel}, cin * l.kernel, rng, init_scale));
        }
        net.params_.emplace_back(Shape{l.units});
        break;
      }
      case LayerKind::deconv: {
        const int64_t cin = in[0];
        if (in.size() == 3) {
          const int64_t fan = cin * l.kernel * l.kernel;
          net.params_.push_back(init_weight<T>({cin, l.units, l.kernel, l.kernel}, fan, rng, init_scale));
        } else {
          net.params_.push_back(init_weight<T>({cin, l.units, l.kernel}, cin * l.kernel, rng, init_scale));
        }
        net.params_.emplace_back(Shape{l.units});
        break;
      }
      case LayerKind::dense: {
        const int64_t din = shape_numel(in);
        net.params_.push_back(init_weight<T>({din, l.units}, din, rng, init_scale));
        net.params_.emplace_back(Shape{l.units});
        break;
      }
      case LayerKind::maxpool:
      case LayerKind::reshape:
        break;
    }
  }
  return net;
}

template <typename T>
int64_t NetworkT<T>::count_parameters() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

template <typename T>
std::vector<int> NetworkT<T>::push_params(TapeT<T>& tape, bool requires_grad) const {
  check(!params_.empty(), "network '", spec_.name, "' is missing parameters; was it built?");
  std::vector<int> ids;
  ids.reserve(params_.size());
  for (const auto& p : params_) ids.push_back(tape.leaf(p, requires_grad));
  return ids;
}

template <typename T>
typename NetworkT<T>::Forward NetworkT<T>::forward_with(TapeT<T>& tape, int input_node,
                                                        const std::vector<int>& param_ids,
                                                        bool training, Rng* rng) const {
  {
    const Shape& got = tape.value(input_node).shape();
    check(got.size() == spec_.input.size() + 1, "network '", spec_.name, "' expects batched input of ",
          shape_string(spec_.input), ", got ", shape_string(got));
    for (size_t i = 0; i < spec_.input.size(); ++i)
      check(got[i + 1] == spec_.input[i], "network '", spec_.name, "' expects per-example shape ",
            shape_string(spec_.input), ", got batch ", shape_string(got));
  }
  check(param_ids.size() == params_.size(), "network '", spec_.name, "' needs ", params_.size(),
        " parameter leaves, got ", param_ids.size());
  Forward f;
  f.param_ids = param_ids;
  int cur = input_node;
  size_t pi = 0;
  auto param_leaf = [&]() { return param_ids[pi++]; };
  for (const LayerSpec& l : spec_.layers) {
    int pre = cur;
    switch (l.kind) {
      case LayerKind::conv: {
        const int w = param_leaf();
        const int b = param_leaf();
        cur = tape.value(cur).rank() == 4 ? tape.conv2d(cur, w, b, l.stride, l.padding)
                                          : tape.conv1d(cur, w, b, l.stride, l.padding);
        break;
      }
      case LayerKind::deconv: {
        const int w = param_leaf();
        const int b = param_leaf();
        cur = tape.value(cur).rank() == 4 ? tape.deconv2d(cur, w, b, l.stride, l.padding)
                                          : tape.deconv1d(cur, w, b, l.stride, l.padding);
        break;
      }
      case LayerKind::maxpool:
        cur = tape.value(cur).rank() == 4 ? tape.maxpool2d(cur, l.window, l.pool_ceil)
                                          : tape.maxpool1d(cur, l.window, l.pool_ceil);
        break;
      case LayerKind::dense: {
        if (tape.value(cur).rank() > 2) cur = tape.flatten(cur);
        const int w = param_leaf();
        const int b = param_leaf();
        cur = tape.add_bias(tape.matmul(cur, w), b);
        break;
      }
      case LayerKind::reshape: {
        Shape s;
        s.push_back(tape.value(cur).dim(0));
        for (int64_t d : l.reshape_to) s.push_back(d);
        cur = tape.reshape(cur, std::move(s));
        break;
      }
    }
    pre = cur;
    switch (l.act) {
      case Activation::none: break;
      case Activation::relu: cur = tape.relu(cur); break;
      case Activation::tanh: cur = tape.tanh_act(cur); break;
      case Activation::sigmoid: cur = tape.sigmoid(cur); break;
      case Activation::elu: cur = tape.elu(cur); break;
      case Activation::softmax: cur = tape.softmax_rows(cur); break;
    }
    if (training && l.dropout > 0.0) {
      check(rng != nullptr, "dropout in training mode needs an rng");
      cur = tape.dropout(cur, l.dropout, *rng);
    }
    f.pre_act = pre;
  }
  check(pi == params_.size(), "network '", spec_.name, "' has ", params_.size(),
        " parameter tensors but the forward pass used ", pi);
  f.out = cur;
  return f;
}

template <typename T>
typename NetworkT<T>::Forward NetworkT<T>::forward(TapeT<T>& tape, int input_node, bool training,
                                                   Rng* rng, bool params_require_grad) const {
  return forward_with(tape, input_node, push_params(tape, params_require_grad), training, rng);
}

template <typename T>
typename NetworkT<T>::Forward NetworkT<T>::forward(TapeT<T>& tape, const TensorT<T>& batch,
                                                   bool training, Rng* rng,
                                                   bool params_require_grad) const {
  return forward(tape, tape.leaf(batch, false), training, rng, params_require_grad);
}

template <typename T>
TensorT<T> NetworkT<T>::predict(const TensorT<T>& batch, int64_t chunk) const {
  const int64_t n = batch.dim(0);
  check(n > 0, "predict on an empty batch");
  const int64_t ex = batch.numel() / n;
  TensorT<T> out;
  for (int64_t start = 0; start < n; start += chunk) {
    const int64_t count = std::min(chunk, n - start);
    Shape s = batch.shape();
    s[0] = count;
    TensorT<T> piece(s);
    std::copy(batch.data() + start * ex, batch.data() + (start + count) * ex, piece.data());
    TapeT<T> tape;
    const Forward f = forward(tape, piece, false, nullptr, false);
    const TensorT<T>& y = tape.value(f.out);
    if (out.empty()) {
      Shape os = y.shape();
      os[0] = n;
      out = TensorT<T>(os);
    }
    std::copy(y.data(), y.data() + y.numel(), out.data() + start * (y.numel() / count));
  }
  return out;
}

template <typename T>
void NetworkT<T>::save_weights(const std::string& path) const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.template cast<float>());
  write_tensor_file(path, out);
}

template <typename T>
void NetworkT<T>::load_weights(const std::string& path) {
  std::vector<Tensor> in = read_tensor_file(path);
  check(in.size() == params_.size(), "weights file '", path, "' holds ", in.size(),
        " tensors but architecture '", spec_.name, "' needs ", params_.size());
  for (size_t i = 0; i < in.size(); ++i) {
    check(same_shape(in[i].shape(), params_[i].shape()), "weights file '", path, "' tensor ", i,
          " has shape ", shape_string(in[i].shape()), ", expected ", shape_string(params_[i].shape()));
    params_[i] = in[i].template cast<T>();
  }
}

template class NetworkT<float>;
template class NetworkT<double>;

}  // namespace amkt
