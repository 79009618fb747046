#include "amkt/catalog.hpp"

#include <map>

namespace amkt {

namespace {

constexpr double kDropout = 0.5;

LayerSpec same_conv(int channels, int kernel, int stride = 1) {
  return conv_layer(channels, kernel, stride, Padding::same, Activation::relu);
}

ArchitectureSpec image_net(std::string name, std::vector<LayerSpec> layers) {
  ArchitectureSpec s;
  s.name = std::move(name);
  s.input = {1, 28, 28};
  s.layers = std::move(layers);
  validate_architecture(s);
  return s;
}

ArchitectureSpec minute_net(std::string name, std::vector<LayerSpec> layers) {
  ArchitectureSpec s;
  s.name = std::move(name);
  s.input = {60};
  s.layers = std::move(layers);
  validate_architecture(s);
  return s;
}

ArchitectureSpec series_net(std::string name, std::vector<LayerSpec> layers) {
  ArchitectureSpec s;
  s.name = std::move(name);
  s.input = {1, 60};
  s.layers = std::move(layers);
  validate_architecture(s);
  return s;
}

// Series nets pool with a ceil-mode remainder so 60 -> 30 -> 15 -> 8.
LayerSpec series_pool() { return pool_layer(2, true); }

ArchitectureSpec make(const std::string& name) {
  // Image classifiers. Convs are 5x5 same-padded, pools 2x2 truncating.
  if (name == "mnist_id")
    return image_net(name, {same_conv(32, 5), pool_layer(), same_conv(28, 5), pool_layer(),
                            dense_layer(1024, Activation::relu, kDropout),
                            dense_layer(10, Activation::softmax)});
  if (name == "mnist_id_reduced")
    return image_net(name, {same_conv(16, 5), pool_layer(), same_conv(14, 5), pool_layer(),
                            dense_layer(1024, Activation::relu, kDropout),
                            dense_layer(10, Activation::softmax)});
  if (name == "mnist_s")
    return image_net(name, {same_conv(16, 5), pool_layer(), same_conv(14, 5), pool_layer(),
                            dense_layer(512, Activation::relu, kDropout),
                            dense_layer(10, Activation::softmax)});
  if (name == "mnist_vs")
    return image_net(name, {same_conv(16, 5), pool_layer(), same_conv(12, 5), pool_layer(),
                            dense_layer(32, Activation::relu, kDropout),
                            dense_layer(10, Activation::softmax)});
  if (name == "mnist_l")
    return image_net(name, {same_conv(32, 5), pool_layer(), same_conv(28, 5), pool_layer(),
                            dense_layer(10, Activation::softmax)});
  if (name == "mnist_ll")
    return image_net(name, {same_conv(32, 5), pool_layer(), pool_layer(),
                            dense_layer(10, Activation::softmax)});

  // Minute-vector (dense) classifiers.
  if (name == "ae_id")
    return minute_net(name, {dense_layer(360, Activation::relu, kDropout),
                             dense_layer(180, Activation::relu, kDropout),
                             dense_layer(64, Activation::relu),
                             dense_layer(2, Activation::softmax)});
  if (name == "ae_s")
    return minute_net(name, {dense_layer(180, Activation::relu, kDropout),
                             dense_layer(90, Activation::relu, kDropout),
                             dense_layer(32, Activation::relu),
                             dense_layer(2, Activation::softmax)});
  if (name == "ae_vs")
    return minute_net(name, {dense_layer(90, Activation::relu, kDropout),
                             dense_layer(45, Activation::relu, kDropout),
                             dense_layer(16, Activation::relu),
                             dense_layer(2, Activation::softmax)});
  if (name == "ae_l")
    return minute_net(name, {dense_layer(360, Activation::relu, kDropout),
                             dense_layer(180, Activation::relu, kDropout),
                             dense_layer(2, Activation::softmax)});
  if (name == "ae_ll")
    return minute_net(name, {dense_layer(360, Activation::relu, kDropout),
                             dense_layer(2, Activation::softmax)});

  // Single-channel series classifiers. Convs are width-4 same-padded.
  if (name == "a3_id")
    return series_net(name, {same_conv(16, 4), series_pool(), same_conv(32, 4), series_pool(),
                             same_conv(64, 4), series_pool(),
                             dense_layer(64, Activation::relu, kDropout),
                             dense_layer(32, Activation::relu, kDropout),
                             dense_layer(2, Activation::softmax)});
  if (name == "a3_s")
    return series_net(name, {same_conv(8, 4), series_pool(), same_conv(16, 4), series_pool(),
                             same_conv(32, 4), series_pool(),
                             dense_layer(32, Activation::relu, kDropout),
                             dense_layer(16, Activation::relu, kDropout),
                             dense_layer(2, Activation::softmax)});
  if (name == "a3_vs")
    return series_net(name, {same_conv(4, 4), series_pool(), same_conv(8, 4), series_pool(),
                             same_conv(16, 4), series_pool(),
                             dense_layer(16, Activation::relu, kDropout),
                             dense_layer(8, Activation::relu, kDropout),
                             dense_layer(2, Activation::softmax)});
  if (name == "a3_l")
    return series_net(name, {same_conv(16, 4), series_pool(), same_conv(32, 4), series_pool(),
                             same_conv(64, 4), series_pool(),
                             dense_layer(32, Activation::relu, kDropout),
                             dense_layer(2, Activation::softmax)});
  if (name == "a3_ll")
    return series_net(name, {same_conv(16, 4), series_pool(), same_conv(32, 4), series_pool(),
                             series_pool(), dense_layer(32, Activation::relu, kDropout),
                             dense_layer(2, Activation::softmax)});

  // Stimulus generators. Strides and padding are chosen so the shapes chain
  // to the dataset's input geometry.
  if (name == "gen_mnist") {
    ArchitectureSpec s;
    s.name = name;
    s.input = {1, 28, 28};  // noise image
    s.layers = {same_conv(32, 5, 2),
                same_conv(16, 3, 2),
                dense_layer(588, Activation::relu),
                reshape_layer({12, 7, 7}),
                deconv_layer(32, 2, 2, Padding::same, Activation::relu),
                deconv_layer(32, 4, 2, Padding::same, Activation::relu),
                deconv_layer(1, 4, 1, Padding::same, Activation::sigmoid)};
    validate_architecture(s);
    return s;
  }
  if (name == "gen_ae") {
    ArchitectureSpec s;
    s.name = name;
    s.input = {512};
    s.layers = {dense_layer(512, Activation::relu, kDropout),
                dense_layer(256, Activation::relu, kDropout),
                dense_layer(256, Activation::relu),
                dense_layer(180, Activation::relu),
                dense_layer(60, Activation::sigmoid)};
    validate_architecture(s);
    return s;
  }
  if (name == "gen_a3") {
    ArchitectureSpec s;
    s.name = name;
    s.input = {512};
    s.layers = {dense_layer(512, Activation::relu),
                dense_layer(1000, Activation::relu),
                reshape_layer({200, 5}),
                deconv_layer(128, 3, 2, Padding::same, Activation::relu),
                deconv_layer(128, 4, 2, Padding::same, Activation::relu),
                deconv_layer(64, 4, 3, Padding::same, Activation::relu),
                deconv_layer(16, 5, 1, Padding::same, Activation::relu),
                deconv_layer(1, 2, 1, Padding::same, Activation::sigmoid)};
    validate_architecture(s);
    return s;
  }

  fail("unknown architecture '", name, "'");
}

}  // namespace

ArchitectureSpec catalog_architecture(const std::string& name) { return make(name); }

std::vector<std::string> catalog_names() {
  return {"mnist_id", "mnist_id_reduced", "mnist_s", "mnist_vs", "mnist_l", "mnist_ll",
          "ae_id",    "ae_s",             "ae_vs",   "ae_l",     "ae_ll",   "a3_id",
          "a3_s",     "a3_vs",            "a3_l",    "a3_ll",    "gen_mnist", "gen_ae",
          "gen_a3"};
}

ArchitectureSpec association_net(int classes, int width) {
  check(classes >= 2, "association net needs at least 2 classes");
  check(width >= 24, "association net needs width >= 24 to survive three poolings");
  ArchitectureSpec s;
  s.name = "assoc" + std::to_string(classes);
  s.input = {1, width};
  s.layers = {same_conv(8, 5),  pool_layer(), same_conv(16, 5), pool_layer(),
              same_conv(32, 3), pool_layer(), dense_layer(480, Activation::relu, kDropout),
              dense_layer(classes, Activation::softmax)};
  validate_architecture(s);
  return s;
}

ArchitectureSpec membership_net(int in_dim, int hidden) {
  check(in_dim >= 1 && hidden >= 1, "membership net needs positive dimensions");
  ArchitectureSpec s;
  s.name = "membership";
  s.input = {in_dim};
  s.layers = {dense_layer(hidden, Activation::elu), dense_layer(hidden, Activation::elu),
              dense_layer(hidden, Activation::elu), dense_layer(2, Activation::softmax)};
  validate_architecture(s);
  return s;
}

ArchitectureSpec waveform_generator(int out_len) {
  check(out_len >= 5 && out_len % 5 == 0, "waveform generator length must be a positive multiple of 5");
  int64_t f = out_len / 5;
  const int pattern[5] = {2, 2, 3, 2, 2};
  int strides[5] = {1, 1, 1, 1, 1};
  for (int i = 0; i < 5; ++i)
    if (f % pattern[i] == 0 && f > 1) {
      strides[i] = pattern[i];
      f /= pattern[i];
    }
  check(f == 1, "waveform generator cannot upsample 5 to ", out_len / 5, " in five strides");
  ArchitectureSpec s;
  s.name = "gen_waveform" + std::to_string(out_len);
  s.input = {512};
  s.layers = {dense_layer(512, Activation::relu),
              dense_layer(1000, Activation::relu),
              reshape_layer({200, 5}),
              deconv_layer(128, 3, strides[0], Padding::same, Activation::relu),
              deconv_layer(128, 4, strides[1], Padding::same, Activation::relu),
              deconv_layer(64, 4, strides[2], Padding::same, Activation::relu),
              deconv_layer(16, 5, strides[3], Padding::same, Activation::relu),
              deconv_layer(1, 2, strides[4], Padding::same, Activation::sigmoid)};
  validate_architecture(s);
  return s;
}

ArchitectureSpec dense_generator(int noise_dim, const std::vector<int>& hidden, Shape out_shape,
                                 Activation final_act) {
  check(noise_dim >= 1, "generator noise dimension must be positive");
  ArchitectureSpec s;
  s.name = "dense_generator";
  s.input = {noise_dim};
  for (int h : hidden) s.layers.push_back(dense_layer(h, Activation::relu));
  s.layers.push_back(dense_layer(static_cast<int>(shape_numel(out_shape)), final_act));
  if (out_shape.size() > 1) s.layers.push_back(reshape_layer(out_shape));
  validate_architecture(s);
  return s;
}

ArchitectureSpec editor_net(Shape io_shape, int hidden) {
  ArchitectureSpec s;
  s.name = "editor";
  s.input = io_shape;
  if (io_shape.size() == 1) {
    s.layers = {dense_layer(hidden, Activation::relu),
                dense_layer(static_cast<int>(io_shape[0]), Activation::tanh)};
  } else {
    const int channels = static_cast<int>(io_shape[0]);
    const int kernel = io_shape.size() == 3 ? 3 : 5;
    s.layers = {conv_layer(hidden, kernel, 1, Padding::same, Activation::relu),
                conv_layer(channels, kernel, 1, Padding::same, Activation::tanh)};
  }
  validate_architecture(s);
  return s;
}

}  // namespace amkt
