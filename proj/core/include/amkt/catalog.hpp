#pragma once

#include <string>
#include <vector>

#include "amkt/nn.hpp"

namespace amkt {

// Named architectures used across the experiments. The mnist_* family
// consumes (1,28,28) images, ae_* consumes 60-dimensional minute vectors,
// a3_* consumes (1,60) single-channel series. Sizes follow a common pattern:
// ID mirrors the teacher, S and VS shrink it, L and LL strip hidden dense
// capacity.
ArchitectureSpec catalog_architecture(const std::string& name);
std::vector<std::string> catalog_names();

// Recording-level net over concatenated min-max normalized channels
// (input (1,width), 240 for four 60s channels); classes picks the head:
// 8 for the adversary, 4 for the identity approximator, 2 for the apnea
// user task.
ArchitectureSpec association_net(int classes, int width = 240);

// Membership-inference attacker: 4 dense layers (3 hidden elu layers of
// `hidden` units) over a target's output distribution.
ArchitectureSpec membership_net(int in_dim, int hidden = 40);

// Generic dense stimulus generator: noise -> hidden relu stack -> output of
// out_shape squashed by final_act.
ArchitectureSpec dense_generator(int noise_dim, const std::vector<int>& hidden, Shape out_shape,
                                 Activation final_act = Activation::sigmoid);

// Deconvolutional waveform generator for series inputs: 512 noise -> dense
// 512/1000 -> five transposed convs up to a (1, out_len) sigmoid output.
// out_len must be a multiple of 5 reachable with strides {2,2,3,2,2}.
ArchitectureSpec waveform_generator(int out_len);

// Edit network for editor-mode generation: input and output share io_shape,
// output is tanh-bounded.
ArchitectureSpec editor_net(Shape io_shape, int hidden = 16);

}  // namespace amkt
