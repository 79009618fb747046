#pragma once

#include <functional>
#include <vector>

#include "amkt/tape.hpp"

namespace amkt {

// A differentiable scalar problem: some parameter tensors plus a builder that
// records the loss for them on a tape. The builder must be deterministic in
// its inputs (fix any rng it uses per call).
struct GradProblem {
  std::vector<Tensor64> params;
  std::function<int(Tape64&, const std::vector<int>&)> build;
};

// Central-difference verification of the tape gradients, in double precision.
// Returns the maximum over parameter coordinates of
//   |g_tape - g_fd| / max(1, |g_fd|).
double finite_difference_check(const GradProblem& problem, double h = 1e-5);

}  // namespace amkt
