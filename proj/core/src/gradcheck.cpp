#include "amkt/gradcheck.hpp"

#include <cmath>

namespace amkt {

namespace {

double eval_loss(const GradProblem& p, const std::vector<Tensor64>& params) {
  Tape64 tape;
  std::vector<int> ids;
  ids.reserve(params.size());
  for (const auto& t : params) ids.push_back(tape.leaf(t, false));
  const int loss = p.build(tape, ids);
  check(tape.value(loss).numel() == 1, "gradcheck builder must return a scalar node");
  return static_cast<double>(tape.value(loss)[0]);
}

}  // namespace

double finite_difference_check(const GradProblem& problem, double h) {
  check(h > 0.0, "finite difference step must be positive");
  check(!problem.params.empty(), "gradcheck needs at least one parameter tensor");

  // Analytic pass.
  Tape64 tape;
  std::vector<int> ids;
  ids.reserve(problem.params.size());
  for (const auto& t : problem.params) ids.push_back(tape.leaf(t, true));
  const int loss = problem.build(tape, ids);
  check(tape.value(loss).numel() == 1, "gradcheck builder must return a scalar node");
  tape.backward(loss);

  double max_rel = 0.0;
  std::vector<Tensor64> work = problem.params;
  for (size_t p = 0; p < work.size(); ++p) {
    const Tensor64& g = tape.grad(ids[p]);
    for (int64_t i = 0; i < work[p].numel(); ++i) {
      const double keep = work[p][i];
      work[p][i] = keep + h;
      const double up = eval_loss(problem, work);
      work[p][i] = keep - h;
      const double down = eval_loss(problem, work);
      work[p][i] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(static_cast<double>(g[i]) - fd) / std::max(1.0, std::abs(fd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace amkt
