#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace fetrack {

using VecX = Eigen::VectorXd;

/// Returns f(x) and writes the gradient into `grad` (already sized like x).
/// Must be reentrant: the gradient checker calls it from one thread, but the
/// objective may parallelize internally.
using Objective = std::function<double(const VecX& x, VecX& grad)>;

class OptimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Termination { Gradient, MaxIterations, LineSearchFailure };

std::string to_string(Termination t);

struct ObjectiveReport {
  double energy = 0.0;
  double initial_energy = 0.0;
  int iterations = 0;
  int evaluations = 0;
  double grad_norm = 0.0;
  Termination reason = Termination::Gradient;
};

struct MinimizeOptions {
  int max_iters = 1000;
  int memory = 10;
  /// Gradient-norm threshold; negative means 1e-7 * max(1, |f|).
  double grad_tol = -1.0;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 30;
};

/// Limited-memory BFGS with a strong-Wolfe line search. x is updated in
/// place; the returned energy never exceeds f(x0).
ObjectiveReport minimize(const Objective& f, VecX& x, const MinimizeOptions& opts = {});

struct GradientCheck {
  double max_rel_error = 0.0;
  int worst_index = -1;
  bool ok = true;
};

/// Compares the analytic gradient with central differences along `probes`
/// random coordinates (all coordinates if probes <= 0 or >= n).
GradientCheck check_gradient(const Objective& f, const VecX& x, int probes = 0, double step = 1e-6,
                             double tol = 1e-4, std::uint64_t seed = 1);

}  // namespace fetrack
