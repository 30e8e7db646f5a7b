#include "fetrack/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace fetrack {

std::string to_string(Termination t) {
  switch (t) {
    case Termination::Gradient: return "gradient";
    case Termination::MaxIterations: return "max-iterations";
    case Termination::LineSearchFailure: return "line-search-failure";
  }
  return "unknown";
}

namespace {

struct Probe {
  double a = 0.0;
  double f = 0.0;
  double d = 0.0;  // directional derivative
};

// Minimizer of the cubic through (a, fa, da), (b, fb, db), kept inside the
// safeguarded interior of [a, b].
double cubic_step(const Probe& lo, const Probe& hi) {
  const double a = lo.a, b = hi.a;
  const double d1 = lo.d + hi.d - 3.0 * (lo.f - hi.f) / (a - b);
  const double disc = d1 * d1 - lo.d * hi.d;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = hi.d - lo.d + 2.0 * d2;
    if (denom != 0.0) t = b - (b - a) * (hi.d + d2 - d1) / denom;
  }
  const double left = std::min(a, b), right = std::max(a, b), w = right - left;
  if (!std::isfinite(t) || t < left + 0.1 * w || t > right - 0.1 * w) t = 0.5 * (a + b);
  return t;
}

class LineSearch {
 public:
  LineSearch(const Objective& f, const VecX& x, const VecX& p, double f0, double d0, const MinimizeOptions& o,
             int& evals)
      : f_(f), x_(x), p_(p), f0_(f0), d0_(d0), o_(o), evals_(evals), xt_(x.size()), gt_(x.size()) {}

  // Returns true on success; xt_/gt_/ft_ then hold the accepted point.
  bool run(double a1) {
    Probe prev{0.0, f0_, d0_};
    double a = a1;
    for (int k = 0; k < o_.max_line_search; ++k) {
      const Probe cur = eval(a);
      if (!std::isfinite(cur.f)) {
        // Overshot into a region where the objective blows up.
        a = 0.5 * (prev.a + a);
        continue;
      }
      if (cur.f > f0_ + o_.c1 * a * d0_ || (k > 0 && cur.f >= prev.f)) return zoom(prev, cur);
      if (std::abs(cur.d) <= -o_.c2 * d0_) return accept(cur);
      if (cur.d >= 0.0) return zoom(cur, prev);
      prev = cur;
      a *= 2.0;
    }
    return false;
  }

  const VecX& x() const { return best_x_; }
  const VecX& g() const { return best_g_; }
  double f() const { return best_f_; }

 private:
  Probe eval(double a) {
    xt_ = x_ + a * p_;
    ft_ = f_(xt_, gt_);
    ++evals_;
    if (!std::isfinite(ft_) || !gt_.allFinite()) return {a, std::numeric_limits<double>::infinity(), 0.0};
    const Probe pr{a, ft_, gt_.dot(p_)};
    if (ft_ < best_f_) {
      best_f_ = ft_;
      best_x_ = xt_;
      best_g_ = gt_;
      best_a_ = a;
    }
    return pr;
  }

  bool accept(const Probe& pr) {
    if (best_a_ != pr.a) {
      best_f_ = pr.f;
      best_x_ = xt_;
      best_g_ = gt_;
    }
    return true;
  }

  bool zoom(Probe lo, Probe hi) {
    for (int k = 0; k < o_.max_line_search; ++k) {
      const double a = cubic_step(lo, hi);
      if (std::abs(hi.a - lo.a) < 1e-16 * std::max(1.0, std::abs(lo.a))) break;
      const Probe cur = eval(a);
      if (!std::isfinite(cur.f) || cur.f > f0_ + o_.c1 * a * d0_ || cur.f >= lo.f) {
        hi = cur.f == std::numeric_limits<double>::infinity() ? Probe{a, cur.f, hi.d} : cur;
        continue;
      }
      if (std::abs(cur.d) <= -o_.c2 * d0_) return accept(cur);
      if (cur.d * (hi.a - lo.a) >= 0.0) hi = lo;
      lo = cur;
    }
    // Wolfe conditions not met, but any sufficient decrease is still usable.
    return best_f_ <= f0_ + o_.c1 * best_a_ * d0_ && best_f_ < f0_;
  }

  const Objective& f_;
  const VecX& x_;
  const VecX& p_;
  double f0_, d0_;
  const MinimizeOptions& o_;
  int& evals_;
  VecX xt_, gt_;
  double ft_ = 0.0;
  VecX best_x_, best_g_;
  double best_f_ = std::numeric_limits<double>::infinity();
  double best_a_ = 0.0;
};

}  // namespace

ObjectiveReport minimize(const Objective& f, VecX& x, const MinimizeOptions& opts) {
  ObjectiveReport rep;
  const Eigen::Index n = x.size();
  VecX g = VecX::Zero(n);
  double fx = f(x, g);
  rep.evaluations = 1;
  if (!std::isfinite(fx) || !g.allFinite()) throw OptimError("minimize: non-finite energy or gradient at x0");
  rep.initial_energy = fx;

  std::deque<VecX> s_hist, y_hist;
  std::deque<double> rho_hist;
  auto tol = [&](double e) { return opts.grad_tol >= 0.0 ? opts.grad_tol : 1e-7 * std::max(1.0, std::abs(e)); };

  rep.reason = Termination::MaxIterations;
  for (int it = 0; it < opts.max_iters; ++it) {
    const double gn = g.norm();
    if (gn <= tol(fx) || n == 0) {
      rep.reason = Termination::Gradient;
      break;
    }

    // Two-loop recursion.
    VecX q = -g;
    const std::size_t m = s_hist.size();
    std::vector<double> alpha(m);
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (m > 0) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < m; ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(q);
      q += (alpha[k] - beta) * s_hist[k];
    }
    double d0 = g.dot(q);
    if (!(d0 < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      q = -g;
      d0 = -gn * gn;
    }

    const double a1 = s_hist.empty() ? std::min(1.0, 1.0 / gn) : 1.0;
    LineSearch ls(f, x, q, fx, d0, opts, rep.evaluations);
    if (!ls.run(a1)) {
      if (!s_hist.empty()) {
        // Retry from steepest descent with a fresh memory.
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        --it;
        continue;
      }
      rep.reason = Termination::LineSearchFailure;
      rep.iterations = it;
      break;
    }
    VecX s = ls.x() - x;
    VecX y = ls.g() - g;
    x = ls.x();
    g = ls.g();
    fx = ls.f();
    rep.iterations = it + 1;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
  }
  rep.energy = fx;
  rep.grad_norm = g.norm();
  return rep;
}

GradientCheck check_gradient(const Objective& f, const VecX& x, int probes, double step, double tol,
                             std::uint64_t seed) {
  const Eigen::Index n = x.size();
  VecX g(n);
  f(x, g);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  if (probes > 0 && probes < n) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<std::size_t>(probes));
  }
  GradientCheck res;
  VecX xp = x, scratch(n);
  for (Eigen::Index i : idx) {
    xp[i] = x[i] + step;
    const double fp = f(xp, scratch);
    xp[i] = x[i] - step;
    const double fm = f(xp, scratch);
    xp[i] = x[i];
    const double fd = (fp - fm) / (2.0 * step);
    const double err = std::abs(fd - g[i]) / std::max(1.0, std::max(std::abs(fd), std::abs(g[i])));
    if (err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst_index = static_cast<int>(i);
    }
  }
  res.ok = res.max_rel_error <= tol;
  return res;
}

}  // namespace fetrack
