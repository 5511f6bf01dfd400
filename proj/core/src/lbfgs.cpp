#include "vitprobe/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>

#include "vitprobe/error.hpp"

namespace vitprobe {

void LbfgsOptions::validate() const {
  if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0)) fail(ErrorKind::Spec, "line search constants need 0 < c1 < c2 < 1");
  if (!(tol >= 0.0)) fail(ErrorKind::Spec, "tol must be non-negative");
  if (history == 0) fail(ErrorKind::Spec, "history must be positive");
  if (max_linesearch == 0) fail(ErrorKind::Spec, "max_linesearch must be positive");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

// Minimizer of the cubic interpolating (a, fa, ga) and (b, fb, gb), clamped
// to the interior [lo + 0.1 w, hi - 0.1 w] of the bracket; bisection when the
// cubic is degenerate.
double cubic_step(double a, double fa, double ga, double b, double fb, double gb) {
  const double lo = std::min(a, b), hi = std::max(a, b), width = hi - lo;
  const double d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - ga * gb;
  double t = 0.5 * (a + b);
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = gb - ga + 2.0 * d2;
    if (denom != 0.0) {
      const double cand = b - (b - a) * (gb + d2 - d1) / denom;
      if (std::isfinite(cand)) t = cand;
    }
  }
  return std::clamp(t, lo + 0.1 * width, hi - 0.1 * width);
}

struct Evaluator {
  const Objective& fn;
  std::size_t count = 0;

  double operator()(std::span<const double> x, std::span<double> g) {
    ++count;
    const double f = fn(x, g);
    if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
    return f;
  }
};

struct LinePoint {
  double alpha = 0.0;
  double f = 0.0;
  double slope = 0.0;  // directional derivative
  std::vector<double> x, g;
};

// Strong-Wolfe search (bracketing then zoom). Returns the accepted point or
// nothing after max_linesearch evaluations.
std::optional<LinePoint> strong_wolfe(Evaluator& eval, const std::vector<double>& x0, double f0,
                                      const std::vector<double>& d, double slope0, double alpha_init,
                                      const LbfgsOptions& opt, LinePoint& best) {
  const std::size_t n = x0.size();
  auto probe = [&](double alpha) {
    LinePoint p;
    p.alpha = alpha;
    p.x.resize(n);
    p.g.resize(n);
    for (std::size_t i = 0; i < n; ++i) p.x[i] = x0[i] + alpha * d[i];
    p.f = eval(p.x, p.g);
    p.slope = dot(p.g, d);
    if (p.f < best.f) best = p;
    return p;
  };

  std::size_t evals = 0;
  LinePoint prev;
  prev.alpha = 0.0;
  prev.f = f0;
  prev.slope = slope0;
  double alpha = alpha_init;

  auto zoom = [&](LinePoint lo, LinePoint hi) -> std::optional<LinePoint> {
    while (evals < opt.max_linesearch) {
      const double a = cubic_step(lo.alpha, lo.f, lo.slope, hi.alpha, hi.f, hi.slope);
      LinePoint p = probe(a);
      ++evals;
      if (p.f > f0 + opt.c1 * p.alpha * slope0 || p.f >= lo.f) {
        hi = std::move(p);
      } else {
        if (std::abs(p.slope) <= -opt.c2 * slope0) return p;
        if (p.slope * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(p);
      }
      if (std::abs(hi.alpha - lo.alpha) <= 1e-16 * std::max(1.0, lo.alpha)) break;
    }
    return std::nullopt;
  };

  while (evals < opt.max_linesearch) {
    LinePoint cur = probe(alpha);
    ++evals;
    if (cur.f > f0 + opt.c1 * alpha * slope0 || (evals > 1 && cur.f >= prev.f)) return zoom(prev, cur);
    if (std::abs(cur.slope) <= -opt.c2 * slope0) return cur;
    if (cur.slope >= 0.0) return zoom(cur, prev);
    prev = std::move(cur);
    alpha *= 2.0;
  }
  return std::nullopt;
}

}  // namespace

LbfgsResult lbfgs_minimize(const Objective& fn, std::vector<double> x0, const LbfgsOptions& opt) {
  opt.validate();
  for (double v : x0) {
    if (!std::isfinite(v)) fail(ErrorKind::Spec, "lbfgs: initial point is not finite");
  }
  Evaluator eval{fn};
  const std::size_t n = x0.size();
  LbfgsResult res;
  std::vector<double> x = std::move(x0), g(n);
  double f = eval(x, g);
  res.f_history.push_back(f);

  std::deque<std::vector<double>> S, Y;
  std::deque<double> rho;
  std::vector<double> d(n), alphas;

  auto finish = [&](LbfgsStatus status) {
    res.x = x;
    res.f = f;
    res.grad_inf_norm = inf_norm(g);
    res.status = status;
    res.converged = status == LbfgsStatus::Converged;
    res.evaluations = eval.count;
    return res;
  };

  if (inf_norm(g) < opt.tol) return finish(LbfgsStatus::Converged);

  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    double alpha_init = 1.0;
    if (S.empty()) {
      const double gnorm = std::sqrt(dot(g, g));
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      alpha_init = 1.0 / gnorm;
    } else {
      // two-loop recursion
      std::vector<double> q = g;
      alphas.assign(S.size(), 0.0);
      for (std::size_t k = S.size(); k-- > 0;) {
        alphas[k] = rho[k] * dot(S[k], q);
        for (std::size_t i = 0; i < n; ++i) q[i] -= alphas[k] * Y[k][i];
      }
      const double gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
      for (std::size_t i = 0; i < n; ++i) q[i] *= gamma;
      for (std::size_t k = 0; k < S.size(); ++k) {
        const double beta = rho[k] * dot(Y[k], q);
        for (std::size_t i = 0; i < n; ++i) q[i] += S[k][i] * (alphas[k] - beta);
      }
      for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];
    }
    double slope = dot(g, d);
    if (!(slope < 0.0)) {
      // not a descent direction: drop memory, fall back to steepest descent
      S.clear();
      Y.clear();
      rho.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope = dot(g, d);
      alpha_init = 1.0 / std::sqrt(-slope);
    }

    LinePoint best;
    best.f = f;
    auto accepted = strong_wolfe(eval, x, f, d, slope, alpha_init, opt, best);
    if (!accepted) {
      if (best.f < f) {
        x = best.x;
        g = best.g;
        f = best.f;
        res.f_history.push_back(f);
        ++res.iterations;
      }
      return finish(LbfgsStatus::LineSearchFailed);
    }

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = accepted->x[i] - x[i];
      y[i] = accepted->g[i] - g[i];
    }
    x = std::move(accepted->x);
    g = std::move(accepted->g);
    f = accepted->f;
    res.f_history.push_back(f);
    ++res.iterations;

    const double sy = dot(s, y);
    if (sy > opt.curvature_eps) {
      if (S.size() == opt.history) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho.push_back(1.0 / sy);
    }
    if (inf_norm(g) < opt.tol) return finish(LbfgsStatus::Converged);
  }
  return finish(LbfgsStatus::MaxIterations);
}

}  // namespace vitprobe
