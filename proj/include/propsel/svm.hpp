#pragma once

// L2-regularized hinge-loss linear SVM (dual coordinate descent) and Platt
// sigmoid calibration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "propsel/error.hpp"

namespace propsel::svm {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Sample {
  std::vector<double> x;
  int y = 1;           // +1 or -1
  double alpha = 0.0;  // dual variable, retained across solves for warm starts
};

struct LinearModel {
  std::vector<double> w;
  double bias = 0.0;

  double margin(std::span<const double> x) const { return dot(w, x) + bias; }
};

struct SolveOptions {
  double c = 0.1;
  int max_epochs = 2000;
  double rel_gap = 1e-5;  // stop when primal - dual <= rel_gap * primal
  std::uint64_t seed = 1;
};

struct SolveResult {
  LinearModel model;
  int epochs = 0;
  // Objective of the incumbent (best primal) solution after each epoch.
  std::vector<double> objective_trace;
};

/// 0.5 (|w|^2 + b^2) + C sum max(0, 1 - y (w.x + b)); the bias is regularized
/// as an appended constant feature.
inline double primal_objective(const LinearModel& m, std::span<const Sample> data, double c) {
  double reg = dot(m.w, m.w) + m.bias * m.bias;
  double loss = 0.0;
  for (const auto& s : data) loss += std::max(0.0, 1.0 - s.y * m.margin(s.x));
  return 0.5 * reg + c * loss;
}

namespace detail {
inline LinearModel model_from_alpha(std::span<const Sample> data, std::size_t dim) {
  LinearModel m{std::vector<double>(dim, 0.0), 0.0};
  for (const auto& s : data) {
    if (s.alpha == 0.0) continue;
    const double k = s.alpha * s.y;
    for (std::size_t d = 0; d < dim; ++d) m.w[d] += k * s.x[d];
    m.bias += k;
  }
  return m;
}
}  // namespace detail

/// Dual coordinate descent starting from the alphas stored in `data`
/// (all zero for a cold start). Alphas are clamped to [0, C] and updated in place.
inline SolveResult solve(std::span<Sample> data, const SolveOptions& opt) {
  if (data.empty()) throw Error(ErrorCode::InsufficientData, "empty SVM training set");
  const std::size_t dim = data.front().x.size();
  for (auto& s : data) {
    if (s.x.size() != dim) throw Error(ErrorCode::SizeMismatch, "SVM samples differ in length");
    s.alpha = std::clamp(s.alpha, 0.0, opt.c);
  }
  std::vector<double> qii(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) qii[i] = dot(data[i].x, data[i].x) + 1.0;

  LinearModel m = detail::model_from_alpha(data, dim);
  SolveResult res;
  res.model = m;
  double best = primal_objective(m, data, opt.c);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(opt.seed);

  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      Sample& s = data[i];
      const double g = s.y * m.margin(s.x) - 1.0;
      double pg = g;
      if (s.alpha <= 0.0) pg = std::min(g, 0.0);
      else if (s.alpha >= opt.c) pg = std::max(g, 0.0);
      if (pg == 0.0) continue;
      const double a_new = std::clamp(s.alpha - g / qii[i], 0.0, opt.c);
      const double delta = (a_new - s.alpha) * s.y;
      s.alpha = a_new;
      if (delta == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) m.w[d] += delta * s.x[d];
      m.bias += delta;
    }
    res.epochs = epoch + 1;
    const double primal = primal_objective(m, data, opt.c);
    if (primal < best) {
      best = primal;
      res.model = m;
    }
    res.objective_trace.push_back(best);
    double alpha_sum = 0.0;
    for (const auto& s : data) alpha_sum += s.alpha;
    const double dual = alpha_sum - 0.5 * (dot(m.w, m.w) + m.bias * m.bias);
    if (best - dual <= opt.rel_gap * std::max(1e-12, std::abs(best))) break;
  }
  return res;
}

// ---------------------------------------------------------------------------

struct Platt {
  double a = -1.0;
  double b = 0.0;

  double operator()(double margin) const {
    const double f = a * margin + b;
    // Numerically stable logistic 1 / (1 + exp(f)).
    if (f >= 0) {
      const double e = std::exp(-f);
      return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(f));
  }
};

/// Newton fit with backtracking (Lin, Lin and Weng's formulation of Platt's
/// method) using the prior-smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2).
/// The slope is kept strictly negative so the mapping stays increasing in margin.
inline Platt fit_platt(std::span<const double> margins, std::span<const int> labels) {
  if (margins.size() != labels.size() || margins.empty())
    throw Error(ErrorCode::InsufficientData, "Platt calibration needs labelled margins");
  double prior1 = 0, prior0 = 0;
  for (int y : labels) (y > 0 ? prior1 : prior0) += 1;
  const double hi = (prior1 + 1.0) / (prior1 + 2.0);
  const double lo = 1.0 / (prior0 + 2.0);
  const std::size_t n = margins.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] > 0 ? hi : lo;

  constexpr int kMaxIter = 100;
  constexpr double kMinStep = 1e-10;
  constexpr double kSigma = 1e-12;
  constexpr double kEps = 1e-5;
  double a = 0.0;
  double b = std::log((prior0 + 1.0) / (prior1 + 1.0));

  auto objective = [&](double aa, double bb) {
    double f = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fa = margins[i] * aa + bb;
      if (fa >= 0) f += t[i] * fa + std::log1p(std::exp(-fa));
      else f += (t[i] - 1) * fa + std::log1p(std::exp(fa));
    }
    return f;
  };
  double fval = objective(a, b);
  for (int it = 0; it < kMaxIter; ++it) {
    double h11 = kSigma, h22 = kSigma, h21 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double fa = margins[i] * a + b;
      double p, q;
      if (fa >= 0) {
        p = std::exp(-fa) / (1.0 + std::exp(-fa));
        q = 1.0 / (1.0 + std::exp(-fa));
      } else {
        p = 1.0 / (1.0 + std::exp(fa));
        q = std::exp(fa) / (1.0 + std::exp(fa));
      }
      const double d2 = p * q;
      h11 += margins[i] * margins[i] * d2;
      h22 += d2;
      h21 += margins[i] * d2;
      const double d1 = t[i] - p;
      g1 += margins[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= kMinStep) {
      const double na = a + step * da, nb = b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        a = na;
        b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < kMinStep) break;
  }
  return {std::min(a, -1e-6), b};
}

}  // namespace propsel::svm
