#pragma once

#include "alrite/common.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

// Independent reference implementations used by the unit and acceptance
// suites. They favour obviousness over speed.
namespace alrite::oracle {

/// Central difference of f at x along every coordinate.
inline Vector central_difference(const std::function<double(const Vector&)>& f, Vector x, double step = 1e-6) {
  Vector grad(x.size());
  for (Index k = 0; k < x.size(); ++k) {
    const double saved = x(k);
    x(k) = saved + step;
    const double up = f(x);
    x(k) = saved - step;
    const double down = f(x);
    x(k) = saved;
    grad(k) = (up - down) / (2.0 * step);
  }
  return grad;
}

/// max_k |a_k - b_k| / max(1, |a_k|, |b_k|).
inline double max_relative_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Index k = 0; k < a.size(); ++k) {
    const double scale = std::max({1.0, std::abs(a(k)), std::abs(b(k))});
    worst = std::max(worst, std::abs(a(k) - b(k)) / scale);
  }
  return worst;
}

struct BruteTwin {
  std::vector<Index> twin;
  std::vector<double> distance;
};

/// Exhaustive nearest opposite-arm neighbour; ties go to the smallest index.
inline BruteTwin brute_twins(const Matrix& z, const std::vector<int>& t, const Matrix* other = nullptr) {
  const Matrix& target = other ? *other : z;
  BruteTwin out;
  for (Index i = 0; i < z.rows(); ++i) {
    Index best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < target.rows(); ++j) {
      if (t[static_cast<std::size_t>(j)] == t[static_cast<std::size_t>(i)]) continue;
      double d2 = 0.0;
      for (Index c = 0; c < z.cols(); ++c) {
        const double diff = z(i, c) - target(j, c);
        d2 += diff * diff;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = j;
      }
    }
    out.twin.push_back(best);
    out.distance.push_back(std::sqrt(best_d2));
  }
  return out;
}

/// Votes received by j: the number of rows choosing j as twin.
inline std::vector<double> brute_weights(const std::vector<Index>& twin) {
  std::vector<double> w(twin.size(), 0.0);
  for (std::size_t i = 0; i < twin.size(); ++i) w[static_cast<std::size_t>(twin[i])] += 1.0;
  return w;
}

/// Fraction of pairs i<j with a strictly concordant order, minus discordant,
/// divided by the total number of pairs.
inline double brute_kendall(const Vector& u, const Vector& v) {
  const Index n = u.size();
  double score = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double s = (u(i) - u(j)) * (v(i) - v(j));
      score += s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
    }
  return score / (0.5 * static_cast<double>(n * (n - 1)));
}

/// Spearman of tie-free lists through the d^2 formula.
inline double brute_spearman_distinct(const Vector& u, const Vector& v) {
  const Index n = u.size();
  const auto rank = [n](const Vector& a, Index i) {
    double r = 1.0;
    for (Index j = 0; j < n; ++j)
      if (a(j) < a(i)) r += 1.0;
    return r;
  };
  double d2 = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double d = rank(u, i) - rank(v, i);
    d2 += d * d;
  }
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

}  // namespace alrite::oracle
