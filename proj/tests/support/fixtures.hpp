#pragma once

#include "alrite/data.hpp"

#include <random>

namespace alrite::testing {

inline Matrix gaussian_matrix(Index rows, Index cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> dist(0.0, sd);
  Matrix m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  return m;
}

inline Vector gaussian_vector(Index n, Rng& rng, double sd = 1.0) {
  return gaussian_matrix(n, 1, rng, sd).col(0);
}

/// Treatment flags with both arms present: the first two rows are 0 and 1.
inline std::vector<int> random_flags(Index n, Rng& rng, double p = 0.5) {
  std::bernoulli_distribution coin(p);
  std::vector<int> t(static_cast<std::size_t>(n));
  for (auto& v : t) v = coin(rng) ? 1 : 0;
  t[0] = 0;
  t[1] = 1;
  return t;
}

/// Continuous covariates, random flags, y = x * w + t + noise.
inline Dataset random_dataset(Index n, Index d, std::uint64_t seed, double p = 0.5) {
  Rng rng(seed);
  Dataset data;
  data.x = gaussian_matrix(n, d, rng);
  data.t = random_flags(n, rng, p);
  const Vector w = gaussian_vector(d, rng);
  data.y = data.x * w + gaussian_vector(n, rng, 0.3);
  for (Index i = 0; i < n; ++i) data.y(i) += data.t[static_cast<std::size_t>(i)];
  data.kinds.assign(static_cast<std::size_t>(d), FeatureKind::continuous);
  return data;
}

inline IndexList iota(Index n) {
  IndexList out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

}  // namespace alrite::testing
