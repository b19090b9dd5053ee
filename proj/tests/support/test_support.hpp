#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "safeopt/ndcore/matrix.hpp"
#include "safeopt/ndcore/rng.hpp"

namespace safeopt::testing {

/// Central-difference gradient of f at x.
inline Vector central_difference(const std::function<double(const Vector&)>& f, Vector x,
                                 double step = 1e-6) {
  Vector g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b||_inf / max(||b||_inf, floor)
inline double relative_error(const Vector& a, const Vector& b, double floor = 1e-8) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  return diff / std::max(norm_inf(b), floor);
}

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline Vector flatten(const Matrix& m) { return Vector(m.values()); }

inline Matrix reshape(const Vector& v, std::size_t r, std::size_t c) {
  return Matrix(r, c, v.values());
}

}  // namespace safeopt::testing
