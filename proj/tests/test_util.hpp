#pragma once

#include "metasac/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace metasac::testing {

using ad::Matrix;
using ad::TensorMap;

/// Central differences of a scalar function of named parameters.
inline TensorMap fd_gradient(const std::function<double(const TensorMap&)>& f, const TensorMap& at,
                             double h = 1e-6) {
  TensorMap out = ad::zeros_like(at);
  TensorMap probe = at;
  for (auto& [id, m] : probe) {
    Matrix& g = out.at(id);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double x = m(i);
      m(i) = x + h;
      const double fp = f(probe);
      m(i) = x - h;
      const double fm = f(probe);
      m(i) = x;
      g(i) = (fp - fm) / (2.0 * h);
    }
  }
  return out;
}

/// Entrywise |a - b| / max(|a|, |b|, floor); the floor keeps entries that are
/// zero in exact arithmetic from dividing rounding noise by rounding noise.
inline double rel_error(double a, double b, double floor = 1e-4) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

inline double max_rel_error(const TensorMap& a, const TensorMap& b, double floor = 1e-4) {
  double worst = 0.0;
  for (const auto& [id, m] : a) {
    const Matrix& n = b.at(id);
    for (Eigen::Index i = 0; i < m.size(); ++i) worst = std::max(worst, rel_error(m(i), n(i), floor));
  }
  return worst;
}

inline std::uint64_t hash_tensors(const TensorMap& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [id, v] : m) {
    for (char c : id) h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(v.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(v.size()) * sizeof(double); ++i)
      h = (h ^ bytes[i]) * 0x100000001b3ULL;
  }
  return h;
}

}  // namespace metasac::testing
