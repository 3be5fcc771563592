#pragma once

#include <string>

#include "vlsa/autodiff.hpp"
#include "vlsa/rng.hpp"

namespace vlsa {

/// Registers parameters with their initial values. Each tensor draws from a
/// stream keyed by its name, so values do not depend on registration order.
class ParamInit {
 public:
  static constexpr double kStd = 0.02;
  // Truncation bound in standard deviations.
  static constexpr double kBound = 3.0;

  ParamInit(ParamStore& store, const CounterRng& rng) : store_(store), rng_(rng) {}

  // Linear weights: truncated normal, weight decay applies.
  std::size_t weight(const std::string& name, int rows, int cols) { return normal(name, rows, cols, true); }
  // Tables, position and type vectors: truncated normal, no decay.
  std::size_t embedding(const std::string& name, int rows, int cols) { return normal(name, rows, cols, false); }
  std::size_t zeros(const std::string& name, int rows, int cols) {
    return store_.add(name, Matrix::Zero(rows, cols), false);
  }
  std::size_t ones(const std::string& name, int rows, int cols) {
    return store_.add(name, Matrix::Ones(rows, cols), false);
  }

  // Weight "<prefix>.w" (in x out) and bias "<prefix>.b" (1 x out).
  void linear(const std::string& prefix, int in, int out) {
    weight(prefix + ".w", in, out);
    zeros(prefix + ".b", 1, out);
  }
  void layer_norm(const std::string& prefix, int dim) {
    ones(prefix + ".g", 1, dim);
    zeros(prefix + ".b", 1, dim);
  }

 private:
  std::size_t normal(const std::string& name, int rows, int cols, bool decay) {
    CounterRng r = rng_.split(fnv1a64(name));
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.truncated_normal(kStd, kBound);
    return store_.add(name, std::move(m), decay);
  }

  ParamStore& store_;
  CounterRng rng_;
};

}  // namespace vlsa
