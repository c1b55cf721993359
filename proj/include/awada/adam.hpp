#pragma once

#include <cstdint>
#include <vector>

#include "awada/tensor.hpp"

namespace awada {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are owned here; parameters are
/// updated in place through Tensor::mutable_values.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  /// Applies one update from the current gradients. A non-finite gradient
  /// throws std::runtime_error naming the parameter, before anything changes.
  void step();

  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::int64_t step_count() const { return steps_; }

  std::vector<double>& first_moment(std::size_t i) { return m_[i]; }
  std::vector<double>& second_moment(std::size_t i) { return v_[i]; }
  void set_step_count(std::int64_t steps) { steps_ = steps; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t steps_ = 0;
};

}  // namespace awada
