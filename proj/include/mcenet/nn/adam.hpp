#pragma once

#include "mcenet/nn/layers.hpp"

#include <cmath>
#include <vector>

namespace mcenet::nn {

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  void step(ParamStore& params, const std::vector<Mat>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& e = params.entry(static_cast<int>(i));
      const Mat& g = grads[i];
      if (g.size() == 0) continue;
      if (e.adam_m.size() == 0) {
        e.adam_m = Mat::Zero(e.value.rows(), e.value.cols());
        e.adam_v = Mat::Zero(e.value.rows(), e.value.cols());
      }
      e.adam_m = beta1_ * e.adam_m + (1.0 - beta1_) * g;
      e.adam_v = (beta2_ * e.adam_v.array() + (1.0 - beta2_) * g.array().square()).matrix();
      const auto m_hat = e.adam_m.array() / bc1;
      const auto v_hat = e.adam_v.array() / bc2;
      e.value.array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
    }
  }

  int iterations() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

}  // namespace mcenet::nn
