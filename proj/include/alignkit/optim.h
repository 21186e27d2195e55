#pragma once

#include <cstdint>
#include <vector>

#include "alignkit/tensor.h"

namespace alignkit {

struct AdamWConfig {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;

    void validate() const;
};

/// AdamW with decoupled weight decay:
///   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
/// Moments are kept in double regardless of parameter dtype so runs are
/// reproducible bit for bit. A parameter whose gradient was never produced
/// contributes a zero gradient.
class AdamW {
  public:
    AdamW(std::vector<Tensor> params, AdamWConfig config);

    void step();
    void zero_grad();
    int64_t step_count() const { return step_count_; }

  private:
    template <typename T>
    void update_param(const Tensor& param, std::vector<double>& m, std::vector<double>& v,
                      double bias1, double bias2);

    std::vector<Tensor> params_;
    AdamWConfig config_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    int64_t step_count_ = 0;
};

/// Scales every gradient by max_norm / norm when the global L2 norm (over all
/// parameters, accumulated in double) exceeds max_norm. Returns the pre-clip
/// norm. Throws ContractError when max_norm is not positive.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace alignkit
