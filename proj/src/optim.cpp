#include "alignkit/optim.h"

#include <cmath>
#include <string>

#include "alignkit/errors.h"

namespace alignkit {

void AdamWConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be positive, got " + std::to_string(lr));
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
    config_.validate();
    if (params_.empty()) {
        throw ContractError("AdamW needs at least one parameter");
    }
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        if (!p.requires_grad()) {
            throw ContractError("AdamW received a frozen parameter");
        }
        m_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
}

template <typename T>
void AdamW::update_param(const Tensor& param, std::vector<double>& m, std::vector<double>& v,
                         double bias1, double bias2) {
    auto values = param.mutable_data<T>();
    const bool has_grad = param.has_grad();
    auto grads = has_grad ? param.grad_data<T>() : std::span<T>();
    for (size_t i = 0; i < values.size(); ++i) {
        const double g = has_grad ? static_cast<double>(grads[i]) : 0.0;
        const double theta = static_cast<double>(values[i]);
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        const double update = m_hat / (std::sqrt(v_hat) + config_.eps) + config_.weight_decay * theta;
        values[i] = static_cast<T>(theta - config_.lr * update);
    }
}

void AdamW::step() {
    ++step_count_;
    const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
    const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
    for (size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].dtype() == DType::F32) {
            update_param<float>(params_[i], m_[i], v_[i], bias1, bias2);
        } else {
            update_param<double>(params_[i], m_[i], v_[i], bias1, bias2);
        }
    }
}

void AdamW::zero_grad() {
    for (const Tensor& p : params_) p.zero_grad();
}

namespace {

template <typename T>
double squared_norm(const Tensor& param) {
    double total = 0.0;
    for (T g : param.grad_data<T>()) {
        total += static_cast<double>(g) * static_cast<double>(g);
    }
    return total;
}

template <typename T>
void scale_grad(const Tensor& param, double factor) {
    for (T& g : param.grad_data<T>()) {
        g = static_cast<T>(static_cast<double>(g) * factor);
    }
}

}  // namespace

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    if (!(max_norm > 0.0)) {
        throw ContractError("max_norm must be positive, got " + std::to_string(max_norm));
    }
    double total = 0.0;
    for (const Tensor& p : params) {
        if (!p.has_grad()) continue;
        total += p.dtype() == DType::F32 ? squared_norm<float>(p) : squared_norm<double>(p);
    }
    const double norm = std::sqrt(total);
    if (norm > max_norm) {
        const double factor = max_norm / norm;
        for (const Tensor& p : params) {
            if (!p.has_grad()) continue;
            if (p.dtype() == DType::F32) {
                scale_grad<float>(p, factor);
            } else {
                scale_grad<double>(p, factor);
            }
        }
    }
    return norm;
}

}  // namespace alignkit
