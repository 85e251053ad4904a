#include "ssnas/optim.hpp"

#include <cmath>

namespace ssnas {

SgdMomentum::SgdMomentum(std::vector<autodiff::Var> params, double lr, double momentum,
                         double weight_decay)
    : params_(std::move(params)), lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(Tensor::zeros(p.value().shape()));
}

void SgdMomentum::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        autodiff::Var& p = params_[i];
        const Tensor& g = p.ensure_grad();
        Tensor& vel = velocity_[i];
        Tensor& w = p.mutable_value();
        for (std::int64_t j = 0; j < w.numel(); ++j) {
            vel[j] = momentum_ * vel[j] + (g[j] + weight_decay_ * w[j]);
            w[j] -= lr_ * vel[j];
        }
    }
}

Adam::Adam(std::vector<autodiff::Var> params, double lr, double weight_decay)
    : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(Tensor::zeros(p.value().shape()));
        v_.emplace_back(Tensor::zeros(p.value().shape()));
    }
}

void Adam::step() {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        autodiff::Var& p = params_[i];
        const Tensor& grad = p.ensure_grad();
        Tensor& w = p.mutable_value();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::int64_t j = 0; j < w.numel(); ++j) {
            const double g = grad[j] + weight_decay_ * w[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * g;
            v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
            w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
        }
    }
}

} // namespace ssnas
