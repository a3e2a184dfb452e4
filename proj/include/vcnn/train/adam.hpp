#pragma once

#include <cmath>
#include <vector>

#include "vcnn/error.hpp"
#include "vcnn/nn/model.hpp"

namespace vcnn {

/// Learning rate for a 0-based epoch: lr0 * rate^(epoch / total).
inline double exp_decay_lr(double lr0, double rate, std::size_t epoch, std::size_t total_epochs) {
    if (!(rate > 0.0)) throw InputError("decay rate must be > 0");
    if (total_epochs == 0) throw InputError("total epochs must be >= 1");
    if (epoch > total_epochs) throw InputError("epoch beyond the schedule");
    return lr0 * std::pow(rate, double(epoch) / double(total_epochs));
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

template <class T>
class Adam {
public:
    explicit Adam(const std::vector<Param<T>*>& params, AdamConfig cfg = {}) : params_(params), cfg_(cfg) {
        for (auto* p : params_) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }

    std::size_t step_count() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }

    /// One bias-corrected update. Frozen tensors are never touched.
    void step(double lr) {
        for (auto* p : params_) {
            if (!p->trainable) continue;
            for (T g : p->grad) {
                if (!std::isfinite(g)) throw NumericError("non-finite gradient in '" + p->name + "'");
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto* p = params_[k];
            if (!p->trainable) continue;
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < p->size(); ++i) {
                const double g = double(p->grad[i]);
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m[i] / c1;
                const double vhat = v[i] / c2;
                p->value[i] = static_cast<T>(double(p->value[i]) - lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
            }
        }
    }

private:
    std::vector<Param<T>*> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::size_t t_ = 0;
};

}  // namespace vcnn
