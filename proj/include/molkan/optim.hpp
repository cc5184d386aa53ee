#pragma once

// Adam with standard bias correction. Moments live per parameter, keyed by
// the parameter's stable address within one optimizer instance.

#include <cmath>
#include <unordered_map>
#include <vector>

#include "molkan/tensor.hpp"

namespace molkan {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(std::vector<Parameter*> params, AdamConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        for (Parameter* p : params_) {
            moments_[p] = Moments{std::vector<double>(size_t(p->size()), 0.0),
                                  std::vector<double>(size_t(p->size()), 0.0)};
        }
    }

    // One update over all parameters; gradients are consumed and zeroed.
    // Parameters with any non-finite gradient entry are skipped for the step
    // and counted.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (Parameter* p : params_) {
            bool finite = true;
            for (double g : p->grad)
                if (!std::isfinite(g)) {
                    finite = false;
                    break;
                }
            if (!finite) {
                ++skipped_;
                p->zero_grad();
                continue;
            }
            auto& mo = moments_[p];
            double* v = p->value.data->data();
            for (size_t i = 0; i < p->grad.size(); ++i) {
                double g = p->grad[i];
                mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g;
                mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = mo.m[i] / bc1;
                double vhat = mo.v[i] / bc2;
                v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            p->zero_grad();
        }
    }

    int64_t steps() const { return t_; }
    int64_t skipped_updates() const { return skipped_; }
    double learning_rate() const { return cfg_.lr; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    std::vector<Parameter*> params_;
    AdamConfig cfg_;
    std::unordered_map<Parameter*, Moments> moments_;
    int64_t t_ = 0;
    int64_t skipped_ = 0;
};

}  // namespace molkan
