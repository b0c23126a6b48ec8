#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "srdet/core/param_store.hpp"

namespace srdet {

/// SR pretraining schedule: the rate halves every halve_every epochs.
inline double sr_stage_lr(int epoch, double base_lr, int halve_every = 200) {
    return base_lr * std::pow(0.5, epoch / halve_every);
}

/// Fine-tuning schedule: the rate shrinks by `factor` every decay_every
/// epochs.
inline double finetune_stage_lr(int epoch, double base_lr, int decay_every = 10,
                                double factor = 0.1) {
    return base_lr * std::pow(factor, epoch / decay_every);
}

/// Adam optimizer over a parameter store. Moments live beside the store
/// keyed by parameter name; step order follows name order, so updates are
/// deterministic. Frozen parameters are skipped entirely (no moment decay).
template <typename T>
class Adam {
public:
    struct Config {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    explicit Adam(Config cfg = {}) : cfg_(cfg) {}

    void step(ParameterStore<T>& store, double lr,
              const std::function<bool(const std::string&)>& frozen = nullptr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (auto& [name, entry] : store) {
            if (frozen && frozen(name)) continue;
            auto& m = moment(name, "m", entry.value.shape());
            auto& v = moment(name, "v", entry.value.shape());
            for (std::size_t i = 0; i < entry.value.size(); ++i) {
                const double g = static_cast<double>(entry.grad[i]);
                m[i] = static_cast<T>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
                v[i] = static_cast<T>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                entry.value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
            }
        }
    }

    long step_count() const { return t_; }
    const Config& config() const { return cfg_; }

    /// Serialized state: moment arrays plus the step counter, for resumable
    /// checkpoints.
    std::map<std::string, Tensor<T>> export_state() const {
        std::map<std::string, Tensor<T>> out;
        for (const auto& [key, tensor] : moments_) out["opt/" + key] = tensor;
        Tensor<T> step(1, 1, 1);
        step[0] = static_cast<T>(t_);
        out["opt/step"] = step;
        return out;
    }

    void import_state(const std::map<std::string, Tensor<T>>& state) {
        moments_.clear();
        t_ = 0;
        for (const auto& [key, tensor] : state) {
            if (key == "opt/step") t_ = static_cast<long>(tensor[0]);
            else if (key.rfind("opt/", 0) == 0) moments_[key.substr(4)] = tensor;
        }
    }

private:
    Tensor<T>& moment(const std::string& name, const char* kind, Shape shape) {
        const std::string key = std::string(kind) + "/" + name;
        auto it = moments_.find(key);
        if (it == moments_.end()) it = moments_.emplace(key, Tensor<T>(shape, T(0))).first;
        return it->second;
    }

    Config cfg_;
    long t_ = 0;
    std::map<std::string, Tensor<T>> moments_;
};

} // namespace srdet
