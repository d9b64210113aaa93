#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "csanmt/tape.hpp"
#include "csanmt/tensor.hpp"

namespace csanmt {

// Named parameter tensors with stable iteration order. The order is the
// insertion order, which makes checkpoints and optimizer walks deterministic.
class ParamStore {
public:
    Tensor& add(const std::string& name, std::vector<int64_t> shape) {
        if (index_.count(name)) throw PreconditionError("duplicate parameter: " + name);
        index_[name] = names_.size();
        names_.push_back(name);
        tensors_.emplace_back(std::move(shape));
        return tensors_.back();
    }
    Tensor& put(const std::string& name, Tensor t) {
        Tensor& dst = add(name, t.shape);
        dst = std::move(t);
        return dst;
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw PreconditionError("unknown parameter: " + name);
        return tensors_[it->second];
    }
    const Tensor& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }
    size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    Tensor& tensor(size_t i) { return tensors_[i]; }
    const Tensor& tensor(size_t i) const { return tensors_[i]; }

    int64_t total_elements() const {
        int64_t n = 0;
        for (const Tensor& t : tensors_) n += t.numel();
        return n;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, size_t> index_;
};

// Parameters bound onto a tape as leaves for one forward/backward pass.
struct BoundParams {
    std::vector<NodeId> nodes; // aligned with store.names()
    std::unordered_map<std::string, NodeId> by_name;

    NodeId at(const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw PreconditionError("unbound parameter: " + name);
        return it->second;
    }
};

inline BoundParams bind_params(Tape& tape, const ParamStore& store) {
    BoundParams bound;
    bound.nodes.reserve(store.size());
    for (size_t i = 0; i < store.size(); ++i) {
        NodeId id = tape.leaf(store.tensor(i), true);
        bound.nodes.push_back(id);
        bound.by_name[store.names()[i]] = id;
    }
    return bound;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
};

// Adam with bias correction. Moment buffers are keyed by parameter name; the
// step counter is shared so every tensor sees the same bias correction.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void begin_step() { ++t_; }
    long step() const { return t_; }

    void update(const std::string& name, Tensor& param, const Tensor& grad, double lr) {
        check_same_shape(param, grad, "adam update");
        State& st = states_[name];
        if (st.m.data.empty()) {
            st.m = Tensor(param.shape);
            st.v = Tensor(param.shape);
        }
        double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (int64_t i = 0; i < param.numel(); ++i) {
            double g = grad[i];
            st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * g;
            st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * g * g;
            double mhat = st.m[i] / bc1;
            double vhat = st.v[i] / bc2;
            param[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }

private:
    struct State {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::unordered_map<std::string, State> states_;
    long t_ = 0;
};

// Inverse-sqrt schedule with linear warmup, in units of the model width.
inline double noam_lr(long step, int model_dim, int warmup, double lr_scale) {
    if (step < 1) step = 1;
    double s = static_cast<double>(step);
    double w = static_cast<double>(warmup < 1 ? 1 : warmup);
    return lr_scale / std::sqrt(static_cast<double>(model_dim)) *
           std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

inline double noam_peak_lr(int model_dim, int warmup, double lr_scale) {
    return noam_lr(warmup, model_dim, warmup, lr_scale);
}

// Central-difference gradient check. `f` evaluates the scalar loss at theta
// and, when grad_out is non-null, writes the analytic gradient. Returns the
// worst relative error across coordinates.
inline double grad_check(const std::function<double(const Tensor&, Tensor*)>& f, Tensor theta,
                         double h = 1e-5) {
    Tensor analytic(theta.shape);
    double loss = f(theta, &analytic);
    if (!std::isfinite(loss) || !all_finite(analytic))
        throw NumericError("grad_check: non-finite loss or gradient");
    double worst = 0.0;
    for (int64_t i = 0; i < theta.numel(); ++i) {
        double keep = theta[i];
        theta[i] = keep + h;
        double up = f(theta, nullptr);
        theta[i] = keep - h;
        double down = f(theta, nullptr);
        theta[i] = keep;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("grad_check: non-finite perturbed loss");
        double numeric = (up - down) / (2.0 * h);
        double rel = std::abs(analytic[i] - numeric) /
                     (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace csanmt
