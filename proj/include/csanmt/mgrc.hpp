#pragma once

#include "csanmt/rng.hpp"
#include "csanmt/semantic.hpp"

namespace csanmt {

enum class MgrcVariant { Default, NoChain, Uniform };
enum class AnchorPolicy { Source, Target, Random };

MgrcVariant parse_mgrc_variant(const std::string& name);
AnchorPolicy parse_anchor_policy(const std::string& name);
const char* mgrc_variant_name(MgrcVariant v);
const char* anchor_policy_name(AnchorPolicy p);

struct MgrcConfig {
    int K = 40;
    double eta = 0.6;
    MgrcVariant variant = MgrcVariant::Default;
    AnchorPolicy anchor = AnchorPolicy::Random;

    void validate() const {
        if (K < 1) throw ConfigError("mgrc: K must be at least 1");
        if (eta < 0.0 || eta > 1.0) throw ConfigError("mgrc: eta must be in [0,1]");
    }
};

// Min-max normalized magnitudes of the region difference vector; the zero
// vector when all magnitudes coincide (degenerate region).
Tensor normalize_importance(const Tensor& rtilde);

// History of accepted scale vectors plus the importance weights they were
// drawn under. The running mean is maintained incrementally.
struct ChainState {
    std::vector<Tensor> history;
    Tensor importance;
    Tensor running_mean;

    void push(const Tensor& omega) {
        history.push_back(omega);
        if (running_mean.data.empty()) running_mean = Tensor(omega.shape);
        double n = static_cast<double>(history.size());
        for (int64_t i = 0; i < omega.numel(); ++i)
            running_mean[i] += (omega[i] - running_mean[i]) / n;
    }
};

// One chain step. `component` records which mixture branch produced the
// draw (1 = importance-scaled, 2 = chain-centred); `raw` is the pre-clamp
// value, kept for distribution tests.
struct OmegaDraw {
    Tensor omega;
    Tensor raw;
    int component = 1;
};

// Draws the next scale vector given at least one prior draw: component 1
// with probability eta is Normal(0, diag(W_r^2)); component 2 is
// Normal(mean of history, identity). Variants swap the component
// distributions. Result is clamped elementwise to [-1, 1].
OmegaDraw sample_omega(const ChainState& chain, double eta, Rng& rng,
                       MgrcVariant variant = MgrcVariant::Default);

struct RegionSamples {
    std::vector<Tensor> rhat;
    ChainState chain;
    std::vector<int> components; // mixture branch per draw
    std::vector<int> anchors;    // 0 = source vector, 1 = target vector
    std::vector<Tensor> raw;     // pre-clamp omegas
};

// Walks the chain for K steps; each augmented vector is
// anchor + omega ⊙ (r_y - r_x) with the anchor chosen per policy.
RegionSamples sample_region(const AdjacencyRegion& region, const MgrcConfig& cfg, Rng& rng);

} // namespace csanmt
