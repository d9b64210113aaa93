#include "csanmt/mgrc.hpp"

#include <algorithm>
#include <cmath>

namespace csanmt {

MgrcVariant parse_mgrc_variant(const std::string& name) {
    if (name == "default") return MgrcVariant::Default;
    if (name == "no_chain") return MgrcVariant::NoChain;
    if (name == "uniform") return MgrcVariant::Uniform;
    throw ConfigError("unknown mgrc variant: " + name + " (expected default|no_chain|uniform)");
}

AnchorPolicy parse_anchor_policy(const std::string& name) {
    if (name == "source") return AnchorPolicy::Source;
    if (name == "target") return AnchorPolicy::Target;
    if (name == "random") return AnchorPolicy::Random;
    throw ConfigError("unknown anchor policy: " + name + " (expected source|target|random)");
}

const char* mgrc_variant_name(MgrcVariant v) {
    switch (v) {
    case MgrcVariant::Default: return "default";
    case MgrcVariant::NoChain: return "no_chain";
    case MgrcVariant::Uniform: return "uniform";
    }
    return "?";
}

const char* anchor_policy_name(AnchorPolicy p) {
    switch (p) {
    case AnchorPolicy::Source: return "source";
    case AnchorPolicy::Target: return "target";
    case AnchorPolicy::Random: return "random";
    }
    return "?";
}

Tensor normalize_importance(const Tensor& rtilde) {
    Tensor w(rtilde.shape);
    if (rtilde.numel() == 0) return w;
    double lo = std::abs(rtilde[0]), hi = lo;
    for (int64_t i = 1; i < rtilde.numel(); ++i) {
        double a = std::abs(rtilde[i]);
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    double span = hi - lo;
    if (span < 1e-12) return w; // uninformative region: no dimension stands out
    for (int64_t i = 0; i < rtilde.numel(); ++i) w[i] = (std::abs(rtilde[i]) - lo) / span;
    return w;
}

namespace {

// Component 1: noise scaled by per-dimension importance. Dimensions with
// zero weight stay exactly zero.
void draw_component1(const Tensor& w, MgrcVariant variant, Rng& rng, Tensor& raw) {
    for (int64_t i = 0; i < w.numel(); ++i) {
        if (variant == MgrcVariant::Uniform) {
            raw[i] = w[i] == 0.0 ? 0.0 : rng.uniform(-w[i], w[i]);
        } else {
            raw[i] = w[i] * rng.normal();
        }
    }
}

void draw_component2(const Tensor& mean, MgrcVariant variant, Rng& rng, Tensor& raw) {
    for (int64_t i = 0; i < mean.numel(); ++i) {
        switch (variant) {
        case MgrcVariant::Default:
            raw[i] = mean[i] + rng.normal();
            break;
        case MgrcVariant::NoChain:
            raw[i] = rng.normal();
            break;
        case MgrcVariant::Uniform: {
            double lo = mean[i] - 1.0, hi = 1.0 - mean[i];
            if (lo > hi) std::swap(lo, hi);
            raw[i] = lo == hi ? lo : rng.uniform(lo, hi);
            break;
        }
        }
    }
}

Tensor clamp_unit(const Tensor& raw) {
    Tensor out = raw;
    for (double& v : out.data) v = std::clamp(v, -1.0, 1.0);
    return out;
}

} // namespace

OmegaDraw sample_omega(const ChainState& chain, double eta, Rng& rng, MgrcVariant variant) {
    if (chain.history.empty())
        throw PreconditionError("sample_omega: chain must hold at least one prior draw");
    if (chain.importance.data.empty()) throw PreconditionError("sample_omega: missing importance");
    OmegaDraw d;
    d.raw = Tensor(chain.importance.shape);
    // The coin is always consumed so the stream position does not depend on
    // eta's value.
    d.component = rng.uniform() < eta ? 1 : 2;
    if (d.component == 1)
        draw_component1(chain.importance, variant, rng, d.raw);
    else
        draw_component2(chain.running_mean, variant, rng, d.raw);
    d.omega = clamp_unit(d.raw);
    return d;
}

RegionSamples sample_region(const AdjacencyRegion& region, const MgrcConfig& cfg, Rng& rng) {
    cfg.validate();
    check_same_shape(region.rx, region.ry, "sample_region");
    Tensor rtilde = sub(region.ry, region.rx);

    RegionSamples out;
    out.chain.importance = normalize_importance(rtilde);
    out.rhat.reserve(static_cast<size_t>(cfg.K));
    for (int k = 0; k < cfg.K; ++k) {
        OmegaDraw d;
        if (k == 0) {
            // The chain opens with the importance-scaled component.
            d.raw = Tensor(out.chain.importance.shape);
            draw_component1(out.chain.importance, cfg.variant, rng, d.raw);
            d.omega = clamp_unit(d.raw);
            d.component = 1;
        } else {
            d = sample_omega(out.chain, cfg.eta, rng, cfg.variant);
        }
        int anchor;
        switch (cfg.anchor) {
        case AnchorPolicy::Source: anchor = 0; break;
        case AnchorPolicy::Target: anchor = 1; break;
        default: anchor = rng.uniform() < 0.5 ? 0 : 1; break;
        }
        const Tensor& base = anchor == 0 ? region.rx : region.ry;
        Tensor rhat = base;
        for (int64_t i = 0; i < rhat.numel(); ++i) rhat[i] += d.omega[i] * rtilde[i];
        out.chain.push(d.omega);
        out.rhat.push_back(std::move(rhat));
        out.components.push_back(d.component);
        out.anchors.push_back(anchor);
        out.raw.push_back(std::move(d.raw));
    }
    return out;
}

} // namespace csanmt
