#pragma once

#include "csanmt/rng.hpp"
#include "csanmt/tape.hpp"

namespace csanmt {

enum class CtlObjective { Tangential, Cosine };

struct CtlConfig {
    double tau = 1.0;
    double lambda_floor = 0.0;
    CtlObjective objective = CtlObjective::Tangential;

    void validate() const {
        if (tau <= 0.0) throw ConfigError("ctl: temperature must be positive");
        if (lambda_floor < 0.0 || lambda_floor >= 1.0) throw ConfigError("ctl: floor must be in [0,1)");
    }
};

// One interpolated negative. When the candidate is at least as close as the
// pair distance d, the else-clause keeps it unchanged (lambda fixed at 1).
struct NegativeSample {
    Tensor vec;
    double lambda = 1.0;
    bool interpolated = false;
};

// d_prime > d: draws lambda from (max(d/d_prime, floor), 1] and interpolates
// towards r_j; otherwise returns r_j as-is.
NegativeSample interpolate_negative(const Tensor& r_i, const Tensor& r_j, double d,
                                    double lambda_floor, Rng& rng);

struct CtlDiag {
    Tensor lambda_x; // [B,B], diagonal unused
    Tensor lambda_y;
    double mean_pos_sim = 0.0;
    double mean_neg_sim = 0.0;
};

// Contrastive loss over pooled pair vectors rx, ry (nodes of shape [B,H]).
// Fresh lambda draws come from rng; fixed matrices (for gradient checking)
// can be supplied instead. Returns a scalar node with a fused backward that
// treats the lambdas as constants.
NodeId ctl_loss(Tape& tape, NodeId rx, NodeId ry, const CtlConfig& cfg, Rng& rng,
                CtlDiag* diag = nullptr, const Tensor* fixed_lx = nullptr,
                const Tensor* fixed_ly = nullptr);

// Ablation objective: mean over pairs of -cos(rx_i, ry_i).
NodeId cosine_loss(Tape& tape, NodeId rx, NodeId ry);

} // namespace csanmt
