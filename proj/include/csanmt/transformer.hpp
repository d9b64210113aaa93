#pragma once

#include <string>

#include "csanmt/optim.hpp"
#include "csanmt/rng.hpp"
#include "csanmt/tape.hpp"

namespace csanmt {

// Width/depth of one transformer stack (post-norm, ReLU feed-forward).
struct StackDims {
    int hidden = 64;
    int heads = 4;
    int ffn = 256;
    int layers = 2;
    double ln_eps = 1e-5;

    void validate() const {
        if (hidden < 1 || heads < 1 || ffn < 1 || layers < 1)
            throw ConfigError("stack dims must be positive");
        if (hidden % heads != 0) throw ConfigError("heads must divide hidden width");
    }
};

// Fixed sinusoidal position rows [max_t, hidden].
Tensor sinusoid_rows(int max_t, int hidden);

// Parameter registration. Names are "<prefix>.<layer>.<part>"; fan-in scaled
// normal init for weights, zeros for biases, ones for layer-norm gains.
void init_embedding(ParamStore& ps, const std::string& name, int vocab, int hidden, Rng& rng);
void init_stack(ParamStore& ps, const std::string& prefix, const StackDims& dims, bool cross_attn,
                bool broadcast, Rng& rng);
void init_linear(ParamStore& ps, const std::string& prefix, int in, int out, Rng& rng);

// Token embedding scaled by sqrt(hidden) plus position encoding.
NodeId embed_tokens(Tape& tape, NodeId table, const std::vector<int>& ids, const BatchSpec& spec,
                    int hidden);

NodeId encoder_stack(Tape& tape, const BoundParams& p, const std::string& prefix,
                     const StackDims& dims, NodeId x, const BatchSpec& spec);

// Decoder stack with causal self-attention and cross-attention into enc_out.
// When rhat != kNoNode each layer mixes the per-sequence conditioning row
// into the self-attention output before the residual norm.
NodeId decoder_stack(Tape& tape, const BoundParams& p, const std::string& prefix,
                     const StackDims& dims, NodeId x, const BatchSpec& dec, NodeId enc_out,
                     const BatchSpec& enc, const std::vector<int>& kv_of, NodeId rhat);

// o_hat = rhat * W1 + o * W2 + b, rows of rhat expanded per position.
NodeId broadcast_rows(Tape& tape, NodeId o, NodeId rhat, const BatchSpec& spec, NodeId w1, NodeId w2,
                      NodeId b);

// Sets one stack's broadcast parameters to the reduction that makes the
// layer a no-op: W1 = 0, W2 = I, b = 0.
void set_broadcast_identity(ParamStore& ps, const std::string& prefix, int layers);
bool is_broadcast_param(const std::string& name);

} // namespace csanmt
