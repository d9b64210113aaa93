#pragma once

#include "csanmt/checkpoint.hpp"
#include "csanmt/corpus.hpp"
#include "csanmt/semantic.hpp"
#include "csanmt/transformer.hpp"

namespace csanmt {

// Encoder-decoder backbone. The decoder carries a conditioning mix layer
// (per layer, unshared) that folds one external vector into each
// self-attention output; with W1=0, W2=I, b=0 that layer is exactly the
// identity, which is how the unconditioned baseline is expressed.
struct NmtConfig {
    int vocab = 0;
    int hidden = 64;
    int heads = 4;
    int ffn = 256;
    int enc_layers = 2;
    int dec_layers = 2;
    int max_len = 64;
    double label_smooth = 0.1;

    StackDims enc_dims() const { return {hidden, heads, ffn, enc_layers}; }
    StackDims dec_dims() const { return {hidden, heads, ffn, dec_layers}; }

    void validate() const {
        if (vocab < Vocab::kReserved) throw ConfigError("nmt: vocab too small");
        if (max_len < 1) throw ConfigError("nmt: max_len must be positive");
        if (label_smooth < 0.0 || label_smooth >= 1.0)
            throw ConfigError("nmt: label smoothing must be in [0,1)");
        enc_dims().validate();
        dec_dims().validate();
    }
};

ParamStore init_backbone(const NmtConfig& cfg, Rng& rng);

// Teacher-forcing batch: one encoder sequence per instance, `replicate`
// decoder sequences per instance (grouped contiguously), cross-attention
// mapped by kv_of. Decoder inputs are BOS-shifted; gold rows append EOS and
// weight 0 marks padding.
struct PairBatch {
    std::vector<int> src_ids;
    BatchSpec src;
    std::vector<int> dec_ids;
    BatchSpec dec;
    std::vector<int> gold;
    std::vector<double> gold_w;
    std::vector<int> kv_of;
    int64_t target_tokens = 0;
};

PairBatch make_pair_batch(const std::vector<const SentencePair*>& instances, int replicate,
                          int max_len);

// Label-smoothed per-token NLL. rhat holds one conditioning row per decoder
// sequence; kNoNode removes the mix layer from the graph entirely.
NodeId nmt_forward_loss(Tape& tape, const BoundParams& p, const NmtConfig& cfg,
                        const PairBatch& batch, NodeId rhat);

struct BeamConfig {
    int beam = 4;
    double alpha = 0.6;
    int max_len = 64;

    void validate() const {
        if (beam < 1) throw ConfigError("beam size must be at least 1");
        if (max_len < 1) throw ConfigError("decode max_len must be positive");
    }
};

// One live hypothesis. The embedding cache holds the position-encoded input
// row of every generated token; its length always equals the number of
// generated tokens.
struct DecodeState {
    std::vector<int> tokens;
    NodeId emb_cache = kNoNode;
    double logp = 0.0;
};

struct TranslateResult {
    std::vector<int> tokens; // without EOS
    double score = 0.0;      // logP / ((5+len)/6)^alpha
    bool ended_by_eos = false;
};

// Beam search (beam 1 is greedy) conditioned on `cond` through the mix
// layer; pass nullptr for an unconditioned (baseline) model.
TranslateResult translate_ids(const ParamStore& params, const NmtConfig& cfg,
                              const std::vector<int>& src, const Tensor* cond,
                              const BeamConfig& bc);

// Sentence-parallel corpus translation. When semantic params are given each
// sentence is conditioned on its own source vector.
std::vector<std::vector<int>> translate_corpus(const ParamStore& params, const NmtConfig& cfg,
                                               const std::vector<std::vector<int>>& sources,
                                               const ParamStore* sem_params,
                                               const SemanticConfig* sem_cfg, const BeamConfig& bc,
                                               int threads = 1);

Checkpoint backbone_checkpoint(const NmtConfig& cfg, const ParamStore& params,
                               const std::string& mode);
NmtConfig nmt_config_from(const Checkpoint& ck);

} // namespace csanmt
