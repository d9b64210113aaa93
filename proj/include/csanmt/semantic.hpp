#pragma once

#include <filesystem>

#include "csanmt/checkpoint.hpp"
#include "csanmt/corpus.hpp"
#include "csanmt/transformer.hpp"

namespace csanmt {

// Sentence-level encoder: embedding + position encoding, a small transformer
// encoder stack, then a masked mean over real positions. One vector per
// sentence, the same width as the model hidden size.
struct SemanticConfig {
    int vocab = 0;
    StackDims dims{.hidden = 64, .heads = 4, .ffn = 256, .layers = 4};
    int max_len = 64;

    void validate() const {
        if (vocab < Vocab::kReserved) throw ConfigError("semantic: vocab too small");
        dims.validate();
    }
};

ParamStore init_semantic(const SemanticConfig& cfg, Rng& rng);

// Packs sentences into a padded batch and returns pooled vectors [n, hidden].
NodeId semantic_encode_batch(Tape& tape, const BoundParams& p, const SemanticConfig& cfg,
                             const std::vector<const std::vector<int>*>& sentences);

// Convenience single-sentence forward without gradients.
Tensor semantic_encode(const ParamStore& params, const SemanticConfig& cfg,
                       const std::vector<int>& sentence);

// Union of the two balls of radius ||rx - ry|| centred at the pair's
// vectors; every augmented vector must stay inside it.
struct AdjacencyRegion {
    Tensor rx;
    Tensor ry;
    double radius = 0.0;

    static AdjacencyRegion from_vectors(Tensor rx, Tensor ry) {
        AdjacencyRegion reg;
        reg.radius = l2_distance(rx, ry);
        reg.rx = std::move(rx);
        reg.ry = std::move(ry);
        return reg;
    }

    bool contains(const Tensor& v, double slack = 0.0) const {
        return l2_distance(v, rx) <= radius + slack || l2_distance(v, ry) <= radius + slack;
    }
};

AdjacencyRegion build_region(const ParamStore& params, const SemanticConfig& cfg,
                             const std::vector<int>& x, const std::vector<int>& y);

Checkpoint semantic_checkpoint(const SemanticConfig& cfg, const ParamStore& params);
SemanticConfig semantic_config_from(const Checkpoint& ck);

} // namespace csanmt
