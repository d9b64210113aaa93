#include "csanmt/semantic.hpp"

namespace csanmt {

ParamStore init_semantic(const SemanticConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamStore ps;
    init_embedding(ps, "sem.emb", cfg.vocab, cfg.dims.hidden, rng);
    init_stack(ps, "sem.enc", cfg.dims, /*cross=*/false, /*broadcast=*/false, rng);
    return ps;
}

NodeId semantic_encode_batch(Tape& tape, const BoundParams& p, const SemanticConfig& cfg,
                             const std::vector<const std::vector<int>*>& sentences) {
    if (sentences.empty()) throw PreconditionError("semantic encode: empty batch");
    BatchSpec spec;
    spec.n_seq = static_cast<int>(sentences.size());
    for (const auto* s : sentences) {
        if (s->empty()) throw PreconditionError("semantic encode: empty sentence");
        if (static_cast<int>(s->size()) > cfg.max_len)
            throw PreconditionError("semantic encode: sentence exceeds max length");
        spec.lens.push_back(static_cast<int>(s->size()));
        spec.stride = std::max(spec.stride, static_cast<int>(s->size()));
    }
    std::vector<int> ids(static_cast<size_t>(spec.total_rows()), Vocab::kPad);
    for (int b = 0; b < spec.n_seq; ++b)
        std::copy(sentences[static_cast<size_t>(b)]->begin(), sentences[static_cast<size_t>(b)]->end(),
                  ids.begin() + static_cast<int64_t>(b) * spec.stride);

    NodeId x = embed_tokens(tape, p.at("sem.emb"), ids, spec, cfg.dims.hidden);
    x = encoder_stack(tape, p, "sem.enc", cfg.dims, x, spec);
    return tape.mean_pool(x, spec);
}

Tensor semantic_encode(const ParamStore& params, const SemanticConfig& cfg,
                       const std::vector<int>& sentence) {
    Tape tape(/*enable_grad=*/false);
    BoundParams p = bind_params(tape, params);
    NodeId pooled = semantic_encode_batch(tape, p, cfg, {&sentence});
    Tensor out({cfg.dims.hidden});
    std::copy_n(tape.value(pooled).data.begin(), cfg.dims.hidden, out.data.begin());
    return out;
}

AdjacencyRegion build_region(const ParamStore& params, const SemanticConfig& cfg,
                             const std::vector<int>& x, const std::vector<int>& y) {
    return AdjacencyRegion::from_vectors(semantic_encode(params, cfg, x),
                                         semantic_encode(params, cfg, y));
}

Checkpoint semantic_checkpoint(const SemanticConfig& cfg, const ParamStore& params) {
    Checkpoint ck;
    ck.meta["kind"] = "semantic";
    ck.meta["vocab"] = std::to_string(cfg.vocab);
    ck.meta["hidden"] = std::to_string(cfg.dims.hidden);
    ck.meta["heads"] = std::to_string(cfg.dims.heads);
    ck.meta["ffn"] = std::to_string(cfg.dims.ffn);
    ck.meta["layers"] = std::to_string(cfg.dims.layers);
    ck.meta["max_len"] = std::to_string(cfg.max_len);
    for (size_t i = 0; i < params.size(); ++i)
        ck.params.put(params.names()[i], params.tensor(i));
    return ck;
}

SemanticConfig semantic_config_from(const Checkpoint& ck) {
    if (ck.require_meta("kind") != "semantic")
        throw ParseError("checkpoint is not a semantic encoder");
    SemanticConfig cfg;
    cfg.vocab = ck.meta_int("vocab");
    cfg.dims.hidden = ck.meta_int("hidden");
    cfg.dims.heads = ck.meta_int("heads");
    cfg.dims.ffn = ck.meta_int("ffn");
    cfg.dims.layers = ck.meta_int("layers");
    cfg.max_len = ck.meta_int("max_len");
    cfg.validate();
    return cfg;
}

} // namespace csanmt
