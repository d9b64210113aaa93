#include "csanmt/nmt.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace csanmt {

ParamStore init_backbone(const NmtConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamStore ps;
    init_embedding(ps, "nmt.emb", cfg.vocab, cfg.hidden, rng);
    init_stack(ps, "nmt.enc", cfg.enc_dims(), /*cross=*/false, /*broadcast=*/false, rng);
    init_stack(ps, "nmt.dec", cfg.dec_dims(), /*cross=*/true, /*broadcast=*/true, rng);
    init_linear(ps, "nmt.out", cfg.hidden, cfg.vocab, rng);
    return ps;
}

PairBatch make_pair_batch(const std::vector<const SentencePair*>& instances, int replicate,
                          int max_len) {
    if (instances.empty()) throw PreconditionError("make_pair_batch: empty batch");
    if (replicate < 1) throw PreconditionError("make_pair_batch: replicate must be positive");
    PairBatch b;
    b.src.n_seq = static_cast<int>(instances.size());
    b.dec.n_seq = b.src.n_seq * replicate;
    for (const SentencePair* p : instances) {
        if (p->src.empty() || p->tgt.empty()) throw PreconditionError("empty sentence in batch");
        if (static_cast<int>(p->src.size()) > max_len || static_cast<int>(p->tgt.size()) > max_len)
            throw PreconditionError("sentence exceeds max length");
        b.src.lens.push_back(static_cast<int>(p->src.size()));
        b.src.stride = std::max(b.src.stride, static_cast<int>(p->src.size()));
        b.dec.stride = std::max(b.dec.stride, static_cast<int>(p->tgt.size()) + 1);
    }
    b.src_ids.assign(static_cast<size_t>(b.src.total_rows()), Vocab::kPad);
    for (int i = 0; i < b.src.n_seq; ++i)
        std::copy(instances[static_cast<size_t>(i)]->src.begin(),
                  instances[static_cast<size_t>(i)]->src.end(),
                  b.src_ids.begin() + static_cast<int64_t>(i) * b.src.stride);

    b.dec_ids.assign(static_cast<size_t>(b.dec.n_seq) * b.dec.stride, Vocab::kPad);
    b.gold.assign(b.dec_ids.size(), Vocab::kPad);
    b.gold_w.assign(b.dec_ids.size(), 0.0);
    for (int i = 0; i < b.src.n_seq; ++i) {
        const std::vector<int>& tgt = instances[static_cast<size_t>(i)]->tgt;
        int dlen = static_cast<int>(tgt.size()) + 1;
        for (int k = 0; k < replicate; ++k) {
            int s = i * replicate + k;
            b.dec.lens.push_back(dlen);
            b.kv_of.push_back(i);
            int64_t base = static_cast<int64_t>(s) * b.dec.stride;
            b.dec_ids[static_cast<size_t>(base)] = Vocab::kBos;
            for (int t = 0; t < static_cast<int>(tgt.size()); ++t) {
                b.dec_ids[static_cast<size_t>(base + t + 1)] = tgt[static_cast<size_t>(t)];
                b.gold[static_cast<size_t>(base + t)] = tgt[static_cast<size_t>(t)];
                b.gold_w[static_cast<size_t>(base + t)] = 1.0;
            }
            b.gold[static_cast<size_t>(base + tgt.size())] = Vocab::kEos;
            b.gold_w[static_cast<size_t>(base + tgt.size())] = 1.0;
        }
        b.target_tokens += static_cast<int64_t>(dlen) * replicate;
    }
    return b;
}

NodeId nmt_forward_loss(Tape& tape, const BoundParams& p, const NmtConfig& cfg,
                        const PairBatch& batch, NodeId rhat) {
    NodeId src = embed_tokens(tape, p.at("nmt.emb"), batch.src_ids, batch.src, cfg.hidden);
    NodeId enc_out = encoder_stack(tape, p, "nmt.enc", cfg.enc_dims(), src, batch.src);
    NodeId dec_in = embed_tokens(tape, p.at("nmt.emb"), batch.dec_ids, batch.dec, cfg.hidden);
    NodeId dec_out = decoder_stack(tape, p, "nmt.dec", cfg.dec_dims(), dec_in, batch.dec, enc_out,
                                   batch.src, batch.kv_of, rhat);
    NodeId logits = tape.add_rowvec(tape.matmul(dec_out, p.at("nmt.out.w")), p.at("nmt.out.b"));
    return tape.cross_entropy_rows(logits, batch.gold, batch.gold_w, cfg.label_smooth);
}

namespace {

double length_penalty(int len, double alpha) {
    return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

// Row of embedding + position encoding for one token at one position,
// matching embed_tokens.
Tensor emb_row(const ParamStore& params, const NmtConfig& cfg, int token, int pos) {
    const Tensor& table = params.at("nmt.emb");
    Tensor row({1, cfg.hidden});
    double s = std::sqrt(static_cast<double>(cfg.hidden));
    for (int j = 0; j < cfg.hidden; ++j) row[j] = table.at(token, j) * s;
    Tensor pe = sinusoid_rows(pos + 1, cfg.hidden);
    for (int j = 0; j < cfg.hidden; ++j) row[j] += pe.at(pos, j);
    return row;
}

} // namespace

TranslateResult translate_ids(const ParamStore& params, const NmtConfig& cfg,
                              const std::vector<int>& src, const Tensor* cond,
                              const BeamConfig& bc) {
    bc.validate();
    if (src.empty()) throw PreconditionError("translate: empty source");
    if (static_cast<int>(src.size()) > cfg.max_len)
        throw PreconditionError("translate: source exceeds max length");

    Tape tape(/*enable_grad=*/false);
    BoundParams p = bind_params(tape, params);

    BatchSpec src_spec;
    src_spec.n_seq = 1;
    src_spec.stride = static_cast<int>(src.size());
    src_spec.lens = {static_cast<int>(src.size())};
    NodeId src_emb = embed_tokens(tape, p.at("nmt.emb"), src, src_spec, cfg.hidden);
    NodeId enc_out = encoder_stack(tape, p, "nmt.enc", cfg.enc_dims(), src_emb, src_spec);

    Tensor cond_row({1, cfg.hidden});
    if (cond) {
        if (cond->numel() != cfg.hidden) throw DimError("translate: conditioning width mismatch");
        std::copy(cond->data.begin(), cond->data.end(), cond_row.data.begin());
    }
    NodeId bos = tape.constant(emb_row(params, cfg, Vocab::kBos, 0));

    std::vector<DecodeState> live(1);
    struct Finished {
        std::vector<int> tokens;
        double score;
        bool eos;
    };
    std::vector<Finished> done;

    for (int step = 0; step < bc.max_len && !live.empty(); ++step) {
        int n = static_cast<int>(live.size());
        int dlen = step + 1;
        // Stack each hypothesis's input rows: BOS plus its cache.
        NodeId batch_rows = kNoNode;
        for (int bm = 0; bm < n; ++bm) {
            NodeId rows = live[static_cast<size_t>(bm)].emb_cache == kNoNode
                              ? bos
                              : tape.concat_rows(bos, live[static_cast<size_t>(bm)].emb_cache);
            batch_rows = bm == 0 ? rows : tape.concat_rows(batch_rows, rows);
        }
        BatchSpec dec_spec;
        dec_spec.n_seq = n;
        dec_spec.stride = dlen;
        dec_spec.lens.assign(static_cast<size_t>(n), dlen);
        std::vector<int> kv_of(static_cast<size_t>(n), 0);

        Tensor rhat_rows({n, cfg.hidden});
        for (int bm = 0; bm < n; ++bm)
            std::copy(cond_row.data.begin(), cond_row.data.end(),
                      rhat_rows.data.begin() + static_cast<int64_t>(bm) * cfg.hidden);
        NodeId dec_out = decoder_stack(tape, p, "nmt.dec", cfg.dec_dims(), batch_rows, dec_spec,
                                       enc_out, src_spec, kv_of, tape.constant(std::move(rhat_rows)));
        std::vector<int> last(static_cast<size_t>(n));
        for (int bm = 0; bm < n; ++bm) last[static_cast<size_t>(bm)] = bm * dlen + dlen - 1;
        NodeId logits = tape.add_rowvec(
            tape.matmul(tape.gather_rows(dec_out, std::move(last)), p.at("nmt.out.w")),
            p.at("nmt.out.b"));
        const Tensor& lv = tape.value(logits);

        struct Cand {
            double logp;
            int beam;
            int tok;
        };
        std::vector<Cand> cands;
        cands.reserve(static_cast<size_t>(n) * cfg.vocab);
        for (int bm = 0; bm < n; ++bm) {
            const double* row = lv.data.data() + static_cast<int64_t>(bm) * cfg.vocab;
            double m = *std::max_element(row, row + cfg.vocab);
            double z = 0.0;
            for (int v = 0; v < cfg.vocab; ++v) z += std::exp(row[v] - m);
            double lz = m + std::log(z);
            for (int v = 0; v < cfg.vocab; ++v) {
                if (v == Vocab::kPad || v == Vocab::kBos) continue;
                cands.push_back({live[static_cast<size_t>(bm)].logp + row[v] - lz, bm, v});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.logp != b.logp) return a.logp > b.logp;
            if (a.beam != b.beam) return a.beam < b.beam;
            return a.tok < b.tok;
        });

        // Only the top-ranked window may finish or continue; beam 1 inspects
        // a single candidate so it follows the pure argmax path.
        int window = bc.beam == 1 ? 1 : 2 * bc.beam;
        std::vector<DecodeState> next;
        for (size_t ci = 0; ci < cands.size() && static_cast<int>(ci) < window; ++ci) {
            const Cand& c = cands[ci];
            if (c.tok == Vocab::kEos) {
                // Hypothesis length counts the EOS step.
                int len = step + 1;
                done.push_back({live[static_cast<size_t>(c.beam)].tokens,
                                c.logp / length_penalty(len, bc.alpha), true});
                continue;
            }
            if (static_cast<int>(next.size()) >= bc.beam) continue;
            DecodeState st;
            st.tokens = live[static_cast<size_t>(c.beam)].tokens;
            st.tokens.push_back(c.tok);
            st.logp = c.logp;
            NodeId row = tape.constant(emb_row(params, cfg, c.tok, step + 1));
            st.emb_cache = live[static_cast<size_t>(c.beam)].emb_cache == kNoNode
                               ? row
                               : tape.concat_rows(live[static_cast<size_t>(c.beam)].emb_cache, row);
            next.push_back(std::move(st));
        }
        if (static_cast<int>(done.size()) >= bc.beam) break;
        live = std::move(next);
    }

    // Hypotheses cut off by max_len compete at their unfinished length.
    for (const DecodeState& st : live)
        done.push_back({st.tokens,
                        st.logp / length_penalty(static_cast<int>(st.tokens.size()), bc.alpha),
                        false});
    if (done.empty()) throw NumericError("translate: no hypothesis produced");
    const Finished* best = &done[0];
    for (const Finished& f : done)
        if (f.score > best->score) best = &f;
    return {best->tokens, best->score, best->eos};
}

std::vector<std::vector<int>> translate_corpus(const ParamStore& params, const NmtConfig& cfg,
                                               const std::vector<std::vector<int>>& sources,
                                               const ParamStore* sem_params,
                                               const SemanticConfig* sem_cfg, const BeamConfig& bc,
                                               int threads) {
    std::vector<std::vector<int>> out(sources.size());
    if (threads < 1) threads = 1;
    threads = std::min<int>(threads, static_cast<int>(sources.size()) > 0
                                         ? static_cast<int>(sources.size())
                                         : 1);
    auto work = [&](int tid) {
        for (size_t i = static_cast<size_t>(tid); i < sources.size(); i += static_cast<size_t>(threads)) {
            Tensor cond;
            const Tensor* cp = nullptr;
            if (sem_params) {
                cond = semantic_encode(*sem_params, *sem_cfg, sources[i]);
                cp = &cond;
            }
            out[i] = translate_ids(params, cfg, sources[i], cp, bc).tokens;
        }
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    return out;
}

Checkpoint backbone_checkpoint(const NmtConfig& cfg, const ParamStore& params,
                               const std::string& mode) {
    Checkpoint ck;
    ck.meta["kind"] = "backbone";
    ck.meta["mode"] = mode;
    ck.meta["vocab"] = std::to_string(cfg.vocab);
    ck.meta["hidden"] = std::to_string(cfg.hidden);
    ck.meta["heads"] = std::to_string(cfg.heads);
    ck.meta["ffn"] = std::to_string(cfg.ffn);
    ck.meta["enc_layers"] = std::to_string(cfg.enc_layers);
    ck.meta["dec_layers"] = std::to_string(cfg.dec_layers);
    ck.meta["max_len"] = std::to_string(cfg.max_len);
    ck.meta["label_smooth"] = std::to_string(cfg.label_smooth);
    for (size_t i = 0; i < params.size(); ++i)
        ck.params.put(params.names()[i], params.tensor(i));
    return ck;
}

NmtConfig nmt_config_from(const Checkpoint& ck) {
    if (ck.require_meta("kind") != "backbone")
        throw ParseError("checkpoint is not a translation model");
    NmtConfig cfg;
    cfg.vocab = ck.meta_int("vocab");
    cfg.hidden = ck.meta_int("hidden");
    cfg.heads = ck.meta_int("heads");
    cfg.ffn = ck.meta_int("ffn");
    cfg.enc_layers = ck.meta_int("enc_layers");
    cfg.dec_layers = ck.meta_int("dec_layers");
    cfg.max_len = ck.meta_int("max_len");
    cfg.label_smooth = std::stod(ck.require_meta("label_smooth"));
    cfg.validate();
    return cfg;
}

} // namespace csanmt
