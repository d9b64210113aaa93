#include "csanmt/evalx.hpp"

#include <algorithm>

namespace csanmt {

std::vector<int64_t> vocab_frequencies(const Vocab& vocab) {
    std::vector<int64_t> freq(static_cast<size_t>(vocab.size()));
    for (int i = 0; i < vocab.size(); ++i) freq[static_cast<size_t>(i)] = vocab.count(i);
    return freq;
}

std::vector<FreqBucket> word_accuracy_by_frequency(const ParamStore& backbone,
                                                   const NmtConfig& cfg,
                                                   const ParallelCorpus& corpus,
                                                   const std::vector<int64_t>& train_freq,
                                                   const ParamStore* sem_params,
                                                   const SemanticConfig* sem_cfg) {
    if (corpus.pairs.empty()) throw PreconditionError("word accuracy: empty corpus");
    if (static_cast<int>(train_freq.size()) < cfg.vocab)
        throw PreconditionError("word accuracy: frequency table smaller than vocabulary");

    // Band index: 0 holds frequency 0, band b holds [2^(b-1), 2^b).
    auto band_of = [](int64_t f) {
        if (f <= 0) return 0;
        int b = 1;
        while ((int64_t{1} << b) <= f) ++b;
        return b;
    };
    std::map<int, std::pair<int64_t, int64_t>> bands; // band -> (tokens, correct)

    constexpr size_t kChunk = 32;
    for (size_t start = 0; start < corpus.pairs.size(); start += kChunk) {
        size_t stop = std::min(corpus.pairs.size(), start + kChunk);
        std::vector<const SentencePair*> chunk;
        for (size_t i = start; i < stop; ++i) chunk.push_back(&corpus.pairs[i]);
        PairBatch batch = make_pair_batch(chunk, 1, cfg.max_len);

        Tape tape(/*enable_grad=*/false);
        BoundParams p = bind_params(tape, backbone);
        NodeId rhat;
        if (sem_params) {
            BoundParams sp = bind_params(tape, *sem_params);
            std::vector<const std::vector<int>*> srcs;
            for (const SentencePair* pr : chunk) srcs.push_back(&pr->src);
            rhat = semantic_encode_batch(tape, sp, *sem_cfg, srcs);
        } else {
            rhat = tape.constant(Tensor({batch.dec.n_seq, cfg.hidden}));
        }
        NodeId src = embed_tokens(tape, p.at("nmt.emb"), batch.src_ids, batch.src, cfg.hidden);
        NodeId enc_out = encoder_stack(tape, p, "nmt.enc", cfg.enc_dims(), src, batch.src);
        NodeId dec_in = embed_tokens(tape, p.at("nmt.emb"), batch.dec_ids, batch.dec, cfg.hidden);
        NodeId dec_out = decoder_stack(tape, p, "nmt.dec", cfg.dec_dims(), dec_in, batch.dec,
                                       enc_out, batch.src, batch.kv_of, rhat);
        NodeId logits =
            tape.add_rowvec(tape.matmul(dec_out, p.at("nmt.out.w")), p.at("nmt.out.b"));
        const Tensor& lv = tape.value(logits);
        for (int64_t row = 0; row < lv.rows(); ++row) {
            if (batch.gold_w[static_cast<size_t>(row)] == 0.0) continue;
            const double* r = lv.data.data() + row * cfg.vocab;
            int arg = static_cast<int>(std::max_element(r, r + cfg.vocab) - r);
            int gold = batch.gold[static_cast<size_t>(row)];
            auto& [tokens, correct] = bands[band_of(train_freq[static_cast<size_t>(gold)])];
            ++tokens;
            if (arg == gold) ++correct;
        }
    }

    std::vector<FreqBucket> out;
    for (const auto& [b, counts] : bands) {
        FreqBucket fb;
        fb.lo = b == 0 ? 0 : int64_t{1} << (b - 1);
        fb.hi = b == 0 ? 1 : int64_t{1} << b;
        fb.tokens = counts.first;
        fb.correct = counts.second;
        fb.accuracy = static_cast<double>(counts.second) / static_cast<double>(counts.first);
        out.push_back(fb);
    }
    return out;
}

std::map<std::string, BleuReport> robustness_eval(const TranslateFn& translate,
                                                  const ParallelCorpus& test,
                                                  const std::vector<PerturbKind>& kinds,
                                                  double ratio, Rng& rng) {
    if (test.pairs.empty()) throw PreconditionError("robustness: empty corpus");
    std::vector<std::vector<int>> clean_src, refs;
    for (const SentencePair& p : test.pairs) {
        clean_src.push_back(p.src);
        refs.push_back(p.tgt);
    }
    std::map<std::string, BleuReport> out;
    out["original"] = bleu(translate(clean_src), refs);
    for (PerturbKind kind : kinds) {
        Rng stream = rng.split(perturb_kind_name(kind));
        std::vector<std::vector<int>> noisy;
        noisy.reserve(clean_src.size());
        for (const auto& s : clean_src)
            noisy.push_back(perturb<int>(s, kind, stream, ratio, Vocab::kUnk));
        out[perturb_kind_name(kind)] = bleu(translate(noisy), refs);
    }
    return out;
}

} // namespace csanmt
