#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "csanmt/nmt.hpp"

using namespace csanmt;

namespace {

NmtConfig small_cfg() {
    NmtConfig cfg;
    cfg.vocab = 10;
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.ffn = 16;
    cfg.enc_layers = 1;
    cfg.dec_layers = 2;
    cfg.max_len = 8;
    return cfg;
}

Tensor randn(std::vector<int64_t> shape, uint64_t seed, double sd = 1.0) {
    Tensor t(std::move(shape));
    Rng r(seed);
    r.fill_normal(t, sd);
    return t;
}

double forward_loss_value(const ParamStore& params, const NmtConfig& cfg, const PairBatch& batch,
                          const Tensor* rhat_rows) {
    Tape tape(/*enable_grad=*/false);
    BoundParams p = bind_params(tape, params);
    NodeId rhat = rhat_rows ? tape.constant(*rhat_rows) : kNoNode;
    return tape.value(nmt_forward_loss(tape, p, cfg, batch, rhat)).data[0];
}

} // namespace

TEST_CASE("pair batch: layout, BOS shift, gold EOS, pad weights") {
    SentencePair a{{4, 5, 6}, {7, 8}};
    SentencePair b{{9, 4}, {5, 6, 7, 8}};
    PairBatch batch = make_pair_batch({&a, &b}, 1, 16);

    CHECK(batch.src.n_seq == 2);
    CHECK(batch.src.stride == 3);
    CHECK(batch.dec.n_seq == 2);
    CHECK(batch.dec.stride == 5); // longest target + BOS
    CHECK(batch.kv_of == std::vector<int>{0, 1});
    CHECK(batch.target_tokens == 3 + 5);

    // Source rows are padded with PAD.
    CHECK(batch.src_ids == std::vector<int>{4, 5, 6, 9, 4, 0});

    // Decoder input is BOS + target; gold is target + EOS; weight marks
    // exactly the real positions.
    std::vector<int> dec0(batch.dec_ids.begin(), batch.dec_ids.begin() + 5);
    CHECK(dec0 == std::vector<int>{Vocab::kBos, 7, 8, 0, 0});
    std::vector<int> gold0(batch.gold.begin(), batch.gold.begin() + 5);
    CHECK(gold0 == std::vector<int>{7, 8, Vocab::kEos, 0, 0});
    std::vector<double> w0(batch.gold_w.begin(), batch.gold_w.begin() + 5);
    CHECK(w0 == std::vector<double>{1, 1, 1, 0, 0});
    std::vector<int> dec1(batch.dec_ids.begin() + 5, batch.dec_ids.end());
    CHECK(dec1 == std::vector<int>{Vocab::kBos, 5, 6, 7, 8});
}

TEST_CASE("pair batch: replication groups contiguously per instance") {
    SentencePair a{{4, 5}, {6}};
    SentencePair b{{7}, {8, 9}};
    PairBatch batch = make_pair_batch({&a, &b}, 3, 16);
    CHECK(batch.src.n_seq == 2);
    CHECK(batch.dec.n_seq == 6);
    CHECK(batch.kv_of == std::vector<int>{0, 0, 0, 1, 1, 1});
    CHECK(batch.target_tokens == 3 * 2 + 3 * 3);
    // Replicas of one instance are identical teacher-forcing rows.
    for (int k = 1; k < 3; ++k)
        for (int t = 0; t < batch.dec.stride; ++t)
            CHECK(batch.dec_ids[static_cast<size_t>(k * batch.dec.stride + t)] ==
                  batch.dec_ids[static_cast<size_t>(t)]);
}

TEST_CASE("pair batch: input guards") {
    SentencePair ok{{4}, {5}};
    SentencePair empty_src{{}, {5}};
    SentencePair long_tgt{{4}, {5, 6, 7, 8, 9}};
    CHECK_THROWS_AS(make_pair_batch({}, 1, 8), PreconditionError);
    CHECK_THROWS_AS(make_pair_batch({&ok}, 0, 8), PreconditionError);
    CHECK_THROWS_AS(make_pair_batch({&empty_src}, 1, 8), PreconditionError);
    CHECK_THROWS_AS(make_pair_batch({&long_tgt}, 1, 4), PreconditionError);
}

TEST_CASE("broadcast rows: hand oracle") {
    Tape t;
    BatchSpec spec{1, 2, {2}};
    NodeId o = t.constant([] {
        Tensor m({2, 2});
        m.data = {1, 2, 3, 4};
        return m;
    }());
    NodeId rhat = t.constant([] {
        Tensor m({1, 2});
        m.data = {10, 20};
        return m;
    }());
    Tensor eye({2, 2});
    eye.at(0, 0) = eye.at(1, 1) = 1.0;
    NodeId w1 = t.constant(eye);
    NodeId w2 = t.constant(scale(eye, 2.0));
    NodeId b = t.constant(Tensor::from({100.0, 200.0}));
    const Tensor& out = t.value(broadcast_rows(t, o, rhat, spec, w1, w2, b));
    CHECK(out.at(0, 0) == 112.0);
    CHECK(out.at(0, 1) == 224.0);
    CHECK(out.at(1, 0) == 116.0);
    CHECK(out.at(1, 1) == 228.0);
}

TEST_CASE("broadcast rows: matches a manual per-row evaluation") {
    const int h = 4;
    Tape t;
    BatchSpec spec{2, 3, {3, 2}};
    Tensor o = randn({6, h}, 11);
    Tensor rhat = randn({2, h}, 12);
    Tensor w1 = randn({h, h}, 13);
    Tensor w2 = randn({h, h}, 14);
    Tensor b = randn({h}, 15);
    const Tensor& out = t.value(broadcast_rows(t, t.constant(o), t.constant(rhat), spec,
                                               t.constant(w1), t.constant(w2), t.constant(b)));
    for (int s = 0; s < 2; ++s) {
        for (int r = 0; r < spec.lens[static_cast<size_t>(s)]; ++r) {
            int64_t row = s * 3 + r;
            for (int64_t c = 0; c < h; ++c) {
                double want = b[c];
                for (int64_t k = 0; k < h; ++k) {
                    want += rhat.at(s, k) * w1.at(k, c);
                    want += o.at(row, k) * w2.at(k, c);
                }
                CHECK(std::abs(out.at(row, c) - want) < 1e-12);
            }
        }
    }
}

TEST_CASE("backbone init: the conditioning mix starts as the identity") {
    NmtConfig cfg = small_cfg();
    Rng rng(1);
    ParamStore params = init_backbone(cfg, rng);
    for (int l = 0; l < cfg.dec_layers; ++l) {
        std::string lp = "nmt.dec." + std::to_string(l);
        const Tensor& w1 = params.at(lp + ".mix.w1");
        const Tensor& w2 = params.at(lp + ".mix.w2");
        const Tensor& b = params.at(lp + ".mix.b");
        for (double v : w1.data) CHECK(v == 0.0);
        for (double v : b.data) CHECK(v == 0.0);
        for (int64_t i = 0; i < cfg.hidden; ++i)
            for (int64_t j = 0; j < cfg.hidden; ++j)
                CHECK(w2.at(i, j) == (i == j ? 1.0 : 0.0));
    }
    CHECK(is_broadcast_param("nmt.dec.0.mix.w1"));
    CHECK(is_broadcast_param("nmt.dec.1.mix.b"));
    CHECK(!is_broadcast_param("nmt.dec.0.self.q.w"));
    CHECK(!is_broadcast_param("nmt.emb"));
}

TEST_CASE("identity mix: conditioned loss equals the no-mix route") {
    NmtConfig cfg = small_cfg();
    Rng rng(2);
    ParamStore params = init_backbone(cfg, rng);
    // Keep the identity configuration but confirm the helper agrees with it.
    set_broadcast_identity(params, "nmt.dec", cfg.dec_layers);

    SentencePair a{{4, 5, 6}, {7, 8, 9}};
    SentencePair b{{5, 7}, {4, 6}};
    PairBatch batch = make_pair_batch({&a, &b}, 1, cfg.max_len);
    Tensor rhat = randn({2, cfg.hidden}, 21, 3.0);

    double with_cond = forward_loss_value(params, cfg, batch, &rhat);
    double no_mix = forward_loss_value(params, cfg, batch, nullptr);
    CHECK(std::abs(with_cond - no_mix) < 1e-12);

    // A non-identity mix actually uses the conditioning vector.
    params.at("nmt.dec.0.mix.w1") = randn({cfg.hidden, cfg.hidden}, 22, 0.5);
    double perturbed = forward_loss_value(params, cfg, batch, &rhat);
    CHECK(std::abs(perturbed - no_mix) > 1e-9);
}

TEST_CASE("uniform output layer: loss is exactly log vocab") {
    NmtConfig cfg = small_cfg();
    Rng rng(3);
    ParamStore params = init_backbone(cfg, rng);
    params.at("nmt.out.w") = Tensor({cfg.hidden, cfg.vocab});
    params.at("nmt.out.b") = Tensor({cfg.vocab});

    SentencePair a{{4, 5, 6}, {7, 8, 9}};
    SentencePair b{{5, 7}, {4, 6}};
    PairBatch batch = make_pair_batch({&a, &b}, 2, cfg.max_len);
    double loss = forward_loss_value(params, cfg, batch, nullptr);
    CHECK(loss == doctest::Approx(std::log(double(cfg.vocab))).epsilon(1e-12));
}

TEST_CASE("grouped replication equals manual instance duplication") {
    NmtConfig cfg = small_cfg();
    Rng rng(4);
    ParamStore params = init_backbone(cfg, rng);
    // Give the mix a real conditioning path so rhat matters.
    params.at("nmt.dec.0.mix.w1") = randn({cfg.hidden, cfg.hidden}, 41, 0.3);
    params.at("nmt.dec.1.mix.w1") = randn({cfg.hidden, cfg.hidden}, 42, 0.3);

    SentencePair a{{4, 5, 6}, {7, 8}};
    SentencePair b{{9, 4}, {5, 6, 7}};
    Tensor rhat = randn({4, cfg.hidden}, 43); // rows: a0, a1, b0, b1

    PairBatch grouped = make_pair_batch({&a, &b}, 2, cfg.max_len);
    PairBatch manual = make_pair_batch({&a, &a, &b, &b}, 1, cfg.max_len);

    Tape tg;
    BoundParams pg = bind_params(tg, params);
    NodeId lg = nmt_forward_loss(tg, pg, cfg, grouped, tg.constant(rhat));
    Tape tm;
    BoundParams pm = bind_params(tm, params);
    NodeId lm = nmt_forward_loss(tm, pm, cfg, manual, tm.constant(rhat));
    CHECK(std::abs(tg.value(lg).data[0] - tm.value(lm).data[0]) < 1e-12);

    // Parameter gradients agree between the two routes.
    tg.backward(lg);
    tm.backward(lm);
    double worst = 0.0;
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor& ga = tg.grad(pg.nodes[i]);
        const Tensor& gb = tm.grad(pm.nodes[i]);
        if (ga.data.empty() || gb.data.empty()) {
            CHECK(ga.data.empty() == gb.data.empty());
            continue;
        }
        for (int64_t j = 0; j < ga.numel(); ++j)
            worst = std::max(worst, std::abs(ga[j] - gb[j]));
    }
    CHECK(worst < 1e-12);

    // The loss is actually source-sensitive through cross-attention.
    SentencePair shuffled{{6, 4, 5}, {7, 8}};
    PairBatch other = make_pair_batch({&shuffled, &b}, 2, cfg.max_len);
    Tape ts;
    BoundParams psb = bind_params(ts, params);
    double loss_other = ts.value(nmt_forward_loss(ts, psb, cfg, other, ts.constant(rhat))).data[0];
    CHECK(std::abs(loss_other - tg.value(lg).data[0]) > 1e-9);
}

TEST_CASE("forward loss gradients match central differences") {
    NmtConfig cfg = small_cfg();
    cfg.dec_layers = 1;
    Rng rng(5);
    ParamStore init = init_backbone(cfg, rng);
    // Random mix weights so the broadcast path carries gradient.
    init.at("nmt.dec.0.mix.w1") = randn({cfg.hidden, cfg.hidden}, 51, 0.4);
    init.at("nmt.dec.0.mix.w2") = randn({cfg.hidden, cfg.hidden}, 52, 0.4);

    SentencePair a{{4, 5, 6}, {7, 8}};
    SentencePair b{{9, 4}, {5, 6}};
    PairBatch batch = make_pair_batch({&a, &b}, 2, cfg.max_len);
    Tensor rhat0 = randn({4, cfg.hidden}, 53);

    // With respect to the conditioning rows.
    auto wrt_rhat = [&](const Tensor& theta, Tensor* grad_out) {
        Tape tape;
        BoundParams p = bind_params(tape, init);
        NodeId r = tape.leaf(theta, true);
        NodeId loss = nmt_forward_loss(tape, p, cfg, batch, r);
        if (grad_out) {
            tape.backward(loss);
            *grad_out = tape.grad(r);
        }
        return tape.value(loss).data[0];
    };
    CHECK(grad_check(wrt_rhat, rhat0) < 1e-4);

    // With respect to a few representative parameter tensors.
    for (const std::string name : {"nmt.dec.0.mix.w1", "nmt.dec.0.mix.b", "nmt.out.w",
                                   "nmt.dec.0.cross.q.w", "nmt.emb"}) {
        ParamStore work;
        for (size_t i = 0; i < init.size(); ++i) work.put(init.names()[i], init.tensor(i));
        auto wrt_param = [&](const Tensor& theta, Tensor* grad_out) {
            work.at(name) = theta;
            Tape tape;
            BoundParams p = bind_params(tape, work);
            NodeId loss = nmt_forward_loss(tape, p, cfg, batch, tape.constant(rhat0));
            if (grad_out) {
                tape.backward(loss);
                *grad_out = tape.grad(p.at(name));
            }
            return tape.value(loss).data[0];
        };
        CHECK(grad_check(wrt_param, init.at(name)) < 1e-4);
    }
}

TEST_CASE("translate: deterministic, in-vocab, and guarded") {
    NmtConfig cfg = small_cfg();
    Rng rng(6);
    ParamStore params = init_backbone(cfg, rng);
    BeamConfig bc;
    bc.beam = 2;
    bc.max_len = 8;

    std::vector<int> src{4, 5, 6};
    TranslateResult r1 = translate_ids(params, cfg, src, nullptr, bc);
    TranslateResult r2 = translate_ids(params, cfg, src, nullptr, bc);
    CHECK(r1.tokens == r2.tokens);
    CHECK(r1.score == r2.score);
    for (int t : r1.tokens) {
        CHECK(t >= 0);
        CHECK(t < cfg.vocab);
        CHECK(t != Vocab::kEos);
    }
    CHECK(r1.tokens.size() <= static_cast<size_t>(bc.max_len));

    CHECK_THROWS_AS(translate_ids(params, cfg, {}, nullptr, bc), PreconditionError);
    std::vector<int> long_src(cfg.max_len + 1, 4);
    CHECK_THROWS_AS(translate_ids(params, cfg, long_src, nullptr, bc), PreconditionError);
    Tensor bad_cond({cfg.hidden + 1});
    CHECK_THROWS_AS(translate_ids(params, cfg, src, &bad_cond, bc), DimError);

    BeamConfig bad_bc;
    bad_bc.beam = 0;
    CHECK_THROWS_AS(bad_bc.validate(), ConfigError);
}

TEST_CASE("translate: identity mix ignores conditioning, a real mix uses it") {
    NmtConfig cfg = small_cfg();
    Rng rng(7);
    ParamStore params = init_backbone(cfg, rng);
    BeamConfig bc;
    bc.beam = 1;
    std::vector<int> src{4, 5, 6, 7};
    Tensor cond = randn({cfg.hidden}, 71, 2.0);

    TranslateResult plain = translate_ids(params, cfg, src, nullptr, bc);
    TranslateResult with_cond = translate_ids(params, cfg, src, &cond, bc);
    CHECK(plain.tokens == with_cond.tokens);
    CHECK(plain.score == with_cond.score);

    params.at("nmt.dec.0.mix.w1") = randn({cfg.hidden, cfg.hidden}, 72, 1.0);
    TranslateResult perturbed = translate_ids(params, cfg, src, &cond, bc);
    TranslateResult no_cond = translate_ids(params, cfg, src, nullptr, bc);
    // Scores come from different logit streams now.
    CHECK(perturbed.score != no_cond.score);
}

TEST_CASE("translate_corpus: equals per-sentence decoding with the same conditioning") {
    NmtConfig cfg = small_cfg();
    Rng rng(8);
    ParamStore params = init_backbone(cfg, rng);
    // Non-trivial w1 so the semantic path matters.
    params.at("nmt.dec.0.mix.w1") = randn({cfg.hidden, cfg.hidden}, 81, 0.5);

    SemanticConfig scfg;
    scfg.vocab = cfg.vocab;
    scfg.dims = {.hidden = cfg.hidden, .heads = 2, .ffn = 16, .layers = 1};
    scfg.max_len = cfg.max_len;
    Rng srng(82);
    ParamStore sem = init_semantic(scfg, srng);

    std::vector<std::vector<int>> sources{{4, 5, 6}, {7, 8}, {9, 4, 5, 6}};
    BeamConfig bc;
    bc.beam = 2;
    auto batch = translate_corpus(params, cfg, sources, &sem, &scfg, bc);
    REQUIRE(batch.size() == sources.size());
    for (size_t i = 0; i < sources.size(); ++i) {
        Tensor cond = semantic_encode(sem, scfg, sources[i]);
        TranslateResult one = translate_ids(params, cfg, sources[i], &cond, bc);
        CHECK(batch[i] == one.tokens);
    }

    // Unconditioned corpus decode matches the nullptr path.
    auto plain = translate_corpus(params, cfg, sources, nullptr, nullptr, bc);
    for (size_t i = 0; i < sources.size(); ++i) {
        TranslateResult one = translate_ids(params, cfg, sources[i], nullptr, bc);
        CHECK(plain[i] == one.tokens);
    }
}

TEST_CASE("backbone checkpoint: config, mode, and weights round trip") {
    namespace fs = std::filesystem;
    NmtConfig cfg = small_cfg();
    Rng rng(9);
    ParamStore params = init_backbone(cfg, rng);
    Checkpoint ck = backbone_checkpoint(cfg, params, "csanmt");
    fs::path path = fs::temp_directory_path() / "csanmt_test_backbone.ckpt";
    ck.save(path);

    Checkpoint back = Checkpoint::load(path);
    CHECK(back.require_meta("mode") == "csanmt");
    NmtConfig cfg2 = nmt_config_from(back);
    CHECK(cfg2.vocab == cfg.vocab);
    CHECK(cfg2.hidden == cfg.hidden);
    CHECK(cfg2.heads == cfg.heads);
    CHECK(cfg2.ffn == cfg.ffn);
    CHECK(cfg2.enc_layers == cfg.enc_layers);
    CHECK(cfg2.dec_layers == cfg.dec_layers);
    CHECK(cfg2.max_len == cfg.max_len);
    CHECK(cfg2.label_smooth == cfg.label_smooth);

    // Bit-identical decode after the round trip.
    BeamConfig bc;
    std::vector<int> src{4, 5, 6};
    TranslateResult a = translate_ids(params, cfg, src, nullptr, bc);
    TranslateResult b = translate_ids(back.params, cfg2, src, nullptr, bc);
    CHECK(a.tokens == b.tokens);
    CHECK(a.score == b.score);

    Checkpoint wrong;
    wrong.meta["kind"] = "semantic";
    CHECK_THROWS_AS(nmt_config_from(wrong), ParseError);
    fs::remove(path);
}
