#include "csanmt/trainer.hpp"

#include <chrono>
#include <fstream>
#include <numeric>

#include "csanmt/evalx.hpp"
#include "json.hpp"

namespace csanmt {

using nlohmann::json;

std::string train_report_json(const TrainReport& report) {
    json j;
    j["phase"] = report.phase;
    j["steps"] = report.steps;
    j["loss_trace"] = report.loss_trace;
    j["val_epochs"] = report.val_epochs;
    j["val_bleu"] = report.val_bleu;
    j["best_epoch"] = report.best_epoch;
    j["best_bleu"] = report.best_bleu;
    j["presentations_per_epoch"] = report.presentations_per_epoch;
    j["checkpoints"] = report.checkpoints;
    // Timing is kept in its own object so everything else is reproducible
    // byte-for-byte across reruns.
    j["timing"] = {{"wall_seconds", report.wall_seconds}};
    return j.dump(2);
}

void write_loss_csv(const std::filesystem::path& path, const TrainReport& report) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write loss trace: " + path.string());
    os << "step,phase,loss\n";
    for (size_t i = 0; i < report.loss_trace.size(); ++i)
        os << (i + 1) << ',' << report.phase << ',' << report.loss_trace[i] << '\n';
}

namespace {

class StopWatch {
public:
    StopWatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void emit_line(const MetricFn& emit, json j) {
    if (emit) emit(j.dump());
}

void check_finite_loss(double loss, const std::string& where) {
    if (!std::isfinite(loss)) throw NumericError("non-finite loss at " + where);
}

void update_params(Adam& opt, ParamStore& store, Tape& tape, const BoundParams& bound, double lr,
                   bool skip_mix) {
    for (size_t i = 0; i < store.size(); ++i) {
        const std::string& name = store.names()[i];
        if (skip_mix && is_broadcast_param(name)) continue;
        opt.update(name, store.tensor(i), tape.grad(bound.nodes[i]), lr);
    }
}

double validation_bleu(const ParamStore& backbone, const NmtConfig& mcfg,
                       const ParallelCorpus& valid, const ParamStore* sem,
                       const SemanticConfig* sem_cfg, int threads) {
    std::vector<std::vector<int>> srcs, refs;
    for (const SentencePair& p : valid.pairs) {
        srcs.push_back(p.src);
        refs.push_back(p.tgt);
    }
    BeamConfig bc{.beam = 1, .alpha = 0.6, .max_len = mcfg.max_len};
    auto hyp = translate_corpus(backbone, mcfg, srcs, sem, sem_cfg, bc, threads);
    return bleu(hyp, refs).bleu;
}

// Shared shape of phase 2 and the baseline: grouped steps over a per-epoch
// permutation, validation-selected best parameters.
struct EpochPlan {
    std::vector<size_t> order;
};

EpochPlan epoch_plan(size_t n, const Rng& shuffle_root, int epoch) {
    EpochPlan plan;
    plan.order.resize(n);
    std::iota(plan.order.begin(), plan.order.end(), size_t{0});
    Rng r = shuffle_root.split(static_cast<uint64_t>(epoch));
    r.shuffle(plan.order);
    return plan;
}

} // namespace

Phase1Result train_phase1(const ParallelCorpus& corpus, const TrainConfig& cfg,
                          const MetricFn& emit) {
    cfg.validate_phase1();
    if (corpus.pairs.empty()) throw PreconditionError("phase1: empty corpus");
    StopWatch watch;

    Phase1Result result;
    result.sem_cfg.vocab = corpus.vocab.size();
    result.sem_cfg.dims = {cfg.hidden, cfg.heads, cfg.ffn, cfg.sem_layers};
    result.sem_cfg.max_len = cfg.max_len;

    Rng root(cfg.seed);
    Rng init_rng = root.split("sem.init");
    result.semantic = init_semantic(result.sem_cfg, init_rng);

    Adam opt;
    Rng shuffle_root = root.split("phase1.shuffle");
    Rng lambda_root = root.split("phase1.lambda");

    size_t n = corpus.pairs.size();
    size_t batch = std::min<size_t>(static_cast<size_t>(cfg.p1_batch), n);
    if (batch < 2) throw ConfigError("phase1: corpus too small for a contrastive batch");
    std::vector<size_t> order;
    size_t pos = 0;
    int reshuffles = 0;

    result.report.phase = "phase1";
    for (int step = 1; step <= cfg.p1_steps; ++step) {
        if (pos + batch > order.size()) {
            order = epoch_plan(n, shuffle_root, reshuffles++).order;
            pos = 0;
        }
        std::vector<const std::vector<int>*> sents;
        sents.reserve(2 * batch);
        for (size_t i = 0; i < batch; ++i) sents.push_back(&corpus.pairs[order[pos + i]].src);
        for (size_t i = 0; i < batch; ++i) sents.push_back(&corpus.pairs[order[pos + i]].tgt);

        Tape tape;
        BoundParams sp = bind_params(tape, result.semantic);
        NodeId pooled = semantic_encode_batch(tape, sp, result.sem_cfg, sents);
        std::vector<int> xi(batch), yi(batch);
        std::iota(xi.begin(), xi.end(), 0);
        std::iota(yi.begin(), yi.end(), static_cast<int>(batch));
        NodeId rx = tape.gather_rows(pooled, xi);
        NodeId ry = tape.gather_rows(pooled, yi);

        Rng lam = lambda_root.split(static_cast<uint64_t>(step));
        NodeId loss = cfg.ctl.objective == CtlObjective::Cosine
                          ? cosine_loss(tape, rx, ry)
                          : ctl_loss(tape, rx, ry, cfg.ctl, lam);
        double lv = tape.value(loss)[0];
        check_finite_loss(lv, "phase1 step " + std::to_string(step) + " (batch head index " +
                                  std::to_string(order[pos]) + ")");
        tape.backward(loss);
        opt.begin_step();
        update_params(opt, result.semantic, tape, sp, cfg.p1_lr, /*skip_mix=*/false);

        result.report.loss_trace.push_back(lv);
        pos += batch;
        if (emit && (step % cfg.log_every == 0 || step == cfg.p1_steps))
            emit_line(emit, {{"event", "train_step"},
                             {"phase", "phase1"},
                             {"step", step},
                             {"loss", lv},
                             {"lr", cfg.p1_lr}});
    }
    result.report.steps = static_cast<int64_t>(result.report.loss_trace.size());

    std::filesystem::create_directories(cfg.out_dir);
    std::filesystem::path ck_path = std::filesystem::path(cfg.out_dir) / "semantic.ckpt";
    semantic_checkpoint(result.sem_cfg, result.semantic).save(ck_path);
    result.report.checkpoints["semantic"] = ck_path.string();
    result.report.wall_seconds = watch.seconds();
    return result;
}

namespace {

struct Phase2Common {
    NmtConfig mcfg;
    ParamStore backbone;
    Rng shuffle_root;
    Rng root;
};

Phase2Common phase2_setup(const ParallelCorpus& train, const TrainConfig& cfg) {
    cfg.validate_phase2();
    if (train.pairs.empty()) throw PreconditionError("phase2: empty corpus");
    Phase2Common c{.mcfg = {},
                   .backbone = {},
                   .shuffle_root = Rng(0),
                   .root = Rng(cfg.seed)};
    c.mcfg.vocab = train.vocab.size();
    c.mcfg.hidden = cfg.hidden;
    c.mcfg.heads = cfg.heads;
    c.mcfg.ffn = cfg.ffn;
    c.mcfg.enc_layers = cfg.enc_layers;
    c.mcfg.dec_layers = cfg.dec_layers;
    c.mcfg.max_len = cfg.max_len;
    c.mcfg.label_smooth = cfg.label_smooth;
    Rng init_rng = c.root.split("nmt.init");
    c.backbone = init_backbone(c.mcfg, init_rng);
    c.shuffle_root = c.root.split("phase2.shuffle");
    return c;
}

} // namespace

Phase2Result train_phase2(const ParallelCorpus& train, const ParallelCorpus& valid,
                          ParamStore semantic, const SemanticConfig& sem_cfg,
                          const TrainConfig& cfg, const MetricFn& emit) {
    StopWatch watch;
    Phase2Common c = phase2_setup(train, cfg);
    if (sem_cfg.dims.hidden != cfg.hidden)
        throw ConfigError("phase2: semantic width does not match backbone hidden size");
    if (sem_cfg.vocab != c.mcfg.vocab)
        throw ConfigError("phase2: semantic vocabulary does not match the corpus");

    Phase2Result result;
    result.model_cfg = c.mcfg;
    result.sem_cfg = sem_cfg;
    result.semantic = std::move(semantic);
    result.report.phase = "phase2";

    Adam opt_backbone, opt_semantic;
    Rng mgrc_root = c.root.split("phase2.mgrc");
    MgrcConfig mgrc{.K = cfg.K, .eta = cfg.eta, .variant = cfg.variant, .anchor = cfg.anchor};
    size_t n = train.pairs.size();
    size_t group = std::max<size_t>(1, static_cast<size_t>(cfg.p2_batch / cfg.K));
    result.report.presentations_per_epoch = static_cast<int64_t>(n) * cfg.K;

    ParamStore best_backbone = c.backbone;
    ParamStore best_semantic = result.semantic;
    bool validated = false;
    std::filesystem::create_directories(cfg.out_dir);

    for (int epoch = 1; epoch <= cfg.p2_epochs; ++epoch) {
        EpochPlan plan = epoch_plan(n, c.shuffle_root, epoch);
        for (size_t pos = 0; pos < n; pos += group) {
            size_t g = std::min(group, n - pos);
            std::vector<const SentencePair*> instances;
            std::vector<const std::vector<int>*> sents;
            for (size_t i = 0; i < g; ++i) instances.push_back(&train.pairs[plan.order[pos + i]]);
            for (size_t i = 0; i < g; ++i) sents.push_back(&instances[i]->src);
            for (size_t i = 0; i < g; ++i) sents.push_back(&instances[i]->tgt);

            Tape tape;
            BoundParams bp = bind_params(tape, c.backbone);
            BoundParams sp = bind_params(tape, result.semantic);
            NodeId pooled = semantic_encode_batch(tape, sp, sem_cfg, sents);
            std::vector<int> xi(g), yi(g);
            std::iota(xi.begin(), xi.end(), 0);
            std::iota(yi.begin(), yi.end(), static_cast<int>(g));
            NodeId rx = tape.gather_rows(pooled, xi);
            NodeId ry = tape.gather_rows(pooled, yi);

            // Chains are drawn from the current encoder state, fresh for
            // this epoch; the k-th presentation uses the k-th element.
            const Tensor& vrx = tape.value(rx);
            const Tensor& vry = tape.value(ry);
            int64_t h = cfg.hidden;
            Tensor omega({static_cast<int64_t>(g) * cfg.K, h});
            std::vector<int> anchor_idx(g * static_cast<size_t>(cfg.K));
            std::vector<int> rep_idx(g * static_cast<size_t>(cfg.K));
            for (size_t i = 0; i < g; ++i) {
                Tensor rxv({h}), ryv({h});
                std::copy_n(vrx.data.begin() + static_cast<int64_t>(i) * h, h, rxv.data.begin());
                std::copy_n(vry.data.begin() + static_cast<int64_t>(i) * h, h, ryv.data.begin());
                AdjacencyRegion region =
                    AdjacencyRegion::from_vectors(std::move(rxv), std::move(ryv));
                Rng chain_rng = mgrc_root.split(static_cast<uint64_t>(epoch))
                                    .split(static_cast<uint64_t>(plan.order[pos + i]));
                RegionSamples rs = sample_region(region, mgrc, chain_rng);
                for (int k = 0; k < cfg.K; ++k) {
                    size_t row = i * static_cast<size_t>(cfg.K) + static_cast<size_t>(k);
                    std::copy_n(rs.chain.history[static_cast<size_t>(k)].data.begin(), h,
                                omega.data.begin() + static_cast<int64_t>(row) * h);
                    anchor_idx[row] = rs.anchors[static_cast<size_t>(k)] == 0
                                          ? static_cast<int>(i)
                                          : static_cast<int>(g + i);
                    rep_idx[row] = static_cast<int>(i);
                }
            }
            NodeId rxy = tape.concat_rows(rx, ry);
            NodeId anchor_rows = tape.gather_rows(rxy, std::move(anchor_idx));
            NodeId rtilde =
                tape.sub(tape.gather_rows(ry, rep_idx), tape.gather_rows(rx, rep_idx));
            NodeId rhat = tape.add(anchor_rows, tape.mul(tape.constant(std::move(omega)), rtilde));

            PairBatch batch = make_pair_batch(instances, cfg.K, cfg.max_len);
            NodeId loss = nmt_forward_loss(tape, bp, c.mcfg, batch, rhat);
            double lv = tape.value(loss)[0];
            check_finite_loss(lv, "phase2 epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(pos / group + 1) + " (instance index " +
                                      std::to_string(plan.order[pos]) + ")");
            tape.backward(loss);

            opt_backbone.begin_step();
            double lr = noam_lr(opt_backbone.step(), cfg.hidden, cfg.p2_warmup, cfg.p2_lr_scale);
            update_params(opt_backbone, c.backbone, tape, bp, lr, /*skip_mix=*/false);
            if (cfg.ft_lr > 0.0) {
                opt_semantic.begin_step();
                update_params(opt_semantic, result.semantic, tape, sp, cfg.ft_lr,
                              /*skip_mix=*/false);
            }
            result.report.loss_trace.push_back(lv);
            if (emit && (result.report.loss_trace.size() % static_cast<size_t>(cfg.log_every) == 0))
                emit_line(emit, {{"event", "train_step"},
                                 {"phase", "phase2"},
                                 {"epoch", epoch},
                                 {"step", result.report.loss_trace.size()},
                                 {"loss", lv},
                                 {"lr", lr}});
        }

        if (cfg.val_every > 0 && !valid.pairs.empty() &&
            (epoch % cfg.val_every == 0 || epoch == cfg.p2_epochs)) {
            double vb = validation_bleu(c.backbone, c.mcfg, valid, &result.semantic, &sem_cfg,
                                        cfg.threads);
            result.report.val_epochs.push_back(epoch);
            result.report.val_bleu.push_back(vb);
            bool improved = !validated || vb > result.report.best_bleu;
            if (improved) {
                result.report.best_bleu = vb;
                result.report.best_epoch = epoch;
                best_backbone = c.backbone;
                best_semantic = result.semantic;
            }
            validated = true;
            emit_line(emit, {{"event", "validation"},
                             {"phase", "phase2"},
                             {"epoch", epoch},
                             {"bleu", vb},
                             {"improved", improved}});
        }
        if (cfg.ckpt_every > 0 && epoch % cfg.ckpt_every == 0) {
            std::filesystem::path p = std::filesystem::path(cfg.out_dir) /
                                      ("backbone_epoch" + std::to_string(epoch) + ".ckpt");
            backbone_checkpoint(c.mcfg, c.backbone, "csanmt").save(p);
        }
    }

    if (!validated) {
        best_backbone = c.backbone;
        best_semantic = result.semantic;
    }
    result.backbone = std::move(best_backbone);
    result.semantic = std::move(best_semantic);
    result.report.steps = static_cast<int64_t>(result.report.loss_trace.size());

    std::filesystem::path nmt_path = std::filesystem::path(cfg.out_dir) / "nmt.ckpt";
    backbone_checkpoint(c.mcfg, result.backbone, "csanmt").save(nmt_path);
    result.report.checkpoints["backbone"] = nmt_path.string();
    std::filesystem::path sem_path = std::filesystem::path(cfg.out_dir) / "semantic_tuned.ckpt";
    semantic_checkpoint(sem_cfg, result.semantic).save(sem_path);
    result.report.checkpoints["semantic"] = sem_path.string();
    result.report.wall_seconds = watch.seconds();
    return result;
}

BaselineResult train_baseline(const ParallelCorpus& train, const ParallelCorpus& valid,
                              const TrainConfig& cfg, const MetricFn& emit) {
    StopWatch watch;
    Phase2Common c = phase2_setup(train, cfg);
    set_broadcast_identity(c.backbone, "nmt.dec", cfg.dec_layers);

    BaselineResult result;
    result.model_cfg = c.mcfg;
    result.report.phase = "baseline";
    result.report.presentations_per_epoch = static_cast<int64_t>(train.pairs.size());

    Adam opt;
    size_t n = train.pairs.size();
    size_t group = std::max<size_t>(1, static_cast<size_t>(cfg.p2_batch));
    ParamStore best_backbone = c.backbone;
    bool validated = false;
    std::filesystem::create_directories(cfg.out_dir);

    for (int epoch = 1; epoch <= cfg.p2_epochs; ++epoch) {
        EpochPlan plan = epoch_plan(n, c.shuffle_root, epoch);
        for (size_t pos = 0; pos < n; pos += group) {
            size_t g = std::min(group, n - pos);
            std::vector<const SentencePair*> instances;
            for (size_t i = 0; i < g; ++i) instances.push_back(&train.pairs[plan.order[pos + i]]);

            Tape tape;
            BoundParams bp = bind_params(tape, c.backbone);
            PairBatch batch = make_pair_batch(instances, 1, cfg.max_len);
            NodeId rhat = tape.constant(Tensor({batch.dec.n_seq, cfg.hidden}));
            NodeId loss = nmt_forward_loss(tape, bp, c.mcfg, batch, rhat);
            double lv = tape.value(loss)[0];
            check_finite_loss(lv, "baseline epoch " + std::to_string(epoch) + " step " +
                                      std::to_string(pos / group + 1) + " (instance index " +
                                      std::to_string(plan.order[pos]) + ")");
            tape.backward(loss);
            opt.begin_step();
            double lr = noam_lr(opt.step(), cfg.hidden, cfg.p2_warmup, cfg.p2_lr_scale);
            update_params(opt, c.backbone, tape, bp, lr, /*skip_mix=*/true);
            result.report.loss_trace.push_back(lv);
            if (emit && (result.report.loss_trace.size() % static_cast<size_t>(cfg.log_every) == 0))
                emit_line(emit, {{"event", "train_step"},
                                 {"phase", "baseline"},
                                 {"epoch", epoch},
                                 {"step", result.report.loss_trace.size()},
                                 {"loss", lv},
                                 {"lr", lr}});
        }

        if (cfg.val_every > 0 && !valid.pairs.empty() &&
            (epoch % cfg.val_every == 0 || epoch == cfg.p2_epochs)) {
            double vb = validation_bleu(c.backbone, c.mcfg, valid, nullptr, nullptr, cfg.threads);
            result.report.val_epochs.push_back(epoch);
            result.report.val_bleu.push_back(vb);
            bool improved = !validated || vb > result.report.best_bleu;
            if (improved) {
                result.report.best_bleu = vb;
                result.report.best_epoch = epoch;
                best_backbone = c.backbone;
            }
            validated = true;
            emit_line(emit, {{"event", "validation"},
                             {"phase", "baseline"},
                             {"epoch", epoch},
                             {"bleu", vb},
                             {"improved", improved}});
        }
    }

    if (!validated) best_backbone = c.backbone;
    result.backbone = std::move(best_backbone);
    result.report.steps = static_cast<int64_t>(result.report.loss_trace.size());

    std::filesystem::path nmt_path = std::filesystem::path(cfg.out_dir) / "nmt.ckpt";
    backbone_checkpoint(c.mcfg, result.backbone, "baseline").save(nmt_path);
    result.report.checkpoints["backbone"] = nmt_path.string();
    result.report.wall_seconds = watch.seconds();
    return result;
}

} // namespace csanmt
