#pragma once

#include <filesystem>
#include <functional>
#include <map>

#include "csanmt/ctl.hpp"
#include "csanmt/mgrc.hpp"
#include "csanmt/nmt.hpp"
#include "csanmt/semantic.hpp"

namespace csanmt {

// Line-oriented metric sink (JSON object per call); optional everywhere.
using MetricFn = std::function<void(const std::string&)>;

struct TrainConfig {
    uint64_t seed = 1;
    std::string out_dir = ".";

    // Model dimensions (shared by the semantic encoder and the backbone).
    int hidden = 64;
    int heads = 4;
    int ffn = 256;
    int sem_layers = 4;
    int enc_layers = 2;
    int dec_layers = 2;
    int max_len = 64;
    double label_smooth = 0.1;

    // Phase 1: contrastive pretraining of the semantic encoder.
    int p1_steps = 400;
    double p1_lr = 1e-3;
    int p1_batch = 32;
    CtlConfig ctl;

    // Phase 2: likelihood training of the backbone with augmentation.
    int p2_epochs = 10;
    int p2_batch = 64; // decoder presentations per step
    double p2_lr_scale = 1.0;
    int p2_warmup = 4000;
    double ft_lr = 1e-5; // semantic fine-tune lr; 0 freezes the encoder
    int K = 8;
    double eta = 0.6;
    MgrcVariant variant = MgrcVariant::Default;
    AnchorPolicy anchor = AnchorPolicy::Random;

    // Bookkeeping.
    int val_every = 1;  // epochs between validation decodes (0 = never)
    int ckpt_every = 0; // epochs between periodic checkpoints (0 = final only)
    int log_every = 50; // steps between emitted metric lines
    int threads = 1;    // validation decode parallelism

    void validate_phase1() const {
        if (p1_steps < 1) throw ConfigError("phase1: steps must be positive");
        if (p1_batch < 2) throw ConfigError("phase1: batch size must be at least 2");
        if (p1_lr <= 0.0) throw ConfigError("phase1: lr must be positive");
        if (log_every < 1) throw ConfigError("log_every must be positive");
        ctl.validate();
    }
    void validate_phase2() const {
        if (p2_epochs < 1) throw ConfigError("phase2: epochs must be positive");
        if (p2_batch < 1) throw ConfigError("phase2: batch size must be positive");
        if (K < 1) throw ConfigError("phase2: K must be at least 1");
        if (eta < 0.0 || eta > 1.0) throw ConfigError("phase2: eta must be in [0,1]");
        if (ft_lr < 0.0) throw ConfigError("phase2: fine-tune lr must be nonnegative");
        if (log_every < 1) throw ConfigError("log_every must be positive");
        double peak = noam_peak_lr(hidden, p2_warmup, p2_lr_scale);
        if (ft_lr > peak)
            throw ConfigError("phase2: fine-tune lr exceeds the base schedule's peak");
    }
};

struct TrainReport {
    std::string phase;
    std::vector<double> loss_trace;
    std::vector<int> val_epochs;
    std::vector<double> val_bleu;
    int best_epoch = -1;
    double best_bleu = 0.0;
    int64_t presentations_per_epoch = 0;
    int64_t steps = 0;
    double wall_seconds = 0.0; // metadata only; not part of determinism
    std::map<std::string, std::string> checkpoints;
};

std::string train_report_json(const TrainReport& report);
void write_loss_csv(const std::filesystem::path& path, const TrainReport& report);

struct Phase1Result {
    ParamStore semantic;
    SemanticConfig sem_cfg;
    TrainReport report;
};

// Contrastive pretraining over shuffled pair batches; deterministic given
// the seed. Writes semantic.ckpt under out_dir.
Phase1Result train_phase1(const ParallelCorpus& corpus, const TrainConfig& cfg,
                          const MetricFn& emit = {});

struct Phase2Result {
    ParamStore backbone;
    ParamStore semantic;
    NmtConfig model_cfg;
    SemanticConfig sem_cfg;
    TrainReport report;
};

// Augmented likelihood training: every epoch presents each instance K
// times, the k-th presentation conditioned on the k-th element of a chain
// generated fresh that epoch. The backbone trains on the warmup schedule;
// the semantic encoder fine-tunes at ft_lr through the gradients of the
// pair vectors. Writes nmt.ckpt and semantic_tuned.ckpt under out_dir.
Phase2Result train_phase2(const ParallelCorpus& train, const ParallelCorpus& valid,
                          ParamStore semantic, const SemanticConfig& sem_cfg,
                          const TrainConfig& cfg, const MetricFn& emit = {});

struct BaselineResult {
    ParamStore backbone;
    NmtConfig model_cfg;
    TrainReport report;
};

// Same pipeline with the mix layer pinned to its identity reduction and no
// semantic conditioning; shares the data order of train_phase2 for equal
// seeds. Writes nmt.ckpt under out_dir.
BaselineResult train_baseline(const ParallelCorpus& train, const ParallelCorpus& valid,
                              const TrainConfig& cfg, const MetricFn& emit = {});

} // namespace csanmt
