// Command-line driver: each subcommand wires the library into one
// reproducible experiment step. Configuration comes from an optional
// `key = value` file plus flag overrides; the resolved union is written
// next to the outputs so runs can be diffed.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "csanmt/corpus.hpp"
#include "csanmt/evalx.hpp"
#include "csanmt/trainer.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace csanmt;

void emit(const json& j) { std::cout << j.dump() << "\n" << std::flush; }

void human(const std::string& line) { std::cerr << line << "\n"; }

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Declared keys with defaults; values resolve as file < flags. Unknown
// file keys are rejected so typos cannot silently fall back to defaults.
class RunConfig {
public:
    void declare(const std::string& key, const std::string& def, const std::string& help) {
        entries_.push_back({key, def, help, std::make_shared<std::string>(), nullptr});
    }

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path_, "key = value configuration file");
        for (Entry& e : entries_)
            e.opt = cmd->add_option("--" + e.key, *e.holder, e.help + " [" + e.def + "]");
    }

    void resolve() {
        for (const Entry& e : entries_) kv_[e.key] = e.def;
        if (!config_path_.empty()) apply_file(config_path_);
        for (const Entry& e : entries_)
            if (e.opt->count() > 0) kv_[e.key] = *e.holder;
    }

    const std::string& str(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw ConfigError("config: undeclared key '" + key + "'");
        return it->second;
    }

    int64_t integer(const std::string& key) const {
        try {
            size_t pos = 0;
            int64_t v = std::stoll(str(key), &pos);
            if (pos != str(key).size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects an integer, got '" + str(key) +
                              "'");
        }
    }

    double number(const std::string& key) const {
        try {
            size_t pos = 0;
            double v = std::stod(str(key), &pos);
            if (pos != str(key).size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects a number, got '" + str(key) +
                              "'");
        }
    }

    uint64_t seed() const { return static_cast<uint64_t>(integer("seed")); }
    fs::path out_dir() const { return fs::path(str("out_dir")); }

    fs::path required_path(const std::string& key) const {
        const std::string& v = str(key);
        if (v.empty()) throw ConfigError("config: key '" + key + "' requires a path");
        return fs::path(v);
    }

    fs::path existing_path(const std::string& key) const {
        fs::path p = required_path(key);
        if (!fs::exists(p))
            throw ConfigError(key + ": no such file: '" + p.string() + "'");
        return p;
    }

    void persist(const std::string& command) const {
        fs::create_directories(out_dir());
        fs::path p = out_dir() / ("resolved_" + command + ".cfg");
        std::ofstream os(p, std::ios::trunc);
        if (!os) throw ConfigError("cannot write resolved config: " + p.string());
        for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
    }

private:
    struct Entry {
        std::string key, def, help;
        std::shared_ptr<std::string> holder;
        CLI::Option* opt;
    };

    void apply_file(const fs::path& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("config: cannot open '" + path.string() + "'");
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string t = trim(line);
            if (t.empty()) continue;
            size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: " + path.string() + ":" + std::to_string(lineno) +
                                  ": expected 'key = value'");
            std::string key = trim(t.substr(0, eq));
            std::string value = trim(t.substr(eq + 1));
            if (!kv_.count(key))
                throw ConfigError("config: " + path.string() + ":" + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
            kv_[key] = value;
        }
    }

    std::vector<Entry> entries_;
    std::map<std::string, std::string> kv_;
    std::string config_path_;
};

void declare_shared(RunConfig& rc) {
    rc.declare("seed", "1", "root random seed");
    rc.declare("out_dir", ".", "directory for outputs and the resolved config");
    rc.declare("threads", "1", "decode parallelism");
}

void declare_model_dims(RunConfig& rc) {
    rc.declare("hidden", "64", "model width");
    rc.declare("heads", "4", "attention heads");
    rc.declare("ffn", "256", "feed-forward width");
    rc.declare("max_len", "64", "maximum sentence length");
}

CtlObjective parse_objective(const std::string& name) {
    if (name == "tangential") return CtlObjective::Tangential;
    if (name == "cosine") return CtlObjective::Cosine;
    throw ConfigError("objective must be 'tangential' or 'cosine', got '" + name + "'");
}

std::string join_tokens(const std::vector<std::string>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

void write_pairs_tsv(const fs::path& path, const Vocab& vocab, const SentencePair* pairs,
                     size_t n) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write corpus file: " + path.string());
    for (size_t i = 0; i < n; ++i)
        os << join_tokens(vocab.decode(pairs[i].src)) << '\t'
           << join_tokens(vocab.decode(pairs[i].tgt)) << '\n';
}

// ---------------------------------------------------------------- synth

int cmd_synth(const RunConfig& rc) {
    int n_train = static_cast<int>(rc.integer("n_train"));
    int n_valid = static_cast<int>(rc.integer("n_valid"));
    int n_test = static_cast<int>(rc.integer("n_test"));
    SynthOptions opts;
    opts.n_pairs = n_train + n_valid + n_test;
    opts.vocab_size = static_cast<int>(rc.integer("vocab_size"));
    opts.len_min = static_cast<int>(rc.integer("len_min"));
    opts.len_max = static_cast<int>(rc.integer("len_max"));
    opts.seed = rc.seed();
    if (n_train < 0 || n_valid < 0 || n_test < 0)
        throw ConfigError("synth: split sizes must be nonnegative");

    // One generator pass, then contiguous slices: all splits share the
    // token bijection, so held-out pairs test the same mapping.
    SynthResult r = synth_task(opts);
    fs::create_directories(rc.out_dir());
    const SentencePair* base = r.corpus.pairs.data();
    write_pairs_tsv(rc.out_dir() / "train.tsv", r.corpus.vocab, base, static_cast<size_t>(n_train));
    write_pairs_tsv(rc.out_dir() / "valid.tsv", r.corpus.vocab, base + n_train,
                    static_cast<size_t>(n_valid));
    write_pairs_tsv(rc.out_dir() / "test.tsv", r.corpus.vocab, base + n_train + n_valid,
                    static_cast<size_t>(n_test));

    emit({{"event", "synth"},
          {"train", n_train},
          {"valid", n_valid},
          {"test", n_test},
          {"vocab_size", opts.vocab_size},
          {"half_size", r.half_size},
          {"out_dir", rc.out_dir().string()}});
    human("synth: wrote " + std::to_string(n_train) + "/" + std::to_string(n_valid) + "/" +
          std::to_string(n_test) + " pairs under " + rc.out_dir().string());
    return 0;
}

// ------------------------------------------------------------ train-sem

MetricFn stdout_metrics() {
    return [](const std::string& line) { std::cout << line << "\n" << std::flush; };
}

int cmd_train_sem(const RunConfig& rc) {
    LoadOptions lo;
    lo.min_count = static_cast<int>(rc.integer("min_count"));
    lo.max_len = static_cast<int>(rc.integer("max_len"));
    ParallelCorpus corpus = load_parallel(rc.existing_path("train"), lo);

    TrainConfig tc;
    tc.seed = rc.seed();
    tc.out_dir = rc.out_dir().string();
    tc.threads = static_cast<int>(rc.integer("threads"));
    tc.hidden = static_cast<int>(rc.integer("hidden"));
    tc.heads = static_cast<int>(rc.integer("heads"));
    tc.ffn = static_cast<int>(rc.integer("ffn"));
    tc.sem_layers = static_cast<int>(rc.integer("sem_layers"));
    tc.max_len = lo.max_len;
    tc.p1_steps = static_cast<int>(rc.integer("steps"));
    tc.p1_lr = rc.number("lr");
    tc.p1_batch = static_cast<int>(rc.integer("batch"));
    tc.log_every = static_cast<int>(rc.integer("log_every"));
    tc.ctl.tau = rc.number("tau");
    tc.ctl.lambda_floor = rc.number("lambda_floor");
    tc.ctl.objective = parse_objective(rc.str("objective"));

    Phase1Result res = train_phase1(corpus, tc, stdout_metrics());

    fs::path vocab_path = rc.out_dir() / "vocab.tsv";
    corpus.vocab.save(vocab_path);
    std::ofstream(rc.out_dir() / "report_phase1.json", std::ios::trunc)
        << train_report_json(res.report);
    write_loss_csv(rc.out_dir() / "loss_phase1.csv", res.report);

    emit({{"event", "done"},
          {"phase", "phase1"},
          {"checkpoint", res.report.checkpoints.at("semantic")},
          {"vocab", vocab_path.string()},
          {"final_loss", res.report.loss_trace.back()}});
    human("train-sem: " + std::to_string(res.report.steps) + " steps, checkpoint at " +
          res.report.checkpoints.at("semantic"));
    return 0;
}

// ------------------------------------------------- train-nmt / baseline

void fill_phase2(TrainConfig& tc, const RunConfig& rc) {
    tc.seed = rc.seed();
    tc.out_dir = rc.out_dir().string();
    tc.threads = static_cast<int>(rc.integer("threads"));
    tc.hidden = static_cast<int>(rc.integer("hidden"));
    tc.heads = static_cast<int>(rc.integer("heads"));
    tc.ffn = static_cast<int>(rc.integer("ffn"));
    tc.enc_layers = static_cast<int>(rc.integer("enc_layers"));
    tc.dec_layers = static_cast<int>(rc.integer("dec_layers"));
    tc.max_len = static_cast<int>(rc.integer("max_len"));
    tc.label_smooth = rc.number("label_smooth");
    tc.p2_epochs = static_cast<int>(rc.integer("epochs"));
    tc.p2_batch = static_cast<int>(rc.integer("batch"));
    tc.p2_warmup = static_cast<int>(rc.integer("warmup"));
    tc.p2_lr_scale = rc.number("lr_scale");
    tc.val_every = static_cast<int>(rc.integer("val_every"));
    tc.ckpt_every = static_cast<int>(rc.integer("ckpt_every"));
    tc.log_every = static_cast<int>(rc.integer("log_every"));
}

void declare_phase2(RunConfig& rc) {
    declare_shared(rc);
    declare_model_dims(rc);
    rc.declare("train", "", "training corpus (tab-separated)");
    rc.declare("valid", "", "validation corpus; empty disables model selection");
    rc.declare("vocab", "", "vocabulary file written by train-sem");
    rc.declare("enc_layers", "2", "encoder layers");
    rc.declare("dec_layers", "2", "decoder layers");
    rc.declare("label_smooth", "0.1", "label smoothing mass");
    rc.declare("epochs", "10", "training epochs");
    rc.declare("batch", "64", "decoder presentations per step");
    rc.declare("warmup", "4000", "inverse-sqrt schedule warmup steps");
    rc.declare("lr_scale", "1.0", "schedule scale factor");
    rc.declare("val_every", "1", "epochs between validation decodes");
    rc.declare("ckpt_every", "0", "epochs between periodic checkpoints (0 = final only)");
    rc.declare("log_every", "50", "steps between metric lines");
}

std::pair<ParallelCorpus, ParallelCorpus> load_phase2_corpora(const RunConfig& rc,
                                                              const Vocab& vocab) {
    LoadOptions lo;
    lo.min_count = 0;
    lo.max_len = static_cast<int>(rc.integer("max_len"));
    lo.vocab = &vocab;
    ParallelCorpus train = load_parallel(rc.existing_path("train"), lo);
    ParallelCorpus valid;
    valid.vocab = vocab;
    if (!rc.str("valid").empty()) valid = load_parallel(rc.existing_path("valid"), lo);
    return {std::move(train), std::move(valid)};
}

int cmd_train_nmt(const RunConfig& rc) {
    const std::string& sem_path = rc.str("semantic_ckpt");
    if (sem_path.empty() || !fs::exists(sem_path))
        throw ConfigError("train-nmt: missing semantic checkpoint: '" + sem_path + "'");
    Checkpoint sck = Checkpoint::load(sem_path);
    SemanticConfig scfg = semantic_config_from(sck);

    Vocab vocab = Vocab::load(rc.existing_path("vocab"));
    auto [train, valid] = load_phase2_corpora(rc, vocab);

    TrainConfig tc;
    fill_phase2(tc, rc);
    tc.sem_layers = scfg.dims.layers;
    tc.ft_lr = rc.number("ft_lr");
    tc.K = static_cast<int>(rc.integer("K"));
    tc.eta = rc.number("eta");
    tc.variant = parse_mgrc_variant(rc.str("variant"));
    tc.anchor = parse_anchor_policy(rc.str("anchor"));

    Phase2Result res = train_phase2(train, valid, std::move(sck.params), scfg, tc,
                                    stdout_metrics());
    std::ofstream(rc.out_dir() / "report_phase2.json", std::ios::trunc)
        << train_report_json(res.report);
    write_loss_csv(rc.out_dir() / "loss_phase2.csv", res.report);

    emit({{"event", "done"},
          {"phase", "phase2"},
          {"checkpoint", res.report.checkpoints.at("backbone")},
          {"semantic_checkpoint", res.report.checkpoints.at("semantic")},
          {"best_epoch", res.report.best_epoch},
          {"best_bleu", res.report.best_bleu}});
    human("train-nmt: best validation BLEU " + std::to_string(res.report.best_bleu) +
          " at epoch " + std::to_string(res.report.best_epoch));
    return 0;
}

int cmd_train_baseline(const RunConfig& rc) {
    Vocab vocab = Vocab::load(rc.existing_path("vocab"));
    auto [train, valid] = load_phase2_corpora(rc, vocab);

    TrainConfig tc;
    fill_phase2(tc, rc);

    BaselineResult res = train_baseline(train, valid, tc, stdout_metrics());
    std::ofstream(rc.out_dir() / "report_baseline.json", std::ios::trunc)
        << train_report_json(res.report);
    write_loss_csv(rc.out_dir() / "loss_baseline.csv", res.report);

    emit({{"event", "done"},
          {"phase", "baseline"},
          {"checkpoint", res.report.checkpoints.at("backbone")},
          {"best_epoch", res.report.best_epoch},
          {"best_bleu", res.report.best_bleu}});
    human("train-baseline: best validation BLEU " + std::to_string(res.report.best_bleu) +
          " at epoch " + std::to_string(res.report.best_epoch));
    return 0;
}

// ---------------------------------------------- translate / eval / noise

struct LoadedModel {
    Checkpoint backbone;
    NmtConfig cfg;
    std::string mode;
    std::unique_ptr<Checkpoint> semantic;
    SemanticConfig sem_cfg;

    const ParamStore* sem_params() const { return semantic ? &semantic->params : nullptr; }
    const SemanticConfig* sem_cfg_ptr() const { return semantic ? &sem_cfg : nullptr; }
};

LoadedModel load_model(const RunConfig& rc) {
    LoadedModel m{.backbone = Checkpoint::load(rc.existing_path("ckpt")),
                  .cfg = {},
                  .mode = "",
                  .semantic = nullptr,
                  .sem_cfg = {}};
    m.cfg = nmt_config_from(m.backbone);
    m.mode = m.backbone.require_meta("mode");
    if (m.mode == "csanmt") {
        const std::string& sem_path = rc.str("semantic_ckpt");
        if (sem_path.empty() || !fs::exists(sem_path))
            throw ConfigError("this model conditions on sentence vectors; missing semantic "
                              "checkpoint: '" +
                              sem_path + "'");
        m.semantic = std::make_unique<Checkpoint>(Checkpoint::load(sem_path));
        m.sem_cfg = semantic_config_from(*m.semantic);
    }
    return m;
}

BeamConfig beam_config(const RunConfig& rc, const NmtConfig& cfg) {
    BeamConfig bc;
    bc.beam = static_cast<int>(rc.integer("beam"));
    bc.alpha = rc.number("alpha");
    bc.max_len = cfg.max_len;
    if (bc.beam < 1) throw ConfigError("beam must be at least 1");
    return bc;
}

void declare_decode(RunConfig& rc) {
    rc.declare("ckpt", "", "translation model checkpoint");
    rc.declare("semantic_ckpt", "", "semantic encoder checkpoint (needed by csanmt models)");
    rc.declare("vocab", "", "vocabulary file");
    rc.declare("beam", "4", "beam width (1 = greedy)");
    rc.declare("alpha", "0.6", "length penalty exponent");
}

int cmd_translate(const RunConfig& rc) {
    LoadedModel m = load_model(rc);
    Vocab vocab = Vocab::load(rc.existing_path("vocab"));

    std::ifstream is(rc.existing_path("input"));
    std::vector<std::vector<int>> sources;
    std::string line;
    while (std::getline(is, line)) sources.push_back(vocab.encode(split_tokens(line)));

    BeamConfig bc = beam_config(rc, m.cfg);
    auto hyp = translate_corpus(m.backbone.params, m.cfg, sources, m.sem_params(),
                                m.sem_cfg_ptr(), bc, static_cast<int>(rc.integer("threads")));

    fs::create_directories(rc.out_dir());
    fs::path out_path = rc.str("output").empty() ? rc.out_dir() / "hyp.txt"
                                                 : fs::path(rc.str("output"));
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write translations: " + out_path.string());
    for (const auto& ids : hyp) os << join_tokens(vocab.decode(ids)) << '\n';

    emit({{"event", "translate"},
          {"sentences", sources.size()},
          {"mode", m.mode},
          {"beam", bc.beam},
          {"output", out_path.string()}});
    human("translate: " + std::to_string(sources.size()) + " sentences to " + out_path.string());
    return 0;
}

json bleu_json(const BleuReport& r) {
    return {{"bleu", r.bleu},
            {"precisions", r.precisions},
            {"smoothed", r.smoothed},
            {"brevity_penalty", r.brevity_penalty},
            {"candidate_length", r.candidate_length},
            {"reference_length", r.reference_length}};
}

int cmd_eval(const RunConfig& rc) {
    LoadedModel m = load_model(rc);
    Vocab vocab = Vocab::load(rc.existing_path("vocab"));
    LoadOptions lo;
    lo.min_count = 0;
    lo.max_len = m.cfg.max_len;
    lo.vocab = &vocab;
    ParallelCorpus corpus = load_parallel(rc.existing_path("corpus"), lo);

    std::vector<std::vector<int>> sources, references;
    for (const SentencePair& p : corpus.pairs) {
        sources.push_back(p.src);
        references.push_back(p.tgt);
    }
    BeamConfig bc = beam_config(rc, m.cfg);
    int threads = static_cast<int>(rc.integer("threads"));
    auto hyp = translate_corpus(m.backbone.params, m.cfg, sources, m.sem_params(),
                                m.sem_cfg_ptr(), bc, threads);

    BleuReport br = bleu(hyp, references);
    // A collapsed model may emit nothing at all; report zero diversity
    // instead of aborting the evaluation.
    int64_t hyp_tokens = 0;
    for (const auto& h : hyp) hyp_tokens += static_cast<int64_t>(h.size());
    double diversity = hyp_tokens > 0 ? ttr_corpus(hyp) : 0.0;
    auto buckets = word_accuracy_by_frequency(m.backbone.params, m.cfg, corpus,
                                              vocab_frequencies(vocab), m.sem_params(),
                                              m.sem_cfg_ptr());

    json out;
    out["bleu"] = bleu_json(br);
    out["ttr"] = diversity;
    out["buckets"] = json::array();
    emit({{"event", "bleu"},
          {"bleu", br.bleu},
          {"brevity_penalty", br.brevity_penalty},
          {"sentences", sources.size()}});
    emit({{"event", "ttr"}, {"value", diversity}});
    for (const FreqBucket& b : buckets) {
        json jb = {{"lo", b.lo},
                   {"hi", b.hi},
                   {"tokens", b.tokens},
                   {"correct", b.correct},
                   {"accuracy", b.accuracy}};
        out["buckets"].push_back(jb);
        jb["event"] = "freq_bucket";
        emit(jb);
    }
    fs::create_directories(rc.out_dir());
    std::ofstream(rc.out_dir() / "eval.json", std::ios::trunc) << out.dump(2);

    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", br.bleu);
    human("eval: BLEU " + std::string(buf) + " on " + std::to_string(sources.size()) +
          " sentences (" + m.mode + ")");
    return 0;
}

int cmd_robustness(const RunConfig& rc) {
    LoadedModel m = load_model(rc);
    Vocab vocab = Vocab::load(rc.existing_path("vocab"));
    LoadOptions lo;
    lo.min_count = 0;
    lo.max_len = m.cfg.max_len;
    lo.vocab = &vocab;
    ParallelCorpus corpus = load_parallel(rc.existing_path("corpus"), lo);

    std::vector<PerturbKind> kinds;
    {
        std::string spec = rc.str("kinds");
        size_t pos = 0;
        while (pos <= spec.size()) {
            size_t comma = spec.find(',', pos);
            std::string name = trim(spec.substr(pos, comma - pos));
            if (!name.empty()) kinds.push_back(parse_perturb_kind(name));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (kinds.empty()) throw ConfigError("robustness: no perturbation kinds given");
    }

    BeamConfig bc = beam_config(rc, m.cfg);
    int threads = static_cast<int>(rc.integer("threads"));
    TranslateFn fn = [&](const std::vector<std::vector<int>>& srcs) {
        return translate_corpus(m.backbone.params, m.cfg, srcs, m.sem_params(), m.sem_cfg_ptr(),
                                bc, threads);
    };
    Rng rng(rc.seed());
    auto reports = robustness_eval(fn, corpus, kinds, rc.number("ratio"), rng);

    json out;
    for (const auto& [name, rep] : reports) {
        out[name] = bleu_json(rep);
        emit({{"event", "robustness"}, {"condition", name}, {"bleu", rep.bleu}});
    }
    fs::create_directories(rc.out_dir());
    std::ofstream(rc.out_dir() / "robustness.json", std::ios::trunc) << out.dump(2);
    human("robustness: " + std::to_string(reports.size()) + " conditions on " +
          std::to_string(corpus.pairs.size()) + " sentences");
    return 0;
}

// -------------------------------------------------------- augment-stats

int cmd_augment_stats(const RunConfig& rc) {
    const std::string& sem_path = rc.str("semantic_ckpt");
    if (sem_path.empty() || !fs::exists(sem_path))
        throw ConfigError("augment-stats: missing semantic checkpoint: '" + sem_path + "'");
    Checkpoint sck = Checkpoint::load(sem_path);
    SemanticConfig scfg = semantic_config_from(sck);
    Vocab vocab = Vocab::load(rc.existing_path("vocab"));
    LoadOptions lo;
    lo.min_count = 0;
    lo.max_len = scfg.max_len;
    lo.vocab = &vocab;
    ParallelCorpus corpus = load_parallel(rc.existing_path("corpus"), lo);

    MgrcConfig mc;
    mc.K = static_cast<int>(rc.integer("K"));
    mc.eta = rc.number("eta");
    mc.variant = parse_mgrc_variant(rc.str("variant"));
    mc.anchor = parse_anchor_policy(rc.str("anchor"));
    mc.validate();

    int64_t limit = rc.integer("limit");
    size_t n = corpus.pairs.size();
    if (limit > 0) n = std::min(n, static_cast<size_t>(limit));

    Rng root(rc.seed());
    Rng chain_root = root.split("mgrc");
    for (size_t i = 0; i < n; ++i) {
        AdjacencyRegion region =
            build_region(sck.params, scfg, corpus.pairs[i].src, corpus.pairs[i].tgt);
        Rng rng = chain_root.split(static_cast<uint64_t>(i));
        RegionSamples rs = sample_region(region, mc, rng);
        for (int k = 0; k < mc.K; ++k) {
            size_t kk = static_cast<size_t>(k);
            emit({{"instance_id", i},
                  {"k", k},
                  {"component", rs.components[kk]},
                  {"omega_norm", l2_norm(rs.chain.history[kk])},
                  {"rhat_distance_to_rx", l2_distance(rs.rhat[kk], region.rx)},
                  {"rhat_distance_to_ry", l2_distance(rs.rhat[kk], region.ry)}});
        }
    }
    human("augment-stats: " + std::to_string(n) + " instances, K=" + std::to_string(mc.K));
    return 0;
}

// -------------------------------------------------------------- perturb

int cmd_perturb(const RunConfig& rc) {
    PerturbKind kind = parse_perturb_kind(rc.str("kind"));
    double ratio = rc.number("ratio");
    int window = static_cast<int>(rc.integer("window"));
    std::string filler = rc.str("filler");

    std::ifstream is(rc.existing_path("input"));
    fs::create_directories(rc.out_dir());
    fs::path out_path = rc.str("output").empty() ? rc.out_dir() / "perturbed.tsv"
                                                 : fs::path(rc.str("output"));
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write perturbed corpus: " + out_path.string());

    // Only the source side of tab-separated lines is touched; plain text
    // lines are perturbed whole.
    Rng rng = Rng(rc.seed()).split("perturb");
    std::string line;
    int64_t lines = 0;
    while (std::getline(is, line)) {
        std::string rest;
        size_t tab = line.find('\t');
        if (tab != std::string::npos) {
            rest = line.substr(tab);
            line.erase(tab);
        }
        std::vector<std::string> toks =
            perturb(split_tokens(line), kind, rng, ratio, filler, window);
        os << join_tokens(toks) << rest << '\n';
        ++lines;
    }
    emit({{"event", "perturb"},
          {"kind", perturb_kind_name(kind)},
          {"ratio", ratio},
          {"lines", lines},
          {"output", out_path.string()}});
    human("perturb: " + std::to_string(lines) + " lines to " + out_path.string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"contrastive semantic augmentation for toy-scale translation"};
    app.require_subcommand(1);

    std::map<std::string, std::pair<RunConfig, int (*)(const RunConfig&)>> commands;

    {
        RunConfig rc;
        declare_shared(rc);
        rc.declare("n_train", "2000", "training pairs");
        rc.declare("n_valid", "200", "validation pairs");
        rc.declare("n_test", "200", "test pairs");
        rc.declare("vocab_size", "64", "total vocabulary size including specials");
        rc.declare("len_min", "4", "minimum source length");
        rc.declare("len_max", "10", "maximum source length");
        commands.emplace("synth", std::make_pair(std::move(rc), &cmd_synth));
    }
    {
        RunConfig rc;
        declare_shared(rc);
        declare_model_dims(rc);
        rc.declare("train", "", "training corpus (tab-separated)");
        rc.declare("min_count", "2", "minimum token frequency");
        rc.declare("sem_layers", "4", "encoder layers");
        rc.declare("steps", "400", "optimizer steps");
        rc.declare("lr", "0.001", "Adam learning rate");
        rc.declare("batch", "32", "pairs per step");
        rc.declare("tau", "1.0", "similarity temperature");
        rc.declare("lambda_floor", "0.0", "lower bound on the interpolation coefficient");
        rc.declare("objective", "tangential", "tangential | cosine");
        rc.declare("log_every", "50", "steps between metric lines");
        commands.emplace("train-sem", std::make_pair(std::move(rc), &cmd_train_sem));
    }
    {
        RunConfig rc;
        declare_phase2(rc);
        rc.declare("semantic_ckpt", "", "phase-1 checkpoint (required)");
        rc.declare("ft_lr", "1e-05", "semantic fine-tune learning rate (0 freezes)");
        rc.declare("K", "8", "presentations per instance per epoch");
        rc.declare("eta", "0.6", "mixture weight of the importance component");
        rc.declare("variant", "default", "default | no_chain | uniform");
        rc.declare("anchor", "random", "source | target | random");
        commands.emplace("train-nmt", std::make_pair(std::move(rc), &cmd_train_nmt));
    }
    {
        RunConfig rc;
        declare_phase2(rc);
        commands.emplace("train-baseline", std::make_pair(std::move(rc), &cmd_train_baseline));
    }
    {
        RunConfig rc;
        declare_shared(rc);
        declare_decode(rc);
        rc.declare("input", "", "source sentences, one per line");
        rc.declare("output", "", "hypothesis file (default OUT_DIR/hyp.txt)");
        commands.emplace("translate", std::make_pair(std::move(rc), &cmd_translate));
    }
    {
        RunConfig rc;
        declare_shared(rc);
        declare_decode(rc);
        rc.declare("corpus", "", "held-out corpus (tab-separated)");
        commands.emplace("eval", std::make_pair(std::move(rc), &cmd_eval));
    }
    {
        RunConfig rc;
        declare_shared(rc);
        declare_decode(rc);
        rc.declare("corpus", "", "held-out corpus (tab-separated)");
        rc.declare("kinds", "WS,WD,WR", "comma-separated perturbation kinds");
        rc.declare("ratio", "0.15", "perturbation ratio");
        commands.emplace("robustness", std::make_pair(std::move(rc), &cmd_robustness));
    }
    {
        RunConfig rc;
        declare_shared(rc);
        rc.declare("semantic_ckpt", "", "semantic encoder checkpoint");
        rc.declare("vocab", "", "vocabulary file");
        rc.declare("corpus", "", "corpus to sample around (tab-separated)");
        rc.declare("K", "8", "draws per instance");
        rc.declare("eta", "0.6", "mixture weight of the importance component");
        rc.declare("variant", "default", "default | no_chain | uniform");
        rc.declare("anchor", "random", "source | target | random");
        rc.declare("limit", "0", "instances to process (0 = all)");
        commands.emplace("augment-stats", std::make_pair(std::move(rc), &cmd_augment_stats));
    }
    {
        RunConfig rc;
        declare_shared(rc);
        rc.declare("input", "", "corpus or text file");
        rc.declare("output", "", "destination (default OUT_DIR/perturbed.tsv)");
        rc.declare("kind", "WD", "WS | WD | WR");
        rc.declare("ratio", "0.15", "perturbation ratio");
        rc.declare("window", "3", "swap window");
        rc.declare("filler", "<unk>", "replacement token");
        commands.emplace("perturb", std::make_pair(std::move(rc), &cmd_perturb));
    }

    std::map<std::string, CLI::App*> subs;
    for (auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name);
        entry.first.attach(sub);
        subs[name] = sub;
    }

    CLI11_PARSE(app, argc, argv);

    for (auto& [name, entry] : commands) {
        if (!subs[name]->parsed()) continue;
        try {
            entry.first.resolve();
            entry.first.persist(name);
            return entry.second(entry.first);
        } catch (const NumericError& e) {
            std::cerr << json{{"event", "error"}, {"type", "numeric"}, {"message", e.what()}}.dump()
                      << "\n";
            return 2;
        } catch (const std::exception& e) {
            std::cerr << json{{"event", "error"}, {"type", "config"}, {"message", e.what()}}.dump()
                      << "\n";
            return 1;
        }
    }
    return 1;
}
