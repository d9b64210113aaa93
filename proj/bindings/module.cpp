// Python bindings over the library's main operations: corpus synthesis,
// the two training phases, translation, scoring, and the sampling
// primitives. File-based entry points mirror the command-line driver so the
// two front ends stay interchangeable.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>
#include <optional>

#include "csanmt/checkpoint.hpp"
#include "csanmt/corpus.hpp"
#include "csanmt/ctl.hpp"
#include "csanmt/evalx.hpp"
#include "csanmt/mgrc.hpp"
#include "csanmt/nmt.hpp"
#include "csanmt/semantic.hpp"
#include "csanmt/trainer.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace csanmt;

namespace {

Tensor to_tensor(const std::vector<double>& v) {
    Tensor t(std::vector<int64_t>{static_cast<int64_t>(v.size())});
    t.data = v;
    return t;
}

std::vector<double> to_vec(const Tensor& t) { return t.data; }

std::vector<std::vector<double>> rows_of(const Tensor& m) {
    std::vector<std::vector<double>> out;
    int64_t rows = m.shape[0], cols = m.shape[1];
    out.reserve(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r)
        out.emplace_back(m.data.begin() + r * cols, m.data.begin() + (r + 1) * cols);
    return out;
}

py::dict bleu_dict(const BleuReport& r) {
    py::dict d;
    d["bleu"] = r.bleu;
    d["precisions"] = r.precisions;
    d["smoothed"] = r.smoothed;
    d["brevity_penalty"] = r.brevity_penalty;
    d["candidate_tokens"] = r.candidate_length;
    d["reference_tokens"] = r.reference_length;
    return d;
}

py::dict report_dict(const TrainReport& r) {
    py::dict d;
    d["phase"] = r.phase;
    d["steps"] = r.steps;
    d["loss_trace"] = r.loss_trace;
    d["val_epochs"] = r.val_epochs;
    d["val_bleu"] = r.val_bleu;
    d["best_epoch"] = r.best_epoch;
    d["best_bleu"] = r.best_bleu;
    d["presentations_per_epoch"] = r.presentations_per_epoch;
    d["checkpoints"] = r.checkpoints;
    return d;
}

CtlObjective objective_from(const std::string& name) {
    if (name == "tangential") return CtlObjective::Tangential;
    if (name == "cosine") return CtlObjective::Cosine;
    throw ConfigError("unknown objective: " + name + " (expected tangential|cosine)");
}

ParallelCorpus load_with_vocab(const std::string& path, const std::string& vocab_path,
                               int max_len) {
    Vocab vocab = Vocab::load(vocab_path);
    LoadOptions lo;
    lo.min_count = 0;
    lo.max_len = max_len;
    lo.vocab = &vocab;
    ParallelCorpus corpus = load_parallel(path, lo);
    corpus.vocab = std::move(vocab);
    return corpus;
}

void write_pairs(const fs::path& path, const Vocab& vocab, const SentencePair* pairs, size_t n) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + path.string());
    for (size_t i = 0; i < n; ++i) {
        const SentencePair& p = pairs[i];
        auto join = [&](const std::vector<int>& ids) {
            std::string line;
            for (size_t k = 0; k < ids.size(); ++k) {
                if (k) line += ' ';
                line += vocab.token(ids[k]);
            }
            return line;
        };
        os << join(p.src) << '\t' << join(p.tgt) << '\n';
    }
}

// Loaded sentence encoder handle: checkpoint weights plus their geometry.
struct Encoder {
    ParamStore params;
    SemanticConfig cfg;

    explicit Encoder(const std::string& ckpt_path) {
        Checkpoint ck = Checkpoint::load(ckpt_path);
        cfg = semantic_config_from(ck);
        params = std::move(ck.params);
    }

    std::vector<double> encode(const std::vector<int>& ids) const {
        return to_vec(semantic_encode(params, cfg, ids));
    }

    py::dict region(const std::vector<int>& src, const std::vector<int>& tgt) const {
        AdjacencyRegion reg = build_region(params, cfg, src, tgt);
        py::dict d;
        d["rx"] = to_vec(reg.rx);
        d["ry"] = to_vec(reg.ry);
        d["d"] = reg.radius;
        return d;
    }
};

// Loaded translation model: backbone weights, optional sentence encoder for
// conditioning, and the vocabulary for text round trips.
struct Translator {
    ParamStore backbone;
    NmtConfig cfg;
    std::optional<Encoder> encoder;
    Vocab vocab;
    BeamConfig beam;

    Translator(const std::string& ckpt_path, const std::string& vocab_path,
               std::optional<std::string> semantic_ckpt, int beam_size, double alpha) {
        Checkpoint ck = Checkpoint::load(ckpt_path);
        cfg = nmt_config_from(ck);
        backbone = std::move(ck.params);
        if (semantic_ckpt) encoder.emplace(*semantic_ckpt);
        vocab = Vocab::load(vocab_path);
        beam.beam = beam_size;
        beam.alpha = alpha;
        beam.max_len = cfg.max_len;
        beam.validate();
    }

    std::vector<int> translate_ids(const std::vector<int>& src) const {
        if (encoder) {
            Tensor cond = semantic_encode(encoder->params, encoder->cfg, src);
            return csanmt::translate_ids(backbone, cfg, src, &cond, beam).tokens;
        }
        return csanmt::translate_ids(backbone, cfg, src, nullptr, beam).tokens;
    }

    std::string translate(const std::string& line) const {
        std::vector<int> src = vocab.encode(split_tokens(line));
        std::vector<std::string> toks = vocab.decode(translate_ids(src));
        std::string out;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (i) out += ' ';
            out += toks[i];
        }
        return out;
    }
};

TrainConfig shared_train_config(uint64_t seed, const std::string& out_dir, int hidden, int heads,
                                int ffn, int max_len) {
    TrainConfig tc;
    tc.seed = seed;
    tc.out_dir = out_dir;
    tc.hidden = hidden;
    tc.heads = heads;
    tc.ffn = ffn;
    tc.max_len = max_len;
    return tc;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Continuous semantic augmentation for toy sequence translation";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<DimError>(m, "DimError", PyExc_ValueError);
    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.attr("PAD") = Vocab::kPad;
    m.attr("BOS") = Vocab::kBos;
    m.attr("EOS") = Vocab::kEos;
    m.attr("UNK") = Vocab::kUnk;

    // ------------------------------------------------------------ metrics
    m.def(
        "bleu",
        [](const std::vector<std::vector<int>>& cand, const std::vector<std::vector<int>>& refs) {
            return bleu_dict(bleu(cand, refs));
        },
        py::arg("candidates"), py::arg("references"),
        "Corpus BLEU over token-id lines (order 4, add-one smoothing above unigrams).");
    m.def(
        "bleu_text",
        [](const std::vector<std::vector<std::string>>& cand,
           const std::vector<std::vector<std::string>>& refs) {
            return bleu_dict(bleu(cand, refs));
        },
        py::arg("candidates"), py::arg("references"));
    m.def(
        "ttr", [](const std::vector<int>& toks) { return ttr(toks); }, py::arg("tokens"),
        "Type-token ratio of one token sequence.");

    // -------------------------------------------------------------- noise
    m.def(
        "perturb",
        [](const std::vector<int>& toks, const std::string& kind, double ratio, uint64_t seed,
           int filler, int window) {
            Rng rng(seed);
            return perturb(toks, parse_perturb_kind(kind), rng, ratio, filler, window);
        },
        py::arg("tokens"), py::arg("kind"), py::arg("ratio") = 0.15, py::arg("seed") = 1,
        py::arg("filler") = Vocab::kUnk, py::arg("window") = 3,
        "Apply swap/drop/replace noise to a token sequence.");

    // ----------------------------------------------------------- sampling
    m.def(
        "interpolate_negative",
        [](const std::vector<double>& r_i, const std::vector<double>& r_j, double d,
           double lambda_floor, uint64_t seed) {
            Rng rng(seed);
            NegativeSample s = interpolate_negative(to_tensor(r_i), to_tensor(r_j), d,
                                                    lambda_floor, rng);
            py::dict out;
            out["vec"] = to_vec(s.vec);
            out["lam"] = s.lambda;
            out["interpolated"] = s.interpolated;
            return out;
        },
        py::arg("r_i"), py::arg("r_j"), py::arg("d"), py::arg("lambda_floor") = 0.0,
        py::arg("seed") = 1,
        "Push a negative outside the radius-d ball around r_i along the line to r_j.");
    m.def(
        "adjacency_samples",
        [](const std::vector<double>& rx, const std::vector<double>& ry, int K, double eta,
           const std::string& variant, const std::string& anchor, uint64_t seed) {
            MgrcConfig cfg;
            cfg.K = K;
            cfg.eta = eta;
            cfg.variant = parse_mgrc_variant(variant);
            cfg.anchor = parse_anchor_policy(anchor);
            cfg.validate();
            Rng rng(seed);
            RegionSamples s =
                sample_region(AdjacencyRegion::from_vectors(to_tensor(rx), to_tensor(ry)), cfg,
                              rng);
            py::dict out;
            std::vector<std::vector<double>> samples;
            samples.reserve(s.rhat.size());
            for (const Tensor& t : s.rhat) samples.push_back(to_vec(t));
            out["samples"] = samples;
            out["components"] = s.components;
            return out;
        },
        py::arg("rx"), py::arg("ry"), py::arg("K") = 8, py::arg("eta") = 0.6,
        py::arg("variant") = "default", py::arg("anchor") = "random", py::arg("seed") = 1,
        "Draw K chained samples from the adjacency region spanned by a vector pair.");

    // ------------------------------------------------------------ corpus
    m.def(
        "synth",
        [](const std::string& out_dir, int n_train, int n_valid, int n_test, int vocab_size,
           int len_min, int len_max, uint64_t seed) {
            SynthOptions opts;
            opts.n_pairs = n_train + n_valid + n_test;
            opts.vocab_size = vocab_size;
            opts.len_min = len_min;
            opts.len_max = len_max;
            opts.seed = seed;
            if (n_train < 0 || n_valid < 0 || n_test < 0)
                throw ConfigError("synth: split sizes must be nonnegative");
            SynthResult r = synth_task(opts);
            fs::create_directories(out_dir);
            fs::path root(out_dir);
            const SentencePair* base = r.corpus.pairs.data();
            write_pairs(root / "train.tsv", r.corpus.vocab, base, static_cast<size_t>(n_train));
            write_pairs(root / "valid.tsv", r.corpus.vocab, base + n_train,
                        static_cast<size_t>(n_valid));
            write_pairs(root / "test.tsv", r.corpus.vocab, base + n_train + n_valid,
                        static_cast<size_t>(n_test));
            py::dict d;
            d["train"] = (root / "train.tsv").string();
            d["valid"] = (root / "valid.tsv").string();
            d["test"] = (root / "test.tsv").string();
            d["half_size"] = r.half_size;
            return d;
        },
        py::arg("out_dir"), py::arg("n_train") = 2000, py::arg("n_valid") = 200,
        py::arg("n_test") = 200, py::arg("vocab_size") = 64, py::arg("len_min") = 4,
        py::arg("len_max") = 10, py::arg("seed") = 1,
        "Generate the reversal-with-bijection toy task as train/valid/test TSV files.");

    // ----------------------------------------------------------- training
    m.def(
        "pretrain_semantic",
        [](const std::string& train, const std::string& out_dir, int steps, int batch, double lr,
           double tau, double lambda_floor, const std::string& objective, int sem_layers,
           int hidden, int heads, int ffn, int max_len, int min_count, uint64_t seed) {
            LoadOptions lo;
            lo.min_count = min_count;
            lo.max_len = max_len;
            ParallelCorpus corpus = load_parallel(train, lo);
            TrainConfig tc = shared_train_config(seed, out_dir, hidden, heads, ffn, max_len);
            tc.sem_layers = sem_layers;
            tc.p1_steps = steps;
            tc.p1_batch = batch;
            tc.p1_lr = lr;
            tc.ctl.tau = tau;
            tc.ctl.lambda_floor = lambda_floor;
            tc.ctl.objective = objective_from(objective);
            Phase1Result res = train_phase1(corpus, tc);
            corpus.vocab.save(fs::path(out_dir) / "vocab.tsv");
            return report_dict(res.report);
        },
        py::arg("train"), py::arg("out_dir"), py::arg("steps") = 400, py::arg("batch") = 32,
        py::arg("lr") = 1e-3, py::arg("tau") = 1.0, py::arg("lambda_floor") = 0.0,
        py::arg("objective") = "tangential", py::arg("sem_layers") = 4, py::arg("hidden") = 64,
        py::arg("heads") = 4, py::arg("ffn") = 256, py::arg("max_len") = 64,
        py::arg("min_count") = 2, py::arg("seed") = 1,
        "Contrastive pretraining; writes semantic.ckpt and vocab.tsv under out_dir.");

    auto fill_phase2 = [](TrainConfig& tc, int epochs, int batch, int warmup, double lr_scale,
                          int enc_layers, int dec_layers, int val_every) {
        tc.p2_epochs = epochs;
        tc.p2_batch = batch;
        tc.p2_warmup = warmup;
        tc.p2_lr_scale = lr_scale;
        tc.enc_layers = enc_layers;
        tc.dec_layers = dec_layers;
        tc.val_every = val_every;
    };

    m.def(
        "train_translator",
        [fill_phase2](const std::string& train, const std::string& valid,
                      const std::string& vocab, const std::string& semantic_ckpt,
                      const std::string& out_dir, int epochs, int batch, int K, double eta,
                      const std::string& variant, const std::string& anchor, double ft_lr,
                      int warmup, double lr_scale, int enc_layers, int dec_layers, int hidden,
                      int heads, int ffn, int max_len, int val_every, uint64_t seed) {
            Checkpoint sem = Checkpoint::load(semantic_ckpt);
            SemanticConfig sem_cfg = semantic_config_from(sem);
            ParallelCorpus tr = load_with_vocab(train, vocab, max_len);
            ParallelCorpus va = load_with_vocab(valid, vocab, max_len);
            TrainConfig tc = shared_train_config(seed, out_dir, hidden, heads, ffn, max_len);
            fill_phase2(tc, epochs, batch, warmup, lr_scale, enc_layers, dec_layers, val_every);
            tc.K = K;
            tc.eta = eta;
            tc.variant = parse_mgrc_variant(variant);
            tc.anchor = parse_anchor_policy(anchor);
            tc.ft_lr = ft_lr;
            Phase2Result res = train_phase2(tr, va, std::move(sem.params), sem_cfg, tc);
            return report_dict(res.report);
        },
        py::arg("train"), py::arg("valid"), py::arg("vocab"), py::arg("semantic_ckpt"),
        py::arg("out_dir"), py::arg("epochs") = 10, py::arg("batch") = 64, py::arg("K") = 8,
        py::arg("eta") = 0.6, py::arg("variant") = "default", py::arg("anchor") = "random",
        py::arg("ft_lr") = 1e-5, py::arg("warmup") = 4000, py::arg("lr_scale") = 1.0,
        py::arg("enc_layers") = 2, py::arg("dec_layers") = 2, py::arg("hidden") = 64,
        py::arg("heads") = 4, py::arg("ffn") = 256, py::arg("max_len") = 64,
        py::arg("val_every") = 1, py::arg("seed") = 1,
        "Augmented likelihood training; writes nmt.ckpt and semantic_tuned.ckpt under out_dir.");

    m.def(
        "train_baseline",
        [fill_phase2](const std::string& train, const std::string& valid,
                      const std::string& vocab, const std::string& out_dir, int epochs, int batch,
                      int warmup, double lr_scale, int enc_layers, int dec_layers, int hidden,
                      int heads, int ffn, int max_len, int val_every, uint64_t seed) {
            ParallelCorpus tr = load_with_vocab(train, vocab, max_len);
            ParallelCorpus va = load_with_vocab(valid, vocab, max_len);
            TrainConfig tc = shared_train_config(seed, out_dir, hidden, heads, ffn, max_len);
            fill_phase2(tc, epochs, batch, warmup, lr_scale, enc_layers, dec_layers, val_every);
            BaselineResult res = train_baseline(tr, va, tc);
            return report_dict(res.report);
        },
        py::arg("train"), py::arg("valid"), py::arg("vocab"), py::arg("out_dir"),
        py::arg("epochs") = 10, py::arg("batch") = 64, py::arg("warmup") = 4000,
        py::arg("lr_scale") = 1.0, py::arg("enc_layers") = 2, py::arg("dec_layers") = 2,
        py::arg("hidden") = 64, py::arg("heads") = 4, py::arg("ffn") = 256,
        py::arg("max_len") = 64, py::arg("val_every") = 1, py::arg("seed") = 1,
        "Unconditioned backbone trained on the same data order; writes nmt.ckpt.");

    // ---------------------------------------------------------- inference
    py::class_<Encoder>(m, "SemanticEncoder",
                        "Sentence encoder loaded from a checkpoint; maps token ids to a pooled "
                        "vector.")
        .def(py::init<const std::string&>(), py::arg("ckpt"))
        .def("encode", &Encoder::encode, py::arg("ids"))
        .def("region", &Encoder::region, py::arg("src_ids"), py::arg("tgt_ids"),
             "Adjacency region of a sentence pair: both vectors and the pair distance.")
        .def_property_readonly("hidden",
                               [](const Encoder& e) { return e.cfg.dims.hidden; });

    py::class_<Vocab>(m, "Vocab", "Frequency-ordered token table with reserved control ids.")
        .def_static("load", [](const std::string& p) { return Vocab::load(p); }, py::arg("path"))
        .def("encode",
             [](const Vocab& v, const std::string& line) { return v.encode(split_tokens(line)); },
             py::arg("line"))
        .def("decode",
             [](const Vocab& v, const std::vector<int>& ids) {
                 std::string out;
                 std::vector<std::string> toks = v.decode(ids);
                 for (size_t i = 0; i < toks.size(); ++i) {
                     if (i) out += ' ';
                     out += toks[i];
                 }
                 return out;
             },
             py::arg("ids"))
        .def("__len__", &Vocab::size);

    py::class_<Translator>(m, "Translator",
                           "Beam-search decoder over a trained checkpoint, optionally "
                           "conditioned through a sentence encoder.")
        .def(py::init<const std::string&, const std::string&, std::optional<std::string>, int,
                      double>(),
             py::arg("ckpt"), py::arg("vocab"), py::arg("semantic_ckpt") = py::none(),
             py::arg("beam") = 4, py::arg("alpha") = 0.6)
        .def("translate_ids", &Translator::translate_ids, py::arg("src_ids"))
        .def("translate", &Translator::translate, py::arg("line"));

    // --------------------------------------------------------- evaluation
    m.def(
        "evaluate",
        [](const std::string& ckpt, const std::string& vocab_path, const std::string& corpus_path,
           std::optional<std::string> semantic_ckpt, int beam_size, double alpha) {
            Checkpoint ck = Checkpoint::load(ckpt);
            NmtConfig cfg = nmt_config_from(ck);
            ParallelCorpus corpus = load_with_vocab(corpus_path, vocab_path, cfg.max_len);
            BeamConfig bc;
            bc.beam = beam_size;
            bc.alpha = alpha;
            bc.max_len = cfg.max_len;
            bc.validate();
            std::vector<std::vector<int>> sources, refs;
            for (const SentencePair& p : corpus.pairs) {
                sources.push_back(p.src);
                refs.push_back(p.tgt);
            }
            std::vector<std::vector<int>> hyp;
            if (semantic_ckpt) {
                Checkpoint sem = Checkpoint::load(*semantic_ckpt);
                SemanticConfig sem_cfg = semantic_config_from(sem);
                hyp = translate_corpus(ck.params, cfg, sources, &sem.params, &sem_cfg, bc);
            } else {
                hyp = translate_corpus(ck.params, cfg, sources, nullptr, nullptr, bc);
            }
            py::dict out = bleu_dict(bleu(hyp, refs));
            int64_t hyp_tokens = 0;
            for (const auto& h : hyp) hyp_tokens += static_cast<int64_t>(h.size());
            out["diversity"] = hyp_tokens > 0 ? ttr_corpus(hyp) : 0.0;
            out["sentences"] = static_cast<int64_t>(hyp.size());
            return out;
        },
        py::arg("ckpt"), py::arg("vocab"), py::arg("corpus"),
        py::arg("semantic_ckpt") = py::none(), py::arg("beam") = 4, py::arg("alpha") = 0.6,
        "Translate a TSV corpus and score it against the references.");
}
