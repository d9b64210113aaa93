#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <map>

#include "csanmt/corpus.hpp"
#include "csanmt/nmt.hpp"

namespace csanmt {

struct BleuReport {
    double bleu = 0.0; // [0,100]
    std::array<double, 4> precisions{};
    std::array<bool, 4> smoothed{}; // add-one applied to this order
    double brevity_penalty = 1.0;
    int64_t candidate_length = 0;
    int64_t reference_length = 0;

    // Score implied by the stored components; equals `bleu` by construction.
    double recompute() const {
        double log_sum = 0.0;
        for (double p : precisions) {
            if (p <= 0.0) return 0.0;
            log_sum += std::log(p);
        }
        return 100.0 * brevity_penalty * std::exp(log_sum / 4.0);
    }
};

// Corpus-level 4-gram BLEU with a single reference per line. Higher-order
// precisions that come out zero get add-one smoothing on their counts;
// unigram precision never does, so disjoint corpora score exactly zero.
template <class Tok>
BleuReport bleu(const std::vector<std::vector<Tok>>& candidates,
                const std::vector<std::vector<Tok>>& references) {
    if (candidates.empty()) throw PreconditionError("bleu: empty corpus");
    if (candidates.size() != references.size())
        throw PreconditionError("bleu: candidate/reference count mismatch");

    BleuReport rep;
    std::array<int64_t, 4> match{}, total{};
    using Gram = std::vector<Tok>;
    for (size_t line = 0; line < candidates.size(); ++line) {
        const auto& cand = candidates[line];
        const auto& ref = references[line];
        rep.candidate_length += static_cast<int64_t>(cand.size());
        rep.reference_length += static_cast<int64_t>(ref.size());
        for (int n = 1; n <= 4; ++n) {
            if (static_cast<int>(ref.size()) >= n) {
                std::map<Gram, int64_t> ref_counts;
                for (size_t i = 0; i + n <= ref.size(); ++i)
                    ++ref_counts[Gram(ref.begin() + i, ref.begin() + i + n)];
                std::map<Gram, int64_t> cand_counts;
                for (size_t i = 0; i + n <= cand.size(); ++i)
                    ++cand_counts[Gram(cand.begin() + i, cand.begin() + i + n)];
                for (const auto& [gram, c] : cand_counts) {
                    auto it = ref_counts.find(gram);
                    if (it != ref_counts.end())
                        match[static_cast<size_t>(n - 1)] += std::min(c, it->second);
                }
            }
            if (static_cast<int>(cand.size()) >= n)
                total[static_cast<size_t>(n - 1)] +=
                    static_cast<int64_t>(cand.size()) - n + 1;
        }
    }

    for (int n = 0; n < 4; ++n) {
        double m = static_cast<double>(match[static_cast<size_t>(n)]);
        double t = static_cast<double>(total[static_cast<size_t>(n)]);
        if (m == 0.0 && n > 0) {
            rep.smoothed[static_cast<size_t>(n)] = true;
            rep.precisions[static_cast<size_t>(n)] = (m + 1.0) / (t + 1.0);
        } else {
            rep.precisions[static_cast<size_t>(n)] = t > 0.0 ? m / t : 0.0;
        }
    }
    if (rep.candidate_length == 0)
        rep.brevity_penalty = 0.0;
    else if (rep.candidate_length < rep.reference_length)
        rep.brevity_penalty = std::exp(1.0 - static_cast<double>(rep.reference_length) /
                                                 static_cast<double>(rep.candidate_length));
    rep.bleu = rep.recompute();
    return rep;
}

// Type-token ratio of one sequence.
template <class Tok>
double ttr(const std::vector<Tok>& text) {
    if (text.empty()) throw PreconditionError("ttr: empty text");
    std::map<Tok, int> seen;
    for (const Tok& t : text) ++seen[t];
    return static_cast<double>(seen.size()) / static_cast<double>(text.size());
}

// Type-token ratio over the concatenation of all sequences.
template <class Tok>
double ttr_corpus(const std::vector<std::vector<Tok>>& texts) {
    std::vector<Tok> flat;
    for (const auto& t : texts) flat.insert(flat.end(), t.begin(), t.end());
    return ttr(flat);
}

// One frequency band [lo, hi) with its teacher-forced accuracy. Only bands
// that received at least one token are reported.
struct FreqBucket {
    int64_t lo = 0;
    int64_t hi = 0;
    int64_t tokens = 0;
    int64_t correct = 0;
    double accuracy = 0.0;
};

// Teacher-forced argmax accuracy per gold token, aggregated by the training
// frequency of the gold token into power-of-two bands [0,1), [1,2), [2,4)...
// When semantic params are given, predictions are conditioned on each
// source's own vector (matching inference-time conditioning).
std::vector<FreqBucket> word_accuracy_by_frequency(const ParamStore& backbone,
                                                   const NmtConfig& cfg,
                                                   const ParallelCorpus& corpus,
                                                   const std::vector<int64_t>& train_freq,
                                                   const ParamStore* sem_params,
                                                   const SemanticConfig* sem_cfg);

// Frequency table indexed by token id, taken from the vocabulary counts.
std::vector<int64_t> vocab_frequencies(const Vocab& vocab);

using TranslateFn =
    std::function<std::vector<std::vector<int>>(const std::vector<std::vector<int>>&)>;

// Translates clean and perturbed copies of the test sources and scores each
// against the clean references. Keyed by "original" plus the kind names.
std::map<std::string, BleuReport> robustness_eval(const TranslateFn& translate,
                                                  const ParallelCorpus& test,
                                                  const std::vector<PerturbKind>& kinds,
                                                  double ratio, Rng& rng);

} // namespace csanmt
