#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "csanmt/rng.hpp"

namespace csanmt {

// Token table with reserved control ids and build-time frequency counts.
class Vocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kReserved = 4;

    Vocab();

    // Frequency-ordered vocabulary over the given sentences; tokens seen
    // fewer than min_count times map to UNK.
    static Vocab build(const std::vector<std::vector<std::string>>& sentences, int min_count = 2);

    // Append a token with an explicit count; id is the next free slot.
    int add_token(const std::string& tok, int64_t count = 0);

    int id(const std::string& tok) const;
    const std::string& token(int id) const;
    int64_t count(int id) const { return counts_[static_cast<size_t>(id)]; }
    int size() const { return static_cast<int>(tokens_.size()); }

    std::vector<int> encode(const std::vector<std::string>& toks) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

private:
    std::vector<std::string> tokens_;
    std::vector<int64_t> counts_;
    std::unordered_map<std::string, int> ids_;
};

struct SentencePair {
    std::vector<int> src;
    std::vector<int> tgt;
};

struct ParallelCorpus {
    std::vector<SentencePair> pairs;
    Vocab vocab;
    // Lines dropped because either side exceeded the length limit.
    int64_t skipped_long = 0;

    size_t size() const { return pairs.size(); }
};

struct LoadOptions {
    int min_count = 2;
    int max_len = 64;
    // When set, use this vocabulary instead of building one from the data.
    const Vocab* vocab = nullptr;
};

// Reads tab-separated "source<TAB>target" lines of whitespace-split tokens.
ParallelCorpus load_parallel(const std::filesystem::path& path, const LoadOptions& opts = {});

std::vector<std::string> split_tokens(const std::string& line);

// Deterministic toy translation task: disjoint source/target halves of the
// vocabulary, a seeded token bijection, and target = mapped reversed source.
struct SynthOptions {
    int n_pairs = 1000;
    int vocab_size = 64;
    int len_min = 4;
    int len_max = 10;
    uint64_t seed = 1;
};

struct SynthResult {
    ParallelCorpus corpus;
    // bijection[i] = target sub-vocabulary index for source sub-vocabulary index i.
    std::vector<int> bijection;
    int half_size = 0;
};

SynthResult synth_task(const SynthOptions& opts);

enum class PerturbKind { WordSwap, WordDrop, WordReplace };

PerturbKind parse_perturb_kind(const std::string& name);
const char* perturb_kind_name(PerturbKind kind);

// Noise for robustness evaluation. Swap exchanges a token with a neighbour
// no more than `window` positions away; drop removes tokens but never
// empties the sequence; replace substitutes the filler token.
template <class Tok>
std::vector<Tok> perturb(const std::vector<Tok>& toks, PerturbKind kind, Rng& rng,
                         double ratio = 0.15, const Tok& filler = Tok(), int window = 3) {
    std::vector<Tok> out;
    switch (kind) {
    case PerturbKind::WordSwap: {
        out = toks;
        int n = static_cast<int>(out.size());
        for (int i = 0; i < n; ++i) {
            if (rng.uniform() >= ratio) continue;
            int lo = std::max(0, i - window);
            int hi = std::min(n - 1, i + window);
            if (hi - lo < 1) continue;
            int j = lo + static_cast<int>(rng.below(static_cast<uint64_t>(hi - lo)));
            if (j >= i) ++j; // skip self
            std::swap(out[static_cast<size_t>(i)], out[static_cast<size_t>(j)]);
        }
        return out;
    }
    case PerturbKind::WordDrop: {
        out.reserve(toks.size());
        for (const Tok& t : toks)
            if (rng.uniform() >= ratio) out.push_back(t);
        if (out.empty() && !toks.empty()) out.push_back(toks.front());
        return out;
    }
    case PerturbKind::WordReplace: {
        out = toks;
        for (Tok& t : out)
            if (rng.uniform() < ratio) t = filler;
        return out;
    }
    }
    throw ConfigError("unknown perturbation kind");
}

} // namespace csanmt
