#include "csanmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace csanmt {

Vocab::Vocab() {
    add_token("<pad>");
    add_token("<bos>");
    add_token("<eos>");
    add_token("<unk>");
}

int Vocab::add_token(const std::string& tok, int64_t count) {
    auto [it, inserted] = ids_.emplace(tok, static_cast<int>(tokens_.size()));
    if (!inserted) throw PreconditionError("duplicate vocab token: " + tok);
    tokens_.push_back(tok);
    counts_.push_back(count);
    return it->second;
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& sentences, int min_count) {
    std::unordered_map<std::string, int64_t> freq;
    std::vector<std::string> order; // first-occurrence tie-break
    for (const auto& sent : sentences)
        for (const auto& tok : sent) {
            auto [it, inserted] = freq.emplace(tok, 0);
            if (inserted) order.push_back(tok);
            ++it->second;
        }
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        return freq[a] > freq[b];
    });
    Vocab v;
    for (const auto& tok : order)
        if (freq[tok] >= min_count) v.add_token(tok, freq[tok]);
    return v;
}

int Vocab::id(const std::string& tok) const {
    auto it = ids_.find(tok);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw PreconditionError("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& toks) const {
    std::vector<int> out;
    out.reserve(toks.size());
    for (const auto& t : toks) out.push_back(id(t));
    return out;
}

std::vector<std::string> Vocab::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(token(i));
    return out;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("cannot write vocab: " + path.string());
    for (int i = 0; i < size(); ++i)
        os << tokens_[static_cast<size_t>(i)] << '\t' << i << '\t' << counts_[static_cast<size_t>(i)]
           << '\n';
    if (!os) throw ConfigError("vocab write failed: " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open vocab: " + path.string());
    Vocab v;
    v.tokens_.clear();
    v.counts_.clear();
    v.ids_.clear();
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        int id;
        int64_t count;
        if (!(ss >> tok >> id >> count))
            throw ParseError("vocab line " + std::to_string(line_no) + ": expected token\tid\tcount");
        if (id != v.size())
            throw ParseError("vocab line " + std::to_string(line_no) + ": ids must be dense and ordered");
        v.add_token(tok, count);
    }
    if (v.size() < kReserved) throw ParseError("vocab too small: reserved tokens missing");
    return v;
}

std::vector<std::string> split_tokens(const std::string& line) {
    std::vector<std::string> toks;
    size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) toks.emplace_back(line.substr(i, j - i));
        i = j;
    }
    return toks;
}

ParallelCorpus load_parallel(const std::filesystem::path& path, const LoadOptions& opts) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open corpus: " + path.string());
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> raw;
    ParallelCorpus corpus;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": missing tab separator");
        auto src = split_tokens(line.substr(0, tab));
        auto tgt = split_tokens(line.substr(tab + 1));
        if (src.empty() || tgt.empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty side");
        if (static_cast<int>(src.size()) > opts.max_len ||
            static_cast<int>(tgt.size()) > opts.max_len) {
            ++corpus.skipped_long;
            continue;
        }
        raw.emplace_back(std::move(src), std::move(tgt));
    }

    if (opts.vocab) {
        corpus.vocab = *opts.vocab;
    } else {
        std::vector<std::vector<std::string>> sentences;
        sentences.reserve(raw.size() * 2);
        for (auto& [s, t] : raw) {
            sentences.push_back(s);
            sentences.push_back(t);
        }
        corpus.vocab = Vocab::build(sentences, opts.min_count);
    }
    corpus.pairs.reserve(raw.size());
    for (auto& [s, t] : raw)
        corpus.pairs.push_back({corpus.vocab.encode(s), corpus.vocab.encode(t)});
    return corpus;
}

SynthResult synth_task(const SynthOptions& opts) {
    if (opts.vocab_size < Vocab::kReserved + 2)
        throw ConfigError("synth: vocab_size must leave room for both halves");
    if (opts.len_min < 1 || opts.len_max < opts.len_min)
        throw ConfigError("synth: bad length range");
    int half = (opts.vocab_size - Vocab::kReserved) / 2;

    SynthResult result;
    result.half_size = half;
    Vocab& vocab = result.corpus.vocab;
    for (int i = 0; i < half; ++i) vocab.add_token("s" + std::to_string(i));
    for (int i = 0; i < half; ++i) vocab.add_token("t" + std::to_string(i));

    Rng root(opts.seed);
    Rng perm_rng = root.split("bijection");
    result.bijection.resize(static_cast<size_t>(half));
    for (int i = 0; i < half; ++i) result.bijection[static_cast<size_t>(i)] = i;
    perm_rng.shuffle(result.bijection);

    Rng gen = root.split("pairs");
    result.corpus.pairs.reserve(static_cast<size_t>(opts.n_pairs));
    for (int p = 0; p < opts.n_pairs; ++p) {
        int len = opts.len_min +
                  static_cast<int>(gen.below(static_cast<uint64_t>(opts.len_max - opts.len_min + 1)));
        SentencePair pair;
        pair.src.reserve(static_cast<size_t>(len));
        for (int i = 0; i < len; ++i)
            pair.src.push_back(Vocab::kReserved + static_cast<int>(gen.below(static_cast<uint64_t>(half))));
        pair.tgt.reserve(static_cast<size_t>(len));
        // Target reads the source backwards through the bijection.
        for (int i = len - 1; i >= 0; --i) {
            int sidx = pair.src[static_cast<size_t>(i)] - Vocab::kReserved;
            pair.tgt.push_back(Vocab::kReserved + half + result.bijection[static_cast<size_t>(sidx)]);
        }
        result.corpus.pairs.push_back(std::move(pair));
    }
    return result;
}

PerturbKind parse_perturb_kind(const std::string& name) {
    if (name == "swap" || name == "WS") return PerturbKind::WordSwap;
    if (name == "drop" || name == "WD") return PerturbKind::WordDrop;
    if (name == "replace" || name == "WR") return PerturbKind::WordReplace;
    throw ConfigError("unknown perturbation kind: " + name + " (expected swap|drop|replace)");
}

const char* perturb_kind_name(PerturbKind kind) {
    switch (kind) {
    case PerturbKind::WordSwap: return "swap";
    case PerturbKind::WordDrop: return "drop";
    case PerturbKind::WordReplace: return "replace";
    }
    return "?";
}

} // namespace csanmt
