#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "csanmt/corpus.hpp"

using namespace csanmt;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream os(p, std::ios::trunc);
    os << content;
    return p;
}

} // namespace

TEST_CASE("vocab: reserved control tokens occupy the first four ids") {
    Vocab v;
    CHECK(v.size() == Vocab::kReserved);
    CHECK(v.token(Vocab::kPad) == "<pad>");
    CHECK(v.token(Vocab::kBos) == "<bos>");
    CHECK(v.token(Vocab::kEos) == "<eos>");
    CHECK(v.token(Vocab::kUnk) == "<unk>");
    CHECK(v.id("<eos>") == 2);
    CHECK(v.id("never seen") == Vocab::kUnk);
    CHECK_THROWS_AS(v.token(99), PreconditionError);
    CHECK_THROWS_AS(v.add_token("<pad>"), PreconditionError);
}

TEST_CASE("vocab: build orders by frequency with first-occurrence ties") {
    std::vector<std::vector<std::string>> sents{
        {"b", "a", "b"},
        {"c", "a", "b", "rare"},
    };
    Vocab v = Vocab::build(sents, 1);
    // b:3, a:2, c:1, rare:1; c precedes rare by first occurrence.
    CHECK(v.id("b") == Vocab::kReserved);
    CHECK(v.id("a") == Vocab::kReserved + 1);
    CHECK(v.id("c") == Vocab::kReserved + 2);
    CHECK(v.id("rare") == Vocab::kReserved + 3);
    CHECK(v.count(v.id("b")) == 3);

    Vocab cut = Vocab::build(sents, 2);
    CHECK(cut.id("c") == Vocab::kUnk);
    CHECK(cut.id("rare") == Vocab::kUnk);
    CHECK(cut.id("a") != Vocab::kUnk);

    std::vector<int> enc = cut.encode({"a", "c"});
    CHECK(enc == std::vector<int>{cut.id("a"), Vocab::kUnk});
    CHECK(cut.decode(enc) == std::vector<std::string>{"a", "<unk>"});
}

TEST_CASE("vocab: save and load round trip") {
    std::vector<std::vector<std::string>> sents{{"x", "y", "x"}};
    Vocab v = Vocab::build(sents, 1);
    fs::path p = fs::temp_directory_path() / "csanmt_test_vocab.tsv";
    v.save(p);
    Vocab back = Vocab::load(p);
    CHECK(back.size() == v.size());
    for (int i = 0; i < v.size(); ++i) {
        CHECK(back.token(i) == v.token(i));
        CHECK(back.count(i) == v.count(i));
    }

    write_temp("csanmt_test_vocab_bad.tsv", "<pad>\t0\t0\n<bos>\t5\t0\n");
    CHECK_THROWS_AS(Vocab::load(fs::temp_directory_path() / "csanmt_test_vocab_bad.tsv"),
                    ParseError);
    CHECK_THROWS_AS(Vocab::load(p / "missing"), ConfigError);
    fs::remove(p);
}

TEST_CASE("load_parallel: reads tab-separated pairs and shares one vocab") {
    fs::path p = write_temp("csanmt_test_corpus.tsv",
                            "a b\tx y\n"
                            "\n" // blank lines are skipped
                            "a a b\ty x\n");
    LoadOptions opts;
    opts.min_count = 1;
    ParallelCorpus c = load_parallel(p, opts);
    REQUIRE(c.size() == 2);
    CHECK(c.skipped_long == 0);
    // Both sides feed the same vocabulary.
    CHECK(c.vocab.id("a") != Vocab::kUnk);
    CHECK(c.vocab.id("x") != Vocab::kUnk);
    CHECK(c.pairs[0].src == c.vocab.encode({"a", "b"}));
    CHECK(c.pairs[1].tgt == c.vocab.encode({"y", "x"}));
    fs::remove(p);
}

TEST_CASE("load_parallel: malformed lines carry their line number") {
    fs::path p1 = write_temp("csanmt_test_notab.tsv", "a b\tx\nno separator here\n");
    try {
        load_parallel(p1);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    fs::path p2 = write_temp("csanmt_test_empty_side.tsv", "a\t\n");
    CHECK_THROWS_AS(load_parallel(p2), ParseError);
    CHECK_THROWS_AS(load_parallel(p2 / "nope"), ConfigError);
    fs::remove(p1);
    fs::remove(p2);
}

TEST_CASE("load_parallel: over-length pairs are counted and skipped") {
    fs::path p = write_temp("csanmt_test_long.tsv",
                            "a b c d e\tx\n"
                            "a b\tx y\n");
    LoadOptions opts;
    opts.min_count = 1;
    opts.max_len = 4;
    ParallelCorpus c = load_parallel(p, opts);
    CHECK(c.size() == 1);
    CHECK(c.skipped_long == 1);
    fs::remove(p);
}

TEST_CASE("load_parallel: an external vocab is used verbatim") {
    fs::path p = write_temp("csanmt_test_extvocab.tsv", "a b\tx y\n");
    Vocab ext = Vocab::build({{"a", "a"}}, 1); // only "a" is known
    LoadOptions opts;
    opts.vocab = &ext;
    ParallelCorpus c = load_parallel(p, opts);
    CHECK(c.pairs[0].src[0] == ext.id("a"));
    CHECK(c.pairs[0].src[1] == Vocab::kUnk);
    CHECK(c.pairs[0].tgt[0] == Vocab::kUnk);
    CHECK(c.vocab.size() == ext.size());
    fs::remove(p);
}

TEST_CASE("split_tokens: collapses arbitrary whitespace") {
    CHECK(split_tokens("  a\t b  c ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_tokens("") == std::vector<std::string>{});
    CHECK(split_tokens("   ") == std::vector<std::string>{});
}

TEST_CASE("synth: target is the reversed source through the bijection") {
    SynthOptions opts;
    opts.n_pairs = 50;
    opts.vocab_size = 64;
    opts.seed = 9;
    SynthResult r = synth_task(opts);
    CHECK(r.half_size == 30);
    REQUIRE(r.bijection.size() == 30);
    // The bijection is a permutation of the target half.
    std::vector<int> sorted = r.bijection;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 30; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);

    for (const SentencePair& pair : r.corpus.pairs) {
        REQUIRE(pair.tgt.size() == pair.src.size());
        size_t n = pair.src.size();
        CHECK(n >= 4);
        CHECK(n <= 10);
        for (size_t i = 0; i < n; ++i) {
            int sidx = pair.src[n - 1 - i] - Vocab::kReserved;
            REQUIRE(sidx >= 0);
            REQUIRE(sidx < 30);
            CHECK(pair.tgt[i] == Vocab::kReserved + 30 + r.bijection[static_cast<size_t>(sidx)]);
        }
    }
    // Vocabulary lists both halves after the reserved block.
    CHECK(r.corpus.vocab.size() == Vocab::kReserved + 60);
    CHECK(r.corpus.vocab.token(Vocab::kReserved) == "s0");
    CHECK(r.corpus.vocab.token(Vocab::kReserved + 30) == "t0");
}

TEST_CASE("synth: deterministic in the seed") {
    SynthOptions opts;
    opts.n_pairs = 20;
    opts.seed = 123;
    SynthResult a = synth_task(opts);
    SynthResult b = synth_task(opts);
    CHECK(a.bijection == b.bijection);
    REQUIRE(a.corpus.size() == b.corpus.size());
    for (size_t i = 0; i < a.corpus.size(); ++i) {
        CHECK(a.corpus.pairs[i].src == b.corpus.pairs[i].src);
        CHECK(a.corpus.pairs[i].tgt == b.corpus.pairs[i].tgt);
    }
    opts.seed = 124;
    SynthResult c = synth_task(opts);
    CHECK(a.bijection != c.bijection);

    opts.vocab_size = Vocab::kReserved + 1; // no room for two halves
    CHECK_THROWS_AS(synth_task(opts), ConfigError);
    opts.vocab_size = 64;
    opts.len_min = 5;
    opts.len_max = 4;
    CHECK_THROWS_AS(synth_task(opts), ConfigError);
}

TEST_CASE("perturb: swap preserves the token multiset") {
    Rng rng(31);
    std::vector<int> toks{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    bool changed = false;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> out = perturb(toks, PerturbKind::WordSwap, rng, 0.3);
        REQUIRE(out.size() == toks.size());
        std::vector<int> s = out;
        std::sort(s.begin(), s.end());
        CHECK(s == toks);
        if (out != toks) changed = true;
    }
    CHECK(changed);
}

TEST_CASE("perturb: drop never empties a sentence") {
    Rng rng(32);
    std::vector<int> one{42};
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> out = perturb(one, PerturbKind::WordDrop, rng, 0.99);
        REQUIRE(out.size() == 1);
        CHECK(out[0] == 42);
    }
    // Dropped tokens keep their relative order.
    std::vector<int> toks{1, 2, 3, 4, 5, 6, 7, 8};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> out = perturb(toks, PerturbKind::WordDrop, rng, 0.4);
        CHECK(std::is_sorted(out.begin(), out.end()));
        CHECK(!out.empty());
    }
}

TEST_CASE("perturb: drop rate matches the requested ratio") {
    Rng rng(33);
    const double ratio = 0.15;
    int64_t total = 0, kept = 0;
    std::vector<int> sent(20, 7);
    for (int trial = 0; trial < 5000; ++trial) {
        std::vector<int> out = perturb(sent, PerturbKind::WordDrop, rng, ratio);
        total += static_cast<int64_t>(sent.size());
        kept += static_cast<int64_t>(out.size());
    }
    double dropped = 1.0 - double(kept) / double(total);
    CHECK(std::abs(dropped - ratio) < 0.01);
}

TEST_CASE("perturb: replace keeps length and substitutes only the filler") {
    Rng rng(34);
    std::vector<std::string> toks{"a", "b", "c", "d", "e", "f"};
    int replaced = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::string> out =
            perturb(toks, PerturbKind::WordReplace, rng, 0.3, std::string("<unk>"));
        REQUIRE(out.size() == toks.size());
        for (size_t i = 0; i < out.size(); ++i) {
            bool same = out[i] == toks[i];
            bool filler = out[i] == "<unk>";
            CHECK((same || filler));
            if (filler) ++replaced;
        }
    }
    CHECK(replaced > 0);

    std::vector<std::string> all =
        perturb(toks, PerturbKind::WordReplace, rng, 1.0, std::string("#"));
    for (const auto& t : all) CHECK(t == "#");
}

TEST_CASE("perturb: ratio zero is the identity for every kind") {
    Rng rng(35);
    std::vector<int> toks{5, 6, 7, 8};
    for (PerturbKind kind :
         {PerturbKind::WordSwap, PerturbKind::WordDrop, PerturbKind::WordReplace}) {
        CHECK(perturb(toks, kind, rng, 0.0) == toks);
    }
}

TEST_CASE("perturb: deterministic given the generator state") {
    std::vector<int> toks{1, 2, 3, 4, 5, 6, 7, 8, 9};
    Rng r1(77), r2(77);
    for (int trial = 0; trial < 10; ++trial) {
        CHECK(perturb(toks, PerturbKind::WordSwap, r1, 0.5) ==
              perturb(toks, PerturbKind::WordSwap, r2, 0.5));
    }
}

TEST_CASE("perturb: kind names parse both ways") {
    CHECK(parse_perturb_kind("WS") == PerturbKind::WordSwap);
    CHECK(parse_perturb_kind("swap") == PerturbKind::WordSwap);
    CHECK(parse_perturb_kind("WD") == PerturbKind::WordDrop);
    CHECK(parse_perturb_kind("drop") == PerturbKind::WordDrop);
    CHECK(parse_perturb_kind("WR") == PerturbKind::WordReplace);
    CHECK(parse_perturb_kind("replace") == PerturbKind::WordReplace);
    CHECK_THROWS_AS(parse_perturb_kind("huh"), ConfigError);
    CHECK(std::string(perturb_kind_name(PerturbKind::WordSwap)) == "swap");
    CHECK(std::string(perturb_kind_name(PerturbKind::WordDrop)) == "drop");
    CHECK(std::string(perturb_kind_name(PerturbKind::WordReplace)) == "replace");
}
