#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mre/corpus.hpp"
#include "mre/rng.hpp"
#include "mre/synthetic.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace mre;

namespace {

std::string temp_path(const std::string& stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}

// Independent greedy longest-match, coded against the documented rule only.
std::vector<std::string> reference_greedy(const std::string& word,
                                          const std::vector<std::string>& pieces) {
    std::set<std::string> inv(pieces.begin(), pieces.end());
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos < word.size()) {
        size_t len = word.size() - pos;
        while (len > 1 && inv.find(word.substr(pos, len)) == inv.end()) --len;
        if (inv.find(word.substr(pos, len)) == inv.end()) len = 1;
        out.push_back(word.substr(pos, len));
        pos += len;
    }
    return out;
}

AnnotatedParagraph tiny_paragraph() {
    AnnotatedParagraph p;
    p.tokens = {"a", "b", "c", "d", "e"};
    p.mentions = {{0, 1}, {2, 4}};
    p.relations = {{0, 1, "rel_0"}};
    p.domain = "bc";
    return p;
}

}  // namespace

TEST_CASE("tokenize pinned segmentations") {
    SubwordVocab v = SubwordVocab::from_pieces({"Bag", "hdad", "york"});
    auto toks = tokenize("Baghdad", v);
    REQUIRE(toks.size() == 2);
    CHECK(toks[0].piece == "Bag");
    CHECK(toks[1].piece == "hdad");
    CHECK(toks[0].word == 0);
    CHECK(toks[1].word == 0);

    toks = tokenize("york", v);
    REQUIRE(toks.size() == 1);
    CHECK(toks[0].piece == "york");

    // out-of-vocab word splits into single characters
    toks = tokenize("xy", v);
    REQUIRE(toks.size() == 2);
    CHECK(toks[0].piece == "x");
    CHECK(toks[1].piece == "y");

    // word alignment across several words
    toks = tokenize("york Baghdad", v);
    REQUIRE(toks.size() == 3);
    CHECK(toks[0].word == 0);
    CHECK(toks[1].word == 1);
    CHECK(toks[2].word == 1);
}

TEST_CASE("tokenize matches an independent greedy reimplementation") {
    std::vector<std::string> pieces = {"ab", "abc", "bc", "c", "d", "abcd"};
    SubwordVocab v = SubwordVocab::from_pieces(pieces);
    RngState rng(13);
    const std::string alphabet = "abcd";
    for (int rep = 0; rep < 200; ++rep) {
        std::string word;
        const auto len = 1 + rng.next_below(8);
        for (std::uint64_t i = 0; i < len; ++i) {
            word += alphabet[rng.next_below(alphabet.size())];
        }
        auto got = tokenize(word, v);
        auto want = reference_greedy(word, pieces);
        REQUIRE(got.size() == want.size());
        for (size_t i = 0; i < want.size(); ++i) CHECK(got[i].piece == want[i]);
        // round-trip: concatenation reproduces the word
        std::string joined;
        for (const auto& t : got) joined += t.piece;
        CHECK(joined == word);
    }
}

TEST_CASE("enumerate_pairs ordered counts and gold order") {
    AnnotatedParagraph p;
    p.tokens = {"a", "b", "c", "d", "e", "f"};
    p.mentions = {{0, 1}, {1, 2}, {2, 3}};
    auto pairs = enumerate_pairs(p, PairMode::kAllOrdered);
    std::vector<std::pair<Index, Index>> want = {{0, 1}, {0, 2}, {1, 0}, {1, 2}, {2, 0}, {2, 1}};
    CHECK(pairs == want);

    p.mentions = {{0, 1}, {1, 2}};
    p.relations = {{0, 1, "rel_0"}};
    auto gold = enumerate_pairs(p, PairMode::kGoldOnly);
    REQUIRE(gold.size() == 1);
    CHECK(gold[0] == std::pair<Index, Index>{0, 1});

    p.mentions = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}};
    CHECK(enumerate_pairs(p, PairMode::kAllOrdered).size() == 20);

    p.mentions = {{0, 1}};
    CHECK(enumerate_pairs(p, PairMode::kAllOrdered).empty());
}

TEST_CASE("enumerate_pairs all-ordered has no duplicates (property)") {
    RngState rng(4);
    for (int rep = 0; rep < 20; ++rep) {
        AnnotatedParagraph p;
        const Index m = 2 + static_cast<Index>(rng.next_below(5));
        p.tokens.assign(static_cast<size_t>(m), "t");
        for (Index i = 0; i < m; ++i) p.mentions.push_back({i, i + 1});
        auto pairs = enumerate_pairs(p, PairMode::kAllOrdered);
        std::set<std::pair<Index, Index>> uniq(pairs.begin(), pairs.end());
        CHECK(static_cast<Index>(pairs.size()) == m * (m - 1));
        CHECK(uniq.size() == pairs.size());
    }
}

TEST_CASE("window_truncate pinned case") {
    AnnotatedParagraph p;
    for (int t = 0; t < 20; ++t) p.tokens.push_back("t" + std::to_string(t));
    p.mentions = {{10, 11}, {12, 13}};
    p.relations = {{0, 1, "rel_0"}};
    p.domain = "bc";
    AnnotatedParagraph q = window_truncate(p, 5);
    REQUIRE(q.tokens.size() == 13);  // tokens 5..17
    CHECK(q.tokens.front() == "t5");
    CHECK(q.tokens.back() == "t17");
    CHECK(q.mentions[0] == Span{5, 6});
    CHECK(q.mentions[1] == Span{7, 8});
    CHECK(q.relations[0].subj == 0);
    CHECK(q.relations[0].obj == 1);
}

TEST_CASE("window_truncate with radius larger than paragraph is identity") {
    AnnotatedParagraph p = tiny_paragraph();
    CHECK(window_truncate(p, 100) == p);
}

TEST_CASE("window_truncate two disjoint relations keep two ranges") {
    AnnotatedParagraph p;
    for (int t = 0; t < 40; ++t) p.tokens.push_back("t" + std::to_string(t));
    p.mentions = {{0, 1}, {3, 4}, {35, 36}, {38, 39}};
    p.relations = {{0, 1, "rel_0"}, {2, 3, "rel_1"}};
    p.domain = "wl";
    const Index radius = 2;
    AnnotatedParagraph q = window_truncate(p, radius);

    // independent oracle: enumerate covered indices per relation and union
    std::set<Index> covered;
    for (const auto& r : p.relations) {
        const Span& a = p.mentions[static_cast<size_t>(r.subj)];
        const Span& b = p.mentions[static_cast<size_t>(r.obj)];
        const Index lo = std::max<Index>(0, std::min(a.start, b.start) - radius);
        const Index hi = std::min<Index>(static_cast<Index>(p.tokens.size()),
                                         std::max(a.end, b.end) + radius);
        for (Index t = lo; t < hi; ++t) covered.insert(t);
    }
    REQUIRE(q.tokens.size() == covered.size());
    size_t idx = 0;
    for (Index t : covered) {
        CHECK(q.tokens[idx] == p.tokens[static_cast<size_t>(t)]);
        ++idx;
    }
    // gap between the two windows is gone
    CHECK(q.tokens.size() < p.tokens.size());
    validate(q);
}

TEST_CASE("window_truncate never removes in-window tokens (property)") {
    GenSpec spec;
    spec.paragraphs = 30;
    spec.seed = 77;
    for (const auto& p : gen_synthetic(spec)) {
        AnnotatedParagraph q = window_truncate(p, 3);
        CHECK(q.tokens.size() <= p.tokens.size());
        for (const auto& r : q.relations) {
            const Span& a = q.mentions[static_cast<size_t>(r.subj)];
            const Span& b = q.mentions[static_cast<size_t>(r.obj)];
            // every token of both mentions survived
            CHECK(a.start < a.end);
            CHECK(b.start < b.end);
        }
        validate(q);
    }
    AnnotatedParagraph no_rel = tiny_paragraph();
    no_rel.relations.clear();
    CHECK_THROWS_AS(window_truncate(no_rel, 5), std::invalid_argument);
}

TEST_CASE("record IO round-trips") {
    const std::string path = temp_path("mre_corpus_roundtrip.jsonl");
    GenSpec spec;
    spec.paragraphs = 25;
    spec.seed = 5;
    auto corpus = gen_synthetic(spec);
    write_records(corpus, path);
    auto back = read_records(path);
    CHECK(back == corpus);
    std::remove(path.c_str());
}

TEST_CASE("record IO edge cases") {
    const std::string path = temp_path("mre_corpus_edge.jsonl");
    {
        std::ofstream out(path, std::ios::binary);
    }
    CHECK(read_records(path).empty());  // zero-byte file

    {
        std::ofstream out(path, std::ios::binary);
        out << kCorpusHeader << "\n";
    }
    CHECK(read_records(path).empty());  // header only

    {
        std::ofstream out(path, std::ios::binary);
        out << kCorpusHeader << "\n";
        out << R"({"tokens":["a"],"mentions":[],"relations":[],"domain":"bc"})" << "\n";
        out << R"({"tokens":["a"],"mentions":)" << "\n";  // truncated record
    }
    CHECK_THROWS_WITH_AS(read_records(path),
                         doctest::Contains("corpus line 3"), std::runtime_error);

    {
        std::ofstream out(path, std::ios::binary);
        out << "#mre-corpus v999\n";
    }
    CHECK_THROWS_AS(read_records(path), std::runtime_error);

    {
        std::ofstream out(path, std::ios::binary);
        out << kCorpusHeader << "\n";
        out << R"({"tokens":["a"],"mentions":[[0,2]],"relations":[],"domain":"bc"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(read_records(path), doctest::Contains("corpus line 2"),
                         std::runtime_error);
    std::remove(path.c_str());

    CHECK_THROWS_AS(read_records(temp_path("no_such_corpus.jsonl")), std::runtime_error);
}

TEST_CASE("validate rejects malformed paragraphs") {
    AnnotatedParagraph p = tiny_paragraph();
    p.relations.push_back({0, 0, "rel_0"});
    CHECK_THROWS_AS(validate(p), std::invalid_argument);

    p = tiny_paragraph();
    p.relations.push_back({0, 1, "rel_1"});  // duplicate ordered pair
    CHECK_THROWS_AS(validate(p), std::invalid_argument);

    p = tiny_paragraph();
    p.relations[0].obj = 9;
    CHECK_THROWS_AS(validate(p), std::invalid_argument);
}

TEST_CASE("gen_synthetic is seed-deterministic") {
    GenSpec spec;
    spec.paragraphs = 12;
    spec.seed = 7;
    CHECK(gen_synthetic(spec) == gen_synthetic(spec));

    GenSpec other = spec;
    other.seed = 8;
    CHECK(gen_synthetic(other) != gen_synthetic(spec));
}

TEST_CASE("gen_synthetic labels are recomputable from the surface (oracle)") {
    GenSpec spec;
    spec.paragraphs = 40;
    spec.seed = 21;
    const Index num_rel = spec.labels - 1;
    const auto& types = synthetic_type_pieces();
    for (const auto& p : gen_synthetic(spec)) {
        for (const auto& r : p.relations) {
            // independent recomputation straight from the documented rule
            const Span& a = p.mentions[static_cast<size_t>(r.subj)];
            const Span& b = p.mentions[static_cast<size_t>(r.obj)];
            int ta = -1, tb = -1;
            for (size_t t = 0; t < types.size(); ++t) {
                if (p.tokens[static_cast<size_t>(a.start)] == types[t]) ta = static_cast<int>(t);
                if (p.tokens[static_cast<size_t>(b.start)] == types[t]) tb = static_cast<int>(t);
            }
            REQUIRE(ta >= 0);
            REQUIRE(tb >= 0);
            std::string want;
            if (ta == tb) {
                want = "NA";
            } else {
                const Index order = a.start < b.start ? 0 : 1;
                Index gap = a.start < b.start ? b.start - a.start : a.start - b.start;
                gap = std::min(gap, spec.label_clip);
                want = "rel_" + std::to_string((order + 2 * (gap - 1)) % num_rel);
            }
            CHECK(r.label == want);
        }
    }
}

TEST_CASE("gen_synthetic pair counts and validation") {
    GenSpec spec;
    spec.paragraphs = 15;
    spec.mentions = 2;
    spec.seed = 3;
    auto corpus = gen_synthetic(spec);
    size_t pairs = 0;
    for (const auto& p : corpus) pairs += enumerate_pairs(p, PairMode::kGoldOnly).size();
    CHECK(pairs == corpus.size());

    GenSpec bad = spec;
    bad.labels = 1;
    CHECK_THROWS_AS(gen_synthetic(bad), std::invalid_argument);
    bad = spec;
    bad.mentions = 1;
    CHECK_THROWS_AS(gen_synthetic(bad), std::invalid_argument);
}

TEST_CASE("label set is dense with NA first") {
    LabelSet ls = LabelSet::from_names({"rel_2", "rel_0", "rel_2"});
    CHECK(ls.size() == 3);
    CHECK(ls.label(0).name == "NA");
    CHECK(ls.label(0).is_na);
    CHECK(ls.id_of("rel_0") == 1);
    CHECK(ls.id_of("rel_2") == 2);
    CHECK_THROWS_AS(ls.id_of("nope"), std::invalid_argument);
    int na_count = 0;
    for (int i = 0; i < ls.size(); ++i) na_count += ls.label(i).is_na ? 1 : 0;
    CHECK(na_count == 1);
}
