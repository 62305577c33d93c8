#include "mre/synthetic.hpp"

#include "mre/rng.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <sstream>

namespace mre {

const std::vector<std::string>& synthetic_type_pieces() {
    static const std::vector<std::string> kTypes = {"alpha", "bravo", "crane",
                                                    "delta", "ember", "frost"};
    return kTypes;
}

const std::vector<std::string>& synthetic_suffix_pieces() {
    static const std::vector<std::string> kSuffixes = {"burg", "ton"};
    return kSuffixes;
}

std::vector<std::string> synthetic_filler_pieces() {
    std::vector<std::string> out;
    for (int i = 0; i < 40; ++i) out.push_back("w" + std::to_string(i));
    return out;
}

SubwordVocab synthetic_vocab() {
    std::vector<std::string> pieces = synthetic_filler_pieces();
    const auto& types = synthetic_type_pieces();
    const auto& sufs = synthetic_suffix_pieces();
    pieces.insert(pieces.end(), types.begin(), types.end());
    pieces.insert(pieces.end(), sufs.begin(), sufs.end());
    return SubwordVocab::from_pieces(pieces);
}

std::string synthetic_gold_label(Index subj_start, Index obj_start,
                                 int subj_type, int obj_type,
                                 Index clip, Index num_rel) {
    require(subj_start != obj_start, "synthetic_gold_label: coincident mention starts");
    if (subj_type == obj_type) return LabelSet::kNaName;
    const Index order = subj_start < obj_start ? 0 : 1;
    const Index gap = std::min<Index>(std::abs(subj_start - obj_start), clip);
    return "rel_" + std::to_string((order + 2 * (gap - 1)) % num_rel);
}

int synthetic_type_of(const AnnotatedParagraph& p, Index mention) {
    const Span& s = p.mentions.at(static_cast<size_t>(mention));
    const std::string& piece = p.tokens.at(static_cast<size_t>(s.start));
    const auto& types = synthetic_type_pieces();
    auto it = std::find(types.begin(), types.end(), piece);
    return it == types.end() ? -1 : static_cast<int>(it - types.begin());
}

namespace {

template <typename T>
void shuffle_in_place(std::vector<T>& v, RngState& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.next_below(i)]);
    }
}

AnnotatedParagraph gen_paragraph(const GenSpec& spec, const SubwordVocab& vocab,
                                 Index index) {
    RngState rng = derive_stream(spec.seed, "para:" + std::to_string(index));
    const auto& types = synthetic_type_pieces();
    const auto& sufs = synthetic_suffix_pieces();
    const auto fillers = synthetic_filler_pieces();

    const Index m = spec.mentions;
    std::vector<std::string> mention_words(static_cast<size_t>(m));
    Index mention_piece_total = 0;
    for (Index k = 0; k < m; ++k) {
        std::string word = types[rng.next_below(types.size())];
        Index pieces = 1;
        const auto suffix_draw = rng.next_below(3);  // 0 = bare type
        if (suffix_draw > 0) {
            word += sufs[static_cast<size_t>(suffix_draw - 1)];
            pieces = 2;
        }
        mention_words[static_cast<size_t>(k)] = word;
        mention_piece_total += pieces;
    }

    Index target_tokens =
        spec.min_tokens + static_cast<Index>(rng.next_below(
                              static_cast<std::uint64_t>(spec.max_tokens - spec.min_tokens + 1)));
    target_tokens = std::max(target_tokens, mention_piece_total);
    const Index filler_count = target_tokens - mention_piece_total;

    // Choose word slots for the mentions, then assign mention ids to slots
    // at random so annotation order is decoupled from surface order.
    const Index word_count = filler_count + m;
    std::vector<Index> slots(static_cast<size_t>(word_count));
    std::iota(slots.begin(), slots.end(), Index{0});
    shuffle_in_place(slots, rng);
    std::vector<Index> mention_slot(slots.begin(), slots.begin() + m);

    std::vector<std::string> words(static_cast<size_t>(word_count));
    std::vector<Index> slot_mention(static_cast<size_t>(word_count), -1);
    for (Index k = 0; k < m; ++k) {
        words[static_cast<size_t>(mention_slot[static_cast<size_t>(k)])] =
            mention_words[static_cast<size_t>(k)];
        slot_mention[static_cast<size_t>(mention_slot[static_cast<size_t>(k)])] = k;
    }
    for (auto& w : words) {
        if (w.empty()) w = fillers[rng.next_below(fillers.size())];
    }

    std::ostringstream text;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) text << ' ';
        text << words[i];
    }
    const auto subwords = tokenize(text.str(), vocab);

    AnnotatedParagraph p;
    p.tokens.reserve(subwords.size());
    std::vector<Span> word_spans(static_cast<size_t>(word_count), {-1, -1});
    for (size_t t = 0; t < subwords.size(); ++t) {
        p.tokens.push_back(subwords[t].piece);
        Span& ws = word_spans[static_cast<size_t>(subwords[t].word)];
        if (ws.start < 0) ws.start = static_cast<Index>(t);
        ws.end = static_cast<Index>(t) + 1;
    }
    p.mentions.resize(static_cast<size_t>(m));
    for (Index w = 0; w < word_count; ++w) {
        const Index k = slot_mention[static_cast<size_t>(w)];
        if (k >= 0) p.mentions[static_cast<size_t>(k)] = word_spans[static_cast<size_t>(w)];
    }

    static const std::vector<std::string> kDomains = {"bc", "cts", "wl"};
    p.domain = kDomains[rng.next_below(kDomains.size())];

    std::vector<std::pair<Index, Index>> all_pairs;
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) {
            if (i != j) all_pairs.emplace_back(i, j);
        }
    }
    shuffle_in_place(all_pairs, rng);
    const Index want = spec.pairs > 0 ? spec.pairs : m - 1;
    const Index take = std::min<Index>(want, static_cast<Index>(all_pairs.size()));

    const Index num_rel = spec.labels - 1;
    for (Index q = 0; q < take; ++q) {
        const auto [i, j] = all_pairs[static_cast<size_t>(q)];
        const Index si = p.mentions[static_cast<size_t>(i)].start;
        const Index sj = p.mentions[static_cast<size_t>(j)].start;
        const std::string label = synthetic_gold_label(
            si, sj, synthetic_type_of(p, i), synthetic_type_of(p, j), spec.label_clip, num_rel);
        p.relations.push_back({i, j, label});
    }
    validate(p);
    return p;
}

}  // namespace

std::vector<AnnotatedParagraph> gen_synthetic(const GenSpec& spec) {
    require(spec.mentions >= 2, "gen_synthetic: need at least 2 mentions per paragraph");
    require(spec.labels >= 2, "gen_synthetic: need at least 2 labels (NA plus one relation)");
    require(spec.paragraphs >= 0, "gen_synthetic: negative paragraph count");
    require(spec.min_tokens >= 1 && spec.max_tokens >= spec.min_tokens,
            "gen_synthetic: bad token bounds");
    require(spec.label_clip >= 1, "gen_synthetic: label_clip must be >= 1");

    const SubwordVocab vocab = synthetic_vocab();
    std::vector<AnnotatedParagraph> out;
    out.reserve(static_cast<size_t>(spec.paragraphs));
    for (Index i = 0; i < spec.paragraphs; ++i) {
        out.push_back(gen_paragraph(spec, vocab, i));
    }
    return out;
}

}  // namespace mre
