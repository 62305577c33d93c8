#pragma once

#include "mre/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace mre {

// Half-open token-index span [start, end).
struct Span {
    Index start = 0;
    Index end = 0;
    bool operator==(const Span&) const = default;
};

// Directed relation instance between two mention indices. Labels are kept
// as names at the data layer; dense ids come from a LabelSet.
struct RelationInstance {
    Index subj = 0;
    Index obj = 0;
    std::string label;
    bool operator==(const RelationInstance&) const = default;
};

struct AnnotatedParagraph {
    std::vector<std::string> tokens;
    std::vector<Span> mentions;
    std::vector<RelationInstance> relations;
    std::string domain;
    bool operator==(const AnnotatedParagraph&) const = default;
};

// Throws std::invalid_argument on any violated invariant: spans inside
// [0, N) with start < end, relation mention indices valid, no self pair,
// at most one gold label per ordered pair.
void validate(const AnnotatedParagraph& p);

struct RelationLabel {
    int id = 0;
    std::string name;
    bool is_na = false;
};

// Dense label ids. "NA" is always present and always id 0; the remaining
// labels are sorted by name so ids are reproducible from any source order.
class LabelSet {
public:
    static constexpr const char* kNaName = "NA";

    static LabelSet from_names(const std::vector<std::string>& names);
    static LabelSet collect(const std::vector<AnnotatedParagraph>& paragraphs);

    int id_of(const std::string& name) const;  // throws on unknown label
    bool contains(const std::string& name) const { return by_name_.count(name) > 0; }
    const RelationLabel& label(int id) const { return labels_.at(static_cast<size_t>(id)); }
    int size() const { return static_cast<int>(labels_.size()); }
    std::vector<std::string> names() const;

private:
    std::vector<RelationLabel> labels_;
    std::map<std::string, int> by_name_;
};

// Greedy longest-match subword inventory. Id 0 is reserved for the unknown
// piece; lookups of unseen strings fall back to it.
class SubwordVocab {
public:
    static constexpr const char* kUnkPiece = "<unk>";

    static SubwordVocab from_pieces(const std::vector<std::string>& pieces);
    static SubwordVocab collect(const std::vector<AnnotatedParagraph>& paragraphs);

    int id_of(const std::string& piece) const;  // 0 for out-of-vocab
    bool contains(const std::string& piece) const { return ids_.count(piece) > 0; }
    int size() const { return static_cast<int>(pieces_.size()); }
    const std::vector<std::string>& pieces() const { return pieces_; }

private:
    std::vector<std::string> pieces_;
    std::map<std::string, int> ids_;
};

struct SubwordToken {
    std::string piece;
    Index word = 0;  // index of the source word
    bool operator==(const SubwordToken&) const = default;
};

// Splits whitespace-separated words into subwords by greedy longest match
// against the vocab; a word with no matching prefix at some position falls
// back to a single-character piece there. The source-word index lets
// word-level mention spans be remapped to subword spans.
std::vector<SubwordToken> tokenize(const std::string& text, const SubwordVocab& vocab);

enum class PairMode { kAllOrdered, kGoldOnly };

// Ordered mention-index pairs, i-major then j. kAllOrdered yields all
// M(M-1) pairs (empty when M < 2); kGoldOnly yields exactly the annotated
// pairs.
std::vector<std::pair<Index, Index>> enumerate_pairs(const AnnotatedParagraph& p, PairMode mode);

// Keeps the union over relations of [min(span starts) - radius,
// max(span ends) + radius) and drops every other token. Mentions that do
// not survive in full are dropped; surviving spans and relation indices
// are remapped. Requires at least one relation.
AnnotatedParagraph window_truncate(const AnnotatedParagraph& p, Index radius = 5);

// Line-delimited corpus file: header line "#mre-corpus v1", then one JSON
// object per line with fields tokens (array of strings), mentions (array
// of [start, end]), relations (array of [i, j, label-name]), domain
// (string). Errors name the offending line and field.
std::vector<AnnotatedParagraph> read_records(const std::string& path);
void write_records(const std::vector<AnnotatedParagraph>& paragraphs, const std::string& path);

inline constexpr const char* kCorpusHeader = "#mre-corpus v1";

}  // namespace mre
