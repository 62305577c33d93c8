#pragma once

#include "mre/corpus.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mre {

// Synthetic MRE task. Paragraphs are built from filler words and mention
// words; a mention word is a type piece optionally followed by a suffix
// piece, so mentions span 1-2 subword tokens after greedy tokenization.
//
// The gold label of an ordered pair (subj, obj) is a pure function of the
// surface form (see synthetic_gold_label): it depends on the two mention
// types, on which mention comes first, and on the clipped distance between
// the mention start tokens. A per-paragraph pooled vector cannot separate
// pairs of the same paragraph, so the task is only solvable by a model
// that knows which mentions are queried and where they are.
struct GenSpec {
    Index paragraphs = 200;
    Index mentions = 3;        // mentions per paragraph, >= 2
    Index labels = 5;          // label count including NA, >= 2
    Index pairs = 0;           // gold pairs per paragraph; 0 means mentions - 1
    Index min_tokens = 12;     // subword count bounds (exact by construction)
    Index max_tokens = 18;
    Index label_clip = 4;      // distance clip inside the label function
    std::uint64_t seed = 42;
};

// Surface inventory. Type pieces are mutually prefix-free and prefix-free
// against the suffix and filler pieces, so greedy longest match segments
// every generated word exactly as composed.
const std::vector<std::string>& synthetic_type_pieces();    // 6 entries
const std::vector<std::string>& synthetic_suffix_pieces();  // 2 entries
std::vector<std::string> synthetic_filler_pieces();         // "w0".."w39"

// The label function, from surface features only:
//   same type                 -> "NA"
//   else, with order = 0 if subj_start < obj_start else 1
//         and gap  = min(|subj_start - obj_start|, clip):
//     "rel_" + ((order + 2 * (gap - 1)) mod num_rel)
// where num_rel is the non-NA label count.
std::string synthetic_gold_label(Index subj_start, Index obj_start,
                                 int subj_type, int obj_type,
                                 Index clip, Index num_rel);

// Type index of a mention = index of its first subword piece in
// synthetic_type_pieces(); -1 if the piece is not a type.
int synthetic_type_of(const AnnotatedParagraph& p, Index mention);

// Seed-deterministic generation; paragraph i draws only from a stream
// derived from (seed, i), so the output is independent of generation
// order or thread count.
std::vector<AnnotatedParagraph> gen_synthetic(const GenSpec& spec);

// The vocab every generated corpus is segmented against.
SubwordVocab synthetic_vocab();

}  // namespace mre
