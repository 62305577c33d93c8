#include "mre/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace mre {

using nlohmann::json;

void validate(const AnnotatedParagraph& p) {
    const Index n = static_cast<Index>(p.tokens.size());
    const Index m = static_cast<Index>(p.mentions.size());
    for (size_t i = 0; i < p.mentions.size(); ++i) {
        const Span& s = p.mentions[i];
        require(s.start >= 0 && s.start < s.end && s.end <= n,
                "mention " + std::to_string(i) + ": bad span [" + std::to_string(s.start) +
                    ", " + std::to_string(s.end) + ") for " + std::to_string(n) + " tokens");
    }
    std::set<std::pair<Index, Index>> seen;
    for (size_t r = 0; r < p.relations.size(); ++r) {
        const RelationInstance& rel = p.relations[r];
        require(rel.subj >= 0 && rel.subj < m && rel.obj >= 0 && rel.obj < m,
                "relation " + std::to_string(r) + ": mention index out of range");
        require(rel.subj != rel.obj, "relation " + std::to_string(r) + ": self pair");
        require(!rel.label.empty(), "relation " + std::to_string(r) + ": empty label");
        require(seen.insert({rel.subj, rel.obj}).second,
                "relation " + std::to_string(r) + ": duplicate ordered pair");
    }
}

LabelSet LabelSet::from_names(const std::vector<std::string>& names) {
    std::set<std::string> rest;
    for (const auto& n : names) {
        if (n != kNaName) rest.insert(n);
    }
    LabelSet out;
    out.labels_.push_back({0, kNaName, true});
    out.by_name_[kNaName] = 0;
    for (const auto& n : rest) {
        const int id = static_cast<int>(out.labels_.size());
        out.labels_.push_back({id, n, false});
        out.by_name_[n] = id;
    }
    return out;
}

LabelSet LabelSet::collect(const std::vector<AnnotatedParagraph>& paragraphs) {
    std::vector<std::string> names;
    for (const auto& p : paragraphs) {
        for (const auto& r : p.relations) names.push_back(r.label);
    }
    return from_names(names);
}

int LabelSet::id_of(const std::string& name) const {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), "unknown relation label '" + name + "'");
    return it->second;
}

std::vector<std::string> LabelSet::names() const {
    std::vector<std::string> out;
    out.reserve(labels_.size());
    for (const auto& l : labels_) out.push_back(l.name);
    return out;
}

SubwordVocab SubwordVocab::from_pieces(const std::vector<std::string>& pieces) {
    SubwordVocab v;
    v.pieces_.push_back(kUnkPiece);
    v.ids_[kUnkPiece] = 0;
    std::set<std::string> uniq(pieces.begin(), pieces.end());
    uniq.erase(kUnkPiece);
    for (const auto& p : uniq) {
        v.ids_[p] = static_cast<int>(v.pieces_.size());
        v.pieces_.push_back(p);
    }
    return v;
}

SubwordVocab SubwordVocab::collect(const std::vector<AnnotatedParagraph>& paragraphs) {
    std::vector<std::string> pieces;
    for (const auto& p : paragraphs) {
        pieces.insert(pieces.end(), p.tokens.begin(), p.tokens.end());
    }
    return from_pieces(pieces);
}

int SubwordVocab::id_of(const std::string& piece) const {
    auto it = ids_.find(piece);
    return it == ids_.end() ? 0 : it->second;
}

std::vector<SubwordToken> tokenize(const std::string& text, const SubwordVocab& vocab) {
    std::vector<SubwordToken> out;
    std::istringstream words(text);
    std::string word;
    for (Index w = 0; words >> word; ++w) {
        size_t pos = 0;
        while (pos < word.size()) {
            size_t best = 0;
            for (size_t len = word.size() - pos; len >= 1; --len) {
                if (vocab.contains(word.substr(pos, len))) {
                    best = len;
                    break;
                }
            }
            if (best == 0) best = 1;  // out-of-vocab fallback: single character
            out.push_back({word.substr(pos, best), w});
            pos += best;
        }
    }
    return out;
}

std::vector<std::pair<Index, Index>> enumerate_pairs(const AnnotatedParagraph& p, PairMode mode) {
    std::vector<std::pair<Index, Index>> out;
    if (mode == PairMode::kAllOrdered) {
        const Index m = static_cast<Index>(p.mentions.size());
        for (Index i = 0; i < m; ++i) {
            for (Index j = 0; j < m; ++j) {
                if (i != j) out.emplace_back(i, j);
            }
        }
    } else {
        for (const auto& r : p.relations) out.emplace_back(r.subj, r.obj);
        std::sort(out.begin(), out.end());
    }
    return out;
}

AnnotatedParagraph window_truncate(const AnnotatedParagraph& p, Index radius) {
    require(!p.relations.empty(), "window_truncate: paragraph has no relations");
    require(radius >= 0, "window_truncate: negative radius");
    const Index n = static_cast<Index>(p.tokens.size());

    std::vector<bool> keep(static_cast<size_t>(n), false);
    for (const auto& r : p.relations) {
        const Span& a = p.mentions[static_cast<size_t>(r.subj)];
        const Span& b = p.mentions[static_cast<size_t>(r.obj)];
        const Index lo = std::max<Index>(0, std::min(a.start, b.start) - radius);
        const Index hi = std::min<Index>(n, std::max(a.end, b.end) + radius);
        for (Index t = lo; t < hi; ++t) keep[static_cast<size_t>(t)] = true;
    }

    std::vector<Index> remap(static_cast<size_t>(n), -1);
    AnnotatedParagraph out;
    out.domain = p.domain;
    for (Index t = 0; t < n; ++t) {
        if (keep[static_cast<size_t>(t)]) {
            remap[static_cast<size_t>(t)] = static_cast<Index>(out.tokens.size());
            out.tokens.push_back(p.tokens[static_cast<size_t>(t)]);
        }
    }

    std::vector<Index> mention_remap(p.mentions.size(), -1);
    for (size_t m = 0; m < p.mentions.size(); ++m) {
        const Span& s = p.mentions[m];
        bool whole = true;
        for (Index t = s.start; t < s.end; ++t) {
            whole = whole && keep[static_cast<size_t>(t)];
        }
        if (!whole) continue;  // mention partially or fully outside every window
        mention_remap[m] = static_cast<Index>(out.mentions.size());
        out.mentions.push_back({remap[static_cast<size_t>(s.start)],
                                remap[static_cast<size_t>(s.end - 1)] + 1});
    }

    for (const auto& r : p.relations) {
        const Index si = mention_remap[static_cast<size_t>(r.subj)];
        const Index oi = mention_remap[static_cast<size_t>(r.obj)];
        // every relation's own window covers both of its mentions
        require(si >= 0 && oi >= 0, "window_truncate: relation mention vanished");
        out.relations.push_back({si, oi, r.label});
    }
    validate(out);
    return out;
}

namespace {

json to_json(const AnnotatedParagraph& p) {
    json j;
    j["tokens"] = p.tokens;
    json mentions = json::array();
    for (const auto& s : p.mentions) mentions.push_back({s.start, s.end});
    j["mentions"] = mentions;
    json relations = json::array();
    for (const auto& r : p.relations) relations.push_back({r.subj, r.obj, r.label});
    j["relations"] = relations;
    j["domain"] = p.domain;
    return j;
}

AnnotatedParagraph from_json(const json& j, size_t line_no) {
    auto fail = [line_no](const std::string& what) -> std::runtime_error {
        return std::runtime_error("corpus line " + std::to_string(line_no) + ": " + what);
    };
    AnnotatedParagraph p;
    try {
        if (!j.contains("tokens")) throw fail("missing field 'tokens'");
        if (!j.contains("mentions")) throw fail("missing field 'mentions'");
        if (!j.contains("relations")) throw fail("missing field 'relations'");
        if (!j.contains("domain")) throw fail("missing field 'domain'");
        p.tokens = j.at("tokens").get<std::vector<std::string>>();
        for (const auto& m : j.at("mentions")) {
            if (!m.is_array() || m.size() != 2) throw fail("field 'mentions': expected [start, end]");
            p.mentions.push_back({m.at(0).get<Index>(), m.at(1).get<Index>()});
        }
        for (const auto& r : j.at("relations")) {
            if (!r.is_array() || r.size() != 3) {
                throw fail("field 'relations': expected [i, j, label]");
            }
            p.relations.push_back(
                {r.at(0).get<Index>(), r.at(1).get<Index>(), r.at(2).get<std::string>()});
        }
        p.domain = j.at("domain").get<std::string>();
    } catch (const json::exception& e) {
        throw fail(std::string("bad field type: ") + e.what());
    }
    try {
        validate(p);
    } catch (const std::exception& e) {
        throw fail(e.what());
    }
    return p;
}

}  // namespace

std::vector<AnnotatedParagraph> read_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    std::vector<AnnotatedParagraph> out;
    std::string line;
    size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != kCorpusHeader) {
                throw std::runtime_error("corpus line 1: expected header '" +
                                         std::string(kCorpusHeader) + "', got '" + line + "'");
            }
            saw_header = true;
            continue;
        }
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("corpus line " + std::to_string(line_no) +
                                     ": malformed record: " + e.what());
        }
        out.push_back(from_json(j, line_no));
    }
    (void)saw_header;  // a zero-byte file is an empty corpus
    return out;
}

void write_records(const std::vector<AnnotatedParagraph>& paragraphs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    out << kCorpusHeader << "\n";
    for (const auto& p : paragraphs) {
        validate(p);
        out << to_json(p).dump() << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace mre
