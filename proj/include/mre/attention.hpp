#pragma once

#include "mre/corpus.hpp"
#include "mre/types.hpp"

#include <string>
#include <vector>

namespace mre {

// Learned relative-distance vectors for keys and values. Row t of each
// table stores the vector for clipped offset t - k, so the tables have
// exactly 2k+1 rows of per-head dimension d_h. Keys and values are
// independently parameterized.
struct RelativeBiasTable {
    Index k = 0;
    Matrix wK;  // (2k+1) x d_h
    Matrix wV;  // (2k+1) x d_h

    Index rows() const { return 2 * k + 1; }
};

// Per-token entity membership. The flag is the plain union over spans; a
// token covered by overlapping spans carries the earliest-starting span's
// mention id.
struct EntityMask {
    std::vector<bool> in_mention;
    std::vector<Index> mention_id;  // -1 when outside every span

    Index size() const { return static_cast<Index>(in_mention.size()); }
    bool empty_mask() const;
};

EntityMask make_entity_mask(Index n, const std::vector<Span>& mentions);

// i - j clipped into [-k, k].
inline Index clip_distance(Index i, Index j, Index k) {
    return std::min(std::max(-k, i - j), k);
}

// Which case of the bias selection fired for a cell.
enum class BiasCase : int { kZero = 0, kRow = 1, kCol = 2 };

// Selection structure shared by the key and value bias tensors: cell
// (i, j) takes table row d(i,j)+k when token i is inside a mention (the
// row case wins even when both tokens are), table row d(j,i)+k when only
// token j is, and the zero vector otherwise. The actual d_h vectors are
// looked up in a RelativeBiasTable; aK and aV differ only in which table
// they index.
struct BiasGrid {
    MatrixT<int> kind;       // BiasCase per cell
    MatrixT<int> table_row;  // valid where kind != kZero

    Index size() const { return kind.rows(); }
    bool cell_zero(Index i, Index j) const {
        return kind(i, j) == static_cast<int>(BiasCase::kZero);
    }
};

BiasGrid build_bias_tensors(const EntityMask& mask, Index n, Index k);

// The d_h bias vector a_ij selected from `table` (wK or wV of a
// RelativeBiasTable) by the grid; zero vector when neither token is in a
// mention.
Matrix bias_vector(const BiasGrid& grid, const Matrix& table, Index i, Index j);

// One grid row in the inspect-attention dump format: cells are Z,
// R:<table row> or B:<table row>.
std::string render_bias_row(const BiasGrid& grid, int layer, int head, Index i);

// Forward intermediates one head needs for its backward pass.
struct AttentionHeadCache {
    Matrix q, k, v;        // N x d_h
    Matrix probs;          // N x N attention weights
    Matrix value_buckets;  // N x (2k+1), per-row probability mass per table row
};

// Entity-aware scaled dot-product attention for a single head:
//   e_ij = (h_i Wq) . (h_j Wk + a_ij^K) * scale
//   z_i  = sum_j softmax_j(e_i.) (h_j Wv + a_ij^V)
// `context` names the layer/head in error messages for non-finite logits.
Matrix attention_head_forward(const Matrix& h, const Matrix& wq, const Matrix& wk,
                              const Matrix& wv, const BiasGrid& grid,
                              const RelativeBiasTable& table, double scale,
                              const std::string& context, AttentionHeadCache* cache);

struct AttentionHeadGrads {
    Matrix dh;            // N x d_z
    Matrix dwq, dwk, dwv; // d_z x d_h, accumulated
    Matrix dw_key;        // (2k+1) x d_h, accumulated
    Matrix dw_value;      // (2k+1) x d_h, accumulated
};

void attention_head_backward(const Matrix& h, const Matrix& wq, const Matrix& wk,
                             const Matrix& wv, const BiasGrid& grid,
                             const RelativeBiasTable& table, double scale,
                             const AttentionHeadCache& cache, const Matrix& dz,
                             AttentionHeadGrads& grads);

// Multi-head wrapper. wq/wk/wv/wo are d_z x d_z; head h owns the column
// block [h*d_h, (h+1)*d_h) of wq/wk/wv. Every head sees the same bias
// grid and table. scale = 1/sqrt(d_h) when per_head_scale, else
// 1/sqrt(d_z).
struct MultiHeadCache {
    std::vector<AttentionHeadCache> heads;
    Matrix concat;  // N x d_z
};

Matrix multi_head_attention(const Matrix& h, const Matrix& wq, const Matrix& wk,
                            const Matrix& wv, const Matrix& wo, Index heads,
                            const BiasGrid& grid, const RelativeBiasTable& table,
                            bool per_head_scale, const std::string& context,
                            MultiHeadCache* cache);

struct MultiHeadGrads {
    Matrix dh;
    Matrix dwq, dwk, dwv, dwo;
    Matrix dw_key, dw_value;
};

void multi_head_attention_backward(const Matrix& h, const Matrix& wq, const Matrix& wk,
                                   const Matrix& wv, const Matrix& wo, Index heads,
                                   const BiasGrid& grid, const RelativeBiasTable& table,
                                   bool per_head_scale, const MultiHeadCache& cache,
                                   const Matrix& dout, MultiHeadGrads& grads);

// Reference path with the bias mechanism compiled out. Kept as separately
// written code so reduction tests compare two routes, and used directly by
// the variants that have no entity mechanism.
Matrix vanilla_multi_head_attention(const Matrix& h, const Matrix& wq, const Matrix& wk,
                                    const Matrix& wv, const Matrix& wo, Index heads,
                                    bool per_head_scale, const std::string& context,
                                    MultiHeadCache* cache);

void vanilla_multi_head_attention_backward(const Matrix& h, const Matrix& wq,
                                           const Matrix& wk, const Matrix& wv,
                                           const Matrix& wo, Index heads,
                                           bool per_head_scale, const MultiHeadCache& cache,
                                           const Matrix& dout, MultiHeadGrads& grads);

}  // namespace mre
