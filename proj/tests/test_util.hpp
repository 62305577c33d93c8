#pragma once

// Helpers shared by the test binaries only.

#include "mre/model.hpp"
#include "mre/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace mre::test {

inline Matrix random_matrix(RngState& rng, Index rows, Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.next_normal() * scale;
    }
    return m;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

inline double max_rel_err(const Matrix& a, const Matrix& b) {
    double worst = 0.0;
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) worst = std::max(worst, rel_err(a(i, j), b(i, j)));
    }
    return worst;
}

// Copies tensors that exist under both configs with matching shapes, so
// two variants can share encoder weights.
inline void copy_shared_params(const ModelConfig& cfg_src, const ModelParams& src,
                               const ModelConfig& cfg_dst, ModelParams& dst) {
    std::map<std::string, const Matrix*> by_name;
    src.for_each(cfg_src, [&](const std::string& n, const Matrix& m) { by_name[n] = &m; });
    dst.for_each(cfg_dst, [&](const std::string& n, Matrix& m) {
        auto it = by_name.find(n);
        if (it != by_name.end() && it->second->rows() == m.rows() &&
            it->second->cols() == m.cols()) {
            m = *it->second;
        }
    });
}

// Central finite differences of a scalar loss wrt one tensor, in place.
template <typename LossFn>
Matrix fd_tensor(Matrix& target, LossFn&& loss, double eps = 1e-5) {
    Matrix fd(target.rows(), target.cols());
    for (Index i = 0; i < target.rows(); ++i) {
        for (Index j = 0; j < target.cols(); ++j) {
            const double keep = target(i, j);
            target(i, j) = keep + eps;
            const double fp = loss();
            target(i, j) = keep - eps;
            const double fm = loss();
            target(i, j) = keep;
            fd(i, j) = (fp - fm) / (2 * eps);
        }
    }
    return fd;
}

inline Matrix* find_tensor(ModelParams& params, const ModelConfig& cfg,
                           const std::string& name) {
    Matrix* found = nullptr;
    params.for_each(cfg, [&](const std::string& n, Matrix& m) {
        if (n == name) found = &m;
    });
    return found;
}

}  // namespace mre::test
