#include "mre/tensor_ops.hpp"

#include "mre/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace mre {

double RngState::next_normal() {
    double u1 = 1.0 - next_uniform();  // (0, 1], keeps the log finite
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: dimension mismatch (" + shape_str(a) +
                                    ") * (" + shape_str(b) + ")");
    }
    return a * b;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Index i = 0; i < m.rows(); ++i) {
        const double mx = m.row(i).maxCoeff();
        out.row(i) = (m.row(i).array() - mx).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs) {
    Matrix dlogits(probs.rows(), probs.cols());
    for (Index i = 0; i < probs.rows(); ++i) {
        const double dot = probs.row(i).dot(dprobs.row(i));
        dlogits.row(i) = probs.row(i).array() * (dprobs.row(i).array() - dot);
    }
    return dlogits;
}

Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias, double eps) {
    require(x.size() == gain.size() && x.size() == bias.size(),
            "layer_norm: length mismatch x=" + std::to_string(x.size()) +
                " gain=" + std::to_string(gain.size()) + " bias=" + std::to_string(bias.size()));
    require(eps >= 0.0, "layer_norm: eps must be >= 0");
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    return (((x.array() - mean) * inv) * gain.array() + bias.array()).matrix();
}

Matrix layer_norm_rows(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps) {
    require(gain.rows() == 1 && bias.rows() == 1 && gain.cols() == x.cols() &&
                bias.cols() == x.cols(),
            "layer_norm_rows: gain/bias must be 1x" + std::to_string(x.cols()));
    Matrix out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + eps);
        out.row(i) = ((x.row(i).array() - mean) * inv) * gain.array() + bias.array();
    }
    return out;
}

void layer_norm_rows_backward(const Matrix& x, const Matrix& gain, double eps,
                              const Matrix& dy, Matrix& dx, Matrix& dgain, Matrix& dbias) {
    const Index n = x.cols();
    dx.resize(x.rows(), n);
    for (Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        const double inv = 1.0 / std::sqrt(var + eps);
        const Eigen::Array<double, 1, Eigen::Dynamic> xhat = (x.row(i).array() - mean) * inv;
        const Eigen::Array<double, 1, Eigen::Dynamic> g = dy.row(i).array() * gain.array();
        dgain.array() += dy.row(i).array() * xhat;
        dbias.array() += dy.row(i).array();
        const double gm = g.mean();
        const double gxm = (g * xhat).mean();
        dx.row(i) = ((g - gm - xhat * gxm) * inv).matrix();
    }
}

double gelu(double x) {
    const double u = kGeluAlpha * (x + kGeluCubic * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double u = kGeluAlpha * (x + kGeluCubic * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluAlpha * (1.0 + 3.0 * kGeluCubic * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Vector gelu(const Vector& x) { return x.unaryExpr([](double v) { return gelu(v); }); }
Matrix gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& p, double eps) {
    require(eps >= 1e-6 && eps <= 1e-2, "finite_diff_grad: eps must be in [1e-6, 1e-2]");
    Vector grad(p.size());
    Vector q = p;
    for (Index i = 0; i < p.size(); ++i) {
        q[i] = p[i] + eps;
        const double fp = f(q);
        q[i] = p[i] - eps;
        const double fm = f(q);
        q[i] = p[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw std::runtime_error("finite_diff_grad: non-finite f at coordinate " +
                                     std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    return grad;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace mre
