#pragma once

#include "mre/types.hpp"

#include <functional>

namespace mre {

// Checked dense product. Shape mismatch reports both operand shapes.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-wise softmax with per-row max subtraction. Rows of the result are
// nonnegative and sum to 1 within 1e-12 for any finite input.
Matrix softmax_rows(const Matrix& m);

// Backward of softmax_rows: given the forward output `probs` and the
// gradient `dprobs` wrt it, returns the gradient wrt the logits.
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs);

// (x - mean) / sqrt(var + eps) * gain + bias, population variance.
Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias, double eps);

// Row-wise layer norm over a matrix; gain/bias are 1 x cols.
Matrix layer_norm_rows(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps);
void layer_norm_rows_backward(const Matrix& x, const Matrix& gain, double eps,
                              const Matrix& dy, Matrix& dx, Matrix& dgain, Matrix& dbias);

// Tanh-approximation GELU:
//   gelu(x) = 0.5 * x * (1 + tanh(kAlpha * (x + kCubic * x^3)))
// with the exact constants below.
inline constexpr double kGeluAlpha = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluCubic = 0.044715;

double gelu(double x);
double gelu_grad(double x);
Vector gelu(const Vector& x);
Matrix gelu(const Matrix& x);

// Central differences (f(p + eps e_i) - f(p - eps e_i)) / (2 eps) per
// coordinate. eps must lie in [1e-6, 1e-2]; a non-finite f evaluation is
// rejected naming the offending coordinate.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f,
                        const Vector& p, double eps);

bool all_finite(const Matrix& m);

}  // namespace mre
