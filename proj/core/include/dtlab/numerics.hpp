#ifndef DTLAB_NUMERICS_HPP
#define DTLAB_NUMERICS_HPP

#include <vector>

#include "dtlab/matrix.hpp"

namespace dtlab {

// y = (x - mean) / sqrt(var + eps) * gamma + beta, population (1/n) variance.
Vector layer_norm(const Vector& x, const Vector& gamma, const Vector& beta,
                  double eps);

// Row-wise softmax with max subtraction. -inf entries act as mask sentinels
// and map to exactly 0. A row whose entries are all -inf is an error.
Matrix softmax_rows(const Matrix& m);

// s[0] = x[0]; s[t] = factor * s[t-1] + (1 - factor) * x[t].
std::vector<double> ema_smooth(const std::vector<double>& series, double factor);

double cosine_similarity(const Vector& a, const Vector& b);
double l2_distance(const Vector& a, const Vector& b);

// tanh-approximation GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);

}  // namespace dtlab

#endif
