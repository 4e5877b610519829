#include "dtlab/numerics.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace dtlab {

Vector layer_norm(const Vector& x, const Vector& gamma, const Vector& beta,
                  double eps) {
  require(x.size() == gamma.size() && x.size() == beta.size(),
          "layer_norm: length mismatch");
  require(x.size() > 0, "layer_norm: empty input");
  require(eps > 0.0, "layer_norm: eps must be > 0");
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  const double rstd = 1.0 / std::sqrt(var + eps);
  return (((x.array() - mean) * rstd) * gamma.array() + beta.array()).matrix();
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < m.rows(); ++i) {
    double mx = neg_inf;
    for (Index j = 0; j < m.cols(); ++j) mx = std::max(mx, m(i, j));
    if (mx == neg_inf)
      throw std::invalid_argument("softmax_rows: row " + std::to_string(i) +
                                  " is fully masked");
    double sum = 0.0;
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      const double e = (v == neg_inf) ? 0.0 : std::exp(v - mx);
      out(i, j) = e;
      sum += e;
    }
    out.row(i) /= sum;
  }
  return out;
}

std::vector<double> ema_smooth(const std::vector<double>& series, double factor) {
  require(!series.empty(), "ema_smooth: empty series");
  require(factor >= 0.0 && factor < 1.0, "ema_smooth: factor must be in [0, 1)");
  std::vector<double> out(series.size());
  out[0] = series[0];
  for (std::size_t t = 1; t < series.size(); ++t)
    out[t] = factor * out[t - 1] + (1.0 - factor) * series[t];
  return out;
}

double cosine_similarity(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "cosine_similarity: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine_similarity: zero vector");
  return a.dot(b) / (na * nb);
}

double l2_distance(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), "l2_distance: length mismatch");
  return (a - b).norm();
}

double gelu(double x) {
  constexpr double k = 0.044715;
  const double c = std::sqrt(2.0 / std::numbers::pi);
  const double u = c * (x + k * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  constexpr double k = 0.044715;
  const double c = std::sqrt(2.0 / std::numbers::pi);
  const double u = c * (x + k * x * x * x);
  const double t = std::tanh(u);
  const double du = c * (1.0 + 3.0 * k * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

}  // namespace dtlab
