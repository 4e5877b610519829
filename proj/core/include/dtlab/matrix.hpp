#ifndef DTLAB_MATRIX_HPP
#define DTLAB_MATRIX_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dtlab {

// Dense row-major f64 matrix. All model/metric arrays use this layout so that
// flattened views and the serialized payload agree byte-for-byte.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Index = Eigen::Index;

// Numerical failure (non-finite values, diverged estimate). Distinct from
// std::invalid_argument, which signals a contract violation by the caller.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace dtlab

#endif
