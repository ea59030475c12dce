#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace tripletlab {

// Row i of a FeatureMatrix is the feature vector of sample i.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using FeatureMatrix = Matrix;
using DistanceMatrix = Matrix;
using LabelVector = std::vector<int>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or usage; the CLI maps it to exit status 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline void require_finite(const Matrix& m, const std::string& what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) {
        throw Error(what + ": non-finite value at row " + std::to_string(i) + ", column " +
                    std::to_string(j));
      }
    }
  }
}

/// Scales every row to unit Euclidean norm. Throws on a zero-norm row.
inline FeatureMatrix l2_normalize(const FeatureMatrix& features) {
  require_finite(features, "l2_normalize");
  FeatureMatrix out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).norm();
    if (!(norm > 0.0)) {
      throw Error("l2_normalize: row " + std::to_string(i) + " has zero norm");
    }
    out.row(i) = features.row(i) / norm;
  }
  return out;
}

/// M(i,j) = ||F_i - F_j||^2, computed from the difference directly so the
/// result is exactly symmetric with a zero diagonal.
inline DistanceMatrix pairwise_squared_distances(const FeatureMatrix& features) {
  require_finite(features, "pairwise_squared_distances");
  const Eigen::Index n = features.rows();
  DistanceMatrix m = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (features.row(i) - features.row(j)).squaredNorm();
      m(i, j) = d;
      m(j, i) = d;
    }
  }
  return m;
}

/// Gathers the given rows, in order.
inline Matrix gather_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= m.rows()) {
      throw Error("gather_rows: index " + std::to_string(rows[r]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  }
  return out;
}

}  // namespace tripletlab
