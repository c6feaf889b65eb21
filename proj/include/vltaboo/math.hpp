#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <limits>

#include "vltaboo/error.hpp"

namespace vltaboo {

/// Embeddings are stored as float32, matching model outputs and store files.
using Embedding = Eigen::VectorXf;

/// Row-major prompt matrix: one embedding per row.
using EmbeddingMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kUnitNormTolerance = 1e-6;

/// Returns v / ||v||_2. The norm is accumulated in double regardless of the
/// scalar type so float inputs still land within 1e-6 of unit length.
template <typename Derived>
typename Derived::PlainObject l2_normalized(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const double norm = v.template cast<double>().norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw InvalidArgument("l2_normalized: vector has zero or non-finite norm");
  }
  return (v.template cast<double>() / norm).template cast<Scalar>();
}

template <typename Derived>
bool is_unit_norm(const Eigen::MatrixBase<Derived>& v, double tol = kUnitNormTolerance) {
  return std::abs(v.template cast<double>().norm() - 1.0) <= tol;
}

/// Numerically stable softmax (max-subtracted, temperature 1).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (logits.size() == 0) return Vec{};
  const Scalar peak = logits.maxCoeff();
  Vec e = (logits.derived().array() - peak).exp().matrix();
  return e / e.sum();
}

/// Index of the largest coefficient; ties resolve to the lowest index.
template <typename Derived>
Eigen::Index argmax(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

/// Number of coefficients equal to the maximum.
template <typename Derived>
std::size_t count_max(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) return 0;
  const auto peak = v.maxCoeff();
  return static_cast<std::size_t>((v.array() == peak).count());
}

/// Cosine similarity of each row of `rows` with `query`, assuming both sides
/// are already unit-norm. Accumulates in double.
template <typename RowsDerived, typename VecDerived>
Eigen::VectorXd cosine_similarities(const Eigen::MatrixBase<RowsDerived>& rows,
                                    const Eigen::MatrixBase<VecDerived>& query) {
  if (rows.cols() != query.size()) {
    throw InvalidArgument("cosine_similarities: dimension mismatch");
  }
  return rows.template cast<double>() * query.template cast<double>();
}

template <typename A, typename B>
double cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
  return a.template cast<double>().dot(b.template cast<double>());
}

}  // namespace vltaboo
