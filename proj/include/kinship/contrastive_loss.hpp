#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kinship/errors.hpp"
#include "kinship/tensor.hpp"

namespace kinship {

/// aᵀb / (‖a‖‖b‖). Zero-norm inputs are a DomainError.
template <class DerivedA, class DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DomainError("cosine_similarity: dimension mismatch");
  const auto na = a.norm();
  const auto nb = b.norm();
  if (!(na > 0) || !(nb > 0)) throw DomainError("cosine_similarity: zero-norm vector");
  const auto dot = (a.array() * b.array()).sum();
  return dot / (na * nb);
}

namespace detail {

template <class Scalar>
void check_projected_batch(const Matrix<Scalar>& z, Scalar temperature) {
  if (!(temperature > 0)) throw DomainError("contrastive loss: temperature must be positive");
  if (z.rows() < 2 || z.rows() % 2 != 0) {
    throw DomainError("contrastive loss: expected 2N embeddings with N >= 1, got " + std::to_string(z.rows()));
  }
  if (!z.allFinite()) throw DomainError("contrastive loss: non-finite embedding");
  for (Eigen::Index k = 0; k < z.rows(); ++k) {
    if (!(z.row(k).norm() > 0)) throw DomainError("contrastive loss: zero-norm embedding at row " + std::to_string(k));
  }
}

// Rows scaled to unit length.
template <class Scalar>
Matrix<Scalar> unit_rows(const Matrix<Scalar>& z, Vector<Scalar>& norms) {
  norms = z.rowwise().norm();
  return norms.cwiseInverse().asDiagonal() * z;
}

// −log softmax of logit `j` over all entries but `i`. Written as
// log(Σ_{k≠i} e^{l_k − l_j}) so that a dominant positive gives log1p of the
// small remainder instead of a cancelling difference. When `dlogits` is
// non-null it receives the derivative: softmax minus the one-hot at j, with the
// j entry formed as −others/sum rather than p_j − 1.
template <class Logits, class Scalar = typename Logits::Scalar>
Scalar directed_loss(const Logits& logits, Eigen::Index i, Eigen::Index j, Vector<Scalar>* dlogits = nullptr) {
  const Eigen::Index m = logits.size();
  Scalar peak = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index k = 0; k < m; ++k) {
    if (k != i) peak = std::max(peak, logits(k));
  }
  Scalar others = 0;
  for (Eigen::Index k = 0; k < m; ++k) {
    if (k != i && k != j) others += std::exp(logits(k) - peak);
  }
  const Scalar pos = logits(j) - peak;  // <= 0
  const Scalar e_pos = std::exp(pos);
  if (dlogits) {
    dlogits->resize(m);
    const Scalar sum = e_pos + others;
    for (Eigen::Index k = 0; k < m; ++k) (*dlogits)(k) = k == i ? Scalar(0) : std::exp(logits(k) - peak) / sum;
    (*dlogits)(j) = -others / sum;
  }
  if (pos == 0) return std::log1p(others);
  return std::log(e_pos + others) - pos;
}

}  // namespace detail

/// −log( exp(sim(z_i,z_j)/τ) / Σ_{k≠i} exp(sim(z_i,z_k)/τ) ) over the rows of
/// `z`. Self-similarity is excluded by index, not by value.
template <class Scalar>
Scalar supcon_pair_loss(Eigen::Index i, Eigen::Index j, const Matrix<Scalar>& z, Scalar temperature) {
  detail::check_projected_batch(z, temperature);
  if (i == j || i < 0 || j < 0 || i >= z.rows() || j >= z.rows()) {
    throw DomainError("supcon_pair_loss: need distinct in-range anchor and partner");
  }
  Vector<Scalar> norms;
  const auto u = detail::unit_rows(z, norms);
  const Vector<Scalar> logits = (u * u.row(i).transpose()) / temperature;
  return detail::directed_loss(logits, i, j);
}

/// Symmetric batch loss over embeddings ordered [z_x1..z_xN, z_y1..z_yN]:
/// mean over all 2N anchors of the directed pair loss against partner
/// (i + N) mod 2N. When `grad` is non-null it receives dL/dz (same shape).
template <class Scalar>
Scalar batch_loss(const Matrix<Scalar>& z, Scalar temperature, Matrix<Scalar>* grad = nullptr) {
  detail::check_projected_batch(z, temperature);
  const Eigen::Index m = z.rows();
  const Eigen::Index n = m / 2;
  Vector<Scalar> norms;
  const Matrix<Scalar> u = detail::unit_rows(z, norms);
  const Matrix<Scalar> logits = (u * u.transpose()) / temperature;

  // dL/dlogits, row i = anchor.
  Matrix<Scalar> dlogits = Matrix<Scalar>::Zero(m, m);
  Scalar total = 0;
  Vector<Scalar> row_grad;
  for (Eigen::Index i = 0; i < m; ++i) {
    total += detail::directed_loss(logits.row(i), i, (i + n) % m, grad ? &row_grad : nullptr);
    if (grad) dlogits.row(i) = row_grad.transpose();
  }
  const Scalar loss = total / static_cast<Scalar>(m);
  if (grad) {
    dlogits /= static_cast<Scalar>(m);
    // logits = U Uᵀ/τ  ⇒  dU = (G + Gᵀ) U / τ
    const Matrix<Scalar> du = ((dlogits + dlogits.transpose()) * u) / temperature;
    // u = z/‖z‖  ⇒  dz = (du − u (u·du)) / ‖z‖
    const Vector<Scalar> radial = (u.array() * du.array()).rowwise().sum();
    *grad = norms.cwiseInverse().asDiagonal() * (du - radial.asDiagonal() * u);
  }
  return loss;
}

/// Convenience overload taking the two halves separately.
template <class Scalar>
Scalar batch_loss(const Matrix<Scalar>& z_x, const Matrix<Scalar>& z_y, Scalar temperature) {
  if (z_x.rows() != z_y.rows() || z_x.cols() != z_y.cols()) {
    throw DomainError("batch_loss: z_x and z_y must have the same shape");
  }
  Matrix<Scalar> z(z_x.rows() * 2, z_x.cols());
  z << z_x, z_y;
  return batch_loss(z, temperature);
}

}  // namespace kinship
