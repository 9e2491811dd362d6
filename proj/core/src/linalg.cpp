#include "ibpt/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace ibpt {

std::pair<double, Vector> top_eigenpair(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()));
  if (es.info() != Eigen::Success) throw Error(ErrorKind::kNumerical, "symmetric eigensolver failed");
  const Eigen::Index n = sym.rows();
  return {es.eigenvalues()(n - 1), es.eigenvectors().col(n - 1)};
}

PencilMax max_ratio_on_range(const Matrix& numer, const Matrix& denom, double cutoff, bool try_cholesky) {
  if (numer.rows() != numer.cols() || denom.rows() != denom.cols() || numer.rows() != denom.rows()) {
    throw Error(ErrorKind::kDimensionMismatch, "pencil matrices must be square and equal-sized");
  }
  const Eigen::Index n = numer.rows();
  PencilMax out;
  out.direction = Vector::Zero(n);
  if (n == 0) return out;
  const Matrix nsym = 0.5 * (numer + numer.transpose());
  const Matrix dsym = 0.5 * (denom + denom.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> es(nsym);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::kNumerical, "eigensolver failed on the numerator form");
  const Vector& evals = es.eigenvalues();
  const double top = evals(n - 1);
  if (!(top > 0.0)) return out;

  if (try_cholesky && evals(0) > cutoff * top) {
    Eigen::LLT<Matrix> llt(nsym);
    if (llt.info() == Eigen::Success) {
      // C^{-1} D C^{-T}
      const Matrix L = llt.matrixL();
      const Matrix tmp = L.triangularView<Eigen::Lower>().solve(dsym);
      const Matrix w = L.triangularView<Eigen::Lower>().solve(tmp.transpose());
      auto [lam, v] = top_eigenpair(w);
      out.lambda_max = lam;
      out.direction = L.transpose().triangularView<Eigen::Upper>().solve(v);
      out.rank = n;
      out.used_cholesky = true;
      return out;
    }
  }

  Eigen::Index first = 0;
  while (first < n && evals(first) <= cutoff * top) ++first;
  const Eigen::Index rank = n - first;
  Matrix whiten = es.eigenvectors().rightCols(rank);
  for (Eigen::Index c = 0; c < rank; ++c) whiten.col(c) /= std::sqrt(evals(first + c));
  const Matrix reduced = whiten.transpose() * dsym * whiten;
  auto [lam, v] = top_eigenpair(reduced);
  out.lambda_max = lam;
  out.direction = whiten * v;
  out.rank = rank;
  return out;
}

Matrix null_space(const Matrix& m, double cutoff) {
  const Eigen::Index n = m.cols();
  if (m.rows() == 0) return Matrix::Identity(n, n);
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double top = s.size() > 0 ? s(0) : 0.0;
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff * top && top > 0.0) ++rank;
  }
  return svd.matrixV().rightCols(n - rank);
}

}  // namespace ibpt
