#pragma once

#include "dtc/core.hpp"

#include <algorithm>
#include <vector>

extern "C" {
void zheevr_(const char* jobz, const char* range, const char* uplo, const int* n, std::complex<double>* a,
             const int* lda, const double* vl, const double* vu, const int* il, const int* iu,
             const double* abstol, int* m, double* w, std::complex<double>* z, const int* ldz, int* isuppz,
             std::complex<double>* work, const int* lwork, double* rwork, const int* lrwork, int* iwork,
             const int* liwork, int* info);
void dsyevr_(const char* jobz, const char* range, const char* uplo, const int* n, double* a, const int* lda,
             const double* vl, const double* vu, const int* il, const int* iu, const double* abstol, int* m,
             double* w, double* z, const int* ldz, int* isuppz, double* work, const int* lwork, int* iwork,
             const int* liwork, int* info);
void dstevr_(const char* jobz, const char* range, const int* n, double* d, double* e, const double* vl,
             const double* vu, const int* il, const int* iu, const double* abstol, int* m, double* w, double* z,
             const int* ldz, int* isuppz, double* work, const int* lwork, int* iwork, const int* liwork, int* info);
}

namespace dtc {

template <class Mat>
struct Eigenpairs {
  VecR values;  // ascending
  Mat vectors;  // columns
};

/// Lowest k eigenpairs of a Hermitian matrix (upper triangle referenced). k <= 0 means all.
inline Eigenpairs<MatC> eigh(const MatC& h, int k = -1) {
  const int n = static_cast<int>(h.rows());
  if (h.cols() != n) throw ConfigError("eigh: matrix not square");
  if (k <= 0 || k > n) k = n;
  MatC a = h;
  Eigenpairs<MatC> out;
  out.values.resize(n);
  out.vectors.resize(n, k);
  const char jobz = 'V', range = (k == n) ? 'A' : 'I', uplo = 'U';
  const int il = 1, iu = k, lda = n, ldz = n;
  const double vl = 0, vu = 0, abstol = 0;
  int m = 0, info = 0;
  std::vector<int> isuppz(2 * std::max(1, k));
  int lwork = -1, lrwork = -1, liwork = -1;
  cplx wq;
  double rq;
  int iq;
  zheevr_(&jobz, &range, &uplo, &n, a.data(), &lda, &vl, &vu, &il, &iu, &abstol, &m, out.values.data(),
          out.vectors.data(), &ldz, isuppz.data(), &wq, &lwork, &rq, &lrwork, &iq, &liwork, &info);
  lwork = static_cast<int>(wq.real());
  lrwork = static_cast<int>(rq);
  liwork = iq;
  std::vector<cplx> work(lwork);
  std::vector<double> rwork(lrwork);
  std::vector<int> iwork(liwork);
  zheevr_(&jobz, &range, &uplo, &n, a.data(), &lda, &vl, &vu, &il, &iu, &abstol, &m, out.values.data(),
          out.vectors.data(), &ldz, isuppz.data(), work.data(), &lwork, rwork.data(), &lrwork, iwork.data(),
          &liwork, &info);
  if (info != 0 || m != k) throw NumericalError("zheevr failed, info=" + std::to_string(info));
  out.values.conservativeResize(k);
  return out;
}

/// Real symmetric counterpart of eigh.
inline Eigenpairs<MatR> eigh(const MatR& h, int k = -1) {
  const int n = static_cast<int>(h.rows());
  if (h.cols() != n) throw ConfigError("eigh: matrix not square");
  if (k <= 0 || k > n) k = n;
  MatR a = h;
  Eigenpairs<MatR> out;
  out.values.resize(n);
  out.vectors.resize(n, k);
  const char jobz = 'V', range = (k == n) ? 'A' : 'I', uplo = 'U';
  const int il = 1, iu = k, lda = n, ldz = n;
  const double vl = 0, vu = 0, abstol = 0;
  int m = 0, info = 0;
  std::vector<int> isuppz(2 * std::max(1, k));
  int lwork = -1, liwork = -1;
  double wq;
  int iq;
  dsyevr_(&jobz, &range, &uplo, &n, a.data(), &lda, &vl, &vu, &il, &iu, &abstol, &m, out.values.data(),
          out.vectors.data(), &ldz, isuppz.data(), &wq, &lwork, &iq, &liwork, &info);
  lwork = static_cast<int>(wq);
  liwork = iq;
  std::vector<double> work(lwork);
  std::vector<int> iwork(liwork);
  dsyevr_(&jobz, &range, &uplo, &n, a.data(), &lda, &vl, &vu, &il, &iu, &abstol, &m, out.values.data(),
          out.vectors.data(), &ldz, isuppz.data(), work.data(), &lwork, iwork.data(), &liwork, &info);
  if (info != 0 || m != k) throw NumericalError("dsyevr failed, info=" + std::to_string(info));
  out.values.conservativeResize(k);
  return out;
}

/// Eigenpairs il..iu (1-based, ascending) of a real symmetric tridiagonal matrix.
inline Eigenpairs<MatR> eigh_tridiagonal(VecR diag, VecR off, int il, int iu) {
  const int n = static_cast<int>(diag.size());
  if (off.size() != std::max(0, n - 1) || il < 1 || iu > n || il > iu) throw ConfigError("eigh_tridiagonal: bad input");
  off.conservativeResize(std::max(1, n));
  const int k = iu - il + 1;
  Eigenpairs<MatR> out;
  out.values.resize(n);
  out.vectors.resize(n, k);
  const char jobz = 'V', range = 'I';
  const double vl = 0, vu = 0, abstol = 0;
  int m = 0, info = 0;
  std::vector<int> isuppz(2 * k);
  int lwork = 20 * n, liwork = 10 * n;
  std::vector<double> work(lwork);
  std::vector<int> iwork(liwork);
  dstevr_(&jobz, &range, &n, diag.data(), off.data(), &vl, &vu, &il, &iu, &abstol, &m, out.values.data(),
          out.vectors.data(), &n, isuppz.data(), work.data(), &lwork, iwork.data(), &liwork, &info);
  if (info != 0 || m != k) throw NumericalError("dstevr failed, info=" + std::to_string(info));
  out.values.conservativeResize(k);
  return out;
}

/// Orthonormal basis for the column span of m (singular values below tol*max dropped).
inline MatC orthonormal_span(const MatC& m, double tol = 1e-8) {
  Eigen::JacobiSVD<MatC> svd(m, Eigen::ComputeThinU);
  const VecR& s = svd.singularValues();
  int r = 0;
  while (r < s.size() && s(r) > tol * s(0)) ++r;
  return svd.matrixU().leftCols(r);
}

/// exp(-i 2 pi H t) for Hermitian H (GHz) and t (ns).
inline MatC hermitian_propagator(const MatC& h, double t) {
  auto ep = eigh(h);
  VecC ph(ep.values.size());
  for (Eigen::Index i = 0; i < ph.size(); ++i) ph(i) = std::polar(1.0, -kTwoPi * ep.values(i) * t);
  return ep.vectors * ph.asDiagonal() * ep.vectors.adjoint();
}

}  // namespace dtc
