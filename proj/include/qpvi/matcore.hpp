#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace qpvi {

using cplx = std::complex<double>;
template <typename S> using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S> using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
using CMatrix = Mat<cplx>;
using CVector = Vec<cplx>;
using Index = Eigen::Index;

enum class ErrorKind {
  SingularMatrix,
  InterpolationIllConditioned,
  EigFailure,
  FuchsViolation,
  NewtonDiverged,
  KernelDimensionMismatch,
  SingularG,
  SingularBlock,
  WitnessMismatch,
  RootClusterAmbiguous,
  SingularFactor,
  CommutationDrift,
  KernelIdentityViolated,
  PoleProximity,
  SingularEncounter,
  PreconditionViolation,
  ConfigError,
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::InterpolationIllConditioned: return "InterpolationIllConditioned";
    case ErrorKind::EigFailure: return "EigFailure";
    case ErrorKind::FuchsViolation: return "FuchsViolation";
    case ErrorKind::NewtonDiverged: return "NewtonDiverged";
    case ErrorKind::KernelDimensionMismatch: return "KernelDimensionMismatch";
    case ErrorKind::SingularG: return "SingularG";
    case ErrorKind::SingularBlock: return "SingularBlock";
    case ErrorKind::WitnessMismatch: return "WitnessMismatch";
    case ErrorKind::RootClusterAmbiguous: return "RootClusterAmbiguous";
    case ErrorKind::SingularFactor: return "SingularFactor";
    case ErrorKind::CommutationDrift: return "CommutationDrift";
    case ErrorKind::KernelIdentityViolated: return "KernelIdentityViolated";
    case ErrorKind::PoleProximity: return "PoleProximity";
    case ErrorKind::SingularEncounter: return "SingularEncounter";
    case ErrorKind::PreconditionViolation: return "PreconditionViolation";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + detail), kind_(kind), detail_(detail) {}
  ErrorKind kind() const { return kind_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

template <typename S>
struct MatrixPolynomial {
  std::vector<Mat<S>> coeffs;  // coeffs[k] multiplies x^k

  Index dim() const { return coeffs.empty() ? 0 : coeffs.front().rows(); }
  Index degree() const { return static_cast<Index>(coeffs.size()) - 1; }
};

template <typename S>
Mat<S> identity(Index n) {
  return Mat<S>::Identity(n, n);
}

template <typename S>
double cond2(const Mat<S>& a) {
  if (a.size() == 0) return 1.0;
  Eigen::JacobiSVD<Mat<S>> svd(a);
  const auto& s = svd.singularValues();
  double smax = s(0), smin = s(s.size() - 1);
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

// Inverse with a condition guard; a degenerate input is an error, never regularized.
template <typename S>
Mat<S> mat_inv(const Mat<S>& a, double cond_limit = 1e12) {
  if (a.rows() != a.cols()) throw Error(ErrorKind::PreconditionViolation, "mat_inv: non-square input");
  const Index n = a.rows();
  if (n == 0) return a;
  if (!a.allFinite()) throw Error(ErrorKind::SingularMatrix, "mat_inv: non-finite entries");
  double c = cond2(a);
  if (!(c <= cond_limit))
    throw Error(ErrorKind::SingularMatrix, "mat_inv: condition estimate " + std::to_string(c) +
                                               " exceeds " + std::to_string(cond_limit));
  Mat<S> x = a.partialPivLu().inverse();
  double res = (a * x - identity<S>(n)).norm();
  if (!std::isfinite(res) || res > 1e-12 * std::max(1.0, c) * static_cast<double>(n))
    throw Error(ErrorKind::SingularMatrix, "mat_inv: residual check failed");
  return x;
}

template <typename S, typename X>
Mat<S> poly_eval(const MatrixPolynomial<S>& p, const X& x) {
  if (p.coeffs.empty()) throw Error(ErrorKind::PreconditionViolation, "poly_eval: empty polynomial");
  Mat<S> acc = p.coeffs.back();
  for (Index k = p.degree() - 1; k >= 0; --k) acc = (acc * S(x)).eval() + p.coeffs[static_cast<size_t>(k)];
  return acc;
}

template <typename S>
MatrixPolynomial<S> poly_mul(const MatrixPolynomial<S>& a, const MatrixPolynomial<S>& b) {
  const Index n = a.dim();
  MatrixPolynomial<S> c;
  c.coeffs.assign(a.coeffs.size() + b.coeffs.size() - 1, Mat<S>::Zero(n, n));
  for (size_t i = 0; i < a.coeffs.size(); ++i)
    for (size_t j = 0; j < b.coeffs.size(); ++j) c.coeffs[i + j] += a.coeffs[i] * b.coeffs[j];
  return c;
}

// Scalar polynomials are coefficient vectors, index k <-> x^k.
inline std::vector<cplx> spoly_mul(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  std::vector<cplx> c(a.size() + b.size() - 1, cplx(0));
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
  return c;
}

inline std::vector<cplx> spoly_from_roots(const std::vector<cplx>& roots, cplx lead = 1.0) {
  std::vector<cplx> c{lead};
  for (const cplx& r : roots) c = spoly_mul(c, {-r, cplx(1)});
  return c;
}

inline cplx spoly_eval(const std::vector<cplx>& c, cplx x) {
  cplx acc = 0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

// Radius on which the determinant is sampled: the root scale of the coefficients.
template <typename S>
double sampling_radius(const MatrixPolynomial<S>& p) {
  double lead = p.coeffs.back().norm(), tail = p.coeffs.front().norm();
  if (p.degree() < 1 || lead == 0.0 || tail == 0.0) return 1.0;
  return std::max(1.0, std::pow(tail / lead, 1.0 / static_cast<double>(p.degree())));
}

// det p(x) by evaluation at n*d+1 points on a circle and inverse DFT.
template <typename S>
std::vector<cplx> poly_det(const MatrixPolynomial<S>& p) {
  const Index n = p.dim(), d = p.degree();
  if (n == 0) return {cplx(1)};
  const Index N = n * d + 1;
  const double r = sampling_radius(p);
  std::vector<cplx> vals(static_cast<size_t>(N));
  for (Index k = 0; k < N; ++k) {
    cplx x = std::polar(r, 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(N));
    CMatrix a = poly_eval(p, x).template cast<cplx>();
    vals[static_cast<size_t>(k)] = a.partialPivLu().determinant();
    if (!std::isfinite(std::abs(vals[static_cast<size_t>(k)])))
      throw Error(ErrorKind::InterpolationIllConditioned, "poly_det: non-finite sample");
  }
  std::vector<cplx> c(static_cast<size_t>(N));
  for (Index j = 0; j < N; ++j) {
    cplx acc = 0;
    for (Index k = 0; k < N; ++k)
      acc += vals[static_cast<size_t>(k)] *
             std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j * k % N) / static_cast<double>(N));
    c[static_cast<size_t>(j)] = acc / (static_cast<double>(N) * std::pow(r, static_cast<double>(j)));
  }
  return c;
}

template <typename S>
Index rank_tol(const Mat<S>& a, double rel_tol = 1e-8) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<Mat<S>> svd(a);
  const auto& s = svd.singularValues();
  if (s(0) == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > rel_tol * s(0)) ++r;
  return r;
}

struct EigenCluster {
  cplx value;
  int multiplicity;
};

// Single-linkage grouping of a list of complex numbers.
inline std::vector<EigenCluster> cluster_values(const std::vector<cplx>& ev, double rel_tol) {
  const size_t n = ev.size();
  double scale = 0;
  for (const cplx& v : ev) scale = std::max(scale, std::abs(v));
  const double tol = rel_tol * scale;
  std::vector<size_t> parent(n);
  for (size_t i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      if (std::abs(ev[i] - ev[j]) <= tol) parent[find(i)] = find(j);
  std::vector<EigenCluster> out;
  std::vector<size_t> roots;
  for (size_t i = 0; i < n; ++i) {
    size_t r = find(i);
    auto it = std::find(roots.begin(), roots.end(), r);
    if (it == roots.end()) {
      roots.push_back(r);
      out.push_back({ev[i], 1});
    } else {
      auto& c = out[static_cast<size_t>(it - roots.begin())];
      c.value += ev[i];
      c.multiplicity += 1;
    }
  }
  for (auto& c : out) c.value /= static_cast<double>(c.multiplicity);
  std::sort(out.begin(), out.end(), [](const EigenCluster& a, const EigenCluster& b) {
    if (a.value.real() != b.value.real()) return a.value.real() < b.value.real();
    return a.value.imag() < b.value.imag();
  });
  return out;
}

template <typename S>
std::vector<cplx> eigenvalues(const Mat<S>& a) {
  Eigen::ComplexEigenSolver<CMatrix> es(a.template cast<cplx>(), false);
  if (es.info() != Eigen::Success) throw Error(ErrorKind::EigFailure, "eigen-solver did not converge");
  std::vector<cplx> ev(static_cast<size_t>(a.rows()));
  for (Index i = 0; i < a.rows(); ++i) ev[static_cast<size_t>(i)] = es.eigenvalues()(i);
  return ev;
}

template <typename S>
std::vector<EigenCluster> eig_clustered(const Mat<S>& a, double rel_tol = 1e-8) {
  return cluster_values(eigenvalues(a), rel_tol);
}

// c_k with det(lambda - a) = lambda^m - c_1 lambda^{m-1} + ... + (-1)^m c_m (Faddeev-LeVerrier).
template <typename S>
std::vector<S> char_coeffs(const Mat<S>& a) {
  const Index m = a.rows();
  std::vector<S> c(static_cast<size_t>(m));
  Mat<S> M = Mat<S>::Zero(m, m);
  S prev = S(1);
  for (Index k = 1; k <= m; ++k) {
    M = (a * M).eval() + prev * identity<S>(m);
    S ck = -(a * M).trace() / S(static_cast<double>(k));
    c[static_cast<size_t>(k - 1)] = (k % 2 == 0) ? ck : S(-ck);
    prev = ck;
  }
  return c;
}

template <typename S>
double rel_diff(const Mat<S>& a, const Mat<S>& b) {
  double nb = b.norm();
  return (a - b).norm() / (nb > 0 ? nb : 1.0);
}

}  // namespace qpvi
