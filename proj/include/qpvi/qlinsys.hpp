#pragma once

#include "qpvi/matcore.hpp"
#include "qpvi/tolerances.hpp"

#include <array>
#include <vector>

namespace qpvi {

// Scalar data of the q-system. K = diag(kappa2 x (m-1), kappa3).
struct QParameters {
  int m = 1;
  cplx q = 0.5, t = 1.0;
  cplx theta1 = 1.0, theta2 = 1.0;
  cplx kappa1 = 1.0, kappa2 = 1.0, kappa3 = 1.0;
  std::array<cplx, 4> a{1.0, 1.0, 1.0, 1.0};
};

struct DerivedScalars {
  cplx rho;
  std::array<cplx, 4> alpha;  // (a1 t, a2 t, a3, a4)
  std::array<cplx, 4> beta;   // x^4 + beta1 x^3 + ... + beta4 = prod (x - alpha_j)
};

DerivedScalars derived_scalars(const QParameters& p);
CMatrix K_matrix(const QParameters& p);

// |lhs - rhs| / |rhs| of the q-Fuchs relation.
double qfuchs_residual(const QParameters& p);

// Throws FuchsViolation or PreconditionViolation when the invariants fail.
void validate(const QParameters& p, double fuchs_tol = 1e-10);

// Same parameters with t -> q t.
QParameters shifted(const QParameters& p);

struct AccessoryState {
  CMatrix F, G, W;
};

// || F^-1 G F G^-1 - rho K || / || rho K ||
double commutation_residual(const QParameters& p, const CMatrix& F, const CMatrix& G);

struct DerivedBlocks {
  CMatrix G1, G2, alpha, beta, B1, A21, gamma, delta, C1, A11, A12, A22;
};

struct AccessoryNormalForm {
  std::vector<cplx> f, g, solved_row;
  CMatrix omega;
  std::vector<CMatrix> kernel_basis;
  Vec<double> singular_values;  // of omega, descending
};

struct SmithWitness {
  std::vector<cplx> samples;
  std::vector<CMatrix> M1, M2, Atilde;  // evaluated at samples
  CMatrix Q1, Q2, Q3;
  MatrixPolynomial<cplx> Atilde_poly;  // (x^3 + Q1 x^2 + Q2 x + Q3)(x - F) + G1 G2
  std::vector<CMatrix> Zblock;
  double witness_residual = 0;  // max_x ||M1 A M2 - diag(I, Atilde)|| / ||diag(I, Atilde)||
  double atilde_residual = 0;   // max_x ||Atilde - prod(x - alpha) I|| / ||prod(x - alpha) I||
  double q_residual[3] = {0, 0, 0};
};

struct SpectralType {
  std::vector<int> s0, s_inf;
  std::vector<cplx> zeros;
  std::vector<std::vector<int>> s_div;
};

// F in the companion-like normal form; last = (f_m2 .. f_mm).
CMatrix normal_form_F(const std::vector<cplx>& f, const std::vector<cplx>& last);

// c_k(F) - c_k(rho F K), k = 1..m-1
std::vector<cplx> trace_conditions(const QParameters& p, const CMatrix& F);

// Newton from `seed` (zeros when empty), then random restarts; converged solutions get a few
// extra steps while the residual keeps falling.
std::vector<cplx> solve_last_row(const QParameters& p, const std::vector<cplx>& f, const Tolerances& tol = {},
                                 const std::vector<cplx>& seed = {});

CMatrix omega_matrix(const QParameters& p, const CMatrix& F);

// Orthonormal kernel basis of omega (reshaped column-major into m x m). Singular values below
// rank_rel * max(sigma_max, scale) count as zero; scale guards the case where omega is all roundoff.
std::vector<CMatrix> kernel_basis(const CMatrix& omega, int m, Vec<double>* singular_values = nullptr,
                                  const Tolerances& tol = {}, double scale = 0.0);

// ||F|| (sqrt(m) + ||rho K||): size of the two Kronecker terms of omega.
double omega_scale(const QParameters& p, const CMatrix& F);

AccessoryNormalForm normal_form(const QParameters& p, const std::vector<cplx>& f, const std::vector<cplx>& g,
                                const Tolerances& tol = {});

AccessoryState build_accessory(const QParameters& p, const std::vector<cplx>& f, const std::vector<cplx>& g,
                               const Tolerances& tol = {});

// g_i = <V_i, G> for the kernel basis of the F in s.
std::vector<cplx> read_back_g(const QParameters& p, const CMatrix& F, const CMatrix& G, const Tolerances& tol = {});

DerivedBlocks derive_blocks(const QParameters& p, const AccessoryState& s, const Tolerances& tol = {});

MatrixPolynomial<cplx> assemble_A(const QParameters& p, const AccessoryState& s, const Tolerances& tol = {});

// Coefficients of kappa1^m kappa2^(m-1) kappa3 prod (x - alpha_i)^m.
std::vector<cplx> expected_det(const QParameters& p);

double verify_det(const QParameters& p, const MatrixPolynomial<cplx>& A);

SmithWitness smith_witness(const QParameters& p, const AccessoryState& s, const std::vector<cplx>& samples,
                           const Tolerances& tol = {});

SpectralType spectral_type(const MatrixPolynomial<cplx>& A, const Tolerances& tol = {});

// Frame change h in Stab(K) taking F to the companion-like normal form: h F h^-1.
CMatrix normal_gauge(const CMatrix& F);

// Pulls (F, G) back onto G F = F rho K G by minimum-norm Gauss-Newton corrections in the
// original frame (relative to |F| and |G|), with the residual formed in extended precision.
// The companion normal frame is avoided on purpose: it is far worse conditioned.
AccessoryState retract(const QParameters& p, const AccessoryState& s, const Tolerances& tol = {});

}  // namespace qpvi
