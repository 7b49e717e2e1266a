#include "qpvi/qlinsys.hpp"

#include <optional>

#include <unsupported/Eigen/KroneckerProduct>

#include <functional>
#include <numeric>
#include <random>

namespace qpvi {

namespace {

CMatrix eye(Index m) { return CMatrix::Identity(m, m); }

// Inverse that reports the offending factor by name.
CMatrix inv_named(const CMatrix& a, const char* name, ErrorKind kind, const Tolerances& tol) {
  try {
    return mat_inv(a, tol.cond_limit);
  } catch (const Error& e) {
    throw Error(kind, std::string(name) + " (" + e.detail() + ")");
  }
}

bool near(cplx a, cplx b, double rel = 1e-12) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

std::vector<int> partition_of(const std::vector<EigenCluster>& cl) {
  std::vector<int> p;
  for (const auto& c : cl) p.push_back(c.multiplicity);
  std::sort(p.rbegin(), p.rend());
  return p;
}

// Eigenvalue partition of a diagonalizable but possibly far-from-normal matrix: roundoff
// scatters a semisimple eigenvalue by ~eps |a| times its condition, so neighbouring clusters
// are merged when their weighted centre has the combined geometric multiplicity.
std::vector<int> semisimple_partition(const CMatrix& a, double rel_tol) {
  auto cl = eig_clustered(a, rel_tol);
  const Index n = a.rows();
  Eigen::JacobiSVD<CMatrix> full(a);
  const double floor = rel_tol * std::max(full.singularValues()(0), std::numeric_limits<double>::min());
  auto nullity = [&](cplx lambda) {
    Eigen::JacobiSVD<CMatrix> svd(CMatrix(a - lambda * CMatrix::Identity(n, n)));
    const auto& sv = svd.singularValues();
    return static_cast<int>((sv.array() <= floor).count());
  };
  for (bool merged = true; merged;) {
    merged = false;
    for (size_t i = 0; i < cl.size() && !merged; ++i)
      for (size_t j = i + 1; j < cl.size() && !merged; ++j) {
        const int mi = cl[i].multiplicity, mj = cl[j].multiplicity;
        const cplx centre = (static_cast<double>(mi) * cl[i].value + static_cast<double>(mj) * cl[j].value) /
                            static_cast<double>(mi + mj);
        if (nullity(centre) >= mi + mj) {
          cl[i].value = centre;
          cl[i].multiplicity = mi + mj;
          cl.erase(cl.begin() + static_cast<std::ptrdiff_t>(j));
          merged = true;
        }
      }
  }
  return partition_of(cl);
}

cplx ipow(cplx z, Index k) {
  cplx r = 1;
  for (Index i = 0; i < k; ++i) r *= z;
  return r;
}

double binom(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

DerivedScalars derived_scalars(const QParameters& p) {
  DerivedScalars d;
  d.rho = p.a[0] * p.a[1] * p.a[2] * p.a[3] * p.kappa1 / (p.theta1 * p.theta2);
  d.alpha = {p.a[0] * p.t, p.a[1] * p.t, p.a[2], p.a[3]};
  auto c = spoly_from_roots({d.alpha.begin(), d.alpha.end()});
  for (int j = 1; j <= 4; ++j) d.beta[static_cast<size_t>(j - 1)] = c[static_cast<size_t>(4 - j)];
  return d;
}

CMatrix K_matrix(const QParameters& p) {
  CMatrix K = CMatrix::Zero(p.m, p.m);
  for (int i = 0; i < p.m - 1; ++i) K(i, i) = p.kappa2;
  K(p.m - 1, p.m - 1) = p.kappa3;
  return K;
}

double qfuchs_residual(const QParameters& p) {
  const cplx prod_a = p.a[0] * p.a[1] * p.a[2] * p.a[3];
  const cplx lhs = ipow(p.kappa1, p.m) * ipow(p.kappa2, p.m - 1) * p.kappa3 * ipow(prod_a, p.m);
  const cplx rhs = ipow(p.theta1 * p.theta2, p.m);
  return std::abs(lhs - rhs) / std::abs(rhs);
}

void validate(const QParameters& p, double fuchs_tol) {
  if (p.m < 1) throw Error(ErrorKind::PreconditionViolation, "m must be >= 1");
  if (!(std::abs(p.q) > 0.0 && std::abs(p.q) < 1.0))
    throw Error(ErrorKind::PreconditionViolation, "0 < |q| < 1 violated");
  if (p.t == cplx(0)) throw Error(ErrorKind::PreconditionViolation, "t must be nonzero");
  for (cplx v : {p.theta1, p.theta2, p.kappa1, p.kappa2, p.kappa3, p.a[0], p.a[1], p.a[2], p.a[3]})
    if (v == cplx(0) || !std::isfinite(std::abs(v)))
      throw Error(ErrorKind::PreconditionViolation, "parameters must be finite and nonzero");
  double r = qfuchs_residual(p);
  if (!(r <= fuchs_tol)) throw Error(ErrorKind::FuchsViolation, "q-Fuchs residual " + std::to_string(r));
  auto d = derived_scalars(p);
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 4; ++j)
      if (i != j && near(p.q * d.alpha[i], d.alpha[j]))
        throw Error(ErrorKind::PreconditionViolation, "resonance q alpha_i = alpha_j");
  std::vector<cplx> ks{p.kappa3};
  if (p.m > 1) ks.push_back(p.kappa2);
  for (cplx k : ks)
    if (near(p.kappa1, k) || near(p.q * p.kappa1, k))
      throw Error(ErrorKind::PreconditionViolation, "kappa1 or q kappa1 coincides with an eigenvalue of K");
}

QParameters shifted(const QParameters& p) {
  QParameters s = p;
  s.t = p.q * p.t;
  return s;
}

double commutation_residual(const QParameters& p, const CMatrix& F, const CMatrix& G) {
  const CMatrix rk = derived_scalars(p).rho * K_matrix(p);
  return rel_diff(CMatrix(mat_inv(F) * G * F * mat_inv(G)), rk);
}

CMatrix normal_form_F(const std::vector<cplx>& f, const std::vector<cplx>& last) {
  const Index m = static_cast<Index>(f.size());
  CMatrix F = CMatrix::Zero(m, m);
  if (m == 1) {
    F(0, 0) = f[0];
    return F;
  }
  for (Index i = 0; i + 2 < m; ++i) F(i, i + 1) = 1.0;
  for (Index j = 0; j + 1 < m; ++j) F(m - 2, j) = f[static_cast<size_t>(j + 1)];
  F(m - 2, m - 1) = 1.0;
  F(m - 1, 0) = f[0];
  for (Index j = 1; j < m; ++j) F(m - 1, j) = last[static_cast<size_t>(j - 1)];
  return F;
}

std::vector<cplx> trace_conditions(const QParameters& p, const CMatrix& F) {
  const CMatrix Ft = derived_scalars(p).rho * F * K_matrix(p);
  auto a = char_coeffs(F), b = char_coeffs(Ft);
  std::vector<cplx> r;
  for (int k = 0; k + 1 < p.m; ++k) r.push_back(a[static_cast<size_t>(k)] - b[static_cast<size_t>(k)]);
  return r;
}

// The conditions are affine in the last row, so the unit central difference is the exact
// Jacobian; the damped iteration and restarts guard against a degenerate Jacobian.
std::vector<cplx> solve_last_row(const QParameters& p, const std::vector<cplx>& f, const Tolerances& tol,
                                 const std::vector<cplx>& seed) {
  const int m = p.m;
  if (static_cast<int>(f.size()) != m) throw Error(ErrorKind::PreconditionViolation, "f must have m entries");
  if (m == 1) return {};
  if (f[0] == cplx(0)) throw Error(ErrorKind::PreconditionViolation, "f1 must be nonzero");
  const int n = m - 1;
  using V = CVector;
  auto residual = [&](const V& x) {
    std::vector<cplx> last(x.data(), x.data() + n);
    auto r = trace_conditions(p, normal_form_F(f, last));
    return V(Eigen::Map<V>(r.data(), n));
  };
  auto scale_of = [&](const V& x) {
    std::vector<cplx> last(x.data(), x.data() + n);
    double s = 1.0;
    for (cplx c : char_coeffs(normal_form_F(f, last))) s = std::max(s, std::abs(c));
    return s;
  };
  auto newton_step = [&](const V& x, const V& r) -> std::optional<V> {
    CMatrix J(n, n);
    for (int j = 0; j < n; ++j) {
      V e = V::Zero(n);
      e(j) = 1.0;
      J.col(j) = (residual(x + e) - residual(x - e)) / 2.0;
    }
    Eigen::FullPivLU<CMatrix> lu(J);
    if (!lu.isInvertible()) return std::nullopt;
    return V(lu.solve(r));
  };
  std::mt19937_64 eng(0x5eed);
  auto unit = [&] { return static_cast<double>(eng() >> 11) * 0x1.0p-53; };
  if (!seed.empty() && static_cast<int>(seed.size()) != n)
    throw Error(ErrorKind::PreconditionViolation, "seed must have m - 1 entries");
  V x = seed.empty() ? V(V::Zero(n)) : V(Eigen::Map<const V>(seed.data(), n));
  for (int restart = 0; restart <= 16; ++restart) {
    if (restart > 0)
      for (int i = 0; i < n; ++i) x(i) = std::polar(std::sqrt(unit()), 2.0 * std::numbers::pi * unit());
    V r = residual(x);
    for (int it = 0; it < 200; ++it) {
      if (r.cwiseAbs().maxCoeff() <= tol.newton * scale_of(x)) {
        for (int polish = 0; polish < 3; ++polish) {
          auto dx = newton_step(x, r);
          if (!dx) break;
          V xn = x - *dx, rn = residual(xn);
          if (!(rn.norm() < r.norm())) break;
          x = xn;
          r = rn;
        }
        return std::vector<cplx>(x.data(), x.data() + n);
      }
      auto dx = newton_step(x, r);
      if (!dx) break;
      double lambda = 1.0;
      V xn = x - *dx, rn = residual(xn);
      while (rn.norm() > r.norm() && lambda > 1e-6) {
        lambda *= 0.5;
        xn = x - lambda * *dx;
        rn = residual(xn);
      }
      x = xn;
      r = rn;
    }
  }
  throw Error(ErrorKind::NewtonDiverged, "last-row solve did not converge");
}

CMatrix omega_matrix(const QParameters& p, const CMatrix& F) {
  const Index m = F.rows();
  const CMatrix Ft = derived_scalars(p).rho * F * K_matrix(p);
  return CMatrix(Eigen::kroneckerProduct(F.transpose(), eye(m))) - CMatrix(Eigen::kroneckerProduct(eye(m), Ft));
}

double omega_scale(const QParameters& p, const CMatrix& F) {
  return F.norm() * (std::sqrt(static_cast<double>(p.m)) + (derived_scalars(p).rho * K_matrix(p)).norm());
}

std::vector<CMatrix> kernel_basis(const CMatrix& omega, int m, Vec<double>* singular_values, const Tolerances& tol,
                                  double scale) {
  const Index n = omega.rows();
  Eigen::JacobiSVD<CMatrix> svd(omega, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (singular_values) *singular_values = s;
  const double ref = std::max(s.size() ? s(0) : 0.0, scale);
  Index dim = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (!(s(i) > tol.rank_rel * ref)) ++dim;
  if (dim != m)
    throw Error(ErrorKind::KernelDimensionMismatch,
                "kernel dimension " + std::to_string(dim) + ", expected " + std::to_string(m));
  std::vector<CVector> vs;
  for (Index k = n - m; k < n; ++k) {
    CVector v = svd.matrixV().col(k);
    Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    v *= std::abs(v(imax)) / v(imax);
    vs.push_back(v);
  }
  auto key = [](const CVector& v) {
    const double big = v.cwiseAbs().maxCoeff();
    for (Index i = 0; i < v.size(); ++i)
      if (std::abs(v(i)) > 1e-8 * big) return std::abs(v(i));
    return 0.0;
  };
  std::stable_sort(vs.begin(), vs.end(), [&](const CVector& a, const CVector& b) { return key(a) > key(b); });
  std::vector<CMatrix> out;
  for (const auto& v : vs) out.push_back(Eigen::Map<const CMatrix>(v.data(), m, m));
  return out;
}

AccessoryNormalForm normal_form(const QParameters& p, const std::vector<cplx>& f, const std::vector<cplx>& g,
                                const Tolerances& tol) {
  AccessoryNormalForm nf;
  nf.f = f;
  nf.g = g;
  nf.solved_row = solve_last_row(p, f, tol);
  CMatrix F = normal_form_F(f, nf.solved_row);
  nf.omega = omega_matrix(p, F);
  nf.kernel_basis = kernel_basis(nf.omega, p.m, &nf.singular_values, tol, omega_scale(p, F));
  return nf;
}

AccessoryState build_accessory(const QParameters& p, const std::vector<cplx>& f, const std::vector<cplx>& g,
                               const Tolerances& tol) {
  if (static_cast<int>(g.size()) != p.m) throw Error(ErrorKind::PreconditionViolation, "g must have m entries");
  AccessoryNormalForm nf = normal_form(p, f, g, tol);
  AccessoryState s;
  s.F = normal_form_F(f, nf.solved_row);
  s.G = CMatrix::Zero(p.m, p.m);
  for (int i = 0; i < p.m; ++i) s.G += g[static_cast<size_t>(i)] * nf.kernel_basis[static_cast<size_t>(i)];
  if (!(cond2(s.G) <= tol.cond_limit)) throw Error(ErrorKind::SingularG, "G from the chosen g is singular");
  s.W = eye(p.m);
  return s;
}

std::vector<cplx> read_back_g(const QParameters& p, const CMatrix& F, const CMatrix& G, const Tolerances& tol) {
  auto basis = kernel_basis(omega_matrix(p, F), p.m, nullptr, tol, omega_scale(p, F));
  std::vector<cplx> g;
  for (const auto& V : basis) g.push_back((V.conjugate().cwiseProduct(G)).sum());
  return g;
}

DerivedBlocks derive_blocks(const QParameters& p, const AccessoryState& s, const Tolerances& tol) {
  const Index m = p.m;
  const auto ds = derived_scalars(p);
  const CMatrix I = eye(m), K = K_matrix(p), &F = s.F, &G = s.G, &W = s.W;
  const cplx k1 = p.kappa1, q = p.q, t = p.t, th1 = p.theta1, th2 = p.theta2;
  auto inv = [&](const CMatrix& a, const char* name) { return inv_named(a, name, ErrorKind::SingularBlock, tol); };
  const CMatrix Ki = inv(K, "K"), Wi = inv(W, "W"), Fi = inv(F, "F"), Gi = inv(G, "G");
  for (int j = 0; j < 4; ++j) inv(CMatrix(F - ds.alpha[static_cast<size_t>(j)] * I), "F - alpha_j");

  DerivedBlocks b;
  b.G1 = (1.0 / (q * k1)) * (F - ds.alpha[0] * I) * (F - ds.alpha[1] * I) * Gi;
  b.G2 = q * k1 * G * (F - ds.alpha[2] * I) * (F - ds.alpha[3] * I);
  const CMatrix G1i = inv(b.G1, "G1");
  const CMatrix br = F + G1i * F * b.G1 + ds.beta[0] * I;
  const CMatrix kmK = inv(CMatrix(k1 * I - K), "kappa1 - K");
  b.alpha = kmK * ((th1 + th2) * t * Fi - k1 * Fi * b.G1 - K * b.G2 * Fi + K * br);
  b.beta = kmK * (-(th1 + th2) * t * Fi + k1 * Fi * b.G1 + K * b.G2 * Fi - k1 * br);
  const CMatrix kiKi = inv(CMatrix(I / k1 - Ki), "kappa1^-1 - K^-1");
  b.B1 = kiKi * (Fi * b.G1 + b.G2 * Fi - t * (th1 / k1 * I + th2 * Ki) * Fi - br) * Ki * Wi;
  b.gamma = K * (b.G1 + b.G2 + F * b.alpha + b.beta * F + b.beta * b.alpha -
                 G1i * (F * F + ds.beta[0] * F + ds.beta[1] * I) * b.G1) * Ki;
  b.delta = (1.0 / k1) * (t * t * th1 * th2 * Fi - k1 * K * (b.G2 + b.beta * F) * Fi * (b.G1 + F * b.alpha)) * Ki;
  b.A21 = k1 * b.gamma * Wi;
  b.C1 = -W * K * F;
  b.A12 = W * K;
  b.A11 = -k1 * W * K * (F + b.alpha) * Ki * Wi;
  b.A22 = -K * (F + b.beta);
  return b;
}

MatrixPolynomial<cplx> assemble_A(const QParameters& p, const AccessoryState& s, const Tolerances& tol) {
  const Index m = p.m;
  const DerivedBlocks b = derive_blocks(p, s, tol);
  const CMatrix K = K_matrix(p), Ki = mat_inv(K), Wi = mat_inv(s.W), &F = s.F, &W = s.W;
  const cplx k1 = p.kappa1;
  MatrixPolynomial<cplx> A;
  A.coeffs.assign(3, CMatrix::Zero(2 * m, 2 * m));
  A.coeffs[2].topLeftCorner(m, m) = k1 * eye(m);
  A.coeffs[2].bottomRightCorner(m, m) = K;
  A.coeffs[1] << b.A11, b.A12, b.A21, b.A22;
  A.coeffs[0] << k1 * W * K * (F * b.alpha + b.G1) * Ki * Wi, b.C1, k1 * b.delta * Wi, K * (b.beta * F + b.G2);
  return A;
}

std::vector<cplx> expected_det(const QParameters& p) {
  const auto ds = derived_scalars(p);
  std::vector<cplx> roots;
  for (cplx a : ds.alpha)
    for (int k = 0; k < p.m; ++k) roots.push_back(a);
  const cplx lead = ipow(p.kappa1, p.m) * ipow(p.kappa2, p.m - 1) * p.kappa3;
  return spoly_from_roots(roots, lead);
}

double verify_det(const QParameters& p, const MatrixPolynomial<cplx>& A) {
  const auto c = poly_det(A), e = expected_det(p);
  const double r = sampling_radius(A);
  double num = 0, den = 0, w = 1;
  for (size_t j = 0; j < std::max(c.size(), e.size()); ++j, w *= r) {
    const cplx cj = j < c.size() ? c[j] : 0.0, ej = j < e.size() ? e[j] : 0.0;
    num = std::max(num, std::abs(cj - ej) * w);
    den = std::max(den, std::abs(ej) * w);
  }
  return num / den;
}

SmithWitness smith_witness(const QParameters& p, const AccessoryState& s, const std::vector<cplx>& samples,
                           const Tolerances& tol) {
  const Index m = p.m;
  const auto ds = derived_scalars(p);
  const DerivedBlocks b = derive_blocks(p, s, tol);
  const auto A = assemble_A(p, s, tol);
  const CMatrix I = eye(m), O = CMatrix::Zero(m, m), K = K_matrix(p), Ki = mat_inv(K), &W = s.W, &F = s.F;
  const CMatrix Wi = mat_inv(W), G1i = inv_named(b.G1, "G1", ErrorKind::SingularBlock, tol);
  const cplx k1 = p.kappa1;

  SmithWitness w;
  w.samples = samples;
  w.Q1 = -b.G1 * (b.alpha + b.beta + F) * G1i;
  w.Q2 = b.G1 * (b.G1 + b.G2 - Ki * b.A21 * b.A12 / k1 + F * b.alpha + b.beta * b.alpha + b.beta * F) * G1i;
  const CMatrix A0_21 = A.coeffs[0].bottomLeftCorner(m, m);
  w.Q3 = -b.G1 * (b.beta * b.G1 + b.G2 * b.alpha + Ki * A0_21 * b.A12 / k1 + b.beta * F * b.alpha) * G1i;

  MatrixPolynomial<cplx> cubic{{w.Q3, w.Q2, w.Q1, I}}, lin{{CMatrix(-F), I}};
  w.Atilde_poly = poly_mul(cubic, lin);
  w.Atilde_poly.coeffs[0] += b.G1 * b.G2;

  const CMatrix F2 = F * F;
  const CMatrix e1 = F + ds.beta[0] * I, e2 = e1 * F + ds.beta[1] * I, e3 = (F2 + ds.beta[0] * F + ds.beta[1] * I) * F + ds.beta[2] * I;
  w.q_residual[0] = rel_diff(w.Q1, e1);
  w.q_residual[1] = rel_diff(w.Q2, e2);
  w.q_residual[2] = rel_diff(w.Q3, e3);

  for (cplx x : samples) {
    const CMatrix Ax = poly_eval(A, x);
    const CMatrix N = -k1 * (x * I - b.alpha) * Ki * Wi;
    CMatrix L(2 * m, 2 * m);
    L << I, O, N, I;
    const CMatrix Z = -(Ax * L).bottomLeftCorner(m, m);
    CMatrix d1(2 * m, 2 * m), zz(2 * m, 2 * m), d2(2 * m, 2 * m), u(2 * m, 2 * m);
    d1 << I, O, O, b.G1 * Ki;
    zz << I, O, Z, I;
    d2 << W * K * G1i * Ki * Wi / k1, O, O, I;
    u << I, -W * K * G1i * (x * I - F) / k1, O, I;
    const CMatrix M1 = d1 * zz * d2, M2 = L * u;
    cplx pr = 1;
    for (cplx a : ds.alpha) pr *= (x - a);
    CMatrix target = CMatrix::Zero(2 * m, 2 * m);
    target.topLeftCorner(m, m) = I;
    target.bottomRightCorner(m, m) = pr * I;
    const CMatrix At = poly_eval(w.Atilde_poly, x);
    w.M1.push_back(M1);
    w.M2.push_back(M2);
    w.Atilde.push_back(At);
    w.Zblock.push_back(Z);
    w.witness_residual = std::max(w.witness_residual, rel_diff(CMatrix(M1 * Ax * M2), target));
    w.atilde_residual = std::max(w.atilde_residual, rel_diff(At, CMatrix(pr * I)));
  }

  const char* names[] = {"Q1", "Q2", "Q3"};
  for (int k = 0; k < 3; ++k)
    if (!(w.q_residual[k] <= tol.smith))
      throw Error(ErrorKind::WitnessMismatch, std::string(names[k]) + " relation residual " + std::to_string(w.q_residual[k]));
  if (!(w.witness_residual <= tol.smith))
    throw Error(ErrorKind::WitnessMismatch, "M1 A M2 = diag(I, Atilde) residual " + std::to_string(w.witness_residual));
  if (!(w.atilde_residual <= tol.smith))
    throw Error(ErrorKind::WitnessMismatch, "Atilde = prod(x - alpha) residual " + std::to_string(w.atilde_residual));
  return w;
}

SpectralType spectral_type(const MatrixPolynomial<cplx>& A, const Tolerances& tol) {
  const Index n = A.dim(), d = A.degree();
  SpectralType st;
  st.s0 = semisimple_partition(A.coeffs.front(), tol.rank_rel);
  st.s_inf = semisimple_partition(A.coeffs.back(), tol.rank_rel);
  if (d < 1) return st;

  // Block-companion linearization; a shifted reversal y^d A(s + 1/y) when A_d is singular.
  auto companion_eigs = [&](const std::vector<CMatrix>& c) {
    CMatrix C = CMatrix::Zero(n * d, n * d);
    for (Index k = 0; k + 1 < d; ++k) C.block(k * n, (k + 1) * n, n, n) = eye(n);
    const CMatrix li = mat_inv(c.back(), tol.cond_limit);
    for (Index k = 0; k < d; ++k) C.block((d - 1) * n, k * n, n, n) = -li * c[static_cast<size_t>(k)];
    return eigenvalues(C);
  };
  std::vector<cplx> zeros;
  if (rank_tol(A.coeffs.back(), tol.rank_rel) == n) {
    zeros = companion_eigs(A.coeffs);
  } else {
    const cplx shifts[] = {cplx(0.3711, 0.2237), cplx(-0.5813, 0.6129), cplx(1.2917, -0.4403)};
    cplx s = 0;
    bool found = false;
    for (cplx c : shifts)
      if (cond2(poly_eval(A, c)) < 1e8) {
        s = c;
        found = true;
        break;
      }
    if (!found) throw Error(ErrorKind::PreconditionViolation, "spectral_type: det A vanishes identically");
    std::vector<CMatrix> rev(static_cast<size_t>(d + 1), CMatrix::Zero(n, n));
    for (Index k = 0; k <= d; ++k)
      for (Index i = 0; i <= k; ++i)
        rev[static_cast<size_t>(d - k + i)] += binom(static_cast<int>(k), static_cast<int>(i)) *
                                               ipow(s, i) * A.coeffs[static_cast<size_t>(k)];
    auto ys = companion_eigs(rev);
    double ymax = 0;
    for (cplx y : ys) ymax = std::max(ymax, std::abs(y));
    for (cplx y : ys)
      if (std::abs(y) > tol.zero_cluster * ymax) zeros.push_back(s + 1.0 / y);
  }

  auto clusters = cluster_values(zeros, tol.zero_cluster);
  double scale = 0;
  for (cplx z : zeros) scale = std::max(scale, std::abs(z));
  for (size_t i = 0; i < clusters.size(); ++i)
    for (size_t j = i + 1; j < clusters.size(); ++j)
      if (std::abs(clusters[i].value - clusters[j].value) <= 10.0 * tol.zero_cluster * scale)
        throw Error(ErrorKind::RootClusterAmbiguous, "zeros of det A nearly merge");

  for (const auto& c : clusters) {
    st.zeros.push_back(c.value);
    // Taylor coefficients at the zero; dim ker T_k = sum_i min(n~_i, k).
    std::vector<CMatrix> tay(static_cast<size_t>(d + 1), CMatrix::Zero(n, n));
    double tscale = 0;
    for (Index k = 0; k <= d; ++k) {
      for (Index j = k; j <= d; ++j)
        tay[static_cast<size_t>(k)] += binom(static_cast<int>(j), static_cast<int>(k)) *
                                       ipow(c.value, j - k) * A.coeffs[static_cast<size_t>(j)];
      tscale = std::max(tscale, tay[static_cast<size_t>(k)].norm());
    }
    std::vector<int> part;
    Index prev = 0, total = 0;
    for (Index k = 1; k <= c.multiplicity && total < c.multiplicity; ++k) {
      CMatrix T = CMatrix::Zero(n * k, n * k);
      for (Index i = 0; i < k; ++i)
        for (Index j = 0; j <= i; ++j)
          if (i - j <= d) T.block(i * n, j * n, n, n) = tay[static_cast<size_t>(i - j)];
      Eigen::JacobiSVD<CMatrix> svd(T);
      Index rank = 0;
      for (Index i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > tol.rank_rel * tscale) ++rank;
      const Index dimker = n * k - rank;
      const Index nk = dimker - prev;
      if (nk <= 0) break;
      part.push_back(static_cast<int>(nk));
      total += nk;
      prev = dimker;
    }
    st.s_div.push_back(part);
  }
  return st;
}

CMatrix normal_gauge(const CMatrix& F) {
  const Index m = F.rows();
  if (m == 1) return eye(1);
  const CMatrix F11 = F.topLeftCorner(m - 1, m - 1);
  const CVector f12 = F.topRightCorner(m - 1, 1);
  Eigen::RowVectorXcd r1(m - 1);
  if (m == 2) {
    r1(0) = 1.0;
  } else {
    CMatrix Kr(m - 1, m - 2);
    CVector v = f12;
    for (Index k = 0; k < m - 2; ++k) {
      Kr.col(k) = v;
      v = F11 * v;
    }
    Eigen::JacobiSVD<CMatrix> svd(CMatrix(Kr.transpose()), Eigen::ComputeFullV);
    r1 = svd.matrixV().col(m - 2).transpose();
  }
  CMatrix H(m - 1, m - 1);
  H.row(0) = r1;
  for (Index i = 1; i < m - 1; ++i) H.row(i) = H.row(i - 1) * F11;
  const cplx eta = (H.row(m - 2) * f12)(0);
  if (std::abs(eta) == 0.0) throw Error(ErrorKind::PreconditionViolation, "normal_gauge: F is not cyclic in the K frame");
  CMatrix h = CMatrix::Zero(m, m);
  h.topLeftCorner(m - 1, m - 1) = H;
  h(m - 1, m - 1) = eta;
  return h / eta;
}

AccessoryState retract(const QParameters& p, const AccessoryState& s, const Tolerances& tol) {
  using XC = std::complex<long double>;
  using XMatrix = Mat<XC>;
  const Index m = p.m, n = m * m;
  const CMatrix I = eye(m), rk = derived_scalars(p).rho * K_matrix(p);
  const XMatrix xrk = rk.cast<XC>();
  auto residual = [&](const CMatrix& F, const CMatrix& G) {
    const XMatrix xF = F.cast<XC>(), xG = G.cast<XC>();
    return CMatrix((xG * xF - xF * xrk * xG).cast<cplx>());
  };
  const double sf = s.F.norm(), sg = s.G.norm();
  AccessoryState r = s;
  CMatrix R = residual(r.F, r.G);
  for (int it = 0; it < 4 && R.norm() > 0; ++it) {
    // d(GF - F rho K G) = G dF - dF rho K G + dG F - F rho K dG, unknowns scaled by |F|, |G|
    CMatrix J(n, 2 * n);
    J.leftCols(n) = sf * (CMatrix(Eigen::kroneckerProduct(I, r.G)) -
                          CMatrix(Eigen::kroneckerProduct(CMatrix((rk * r.G).transpose()), I)));
    J.rightCols(n) = sg * (CMatrix(Eigen::kroneckerProduct(r.F.transpose(), I)) -
                           CMatrix(Eigen::kroneckerProduct(I, CMatrix(r.F * rk))));
    // truncated SVD: the determinant direction (det rho K = 1) is always null
    // (threshold absolute in |F| |G|: at m = 1, rho K = 1 and J is pure roundoff)
    Eigen::JacobiSVD<CMatrix> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0), floor = tol.rank_rel * sf * sg * (1.0 + rk.norm());
    if (!(smax > floor)) break;
    svd.setThreshold(floor / smax);
    const CVector d = svd.solve(CVector(-Eigen::Map<const CVector>(R.data(), n)));
    AccessoryState next = r;
    next.F += sf * Eigen::Map<const CMatrix>(d.data(), m, m);
    next.G += sg * Eigen::Map<const CMatrix>(d.data() + n, m, m);
    const CMatrix Rn = residual(next.F, next.G);
    if (!(Rn.norm() < R.norm())) break;
    r = next;
    R = Rn;
  }
  return r;
}

}  // namespace qpvi
