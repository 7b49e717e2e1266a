#include "qpvi/qflow.hpp"

#include <cstdio>

namespace qpvi {

namespace {

CMatrix eye(Index m) { return CMatrix::Identity(m, m); }

// The step chains up to five inverses, so its roundoff scales with a product of condition
// numbers; carrying it in extended precision keeps near-singular encounters within tolerance.
using XC = std::complex<long double>;
using XMatrix = Mat<XC>;

XC wide(cplx z) { return {z.real(), z.imag()}; }
XMatrix wide(const CMatrix& a) { return a.cast<XC>(); }
CMatrix narrow(const XMatrix& a) { return a.cast<cplx>(); }
XMatrix xeye(Index m) { return XMatrix::Identity(m, m); }

template <typename S>
Mat<S> inv_factor(const Mat<S>& a, const std::string& name, const Tolerances& tol) {
  try {
    return mat_inv(a, tol.cond_limit);
  } catch (const Error& e) {
    throw Error(ErrorKind::SingularFactor, name + " (" + e.detail() + ")");
  }
}

// R(F) = (q kappa1)^-1 (F - a1 t)(F - a2 t)(F - a3)^-1 (F - a4)^-1
XMatrix r_factor(const QParameters& p, const XMatrix& F, const Tolerances& tol) {
  const XMatrix I = xeye(F.rows());
  const auto ds = derived_scalars(p);
  const XC a1 = wide(ds.alpha[0]), a2 = wide(ds.alpha[1]), a3 = wide(ds.alpha[2]), a4 = wide(ds.alpha[3]);
  inv_factor(XMatrix(F - a1 * I), "F - a1 t", tol);
  inv_factor(XMatrix(F - a2 * I), "F - a2 t", tol);
  return (XC(1) / wide(p.q * p.kappa1)) * (F - a1 * I) * (F - a2 * I) * inv_factor(XMatrix(F - a3 * I), "F - a3", tol) *
         inv_factor(XMatrix(F - a4 * I), "F - a4", tol);
}

// S(Gbar) with t the time of the before-state.
XMatrix s_factor(const QParameters& p, const XMatrix& Gb, const Tolerances& tol) {
  const XMatrix I = xeye(Gb.rows());
  const XC rho = wide(derived_scalars(p).rho), qk = wide(p.q * p.kappa1), aa = wide(p.a[0] * p.a[1]);
  const XC th1 = wide(p.theta1), th2 = wide(p.theta2), t = wide(p.t);
  return th1 * th2 / (wide(p.kappa1) * aa) * (Gb - t * aa / th1 * I) * (Gb - t * aa / th2 * I) *
         inv_factor(XMatrix(Gb - I / qk), "Gbar - 1/(q kappa1)", tol) * inv_factor(XMatrix(Gb - rho * I), "Gbar - rho", tol);
}

// W-bar = W T(Gbar)
XMatrix t_factor(const QParameters& p, const XMatrix& Gb, const Tolerances& tol) {
  const XMatrix I = xeye(Gb.rows()), Ki = wide(mat_inv(K_matrix(p)));
  const XC qk = wide(p.q * p.kappa1);
  return qk * inv_factor(XMatrix(Gb - Ki), "Gbar - K^-1", tol) * (Gb - I / qk) * Ki;
}

XMatrix x_step_G(const QParameters& p, const AccessoryState& s, const Tolerances& tol) {
  return r_factor(p, wide(s.F), tol) * inv_factor(wide(s.G), "G", tol) * wide(mat_inv(K_matrix(p)));
}

XMatrix x_step_F(const QParameters& p, const AccessoryState& s, const XMatrix& Gbar, const Tolerances& tol) {
  inv_factor(Gbar, "Gbar", tol);
  return s_factor(p, Gbar, tol) * inv_factor(wide(s.F), "F", tol) * wide(mat_inv(K_matrix(p)));
}

XMatrix x_step_W(const QParameters& p, const AccessoryState& s, const XMatrix& Gbar, const Tolerances& tol) {
  const XMatrix Wb = wide(s.W) * t_factor(p, Gbar, tol);
  inv_factor(Wb, "Wbar", tol);
  return Wb;
}

}  // namespace

CMatrix step_G(const QParameters& p, const AccessoryState& s, const Tolerances& tol) {
  return narrow(x_step_G(p, s, tol));
}

CMatrix step_F(const QParameters& p, const AccessoryState& s, const CMatrix& Gbar, const Tolerances& tol) {
  return narrow(x_step_F(p, s, wide(Gbar), tol));
}

CMatrix step_W(const QParameters& p, const AccessoryState& s, const CMatrix& Gbar, const Tolerances& tol) {
  return narrow(x_step_W(p, s, wide(Gbar), tol));
}

double step_conditioning(const QParameters& p, const AccessoryState& before, const AccessoryState& after) {
  const CMatrix I = eye(before.F.rows());
  const auto ds = derived_scalars(p);
  const CMatrix& Gb = after.G;
  return std::max({cond2(before.F), cond2(before.G), cond2(CMatrix(before.F - ds.alpha[2] * I)),
                   cond2(CMatrix(before.F - ds.alpha[3] * I)), cond2(Gb), cond2(CMatrix(Gb - I / (p.q * p.kappa1))),
                   cond2(CMatrix(Gb - ds.rho * I)), cond2(CMatrix(Gb - mat_inv(K_matrix(p)))), cond2(after.F)});
}

FlowStep flow_step(const QParameters& p, const AccessoryState& s, const Tolerances& tol) {
  FlowStep st;
  st.before_p = p;
  st.before = s;
  st.after_p = shifted(p);
  const XMatrix Gb = x_step_G(p, s, tol);
  st.after = {narrow(x_step_F(p, s, Gb, tol)), narrow(Gb), narrow(x_step_W(p, s, Gb, tol))};
  st.commutation_residual = commutation_residual(st.after_p, st.after.F, st.after.G);
  st.conditioning = step_conditioning(p, s, st.after);
  if (!(st.commutation_residual <= tol.commutation)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "after-state residual %.3g (step conditioning %.3g)", st.commutation_residual,
                  st.conditioning);
    throw Error(ErrorKind::CommutationDrift, buf);
  }
  return st;
}

FlowStep flow_step_inverse(const QParameters& p_after, const AccessoryState& after, const Tolerances& tol) {
  FlowStep st;
  st.before_p = p_after;
  st.before = after;
  QParameters p = p_after;
  p.t = p_after.t / p_after.q;
  st.after_p = p;
  const XMatrix Ki = wide(mat_inv(K_matrix(p))), Gb = wide(after.G);
  const XMatrix F = Ki * inv_factor(wide(after.F), "Fbar", tol) * s_factor(p, Gb, tol);
  const XMatrix G = Ki * inv_factor(Gb, "Gbar", tol) * r_factor(p, F, tol);
  const XMatrix W = wide(after.W) * inv_factor(t_factor(p, Gb, tol), "W-bar factor", tol);
  st.after = {narrow(F), narrow(G), narrow(W)};
  st.commutation_residual = commutation_residual(p, st.after.F, st.after.G);
  return st;
}

DeformationMatrices build_B(const QParameters& p, const AccessoryState& s, const AccessoryState& after,
                            const Tolerances& tol) {
  const Index m = p.m;
  const CMatrix I = eye(m), K = K_matrix(p), Ki = mat_inv(K), Wi = mat_inv(s.W, tol.cond_limit);
  const cplx q = p.q, t = p.t, k1 = p.kappa1, a1 = p.a[0], a2 = p.a[1];
  const DerivedBlocks d = derive_blocks(p, s, tol);
  const DerivedBlocks db = derive_blocks(shifted(p), after, tol);
  const CMatrix &F = s.F, &Fb = after.F, &Gb = after.G, &be = d.beta;
  const CMatrix Gbi = mat_inv(Gb, tol.cond_limit), Wbi = mat_inv(after.W, tol.cond_limit);
  const CMatrix iGK = inv_factor(CMatrix(I - Gb * K), "I - Gbar K", tol);
  const CMatrix iqG = inv_factor(CMatrix(I - q * k1 * Gb), "I - q kappa1 Gbar", tol);

  DeformationMatrices D;
  D.alpha_bar = db.alpha;
  D.B11 = q * s.W * K * iGK * Gb * K * (Ki * Gbi * (F - (a1 + a2) * t * I) + be) * Ki * Wi;
  D.B12 = q * s.W * K * iGK * Gb;
  D.B21 = q * k1 * ((Fb - q * a2 * t * I) * Gbi / (q * k1) - q * a1 * t * I + db.alpha) * iqG * Gb * K *
          (Ki * Gbi * (F - a2 * t * I) - a1 * t * I + be) * Ki * Wi;
  D.B22 = ((Fb - q * (a1 + a2) * t * I) * Gbi / (q * k1) + db.alpha) * (q * k1 * Gb) * iqG;
  D.B0.resize(2 * m, 2 * m);
  D.B0 << D.B11, D.B12, D.B21, D.B22;

  D.Phi1 = k1 * ((Fb - q * a2 * t * I) * Gbi / (q * k1) - q * a1 * t * I + db.alpha) * Ki * Wbi;
  D.Phi2 = k1 * ((Fb - q * a1 * t * I) * Gbi / (q * k1) - q * a2 * t * I + db.alpha) * Ki * Wbi;
  D.Psi1 = K * (-a1 * t * I + d.G2 * inv_factor(CMatrix(F - a1 * t * I), "F - a1 t", tol) + be) * Ki * Wi;
  D.Psi2 = K * (-a2 * t * I + d.G2 * inv_factor(CMatrix(F - a2 * t * I), "F - a2 t", tol) + be) * Ki * Wi;

  const auto A = assemble_A(p, s, tol), Ab = assemble_A(shifted(p), after, tol);
  const CMatrix& A2 = A.coeffs[2];
  D.L = A2 * D.B0 + Ab.coeffs[1] + q * (a1 + a2) * t * A2;
  D.Lprime = A.coeffs[1] + D.B0 * A2 / q + (a1 + a2) * t * A2;
  return D;
}

CMatrix eval_B(const QParameters& p, const CMatrix& B0, cplx x) {
  const cplx qt = p.q * p.t;
  return x * (x * CMatrix::Identity(B0.rows(), B0.cols()) + B0) / ((x - qt * p.a[0]) * (x - qt * p.a[1]));
}

double KernelIdentityResiduals::max() const {
  return std::max({phi_psi, phi_b12, b12_psi, reconstruction, L_Lprime, alpha_bar_routes});
}

KernelIdentityResiduals kernel_identities(const QParameters& p, const AccessoryState& before,
                                          const AccessoryState& after, const DeformationMatrices& D) {
  const Index m = p.m;
  const CMatrix I = eye(m), K = K_matrix(p);
  const cplx q = p.q, t = p.t, a1 = p.a[0], a2 = p.a[1], k1 = p.kappa1;
  const cplx c = q * (a1 - a2) * t;
  KernelIdentityResiduals r;
  r.phi_psi = (D.Phi1 + D.Psi2).norm() / D.Phi1.norm();
  r.phi_b12 = ((D.Phi1 - D.Phi2) * D.B12 - c * I).norm() / (std::abs(c) * I.norm());
  r.b12_psi = (D.B12 * (D.Psi1 - D.Psi2) - c * I).norm() / (std::abs(c) * I.norm());
  CMatrix top(2 * m, m), side(m, 2 * m);
  top << I, D.Phi1;
  side << D.Psi1, I;
  const CMatrix rec = -q * a1 * t * CMatrix::Identity(2 * m, 2 * m) + top * D.B12 * side;
  r.reconstruction = rel_diff(rec, D.B0);
  r.L_Lprime = rel_diff(D.Lprime, D.L);
  const CMatrix Gbi = mat_inv(after.G);
  const CMatrix route2 = -(1.0 / (q * k1)) * (after.F - q * a2 * t * I) * Gbi + q * a1 * t * I -
                         (1.0 / k1) * D.Psi2 * after.W * K;
  r.alpha_bar_routes = rel_diff(route2, D.alpha_bar);
  (void)before;
  return r;
}

std::vector<cplx> compat_samples(const QParameters& p, int n) {
  const double r = std::sqrt(std::abs(p.q * p.a[0] * p.t) * std::abs(p.a[2]));
  std::vector<cplx> xs;
  for (int k = 0; k < n; ++k) xs.push_back(std::polar(r, 2.0 * std::numbers::pi * (k + 0.5) / n));
  return xs;
}

double verify_compat(const QParameters& p, const AccessoryState& before, const FlowStep& step,
                     const std::vector<cplx>& xsamples, const Tolerances& tol) {
  const auto ds = derived_scalars(p);
  const cplx poles[] = {p.q * ds.alpha[0], p.q * ds.alpha[1], ds.alpha[0], ds.alpha[1]};
  for (cplx x : xsamples)
    for (cplx pole : poles)
      if (std::abs(x - pole) <= tol.pole_margin * std::max(1.0, std::abs(pole)))
        throw Error(ErrorKind::PoleProximity, "compatibility sample too close to a pole of B");
  const DeformationMatrices D = build_B(p, before, step.after, tol);
  const auto A = assemble_A(p, before, tol), Ab = assemble_A(step.after_p, step.after, tol);
  double worst = 0;
  for (cplx x : xsamples) {
    const CMatrix Abx = poly_eval(Ab, x), Bx = eval_B(p, D.B0, x);
    const CMatrix diff = Abx * Bx - eval_B(p, D.B0, p.q * x) * poly_eval(A, x);
    const double den = Abx.norm() * Bx.norm();
    worst = std::max(worst, den > 0 ? diff.norm() / den : diff.norm());
  }
  return worst;
}

Trajectory evolve(const QParameters& p, const AccessoryState& s, int nsteps, const EvolveOptions& opt,
                  const Tolerances& tol) {
  Trajectory tr;
  tr.final_params = p;
  TrajectoryRecord r0;
  r0.t = p.t;
  r0.state = s;
  r0.commutation_residual = commutation_residual(p, s.F, s.G);
  tr.records.push_back(r0);
  QParameters cur = p;
  AccessoryState st = s;
  try {
    for (int k = 0; k < nsteps; ++k) {
      FlowStep fs = flow_step(cur, st, tol);
      TrajectoryRecord rec;
      rec.t = fs.after_p.t;
      rec.commutation_residual = fs.commutation_residual;
      rec.conditioning = fs.conditioning;
      AccessoryState next = fs.after;
      if (opt.retract) {
        next = retract(fs.after_p, fs.after, tol);
        rec.retraction = std::max(rel_diff(next.F, fs.after.F), rel_diff(next.G, fs.after.G));
        fs.after = next;
      }
      if (opt.compat) rec.compat_residual = verify_compat(cur, st, fs, compat_samples(cur, opt.compat_points), tol);
      if (opt.kernel)
        rec.kernel_identity = kernel_identities(cur, st, fs.after, build_B(cur, st, fs.after, tol)).max();
      rec.state = next;
      tr.records.push_back(rec);
      cur = fs.after_p;
      st = next;
      tr.final_params = cur;
    }
  } catch (const Error& e) {
    tr.failed = true;
    tr.failure = e.what();
  }
  return tr;
}

}  // namespace qpvi
