#include "qpvi/climit.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace qpvi {

namespace {

CMatrix eye(Index m) { return CMatrix::Identity(m, m); }

// R_eps(F) = (F - e^(eps zeta1) t)(F - e^(eps zeta4))^-1
CMatrix r_eps(const LimitDictionary& d, cplx t, const CMatrix& F, const Tolerances& tol) {
  const CMatrix I = eye(F.rows());
  const double e = d.epsilon;
  return (F - std::exp(e * d.zeta[0]) * t * I) * mat_inv(CMatrix(F - std::exp(e * d.zeta[3]) * I), tol.cond_limit);
}

cplx g_prefactor(const LimitDictionary& d) { return std::exp(d.epsilon * (d.zeta[1] + d.zeta[3] + d.sigma2)); }

}  // namespace

CMatrix LimitDictionary::M(int m) const {
  CMatrix D = CMatrix::Zero(m, m);
  for (int i = 0; i < m - 1; ++i) D(i, i) = mu[1];
  D(m - 1, m - 1) = mu[2];
  return D;
}

LimitDictionary with_zeta_sum(LimitDictionary d) {
  d.zeta_sum = d.zeta[0] + d.zeta[1] + d.zeta[2] + d.zeta[3];
  return d;
}

LimitDictionary close_limit_relation(LimitDictionary d, int m) {
  d = with_zeta_sum(d);
  const double md = m;
  d.mu[2] = -(md * d.mu[0] + (md - 1) * d.mu[1] + md * d.zeta_sum + md * (d.sigma1 + d.sigma2));
  return d;
}

cplx limit_relation_residual(const LimitDictionary& d, int m) {
  const double md = m;
  const cplx zs = d.zeta[0] + d.zeta[1] + d.zeta[2] + d.zeta[3];
  return md * d.mu[0] + (md - 1) * d.mu[1] + d.mu[2] + md * zs + md * (d.sigma1 + d.sigma2);
}

// Only the q-Fuchs relation is checked: at eps = 0, or for the zero dictionary, all the
// exponentials coincide and the resonance conditions of validate() cannot hold.
QParameters to_qparams(const LimitDictionary& d, cplx t, int m, const Tolerances& tol) {
  const double e = d.epsilon;
  QParameters p;
  p.m = m;
  p.q = std::exp(-e);
  p.t = t;
  p.theta1 = std::exp(-e * d.sigma1);
  p.theta2 = std::exp(-e * d.sigma2);
  for (size_t i = 0; i < 4; ++i) p.a[i] = std::exp(e * d.zeta[i]);
  p.kappa1 = std::exp(e * d.mu[0]);
  p.kappa2 = std::exp(e * d.mu[1]);
  p.kappa3 = std::exp(e * d.mu[2]);
  const double r = qfuchs_residual(p);
  if (!(r <= tol.fuchs)) throw Error(ErrorKind::FuchsViolation, "limit dictionary breaks the q-Fuchs relation");
  return p;
}

DiffParameters param_dictionary(const LimitDictionary& d, int m, const Tolerances& tol) {
  const cplx shift = d.zeta[1] + d.zeta[3] + d.sigma2;
  DiffParameters x;
  x.m = m;
  x.theta0 = d.sigma1 - d.sigma2;
  x.theta1 = d.zeta[2] - d.zeta[3];
  x.thetat = d.zeta[0] - d.zeta[1];
  x.thetaInf1 = d.mu[0] + shift;
  x.thetaInf2 = d.mu[1] + shift;
  x.thetaInf3 = d.mu[2] + shift;
  validate(x, tol.diff_fuchs);
  return x;
}

CMatrix qtilde(const CMatrix& Q, cplx t) {
  const CMatrix I = eye(Q.rows());
  return mat_inv(CMatrix(Q - I)) * (Q - t * I);
}

VariableBridge variable_bridge(const LimitDictionary& d, const PhasePoint& pt) {
  const CMatrix I = eye(pt.Q.rows()), &Q = pt.Q, &P = pt.P;
  const cplx t = pt.t;
  VariableBridge b;
  b.Qtilde = qtilde(Q, t);
  const CMatrix inner = P * (Q - I) + (d.zeta[0] + d.zeta[3] + d.mu[0] + d.sigma1) * I -
                        (d.zeta[0] - d.zeta[1]) * mat_inv(Q) +
                        (d.sigma1 - d.sigma2) * (t - 1.0) * mat_inv(CMatrix(Q - t * I));
  b.Ptilde = (Q - I) * inner / (t - 1.0);
  return b;
}

AccessoryState phase_to_accessory(const LimitDictionary& d, const PhasePoint& pt, const Tolerances& tol) {
  const Index m = pt.Q.rows();
  const CMatrix I = eye(m);
  const VariableBridge b = variable_bridge(d, pt);
  const CMatrix X = b.Qtilde * b.Ptilde;
  AccessoryState s;
  s.F = b.Qtilde;
  s.G = g_prefactor(d) * CMatrix(d.epsilon * (X + I)).exp() * r_eps(d, pt.t, b.Qtilde, tol);
  s.W = I;
  return s;
}

AccessoryState consistent_lift(const LimitDictionary& d, const PhasePoint& pt, const Tolerances& tol) {
  const Index m = pt.Q.rows();
  const CMatrix I = eye(m);
  const QParameters p = to_qparams(d, pt.t, static_cast<int>(m), tol);
  const VariableBridge b = variable_bridge(d, pt);
  const CMatrix X = b.Qtilde * b.Ptilde;

  const CMatrix h = normal_gauge(b.Qtilde), hi = mat_inv(h, tol.cond_limit);
  const CMatrix Fn = h * b.Qtilde * hi;
  std::vector<cplx> f{Fn(m - 1, 0)};
  for (Index j = 0; j + 1 < m; ++j) f.push_back(Fn(m - 2, j));
  const CMatrix Fe = normal_form_F(f, solve_last_row(p, f, tol));
  const CMatrix F = hi * Fe * h;

  const CMatrix G = g_prefactor(d) * CMatrix(d.epsilon * (X + I)).exp() * r_eps(d, pt.t, F, tol);
  const CMatrix Gn = h * G * hi;
  CMatrix Ge = CMatrix::Zero(m, m);
  for (const auto& V : kernel_basis(omega_matrix(p, Fe), static_cast<int>(m), nullptr, tol, omega_scale(p, Fe)))
    Ge += (V.conjugate().cwiseProduct(Gn)).sum() * V;
  return {F, hi * Ge * h, I};
}

LimitTrajectory limit_trajectory_error(const LimitDictionary& d, const PhasePoint& pt0, int n_qsteps, int ode_steps,
                                       const Tolerances& tol) {
  if (!(d.epsilon > 0)) throw Error(ErrorKind::PreconditionViolation, "epsilon must be positive");
  const int m = static_cast<int>(pt0.Q.rows());
  const QParameters p = to_qparams(d, pt0.t, m, tol);
  const DiffParameters dp = param_dictionary(d, m, tol);
  const AccessoryState s = consistent_lift(d, pt0, tol);

  // at small eps the invariant manifold is transversally unstable (off-manifold error grows
  // roughly threefold per step), so the q-orbit is retracted after every step
  EvolveOptions opt;
  opt.retract = true;
  opt.compat = false;
  const Trajectory tr = evolve(p, s, n_qsteps, opt, tol);
  if (tr.failed) throw Error(ErrorKind::SingularEncounter, "q-evolution failed: " + tr.failure);

  LimitTrajectory out;
  out.eps = d.epsilon;
  out.qsteps = n_qsteps;
  out.t_end = tr.records.back().t;
  const auto ode = integrate(dp, pt0, out.t_end, ode_steps, tol);
  const CMatrix Qt = qtilde(ode.points.back().Q, out.t_end);
  out.err = (tr.records.back().state.F - Qt).norm() / Qt.norm();
  return out;
}

double residue_limit_error(const LimitDictionary& d, const PhasePoint& pt, const std::vector<cplx>& x_samples,
                           const Tolerances& tol) {
  const Index m = pt.Q.rows();
  const cplx t = pt.t;
  for (cplx x : x_samples)
    for (cplx pole : {cplx(0), cplx(1), t})
      if (std::abs(x - pole) < 1e-2) throw Error(ErrorKind::PoleProximity, "sample too close to 0, 1 or t");
  const QParameters p = to_qparams(d, t, static_cast<int>(m), tol);
  const ResidueSet rs = build_residues(param_dictionary(d, static_cast<int>(m), tol), pt, tol);
  AccessoryState s = consistent_lift(d, pt, tol);
  s.W = d.epsilon * mat_inv(pt.U, tol.cond_limit) * (pt.Q - eye(m));
  const auto A = assemble_A(p, s, tol);
  const CMatrix I2 = eye(2 * m);
  double worst = 0;
  for (cplx x : x_samples) {
    const CMatrix L = (I2 - poly_eval(A, x) / ((x - 1.0) * (x - t))) / (d.epsilon * x);
    const CMatrix R = (rs.A0 + d.sigma2 * I2) / x + (rs.A1 + d.zeta[3] * I2) / (x - 1.0) +
                      (rs.At + d.zeta[1] * I2) / (x - t);
    worst = std::max(worst, rel_diff(L, R));
  }
  return worst;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const Index n = static_cast<Index>(x.size());
  if (n < 2 || y.size() != x.size()) throw Error(ErrorKind::PreconditionViolation, "fit_slope needs >= 2 points");
  Mat<double> A(n, 2);
  Vec<double> b(n);
  for (Index i = 0; i < n; ++i) {
    A(i, 0) = std::log(x[static_cast<size_t>(i)]);
    A(i, 1) = 1.0;
    b(i) = std::log(y[static_cast<size_t>(i)]);
  }
  return A.colPivHouseholderQr().solve(b)(0);
}

}  // namespace qpvi
