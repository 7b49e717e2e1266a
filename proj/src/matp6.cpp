#include "qpvi/matp6.hpp"

namespace qpvi {

namespace {

CMatrix eye(Index m) { return CMatrix::Identity(m, m); }

CMatrix residual_matrix(const DiffParameters& d, const PhasePoint& pt) {
  const CMatrix& Q = pt.Q;
  const CMatrix& P = pt.P;
  return P * Q - Q * P - (d.theta() + d.thetaInf1) * eye(d.m) - d.Theta();
}

// tr[Q(Q-1)(Q-t)P^2 + (C Q(Q-1) + thetat (Q-1)(Q-t) + (theta + 2 thetaInf1 - 1) Q(Q-t)) P
//    + (theta + thetaInf1)(theta0 + thetat + thetaInf1) Q] / (t(t-1))
cplx ham_with(const DiffParameters& d, const PhasePoint& pt, const CMatrix& C) {
  const CMatrix I = eye(d.m), &Q = pt.Q, &P = pt.P;
  const cplx t = pt.t;
  const CMatrix Q1 = Q - I, Qt = Q - t * I;
  const CMatrix M = Q * Q1 * Qt * P * P +
                    (C * Q * Q1 + d.thetat * Q1 * Qt + (d.theta() + 2.0 * d.thetaInf1 - 1.0) * Q * Qt) * P +
                    (d.theta() + d.thetaInf1) * (d.theta0 + d.thetat + d.thetaInf1) * Q;
  return M.trace() / (t * (t - 1.0));
}

}  // namespace

CMatrix DiffParameters::Theta() const {
  CMatrix T = CMatrix::Zero(m, m);
  for (int i = 0; i < m - 1; ++i) T(i, i) = thetaInf2;
  T(m - 1, m - 1) = thetaInf3;
  return T;
}

DiffParameters make_diff_parameters(int m, cplx theta0, cplx theta1, cplx thetat, cplx thetaInf1, cplx thetaInf2) {
  DiffParameters d;
  d.m = m;
  d.theta0 = theta0;
  d.theta1 = theta1;
  d.thetat = thetat;
  d.thetaInf1 = thetaInf1;
  d.thetaInf2 = thetaInf2;
  d.thetaInf3 = -(static_cast<double>(m) * (theta0 + theta1 + thetat + thetaInf1) + static_cast<double>(m - 1) * thetaInf2);
  return d;
}

double fuchs_residual(const DiffParameters& d) {
  const double m = d.m;
  const cplx s = m * (d.theta() + d.thetaInf1) + (m - 1) * d.thetaInf2 + d.thetaInf3;
  const double scale = std::max({1.0, std::abs(d.theta0), std::abs(d.theta1), std::abs(d.thetat),
                                 std::abs(d.thetaInf1), std::abs(d.thetaInf2), std::abs(d.thetaInf3)});
  return std::abs(s) / scale;
}

void validate(const DiffParameters& d, double tol) {
  if (d.m < 1) throw Error(ErrorKind::PreconditionViolation, "m must be >= 1");
  const double r = fuchs_residual(d);
  if (!(r <= tol)) throw Error(ErrorKind::FuchsViolation, "Fuchs residual " + std::to_string(r));
}

double canonical_residual(const DiffParameters& d, const PhasePoint& pt) { return residual_matrix(d, pt).norm(); }

ResidueSet build_residues(const DiffParameters& d, const PhasePoint& pt, const Tolerances& tol) {
  const Index m = d.m;
  const CMatrix I = eye(m), O = CMatrix::Zero(m, m), &Q = pt.Q, &P = pt.P, Th = d.Theta();
  const cplx t = pt.t;
  auto outer = [&](const CMatrix& top, const CMatrix& bot, const CMatrix& l, const CMatrix& r) {
    CMatrix c(2 * m, m), row(m, 2 * m);
    c << top, bot;
    row << l, r;
    return CMatrix(c * row);
  };
  ResidueSet rs;
  rs.A0hat = outer(I, O, d.theta0 * I, Q / t - I);
  rs.A1hat = outer(I, P * Q - Th, d.theta1 * I - P * Q + Th, I);
  rs.Athat = outer(I, t * P, d.thetat * I + Q * P, -Q / t);
  const CMatrix QP = Q * P + (d.theta() + d.thetaInf1) * I;
  rs.Zres = mat_inv(CMatrix(d.thetaInf1 * I - Th), tol.cond_limit) *
            (-d.theta1 * QP + QP * QP - t * (P * Q + d.thetat * I) * P);
  rs.X.resize(2 * m, 2 * m);
  rs.X << I, O, rs.Zres, I;
  CMatrix Uo = CMatrix::Identity(2 * m, 2 * m);
  Uo.topLeftCorner(m, m) = pt.U;
  const CMatrix S = rs.X * Uo, Si = mat_inv(S, tol.cond_limit);
  rs.A0 = Si * rs.A0hat * S;
  rs.A1 = Si * rs.A1hat * S;
  rs.At = Si * rs.Athat * S;
  rs.Ainf = -(rs.A0 + rs.A1 + rs.At);
  return rs;
}

Rhs rhs(const DiffParameters& d, const PhasePoint& pt) {
  const CMatrix I = eye(d.m), &Q = pt.Q, &P = pt.P;
  const cplx t = pt.t, th0 = d.theta0, tht = d.thetat, th = d.theta(), ti1 = d.thetaInf1;
  const CMatrix Q1 = Q - I, Qt = Q - t * I;
  Rhs r;
  r.dQ = Qt * P * Q * Q1 + Q * Q1 * P * Qt + (th0 + 1.0) * Q * Q1 + (th + 2.0 * ti1 - 1.0) * Q * Qt + tht * Q1 * Qt;
  r.dP = -Q1 * P * Qt * P - P * Qt * P * Q - P * Q * Q1 * P -
         ((th0 + 1.0) * (P * Q1 + Q * P) + (th + 2.0 * ti1 - 1.0) * (P * Qt + Q * P) + tht * (P * Qt + Q1 * P)) -
         (th + ti1) * (th0 + tht + ti1) * I;
  r.dU = (Qt * (P * Q + Q * P) + (2.0 * th0 + d.theta1 + 2.0 * tht + 2.0 * ti1) * Q - tht * t * I) * pt.U;
  const cplx s = t * (t - 1.0);
  r.dQ /= s;
  r.dP /= s;
  r.dU /= s;
  return r;
}

cplx ham(const DiffParameters& d, const PhasePoint& pt) {
  const CMatrix C = (d.theta0 + 1.0 - d.theta() - d.thetaInf1) * eye(d.m) - d.Theta();
  return ham_with(d, pt, C);
}

cplx ham_invariant(const DiffParameters& d, const PhasePoint& pt) {
  const CMatrix C = (d.theta0 + 1.0) * eye(d.m) - (pt.P * pt.Q - pt.Q * pt.P);
  return ham_with(d, pt, C);
}

IntegrationResult integrate(const DiffParameters& d, const PhasePoint& pt, cplx t_end, int nsteps,
                            const Tolerances& tol) {
  (void)tol;
  if (nsteps < 0) throw Error(ErrorKind::PreconditionViolation, "nsteps must be >= 0");
  IntegrationResult out;
  out.points.push_back(pt);
  const CMatrix res0 = residual_matrix(d, pt);
  out.canonical_drift.push_back(0.0);
  if (nsteps == 0) return out;

  struct Y {
    CMatrix Q, P, U;
  };
  auto check = [&](cplx t) {
    if (std::abs(t) < 1e-3 || std::abs(t - 1.0) < 1e-3)
      throw Error(ErrorKind::SingularEncounter, "path passes a fixed singularity");
  };
  // s = log t, so dY/ds = t dY/dt
  auto f = [&](cplx s, const Y& y) {
    const cplx t = std::exp(s);
    check(t);
    Rhs r = rhs(d, {y.Q, y.P, y.U, t});
    return Y{t * r.dQ, t * r.dP, t * r.dU};
  };
  auto axpy = [](const Y& y, cplx h, const Y& k) { return Y{y.Q + h * k.Q, y.P + h * k.P, y.U + h * k.U}; };

  const cplx h = std::log(t_end / pt.t) / static_cast<double>(nsteps);
  cplx s = std::log(pt.t);
  Y y{pt.Q, pt.P, pt.U};
  for (int k = 0; k < nsteps; ++k) {
    const Y k1 = f(s, y), k2 = f(s + h / 2.0, axpy(y, h / 2.0, k1)), k3 = f(s + h / 2.0, axpy(y, h / 2.0, k2)),
            k4 = f(s + h, axpy(y, h, k3));
    y.Q += h / 6.0 * (k1.Q + 2.0 * k2.Q + 2.0 * k3.Q + k4.Q);
    y.P += h / 6.0 * (k1.P + 2.0 * k2.P + 2.0 * k3.P + k4.P);
    y.U += h / 6.0 * (k1.U + 2.0 * k2.U + 2.0 * k3.U + k4.U);
    s += h;
    // land exactly on t_end at the last step
    const cplx t = (k + 1 == nsteps) ? t_end : std::exp(s);
    if (!y.Q.allFinite() || !y.P.allFinite() || !y.U.allFinite())
      throw Error(ErrorKind::SingularEncounter, "solution blew up near t = " + std::to_string(std::abs(t)));
    PhasePoint p{y.Q, y.P, y.U, t};
    out.canonical_drift.push_back((residual_matrix(d, p) - res0).norm());
    out.points.push_back(std::move(p));
  }
  return out;
}

}  // namespace qpvi
