#include "qpvi/sampling.hpp"

namespace qpvi {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - u keeps the logarithm finite
  const double u1 = 1.0 - uniform(), u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1)), a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

cplx Rng::unit_disk() {
  const double r = std::sqrt(uniform());
  return std::polar(r, 2.0 * std::numbers::pi * uniform());
}

CMatrix random_matrix(Rng& rng, Index n, double scale) {
  CMatrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = rng.cnormal(scale);
  return a;
}

QParameters random_qparams(Rng& rng, int m, const DrawOptions& opt) {
  const double spread = opt.spread;
  for (int attempt = 0; attempt < opt.max_tries; ++attempt) {
    QParameters p;
    p.m = m;
    const double mod = opt.q_modulus_min + (opt.q_modulus_max - opt.q_modulus_min) * rng.uniform();
    p.q = std::polar(mod, 0.1 * rng.normal());
    p.kappa1 = std::exp(rng.cnormal(spread));
    p.kappa2 = std::exp(rng.cnormal(spread));
    p.kappa3 = std::exp(rng.cnormal(spread));
    const double base[4] = {1.0, 2.0, 3.0, 4.5};
    for (size_t j = 0; j < 4; ++j) p.a[j] = base[j] * std::exp(rng.cnormal(spread));
    p.t = 0.7 * std::exp(rng.cnormal(spread));
    // theta1 theta2 closes the q-Fuchs relation, split evenly so that neither A(0) eigenvalue
    // dominates; drawing kappa3 directly keeps K well scaled
    const cplx prod_a = p.a[0] * p.a[1] * p.a[2] * p.a[3];
    const cplx lhs = std::pow(p.kappa1 * prod_a, static_cast<double>(m)) * std::pow(p.kappa2, static_cast<double>(m - 1)) * p.kappa3;
    const cplx th12 = std::pow(lhs, 1.0 / m);
    p.theta1 = std::sqrt(th12) * std::exp(rng.cnormal(spread));
    p.theta2 = th12 / p.theta1;

    // keep clear of resonances by a margin
    const auto ds = derived_scalars(p);
    auto far = [&](cplx a, cplx b) { return std::abs(a - b) > opt.resonance_margin * std::max(std::abs(a), std::abs(b)); };
    bool ok = true;
    for (size_t i = 0; i < 4 && ok; ++i)
      for (size_t j = 0; j < 4 && ok; ++j)
        if (i != j) ok = far(ds.alpha[i], ds.alpha[j]) && far(p.q * ds.alpha[i], ds.alpha[j]);
    for (cplx k : {p.kappa2, p.kappa3})
      ok = ok && far(p.kappa1, k) && far(p.q * p.kappa1, k) && far(k, 1.0 / (p.q * p.kappa1));
    ok = ok && far(p.kappa2, p.kappa3);
    if (!ok) continue;
    try {
      validate(p);
    } catch (const Error&) {
      continue;
    }
    return p;
  }
  throw Error(ErrorKind::PreconditionViolation, "random_qparams: no admissible draw");
}

double state_condition(const QParameters& p, const AccessoryState& s) {
  const DerivedBlocks b = derive_blocks(p, s);
  return std::max({cond2(s.F), cond2(s.G), cond2(b.G1), cond2(b.G2)});
}

AdmissibleDraw random_admissible(Rng& rng, int m, const DrawOptions& opt, const Tolerances& tol) {
  return random_state(rng, random_qparams(rng, m, opt), opt, tol);
}

AdmissibleDraw random_state(Rng& rng, const QParameters& p, const DrawOptions& opt, const Tolerances& tol) {
  const int m = p.m;
  AdmissibleDraw d;
  d.p = p;
  for (int attempt = 1; attempt <= opt.max_tries; ++attempt) {
    d.tries = attempt;
    d.f.assign(static_cast<size_t>(m), 0.0);
    d.g.assign(static_cast<size_t>(m), 0.0);
    for (auto& v : d.f) v = rng.cnormal();
    for (auto& v : d.g) v = rng.cnormal();
    try {
      d.s = build_accessory(d.p, d.f, d.g, tol);
      d.cond = state_condition(d.p, d.s);
    } catch (const Error&) {
      continue;
    }
    if (d.cond <= opt.cond_cap) return d;
  }
  throw Error(ErrorKind::PreconditionViolation, "random_state: no admissible state within max_tries");
}

PhasePoint random_phase_point(Rng& rng, const DiffParameters& d, cplx t, double scale) {
  const Index m = d.m;
  const cplx c1 = m > 1 ? d.theta() + d.thetaInf1 + d.thetaInf2 : cplx(0);
  CVector qd(m), u(m), v(m);
  for (Index k = 0; k < m; ++k) qd(k) = 0.3 + 0.4 * static_cast<double>(k) + rng.cnormal(scale);
  for (Index i = 0; i < m; ++i) u(i) = 1.0 + rng.cnormal(0.3);
  for (Index i = 0; i < m; ++i) v(i) = -c1 / u(i);
  // [P', diag(q)] = c1 I + u v^T; v^T u = -m c1 makes the right side have spectrum
  // (c1 x (m-1), (1-m) c1), i.e. (theta + thetaInf1) I + Theta after the frame change below
  const CMatrix Cp = c1 * CMatrix::Identity(m, m) + u * v.transpose();
  CMatrix Pp(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) Pp(i, j) = i != j ? Cp(i, j) / (qd(j) - qd(i)) : rng.cnormal(0.5);
  CMatrix S = CMatrix::Identity(m, m);
  if (m > 1 && c1 != cplx(0)) {
    Eigen::JacobiSVD<CMatrix> svd(CMatrix(v.transpose()), Eigen::ComputeFullV);
    S.leftCols(m - 1) = svd.matrixV().rightCols(m - 1);
    S.col(m - 1) = u;
  }
  const CMatrix Si = mat_inv(S);
  PhasePoint pt;
  pt.Q = Si * qd.asDiagonal() * S;
  pt.P = Si * Pp * S;
  pt.U = CMatrix::Identity(m, m);
  pt.t = t;
  return pt;
}

DiffParameters random_diff_parameters(Rng& rng, int m, double scale) {
  const cplx th0 = rng.cnormal(scale), th1 = rng.cnormal(scale), tht = rng.cnormal(scale);
  const cplx ti1 = rng.cnormal(scale), ti2 = rng.cnormal(scale);
  return make_diff_parameters(m, th0, th1, tht, ti1, ti2);
}

LimitDictionary random_limit_dictionary(Rng& rng, int m, double eps, double scale) {
  LimitDictionary d;
  d.epsilon = eps;
  d.sigma1 = rng.cnormal(scale);
  d.sigma2 = rng.cnormal(scale);
  for (auto& z : d.zeta) z = rng.cnormal(scale);
  d.mu[0] = rng.cnormal(scale);
  d.mu[1] = rng.cnormal(scale);
  return close_limit_relation(d, m);
}

}  // namespace qpvi
