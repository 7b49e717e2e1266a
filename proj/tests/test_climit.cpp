#include "qpvi/climit.hpp"
#include "qpvi/sampling.hpp"
#include "support.hpp"

using namespace qpvi;

namespace {

LimitDictionary zero_dictionary(double eps) {
  LimitDictionary d;
  d.epsilon = eps;
  return d;
}

CMatrix commutator_coefficient(const LimitDictionary& d, const PhasePoint& pt, int m) {
  AccessoryState s = phase_to_accessory(d, pt);
  CMatrix c = mat_inv(s.F) * s.G * s.F * mat_inv(s.G);
  return (c - CMatrix::Identity(m, m)) / d.epsilon;
}

}  // namespace

TEST_CASE("to_qparams: exponential images") {
  LimitDictionary d = zero_dictionary(0.1);
  d.sigma1 = 1.0;
  d = close_limit_relation(d, 2);
  QParameters p = to_qparams(d, 0.5, 2);
  CHECK_CLOSE(p.theta1, cplx(std::exp(-0.1)), 1e-15);
  CHECK_CLOSE(p.q, cplx(std::exp(-0.1)), 1e-15);

  QParameters z = to_qparams(close_limit_relation(zero_dictionary(0.05), 3), 0.5, 3);
  for (cplx v : {z.theta1, z.theta2, z.kappa1, z.kappa2, z.kappa3, z.a[0], z.a[1], z.a[2], z.a[3]})
    CHECK_CLOSE(v, cplx(1), 1e-15);
  CHECK_CLOSE(z.q, cplx(std::exp(-0.05)), 1e-15);

  Rng rng(1);
  LimitDictionary r = random_limit_dictionary(rng, 2, 1e-9);
  auto ds = derived_scalars(to_qparams(r, cplx(0.4, 0.1), 2));
  CHECK(std::abs(ds.alpha[0] - cplx(0.4, 0.1)) < 1e-8);
  CHECK(std::abs(ds.alpha[1] - cplx(0.4, 0.1)) < 1e-8);
  CHECK(std::abs(ds.alpha[2] - 1.0) < 1e-8);
  CHECK(std::abs(ds.alpha[3] - 1.0) < 1e-8);

  LimitDictionary broken = r;
  broken.mu[2] += 0.5;
  broken.epsilon = 0.1;
  CHECK_THROWS_AS(to_qparams(broken, 0.5, 2), Error);
}

TEST_CASE("param_dictionary: parameter identifications") {
  LimitDictionary d = zero_dictionary(0.01);
  d.sigma1 = 1.0;
  d = close_limit_relation(d, 2);
  DiffParameters dp = param_dictionary(d, 2);
  CHECK_CLOSE(dp.theta0, cplx(1), 1e-15);
  CHECK(std::abs(dp.theta1) == 0.0);
  CHECK(std::abs(dp.thetat) == 0.0);
  CHECK(fuchs_residual(dp) < 1e-14);

  DiffParameters zero = param_dictionary(close_limit_relation(zero_dictionary(0.01), 2), 2);
  for (cplx v : {zero.theta0, zero.theta1, zero.thetat, zero.thetaInf1, zero.thetaInf2, zero.thetaInf3})
    CHECK(std::abs(v) == 0.0);

  Rng rng(2);
  for (int m : {1, 2, 3}) {
    LimitDictionary r = random_limit_dictionary(rng, m, 0.01);
    DiffParameters x = param_dictionary(r, m);
    CMatrix target = (x.theta() + x.thetaInf1) * CMatrix::Identity(m, m) + x.Theta();
    CMatrix limit = (r.zeta_sum + r.sigma1 + r.sigma2 + r.mu[0]) * CMatrix::Identity(m, m) + r.M(m);
    CHECK((target - limit).norm() < 1e-14 * (1.0 + target.norm()));  // both vanish at m = 1
    CHECK(fuchs_residual(x) < 1e-10);
    CHECK(qfuchs_residual(to_qparams(r, 0.5, m)) < 1e-10);
    CHECK(std::abs(limit_relation_residual(r, m)) < 1e-14);
  }
}

TEST_CASE("variable change: trivial cases") {
  Rng rng(3);
  LimitDictionary d = random_limit_dictionary(rng, 2, 1e-3);
  const cplx t(0.5, 0.1);
  CHECK(rel_diff(qtilde(CMatrix::Zero(2, 2), t), CMatrix(t * CMatrix::Identity(2, 2))) < 1e-15);

  DiffParameters dp = param_dictionary(d, 2);
  PhasePoint pt = random_phase_point(rng, dp, t);
  LimitDictionary d0 = d;
  d0.epsilon = 0.0;
  AccessoryState s = phase_to_accessory(d0, pt);
  CMatrix I = CMatrix::Identity(2, 2);
  CMatrix expect = (s.F - t * I) * mat_inv(CMatrix(s.F - I));
  CHECK(rel_diff(s.G, expect) < 1e-13);
  CHECK((s.W - I).norm() == 0.0);
}

TEST_CASE("substitution image: O(eps^2) commutation residual, O(eps) limit coefficient") {
  Rng rng(4);
  const int m = 2;
  LimitDictionary d = random_limit_dictionary(rng, m, 1e-3);
  PhasePoint pt = random_phase_point(rng, param_dictionary(d, m), cplx(0.5, 0.05));

  double prev = 0;
  for (double eps : {2e-3, 1e-3, 5e-4}) {
    d.epsilon = eps;
    QParameters p = to_qparams(d, pt.t, m);
    AccessoryState s = phase_to_accessory(d, pt);
    double r = commutation_residual(p, s.F, s.G);
    if (prev > 0) CHECK(prev / r == doctest::Approx(4.0).epsilon(0.25));
    prev = r;
  }

  CMatrix target = (d.zeta_sum + d.sigma1 + d.sigma2 + d.mu[0]) * CMatrix::Identity(m, m) + d.M(m);
  d.epsilon = 1e-3;
  CMatrix c1 = commutator_coefficient(d, pt, m);
  d.epsilon = 5e-4;
  CMatrix c2 = commutator_coefficient(d, pt, m);
  CHECK(rel_diff(c1, target) < 1e-2);
  CHECK(rel_diff(c2, target) < rel_diff(c1, target));
  CHECK(rel_diff(CMatrix(2.0 * c2 - c1), target) < 1e-5);
}

TEST_CASE("consistent lift lands on the constraint manifold within O(eps) of the substitution") {
  Rng rng(5);
  for (int m : {1, 2, 3}) {
    LimitDictionary d = random_limit_dictionary(rng, m, 1e-3);
    PhasePoint pt = random_phase_point(rng, param_dictionary(d, m), cplx(0.5, 0.05));
    QParameters p = to_qparams(d, pt.t, m);
    AccessoryState s = consistent_lift(d, pt);
    AccessoryState raw = phase_to_accessory(d, pt);
    CHECK(commutation_residual(p, s.F, s.G) < 1e-10);
    CHECK(rel_diff(s.F, raw.F) < 50 * d.epsilon);
  }
}

TEST_CASE("limit_trajectory_error: eps = 0 rejected, slope one for m = 1") {
  Rng rng(6);
  LimitDictionary d = random_limit_dictionary(rng, 1, 0.0);
  PhasePoint pt = random_phase_point(rng, param_dictionary(d, 1), 0.5);
  try {
    limit_trajectory_error(d, pt, 10);
    FAIL("expected PreconditionViolation");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::PreconditionViolation);
  }

  std::vector<double> eps, err;
  for (double e : {1e-2, 5e-3, 2.5e-3}) {
    d.epsilon = e;
    auto r = limit_trajectory_error(d, pt, static_cast<int>(std::lround(0.3 / e)));
    eps.push_back(e);
    err.push_back(r.err);
  }
  CHECK(fit_slope(eps, err) == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("limit_trajectory_error: short m = 2 window") {
  Rng rng(7);
  LimitDictionary d = random_limit_dictionary(rng, 2, 1e-3);
  PhasePoint pt = random_phase_point(rng, param_dictionary(d, 2), 0.5);
  auto r = limit_trajectory_error(d, pt, 40);
  CHECK(r.err < 5e-2);
  CHECK(r.qsteps == 40);
}

TEST_CASE("residue limit: first order, any gauge U") {
  Rng rng(8);
  const std::vector<cplx> xs{cplx(0.3, 0.7), cplx(-0.8, 0.2), cplx(1.7, -0.5), cplx(2.5, 1.0)};
  for (int m : {1, 2}) {
    LimitDictionary d = random_limit_dictionary(rng, m, 1e-3);
    PhasePoint pt = random_phase_point(rng, param_dictionary(d, m), 0.5);
    pt.U = CMatrix::Identity(m, m) + random_matrix(rng, m, 0.3);
    double e1 = residue_limit_error(d, pt, xs);
    d.epsilon = 5e-4;
    double e2 = residue_limit_error(d, pt, xs);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.15));
    if (m == 2) {
      d.epsilon = 1e-4;
      CHECK(residue_limit_error(d, pt, xs) < 1e-2);
    }
  }
  LimitDictionary d = random_limit_dictionary(rng, 1, 1e-3);
  PhasePoint pt = random_phase_point(rng, param_dictionary(d, 1), 0.5);
  CHECK_THROWS_AS(residue_limit_error(d, pt, {cplx(1.001)}), Error);
}

TEST_CASE("fit_slope on exact powers") {
  std::vector<double> x{1, 2, 4, 8}, y;
  for (double v : x) y.push_back(3.0 * v * v);
  CHECK(fit_slope(x, y) == doctest::Approx(2.0));
}
