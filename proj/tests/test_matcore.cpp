#include "qpvi/matcore.hpp"
#include "qpvi/sampling.hpp"
#include "support.hpp"

using namespace qpvi;

TEST_CASE("mat_inv: identity, diagonal, random residual") {
  CHECK((mat_inv<cplx>(CMatrix::Identity(3, 3)) - CMatrix::Identity(3, 3)).norm() == 0.0);

  Mat<double> d(2, 2);
  d << 2, 0, 0, 4;
  Mat<double> di = mat_inv(d);
  CHECK(di(0, 0) == doctest::Approx(0.5));
  CHECK(di(1, 1) == doctest::Approx(0.25));
  CHECK(di(0, 1) == 0.0);

  Rng rng(7);
  CMatrix a = CMatrix::Identity(5, 5) * 3.0 + random_matrix(rng, 5);
  CMatrix b = mat_inv(a);
  CHECK((a * b - CMatrix::Identity(5, 5)).norm() < 1e-12 * a.norm() * 5);
}

TEST_CASE("mat_inv: singular input is an error") {
  CMatrix s = CMatrix::Zero(2, 2);
  s(0, 0) = 1.0;
  s(1, 0) = 2.0;
  try {
    mat_inv(s);
    FAIL("expected SingularMatrix");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularMatrix);
  }
  CMatrix near = CMatrix::Identity(2, 2);
  near(1, 1) = 1e-14;
  CHECK_THROWS_AS(mat_inv(near), Error);
  CHECK_NOTHROW(mat_inv(near, 1e15));
}

TEST_CASE("poly_eval: Horner against term-by-term sums") {
  MatrixPolynomial<cplx> c{{CMatrix::Identity(2, 2)}};
  CHECK((poly_eval(c, cplx(7)) - CMatrix::Identity(2, 2)).norm() == 0.0);

  MatrixPolynomial<cplx> lin{{CMatrix::Zero(2, 2), CMatrix::Identity(2, 2)}};
  CHECK((poly_eval(lin, cplx(3)) - 3.0 * CMatrix::Identity(2, 2)).norm() == 0.0);

  Rng rng(3);
  CMatrix A = random_matrix(rng, 2), B = random_matrix(rng, 2), C = random_matrix(rng, 2);
  MatrixPolynomial<cplx> p{{C, B, A}};
  CHECK((poly_eval(p, cplx(2)) - (A * 4.0 + B * 2.0 + C)).norm() < 1e-14);

  MatrixPolynomial<double> pr{{Mat<double>::Identity(2, 2), Mat<double>::Identity(2, 2)}};
  CHECK(poly_eval(pr, 2.0)(1, 1) == doctest::Approx(3.0));
}

TEST_CASE("poly_det: small exact cases") {
  auto one = poly_det(MatrixPolynomial<cplx>{{CMatrix::Identity(2, 2)}});
  REQUIRE(one.size() == 1);
  CHECK_CLOSE(one[0], cplx(1), 1e-14);

  const cplx c(0.7, -0.2);
  MatrixPolynomial<cplx> lin{{CMatrix::Constant(1, 1, -c), CMatrix::Identity(1, 1)}};
  auto l = poly_det(lin);
  REQUIRE(l.size() == 2);
  CHECK_CLOSE(l[0], -c, 1e-14);
  CHECK_CLOSE(l[1], cplx(1), 1e-14);

  // diag(x-1, x-2)
  CMatrix a0 = CMatrix::Zero(2, 2), a1 = CMatrix::Identity(2, 2);
  a0(0, 0) = -1.0;
  a0(1, 1) = -2.0;
  auto q = poly_det(MatrixPolynomial<cplx>{{a0, a1}});
  REQUIRE(q.size() == 3);
  CHECK_CLOSE(q[0], cplx(2), 1e-13);
  CHECK_CLOSE(q[1], cplx(-3), 1e-13);
  CHECK_CLOSE(q[2], cplx(1), 1e-13);
}

TEST_CASE("poly_det is multiplicative") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    MatrixPolynomial<cplx> p{{random_matrix(rng, 2), random_matrix(rng, 2)}};
    MatrixPolynomial<cplx> r{{random_matrix(rng, 2), random_matrix(rng, 2)}};
    auto lhs = poly_det(poly_mul(p, r));
    auto rhs = spoly_mul(poly_det(p), poly_det(r));
    REQUIRE(lhs.size() == rhs.size());
    double scale = 0;
    for (auto v : rhs) scale = std::max(scale, std::abs(v));
    for (size_t k = 0; k < lhs.size(); ++k) CHECK(std::abs(lhs[k] - rhs[k]) < 1e-10 * scale);
  }
}

TEST_CASE("rank_tol: zero, identity, rank one, unitary invariance") {
  CHECK(rank_tol<cplx>(CMatrix::Zero(4, 4)) == 0);
  CHECK(rank_tol<cplx>(CMatrix::Identity(4, 4)) == 4);
  Rng rng(5);
  CVector u = random_matrix(rng, 3).col(0), v = random_matrix(rng, 3).col(1);
  CMatrix r1 = u * v.transpose();
  CHECK(rank_tol(r1) == 1);

  CMatrix r2 = random_matrix(rng, 5).leftCols(2) * random_matrix(rng, 5).topRows(2);
  Eigen::HouseholderQR<CMatrix> qr(random_matrix(rng, 5));
  CMatrix Uq = qr.householderQ();
  CHECK(rank_tol(r2) == 2);
  CHECK(rank_tol(CMatrix(Uq * r2)) == 2);
  CHECK(rank_tol(CMatrix(r2 * Uq.adjoint())) == 2);
}

TEST_CASE("eig_clustered: diagonal, identity, companion") {
  Mat<double> d = Mat<double>::Zero(3, 3);
  d.diagonal() << 5, 5, 7;
  auto c = eig_clustered(d);
  REQUIRE(c.size() == 2);
  CHECK_CLOSE(c[0].value, cplx(5), 1e-12);
  CHECK(c[0].multiplicity == 2);
  CHECK_CLOSE(c[1].value, cplx(7), 1e-12);
  CHECK(c[1].multiplicity == 1);

  auto id = eig_clustered<cplx>(CMatrix::Identity(3, 3));
  REQUIRE(id.size() == 1);
  CHECK(id[0].multiplicity == 3);

  Mat<double> comp(2, 2);
  comp << 0, 1, -2, 3;  // x^2 - 3x + 2
  auto cc = eig_clustered(comp);
  REQUIRE(cc.size() == 2);
  CHECK_CLOSE(cc[0].value, cplx(1), 1e-12);
  CHECK_CLOSE(cc[1].value, cplx(2), 1e-12);
}

TEST_CASE("eig_clustered multiplicities survive similarity") {
  Rng rng(9);
  CMatrix d = CMatrix::Zero(4, 4);
  d.diagonal() << cplx(1, 1), cplx(1, 1), cplx(-2, 0.5), cplx(0.3, 0);
  CMatrix s = CMatrix::Identity(4, 4) * 2.0 + random_matrix(rng, 4, 0.3);
  CMatrix a = s * d * mat_inv(s);
  auto c0 = eig_clustered(d), c1 = eig_clustered(a);
  REQUIRE(c0.size() == c1.size());
  for (size_t i = 0; i < c0.size(); ++i) {
    CHECK(c0[i].multiplicity == c1[i].multiplicity);
    CHECK_CLOSE(c0[i].value, c1[i].value, 1e-10);
  }
}

TEST_CASE("char_coeffs: trace/determinant convention and interpolation oracle") {
  Mat<double> d = Mat<double>::Zero(2, 2);
  d.diagonal() << 1, 2;
  auto c = char_coeffs(d);
  CHECK(c[0] == doctest::Approx(3));
  CHECK(c[1] == doctest::Approx(2));

  for (double v : char_coeffs<double>(Mat<double>::Zero(3, 3))) CHECK(v == 0.0);

  Rng rng(13);
  CMatrix a = random_matrix(rng, 3);
  auto k = char_coeffs(a);
  CHECK_CLOSE(k[0], a.trace(), 1e-12);
  CHECK_CLOSE(k[2], a.determinant(), 1e-12);
  const cplx pts[4] = {0.3, cplx(-1, 0.5), cplx(2, -1), cplx(0, 1.5)};
  for (cplx x : pts) {
    cplx direct = (x * CMatrix::Identity(3, 3) - a).determinant();
    cplx viaC = x * x * x - k[0] * x * x + k[1] * x - k[2];
    CHECK_CLOSE(viaC, direct, 1e-12);
  }
}
