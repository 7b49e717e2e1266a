#pragma once

#include "qpvi/matcore.hpp"
#include "qpvi/tolerances.hpp"

#include <vector>

namespace qpvi {

struct DiffParameters {
  int m = 1;
  cplx theta0 = 0, theta1 = 0, thetat = 0, thetaInf1 = 0, thetaInf2 = 0, thetaInf3 = 0;

  cplx theta() const { return theta0 + theta1 + thetat; }
  CMatrix Theta() const;
};

// theta^inf_3 closing the Fuchs relation.
DiffParameters make_diff_parameters(int m, cplx theta0, cplx theta1, cplx thetat, cplx thetaInf1, cplx thetaInf2);

double fuchs_residual(const DiffParameters& d);
void validate(const DiffParameters& d, double tol = 1e-12);

struct PhasePoint {
  CMatrix Q, P, U;
  cplx t;
};

// ||[P,Q] - (theta + thetaInf1) I - Theta||
double canonical_residual(const DiffParameters& d, const PhasePoint& pt);

struct ResidueSet {
  CMatrix A0, A1, At, Ainf, X, Zres;
  CMatrix A0hat, A1hat, Athat;
};

ResidueSet build_residues(const DiffParameters& d, const PhasePoint& pt, const Tolerances& tol = {});

struct Rhs {
  CMatrix dQ, dP, dU;
};

Rhs rhs(const DiffParameters& d, const PhasePoint& pt);

// The Hamiltonian H as written (Theta explicit inside the trace).
cplx ham(const DiffParameters& d, const PhasePoint& pt);

// Theta replaced by [P,Q] - (theta + thetaInf1) inside the trace; equal to ham on the
// canonical surface, and its canonical equations reproduce rhs off it as well.
cplx ham_invariant(const DiffParameters& d, const PhasePoint& pt);

// Central differences: dQ_ij = dH/dp_ji, dP_ij = -dH/dq_ji.
template <typename H>
Rhs hamiltonian_fd(const H& h, const PhasePoint& pt, double step = 1e-6) {
  const Index m = pt.Q.rows();
  Rhs r{CMatrix::Zero(m, m), CMatrix::Zero(m, m), CMatrix::Zero(m, m)};
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) {
      PhasePoint a = pt, b = pt;
      a.P(j, i) += step;
      b.P(j, i) -= step;
      r.dQ(i, j) = (h(a) - h(b)) / (2 * step);
      a = pt;
      b = pt;
      a.Q(j, i) += step;
      b.Q(j, i) -= step;
      r.dP(i, j) = -(h(a) - h(b)) / (2 * step);
    }
  return r;
}

struct IntegrationResult {
  std::vector<PhasePoint> points;
  std::vector<double> canonical_drift;  // per point, relative to the initial residual matrix
};

// Classical RK4 in s = log t, geometric steps from pt.t to t_end.
IntegrationResult integrate(const DiffParameters& d, const PhasePoint& pt, cplx t_end, int nsteps,
                            const Tolerances& tol = {});

}  // namespace qpvi
