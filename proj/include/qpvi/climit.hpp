#pragma once

#include "qpvi/matp6.hpp"
#include "qpvi/qflow.hpp"

namespace qpvi {

// q = e^-eps, theta_i = e^(-eps sigma_i), a_i = e^(eps zeta_i), kappa_i = e^(eps mu_i).
struct LimitDictionary {
  double epsilon = 1e-2;
  cplx sigma1 = 0, sigma2 = 0;
  std::array<cplx, 4> zeta{0, 0, 0, 0};
  std::array<cplx, 3> mu{0, 0, 0};
  cplx zeta_sum = 0;  // zeta1 + ... + zeta4, kept in sync by close_limit_relation / with_zeta_sum

  CMatrix M(int m) const;
};

// Recomputes zeta_sum from zeta.
LimitDictionary with_zeta_sum(LimitDictionary d);

// Sets mu3 so that m mu1 + (m-1) mu2 + mu3 + m zeta + m (sigma1 + sigma2) = 0.
LimitDictionary close_limit_relation(LimitDictionary d, int m);

cplx limit_relation_residual(const LimitDictionary& d, int m);

QParameters to_qparams(const LimitDictionary& d, cplx t, int m, const Tolerances& tol = {});

DiffParameters param_dictionary(const LimitDictionary& d, int m, const Tolerances& tol = {});

struct VariableBridge {
  CMatrix Qtilde, Ptilde;
};

// (Q - 1)^-1 (Q - t); defined wherever Q - 1 is invertible, unlike Ptilde which also needs Q^-1.
CMatrix qtilde(const CMatrix& Q, cplx t);

VariableBridge variable_bridge(const LimitDictionary& d, const PhasePoint& pt);

// F = Qtilde, G per the substitution display, W = I.
AccessoryState phase_to_accessory(const LimitDictionary& d, const PhasePoint& pt, const Tolerances& tol = {});

// The substitution image lies O(eps^2) off the constraint manifold, in a direction where the
// trace conditions degenerate as eps -> 0, so the nearest exact state differs in F by O(eps).
// This lift first corrects F (normal-form last row), then rebuilds G from the same display with
// the corrected F, then projects G onto ker(omega): (Q, P) is moved by O(eps) only.
AccessoryState consistent_lift(const LimitDictionary& d, const PhasePoint& pt, const Tolerances& tol = {});

struct LimitTrajectory {
  double err = 0;
  double eps = 0;
  cplx t_end;
  int qsteps = 0;
};

LimitTrajectory limit_trajectory_error(const LimitDictionary& d, const PhasePoint& pt0, int n_qsteps,
                                       int ode_steps = 400, const Tolerances& tol = {});

double residue_limit_error(const LimitDictionary& d, const PhasePoint& pt, const std::vector<cplx>& x_samples,
                           const Tolerances& tol = {});

double fit_slope(const std::vector<double>& x, const std::vector<double>& y);  // least squares in log-log

}  // namespace qpvi
