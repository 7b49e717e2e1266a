#pragma once

#include "qpvi/qlinsys.hpp"

#include <optional>
#include <string>

namespace qpvi {

CMatrix step_G(const QParameters& p, const AccessoryState& s, const Tolerances& tol = {});
CMatrix step_F(const QParameters& p, const AccessoryState& s, const CMatrix& Gbar, const Tolerances& tol = {});
CMatrix step_W(const QParameters& p, const AccessoryState& s, const CMatrix& Gbar, const Tolerances& tol = {});

struct DeformationMatrices {
  CMatrix B0, B11, B12, B21, B22;
  CMatrix Phi1, Phi2, Psi1, Psi2;
  CMatrix L, Lprime;
  CMatrix alpha_bar;  // from derive_blocks on the after-state
};

struct FlowStep {
  QParameters before_p, after_p;
  AccessoryState before, after;
  double commutation_residual = 0;
  double conditioning = 0;  // worst 2-norm condition number among the inverted factors
};

// Worst condition number of F, G, F - a3, F - a4 (before) and Gbar, Gbar - 1/(q kappa1), Gbar - rho,
// Gbar - K^-1, Fbar (after): the matrices whose inverses the step and the invariant check use.
double step_conditioning(const QParameters& p, const AccessoryState& before, const AccessoryState& after);

FlowStep flow_step(const QParameters& p, const AccessoryState& s, const Tolerances& tol = {});

// The three relations solved for the before-state: p_after has t already shifted.
FlowStep flow_step_inverse(const QParameters& p_after, const AccessoryState& after, const Tolerances& tol = {});

DeformationMatrices build_B(const QParameters& p, const AccessoryState& s, const AccessoryState& after,
                            const Tolerances& tol = {});

// B(x) = x (x I + B0) / ((x - q a1 t)(x - q a2 t))
CMatrix eval_B(const QParameters& p, const CMatrix& B0, cplx x);

struct KernelIdentityResiduals {
  double phi_psi = 0;       // ||Phi1 + Psi2|| / ||Phi1||
  double phi_b12 = 0;       // ||(Phi1 - Phi2) B12 - q(a1-a2)t|| / |q(a1-a2)t|
  double b12_psi = 0;       // ||B12 (Psi1 - Psi2) - q(a1-a2)t|| / |q(a1-a2)t|
  double reconstruction = 0;  // B0 vs -q a1 t + [I; Phi1] B12 [Psi1, I]
  double L_Lprime = 0;
  double alpha_bar_routes = 0;  // derive_blocks(after).alpha vs the Psi2 display
  double max() const;
};

KernelIdentityResiduals kernel_identities(const QParameters& p, const AccessoryState& before,
                                          const AccessoryState& after, const DeformationMatrices& D);

// Radius sqrt(|q a1 t| |a3|), n equally spaced points with a fixed phase offset.
std::vector<cplx> compat_samples(const QParameters& p, int n = 8);

double verify_compat(const QParameters& p, const AccessoryState& before, const FlowStep& step,
                     const std::vector<cplx>& xsamples, const Tolerances& tol = {});

struct TrajectoryRecord {
  cplx t;
  AccessoryState state;
  double commutation_residual = 0;  // raw, before retraction
  double compat_residual = 0;       // of the step that produced this state
  double retraction = 0;            // size of the retraction correction
  double kernel_identity = 0;
  double conditioning = 0;          // of the step that produced this state
};

struct Trajectory {
  std::vector<TrajectoryRecord> records;  // records[0] is the initial state
  QParameters final_params;
  bool failed = false;
  std::string failure;
};

struct EvolveOptions {
  bool retract = true;
  bool compat = true;
  bool kernel = false;
  int compat_points = 8;
};

Trajectory evolve(const QParameters& p, const AccessoryState& s, int nsteps, const EvolveOptions& opt = {},
                  const Tolerances& tol = {});

}  // namespace qpvi
