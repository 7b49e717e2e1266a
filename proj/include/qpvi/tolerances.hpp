#pragma once

#include <map>
#include <string>

namespace qpvi {

// Every numerical threshold in one place; the CLI overrides them by name (--tol name=value).
struct Tolerances {
  double cond_limit = 1e12;      // mat_inv
  double rank_rel = 1e-8;        // rank / kernel / eigen clustering
  double zero_cluster = 1e-6;    // zeros of det A
  double fuchs = 1e-10;          // q-Fuchs relation
  double diff_fuchs = 1e-12;     // Fuchs relation of the differential side
  double newton = 1e-11;         // last-row solve residual
  double commutation = 1e-7;     // flow_step after-state
  double compat = 1e-8;          // compatibility residual
  double kernel_identity = 1e-9; // Phi/Psi identities, L = L'
  double det = 1e-8;             // determinant factorization
  double smith = 1e-8;           // Smith witness
  double trace_cond = 1e-9;      // c_k(F) = c_k(rho F K)
  double canonical = 1e-9;       // [P,Q] relation
  double pole_margin = 1e-6;     // relative distance of x-samples from poles

  bool set(const std::string& name, double value);
  std::map<std::string, double> as_map() const;
};

}  // namespace qpvi
