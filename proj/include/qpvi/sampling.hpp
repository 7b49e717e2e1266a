#pragma once

#include "qpvi/climit.hpp"
#include "qpvi/matp6.hpp"
#include "qpvi/qlinsys.hpp"

#include <cstdint>
#include <random>

namespace qpvi {

// Bit-reproducible across standard libraries: the engine sequence is fixed by the standard,
// the conversions below are written out.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double normal();
  cplx cnormal(double scale = 1.0) { return {scale * normal(), scale * normal()}; }
  cplx unit_disk();

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0;
};

struct DrawOptions {
  double q_modulus_min = 0.85, q_modulus_max = 0.95;
  double spread = 0.3;      // log-scale spread of theta, kappa, a, t
  double cond_cap = 1e3;    // max cond(F, G, G1, G2)
  double resonance_margin = 1e-3;
  int max_tries = 2000;
};

// theta1 theta2 solved from the q-Fuchs relation.
QParameters random_qparams(Rng& rng, int m, const DrawOptions& opt = {});

struct AdmissibleDraw {
  QParameters p;
  std::vector<cplx> f, g;
  AccessoryState s;
  double cond = 0;
  int tries = 0;
};

double state_condition(const QParameters& p, const AccessoryState& s);

// Accessory seeds (f, g) drawn for fixed parameters.
AdmissibleDraw random_state(Rng& rng, const QParameters& p, const DrawOptions& opt = {}, const Tolerances& tol = {});

AdmissibleDraw random_admissible(Rng& rng, int m, const DrawOptions& opt = {}, const Tolerances& tol = {});

// Q = S^-1 diag(q_i) S, P = S^-1 P' S with [P', diag(q)] = c1 I + u v^T, so the canonical
// relation holds exactly.
PhasePoint random_phase_point(Rng& rng, const DiffParameters& d, cplx t, double scale = 0.5);

DiffParameters random_diff_parameters(Rng& rng, int m, double scale = 0.3);

LimitDictionary random_limit_dictionary(Rng& rng, int m, double eps, double scale = 0.3);

CMatrix random_matrix(Rng& rng, Index n, double scale = 1.0);

}  // namespace qpvi
