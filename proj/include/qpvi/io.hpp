#pragma once

#include "qpvi/climit.hpp"
#include "qpvi/matp6.hpp"
#include "qpvi/qflow.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace qpvi {

using json = nlohmann::json;

enum class Mode { Build, Evolve, Verify, Ode, Limit, Report };
enum class Format { Json, Csv };

const char* mode_name(Mode m);
std::optional<Mode> parse_mode(const std::string& s);

struct RunConfig {
  Mode mode = Mode::Evolve;
  int m = 1;
  std::uint64_t seed = 1;

  // exactly one parameter block after validation
  std::optional<QParameters> qparams;
  std::optional<LimitDictionary> limit;
  std::optional<DiffParameters> diff;

  std::vector<cplx> f, g;  // accessory seeds; drawn when empty
  int nsteps = 10;
  bool retract = true;
  Tolerances tol;

  // ode
  std::optional<PhasePoint> point;
  cplx t0 = 0.5;
  cplx t_end = 0.4;
  int ode_steps = 400;

  // limit
  std::vector<double> eps_list{1e-2, 5e-3, 2.5e-3};
  double window = 0.3;  // log-length of the t-window

  std::string input;  // report: path of a prior run's JSON
  std::string out;
  Format format = Format::Json;
};

// Throws Error(ConfigError) with "$.path: reason".
RunConfig parse_config(const std::string& text, std::optional<Mode> forced_mode = std::nullopt);

// Applies "name=value" tolerance overrides.
void apply_tolerance_override(RunConfig& cfg, const std::string& spec);

json to_json(const CMatrix& a);
CMatrix matrix_from_json(const json& j);
json to_json(cplx z);
cplx complex_from_json(const json& j);

json to_json(const QParameters& p);
json to_json(const DiffParameters& d);
json to_json(const LimitDictionary& d);
json to_json(const AccessoryState& s);
AccessoryState state_from_json(const json& j);
json to_json(const Trajectory& tr);
Trajectory trajectory_from_json(const json& j);

// The run document (deterministic given the config).
json execute(const RunConfig& cfg);

std::string to_csv(const json& doc);
std::string render_report(const json& doc);

// Writes the artifact (stdout when cfg.out is empty); returns the process exit status.
int run(const RunConfig& cfg);

}  // namespace qpvi
