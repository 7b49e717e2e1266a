#include "qpvi/io.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw qpvi::Error(qpvi::ErrorKind::ConfigError, "$: cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix q-Painleve VI: build, evolve and verify the q-linear system; matrix P_VI flow and its limit"};
  app.require_subcommand(1);

  std::string config_path, out, format, input;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> tols;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--out", out, "output path (stdout when omitted)");
    sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    sub->add_option("--seed", seed, "seed for all random draws");
    sub->add_option("--tol", tols, "tolerance override name=value (repeatable)")->take_all();
  };
  for (const char* name : {"build", "evolve", "verify", "ode", "limit"}) add_common(app.add_subcommand(name));
  CLI::App* report = app.add_subcommand("report", "summarize a prior run's JSON output");
  report->add_option("input", input, "JSON output of a prior run");
  add_common(report);

  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands().front()->get_name();
  const qpvi::Mode mode = *qpvi::parse_mode(sub);

  qpvi::RunConfig cfg;
  try {
    std::string text = config_path.empty() ? std::string("{\"m\": 1}") : slurp(config_path);
    cfg = qpvi::parse_config(text, mode);
    if (seed) cfg.seed = *seed;
    for (const auto& t : tols) qpvi::apply_tolerance_override(cfg, t);
    if (!out.empty()) cfg.out = out;
    if (format == "csv") cfg.format = qpvi::Format::Csv;
    if (format == "json") cfg.format = qpvi::Format::Json;
    if (!input.empty()) cfg.input = input;
  } catch (const qpvi::Error& e) {
    qpvi::json err = {{"error", {{"kind", qpvi::kind_name(e.kind())}, {"detail", e.detail()}}}};
    std::cout << err.dump(1) << "\n";
    return 1;
  }
  return qpvi::run(cfg);
}
