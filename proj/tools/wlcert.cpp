#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wlcert/commands.hpp"
#include "wlcert/config.hpp"
#include "wlcert/errors.hpp"
#include "wlcert/report.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumeric = 3, kInfeasible = 4 };

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw wlcert::ConfigError("cannot write output file '" + path + "'");
  out << text;
}

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string csv;
  std::string json;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, CommonOptions& o) {
  sub->add_option("config", o.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
  sub->add_option("--set", o.overrides, "override a scalar field, e.g. --set schedule.beta=2");
  sub->add_option("--csv", o.csv, "CSV output path (overrides output.csv)");
  sub->add_option("--json", o.json, "JSON output path (overrides output.json)");
}

wlcert::RunConfig load(const CommonOptions& o) {
  auto overrides = o.overrides;
  if (o.seed) overrides.push_back("simulate.seed=" + std::to_string(*o.seed));
  return wlcert::load_run_config(o.config, overrides);
}

/// CSV goes to its path when set; JSON goes to its path, else stdout. A
/// command with no JSON prints its CSV to stdout when no CSV path is set.
void emit(const wlcert::CommandOutput& out, const wlcert::RunConfig& cfg, const CommonOptions& o) {
  const std::string csv_path = o.csv.empty() ? cfg.output.csv : o.csv;
  const std::string json_path = o.json.empty() ? cfg.output.json : o.json;
  if (!csv_path.empty()) write_text(csv_path, out.csv);
  if (out.json.is_null()) {
    if (csv_path.empty()) std::cout << out.csv;
    return;
  }
  const auto problems = wlcert::validate_report(out.json);
  if (!problems.empty()) {
    std::string msg = "internal error: report does not match its schema:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::logic_error(msg);
  }
  if (!json_path.empty()) {
    write_text(json_path, out.json.dump(2) + "\n");
  } else {
    std::cout << out.json.dump(2) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radial-profile W2 certificates and coupling experiments for reverse diffusion samplers"};
  app.require_subcommand(1);

  CommonOptions opt;
  auto* profile = app.add_subcommand("profile", "tabulate the radial lower envelope");
  auto* admissible = app.add_subcommand("admissible", "admissible switches on the configured grid");
  auto* certify = app.add_subcommand("certify", "routed and direct certificates per switch");
  auto* simulate = app.add_subcommand("simulate", "coupling experiments and end-to-end W2");
  auto* sharpness = app.add_subcommand("sharpness", "affine-tail sharpness family");
  for (auto* sub : {profile, admissible, certify, simulate, sharpness}) add_common(sub, opt);

  std::string mode;
  simulate->add_option("--mode", mode, "synchronous | reflection | end-to-end (overrides simulate.mode)")
      ->check(CLI::IsMember({"synchronous", "reflection", "end-to-end"}));
  simulate->add_option("--seed", opt.seed, "override simulate.seed");

  std::string report_path;
  auto* validate = app.add_subcommand("validate", "check a JSON report against its schema");
  validate->add_option("report", report_path, "JSON report")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (validate->parsed()) {
      const auto doc = wlcert::read_json_file(report_path);
      const auto problems = wlcert::validate_report(doc);
      for (const auto& p : problems) std::cerr << p << "\n";
      if (!problems.empty()) return kConfig;
      std::cout << "ok\n";
      return kOk;
    }
    if (!mode.empty()) opt.overrides.push_back("simulate.mode=\"" + mode + "\"");
    const auto cfg = load(opt);
    wlcert::CommandOutput out;
    if (profile->parsed()) {
      out = wlcert::cmd_profile(cfg);
    } else if (admissible->parsed()) {
      out = wlcert::cmd_admissible(cfg);
      if (out.json["admissible"].empty()) std::cerr << "note: no admissible switch\n";
    } else if (certify->parsed()) {
      out = wlcert::cmd_certify(cfg);
    } else if (simulate->parsed()) {
      out = wlcert::cmd_simulate(cfg);
    } else {
      out = wlcert::cmd_sharpness(cfg);
    }
    emit(out, cfg, opt);
    return kOk;
  } catch (const wlcert::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const wlcert::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const wlcert::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  }
}
