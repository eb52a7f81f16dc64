#include <iostream>

#include "CLI11.hpp"

#include "nodalmc/acceptance.hpp"
#include "nodalmc/cli/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
  std::string format;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config, "TOML run configuration")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "override the configured seed");
  sub->add_option("--threads", c.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  sub->add_option("-o,--out", c.out, "output file; .json selects JSON, anything else CSV");
  sub->add_option("--format", c.format, "force csv or json for --out")->check(CLI::IsMember({"csv", "json"}));
  sub->add_option("--set", c.sets, "override a config key, e.g. --set propagation.dt=5e-4")->take_all();
}

int run_subcommand(const std::string& name, const Common& c) {
  using namespace nodalmc::cli;
  auto cfg = load_config(c.config, c.sets);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  const auto records = run_command(name, cfg, std::cerr);
  bool wrote = false;
  if (!c.out.empty()) {
    const bool json = c.format == "json" || (c.format.empty() && c.out.size() > 5 && c.out.substr(c.out.size() - 5) == ".json");
    write_outputs(records, json ? OutputFormat::json : OutputFormat::csv, c.out);
    wrote = true;
  }
  if (!cfg.output.csv.empty()) {
    write_outputs(records, OutputFormat::csv, cfg.output.csv);
    wrote = true;
  }
  if (!cfg.output.json.empty()) {
    write_outputs(records, OutputFormat::json, cfg.output.json);
    wrote = true;
  }
  if (!wrote) std::cout << render_csv(records);
  return kOk;
}

std::set<int> parse_only(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    const int v = std::stoi(item);
    if (v < 1 || v > 10) throw nodalmc::UsageError("criterion ids run from 1 to 10");
    out.insert(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nodalmc: fixed-node diffusion Monte Carlo, hitting measures on nodal surfaces, and nodal shape optimization"};
  app.require_subcommand(1);

  std::map<std::string, Common> common;
  const std::map<std::string, std::string> help{
      {"vmc", "variational energy by Metropolis sampling of psi^2"},
      {"dmc", "fixed-node energy from the weighted extinction rate, plus eta moments"},
      {"mu", "hitting measure on the nodes: total mass and configured functionals"},
      {"grad", "fixed-node energy gradient, surface and bulk forms"},
      {"symmetry", "symmetry diagnostic of the hitting measure (z-table)"},
      {"shape", "Dirichlet shape derivative from the hitting measure"},
      {"oracle", "grid eigensolver, finite-difference gradients, exit functionals"},
      {"optimize", "nodal Monte-Carlo gradient descent on theta"},
  };
  for (const auto& name : nodalmc::cli::command_names()) add_common(app.add_subcommand(name, help.at(name)), common[name]);

  auto* models = app.add_subcommand("models", "model catalog");
  models->require_subcommand(1);
  models->add_subcommand("list", "list catalog models as JSON");
  std::string describe_name;
  auto* describe = models->add_subcommand("describe", "describe one model as JSON");
  describe->add_option("name", describe_name)->required();

  auto* check = app.add_subcommand("check", "run the acceptance suite and print pass/fail per criterion");
  std::string only;
  int check_threads = 1;
  bool verbose = false;
  check->add_option("--only", only, "comma-separated criterion ids");
  check->add_option("--threads", check_threads)->check(CLI::PositiveNumber);
  check->add_flag("-v,--verbose", verbose, "show per-command diagnostics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    for (const auto& name : nodalmc::cli::command_names())
      if (app.got_subcommand(name)) return run_subcommand(name, common[name]);
    if (models->got_subcommand("list")) {
      std::cout << nodalmc::cli::list_models_json();
      return kOk;
    }
    if (describe->parsed()) {
      std::cout << nodalmc::cli::describe_model(nodalmc::models::make_model(describe_name)).dump(2) << '\n';
      return kOk;
    }
    if (check->parsed()) {
      nodalmc::acceptance::Options opt;
      opt.only = parse_only(only);
      opt.threads = check_threads;
      if (verbose) opt.log = &std::cerr;
      const auto results = nodalmc::acceptance::run_acceptance(opt, std::cout);
      const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; });
      std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size() << " criteria passed\n";
      return failed ? kNumerical : kOk;
    }
  } catch (const nodalmc::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const nodalmc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const nodalmc::CatalogError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const nodalmc::UsageError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const nodalmc::Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kOk;
}
