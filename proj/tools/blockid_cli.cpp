// blockid: run structure-discrimination experiments from a config file.
//
//   blockid run configs/paper_sec5.toml --seed 7 --out-dir out
//   blockid oracle configs/wiener.toml
//   blockid rank configs/parallel2.toml
//   blockid validate configs/unstable_loop.toml
//
// Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 indeterminate
// classification.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "blockid/blockid.hpp"

namespace fs = std::filesystem;
using namespace blockid;

namespace {

enum Exit { ok = 0, config_error = 2, numeric_error = 3, indeterminate = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> eps;
  std::string out_dir = ".";
  std::string format = "json";
  std::size_t jobs = 1;
};

void add_common(CLI::App *cmd, Common &c) {
  cmd->add_option("config", c.config, "experiment file (.toml or .json)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--eps-override", c.eps, "override the excitation level eps");
  cmd->add_option("--out-dir", c.out_dir, "directory for output files");
  cmd->add_option("--format", c.format, "stdout summary format")->check(CLI::IsMember({"json", "csv"}));
  cmd->add_option("--jobs", c.jobs, "setpoints processed concurrently")->check(CLI::PositiveNumber);
}

ExperimentConfig load(const Common &c) {
  return apply_overrides(load_config(c.config), RunOptions{c.seed, c.eps, c.jobs});
}

fs::path out_dir(const Common &c) {
  fs::path p(c.out_dir);
  fs::create_directories(p);
  return p;
}

int cmd_run(const Common &c) {
  const auto cfg = load(c);
  const auto rep = run_experiment(cfg, c.jobs);
  const auto dir = out_dir(c);
  const auto loci = loci_csv(rep.tracks, cfg.setpoints);
  write_text(dir / "report.json", dump(rep.document));
  write_text(dir / "loci.csv", loci);
  write_text(dir / "frf.csv", frf_csv(rep.setpoints));
  if (rep.oracle) write_text(dir / "oracle_loci.csv", loci_csv(rep.oracle->tracks, cfg.setpoints));
  if (c.format == "csv") {
    std::cout << loci;
  } else {
    json summary = {{"classification", rep.document.at("classification")}};
    if (rep.verdict) summary["verdict"] = rep.document.at("verdict");
    std::cout << dump(summary);
  }
  if (rep.indeterminate()) {
    std::cerr << "blockid: indeterminate classification: " << rep.classification_error << "\n";
    return indeterminate;
  }
  return ok;
}

int cmd_oracle(const Common &c) {
  const auto cfg = load(c);
  const auto g = build_graph(cfg.system);
  const auto o = run_oracle(g, cfg.setpoints, cfg.classify);
  json doc = {{"provenance", provenance_json(cfg)}, {"oracle", oracle_json(g, o)}};
  const auto dir = out_dir(c);
  const auto loci = loci_csv(o.tracks, cfg.setpoints);
  write_text(dir / "oracle.json", dump(doc));
  write_text(dir / "oracle_loci.csv", loci);
  std::cout << (c.format == "csv" ? loci : dump(doc));
  return ok;
}

int cmd_rank(const Common &c) {
  const auto cfg = load(c);
  const auto rep = run_rank(cfg, c.jobs);
  write_text(out_dir(c) / "rank.json", dump(rep.document));
  if (c.format == "csv") {
    std::cout << "test,index,singular_value\n";
    for (std::size_t i = 0; i < rep.branches.singular_values.size(); ++i)
      std::cout << "branches," << i << ',' << fmt17(rep.branches.singular_values[i]) << '\n';
    if (rep.feedback)
      for (std::size_t i = 0; i < rep.feedback->singular_values.size(); ++i)
        std::cout << "feedback," << i << ',' << fmt17(rep.feedback->singular_values[i]) << '\n';
  } else {
    std::cout << dump(rep.document);
  }
  return ok;
}

int cmd_validate(const Common &c) {
  const auto cfg = load(c);
  const auto g = build_graph(cfg.system);
  // setpoints must admit a DC solution with a stable linearization
  const auto ops = solve_setpoints(g, cfg.setpoints);
  for (std::size_t k = 0; k < ops.size(); ++k) {
    try {
      check_local_stability(g, ops[k]);
    } catch (const NumericError &e) {
      throw NumericError("setpoint " + std::to_string(k) + ": " + e.what());
    }
  }
  std::cout << "ok: " << g.nodes().size() << " nodes, " << g.edges().size() << " edges, " << cfg.setpoints.size()
            << " setpoints, topology " << to_string(g.topology) << "\n";
  return ok;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Block-oriented structure discrimination from best linear approximations"};
  app.set_version_flag("--version", std::string("blockid ") + kVersion);
  app.require_subcommand(1);
  Common c;
  auto *run = app.add_subcommand("run", "simulate, estimate, classify and write report.json, loci.csv, frf.csv");
  auto *oracle = app.add_subcommand("oracle", "analytic loci from the closed-form linearizations");
  auto *rank = app.add_subcommand("rank", "branch-count rank tests on the estimated FRFs");
  auto *validate = app.add_subcommand("validate", "check a config without running it");
  for (auto *cmd : {run, oracle, rank, validate}) add_common(cmd, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : config_error;
  }

  try {
    if (*run) return cmd_run(c);
    if (*oracle) return cmd_oracle(c);
    if (*rank) return cmd_rank(c);
    return cmd_validate(c);
  } catch (const ConfigError &e) {
    std::cerr << "blockid: config error: " << e.what() << "\n";
    return config_error;
  } catch (const IndeterminateError &e) {
    std::cerr << "blockid: indeterminate classification: " << e.what() << "\n";
    return indeterminate;
  } catch (const NumericError &e) {
    std::cerr << "blockid: numeric failure: " << e.what() << "\n";
    return numeric_error;
  } catch (const LinearizationError &e) {
    std::cerr << "blockid: numeric failure: " << e.what() << "\n";
    return numeric_error;
  } catch (const std::exception &e) {
    std::cerr << "blockid: error: " << e.what() << "\n";
    return numeric_error;
  }
}
