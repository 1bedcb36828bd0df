// Command-line driver: validate instance documents, solve them into
// traffic-system embeddings, replay embeddings through the generator, and
// benchmark generated scenarios.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "sfembed/embedding_io.hpp"
#include "sfembed/instance_io.hpp"
#include "sfembed/log.hpp"
#include "sfembed/scenario.hpp"
#include "sfembed/scipy_backend.hpp"
#include "sfembed/search.hpp"
#include "sfembed/sim.hpp"

namespace {

constexpr int kExitValidationFailed = 1;
constexpr int kExitParseError = 2;
constexpr int kExitNoSolution = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sfe::ParseError("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

sfe::SFEInstance load_instance(const std::string& path, bool strict) {
  return sfe::parse_instance(read_file(path), strict);
}

struct SolveOptions {
  std::string path;
  double budget = 60.0;
  int gamma = 2;
  int delta = 1;
  int max_agents = 1000;
  uint64_t seed = 0;
  int max_n = 0;
  bool exhaustive_n = false;
  bool require_positive = false;
  double mip_gap = 0.0;
  std::string out_path, trace_path;
};

int run_solve(const SolveOptions& opt) {
  sfe::SFEInstance inst = load_instance(opt.path, false);
  if (inst.agent_count > opt.max_agents) inst.agent_count = opt.max_agents;

  sfe::SearchConfig cfg;
  cfg.budget_seconds = opt.budget;
  cfg.gamma = opt.gamma;
  cfg.delta = opt.delta;
  cfg.mip_rel_gap = opt.mip_gap;
  cfg.gamma_limits_num_epochs = !opt.exhaustive_n;
  if (opt.max_n > 0) cfg.max_num_epochs = opt.max_n;

  sfe::SearchResult result =
      sfe::ts_planner(inst, cfg, sfe::scipy_backend_factory(opt.mip_gap));
  if (!opt.trace_path.empty())
    write_file(opt.trace_path, sfe::trace_to_ndjson(result.trace));
  if (!result.best) {
    std::fprintf(stderr, "no feasible embedding found within the budget\n");
    return kExitNoSolution;
  }
  if (opt.require_positive && !(result.best->objective > sfe::Rat(0))) {
    std::fprintf(stderr, "only zero-throughput embeddings found\n");
    return kExitNoSolution;
  }
  if (!opt.out_path.empty())
    write_file(opt.out_path, sfe::serialize_embedding(inst, *result.best));
  std::printf("N*=%d L*=%d objective=%s agents=%lld solves=%zu\n",
              result.best_n, result.best_l,
              result.best->objective.to_decimal().c_str(),
              result.best->agents_used(), result.trace.size());
  return 0;
}

std::string report_to_json(const sfe::SimReport& r) {
  sfe::ordered_json j;
  j["cycles"] = r.cycles;
  j["timesteps"] = r.timesteps;
  j["deliveries"] = r.deliveries;
  j["measured_throughput"] =
      r.measured_throughput ? sfe::ordered_json(*r.measured_throughput)
                            : sfe::ordered_json(nullptr);
  j["periodicity_ok"] = r.periodicity_ok;
  j["mean_step_wall_ms"] = r.mean_step_wall_ms;
  j["max_step_wall_ms"] = r.max_step_wall_ms;
  auto violations = sfe::ordered_json::array();
  for (const auto& v : r.violations)
    violations.push_back({{"t", v.t}, {"rule", v.rule}, {"detail", v.detail}});
  j["violations"] = violations;
  return j.dump(2) + "\n";
}

// Per-timestep trace for external visualizers.
void emit_sim_trace(const sfe::SFEInstance& inst,
                    const sfe::TrafficSystemEmbedding& emb, int cycles,
                    uint64_t seed, const std::string& path) {
  auto [state, gen] = sfe::initialize_sf(inst, emb);
  std::ofstream out(path, std::ios::binary);
  long long total = static_cast<long long>(cycles) * emb.hyper.num_epochs *
                    emb.hyper.epoch_len;
  for (long long t = 0; t < total; ++t) {
    sfe::FactoryState prev = state;
    sfe::step(inst, emb, state, gen, seed);
    sfe::ordered_json line;
    line["t"] = state.t;
    auto agents = sfe::ordered_json::array();
    auto events = sfe::ordered_json::array();
    for (int a = 0; a < state.agent_count(); ++a) {
      sfe::Coord c = inst.layout.coord(state.agent_cell[a]);
      agents.push_back({{"id", a},
                        {"cell", {c.x, c.y}},
                        {"cargo", state.agent_cargo[a]}});
      if (state.agent_cell[a] != prev.agent_cell[a]) {
        sfe::Coord f = inst.layout.coord(prev.agent_cell[a]);
        events.push_back({{"kind", "move"},
                          {"agent", a},
                          {"from", {f.x, f.y}},
                          {"to", {c.x, c.y}}});
      } else {
        events.push_back({{"kind", "wait"}, {"agent", a}});
      }
      if (state.agent_cargo[a] != prev.agent_cargo[a])
        events.push_back(
            {{"kind",
              prev.agent_cargo[a] == sfe::kNullToken ? "pickup" : "deposit"},
             {"agent", a},
             {"token", std::max(prev.agent_cargo[a], state.agent_cargo[a])}});
    }
    line["agents"] = agents;
    line["events"] = events;
    out << line.dump() << "\n";
  }
}

int run_bench(const std::string& family_name, int machines, int seeds,
              double budget, int agents, int cycles,
              const std::string& csv_path) {
  auto family = sfe::scenario_family_from_string(family_name);
  if (!family) {
    std::fprintf(stderr, "unknown family '%s'\n", family_name.c_str());
    return kExitParseError;
  }
  std::string csv = "family,machines,seed,objective,agents_used,solve_s,"
                    "mean_step_ms,throughput,violations\n";
  std::printf("%-14s %8s %6s %12s %8s %9s %13s %12s %10s\n", "family",
              "machines", "seed", "objective", "agents", "solve_s",
              "mean_step_ms", "throughput", "violations");
  int failures = 0;
  for (int seed = 1; seed <= seeds; ++seed) {
    sfe::ScenarioSpec spec;
    spec.family = *family;
    spec.machine_count = machines;
    spec.agents = agents;
    spec.seed = static_cast<uint64_t>(seed);
    sfe::SFEInstance inst = sfe::generate_scenario(spec);
    sfe::SearchConfig cfg;
    cfg.budget_seconds = budget;
    auto t0 = std::chrono::steady_clock::now();
    sfe::SearchResult result =
        sfe::ts_planner(inst, cfg, sfe::scipy_backend_factory());
    std::chrono::duration<double> solve_s =
        std::chrono::steady_clock::now() - t0;
    std::string objective = "-";
    long long used = 0;
    double mean_step = 0, throughput = 0;
    size_t violations = 0;
    if (result.best) {
      objective = result.best->objective.to_decimal();
      used = result.best->agents_used();
      sfe::SimReport rep = sfe::run_simulation(inst, *result.best, cycles,
                                               spec.seed);
      mean_step = rep.mean_step_wall_ms;
      throughput = rep.measured_throughput.value_or(0.0);
      violations = rep.violations.size();
      if (!rep.violations.empty()) ++failures;
    } else {
      ++failures;
    }
    std::printf("%-14s %8d %6d %12s %8lld %9.2f %13.4f %12.6f %10zu\n",
                family_name.c_str(), machines, seed, objective.c_str(), used,
                solve_s.count(), mean_step, throughput, violations);
    csv += family_name + "," + std::to_string(machines) + "," +
           std::to_string(seed) + "," + objective + "," +
           std::to_string(used) + "," + std::to_string(solve_s.count()) + "," +
           std::to_string(mean_step) + "," + std::to_string(throughput) + "," +
           std::to_string(violations) + "\n";
  }
  if (!csv_path.empty()) write_file(csv_path, csv);
  return failures == 0 ? 0 : kExitValidationFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smart-factory embedding toolkit"};
  app.require_subcommand(1);

  // validate
  auto* validate = app.add_subcommand("validate", "parse and validate an "
                                                  "instance document");
  std::string validate_path;
  bool strict_buffers = false;
  validate->add_option("path", validate_path, "instance JSON")->required();
  validate->add_flag("--strict-buffers", strict_buffers,
                     "reject several buffer cells on one road");

  // solve
  auto* solve = app.add_subcommand("solve", "search for a high-throughput "
                                            "embedding");
  SolveOptions sopt;
  solve->add_option("path", sopt.path, "instance JSON")->required();
  solve->add_option("--budget", sopt.budget, "wall-clock budget in seconds");
  solve->add_option("--gamma", sopt.gamma, "consecutive-failure limit");
  solve->add_option("--delta", sopt.delta, "epoch-length increment");
  solve->add_option("--max-agents", sopt.max_agents, "cap on usable agents");
  solve->add_option("--seed", sopt.seed, "random seed");
  solve->add_option("--max-n", sopt.max_n, "cap on the number of epochs");
  solve->add_flag("--exhaustive-n", sopt.exhaustive_n,
                  "keep increasing the epoch count until the budget expires");
  solve->add_flag("--require-positive", sopt.require_positive,
                  "treat zero-throughput results as failure");
  solve->add_option("--mip-gap", sopt.mip_gap, "relative MIP gap");
  solve->add_option("--out", sopt.out_path, "embedding output path");
  solve->add_option("--trace", sopt.trace_path, "search trace (NDJSON)");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "replay an embedding and "
                                                  "verify it");
  std::string sim_instance, sim_embedding, sim_trace;
  int sim_cycles = 4;
  uint64_t sim_seed = 0;
  simulate->add_option("instance", sim_instance, "instance JSON")->required();
  simulate->add_option("embedding", sim_embedding, "embedding JSON")
      ->required();
  simulate->add_option("--cycles", sim_cycles, "plan cycles to run");
  simulate->add_option("--seed", sim_seed, "random seed");
  simulate->add_option("--trace", sim_trace, "per-timestep trace (NDJSON)");

  // bench
  auto* bench = app.add_subcommand("bench", "generate, solve and simulate "
                                            "scenarios");
  std::string bench_family = "grid-mesh", bench_csv;
  int bench_machines = 8, bench_seeds = 1, bench_agents = 1000,
      bench_cycles = 4;
  double bench_budget = 60.0;
  bench->add_option("--family", bench_family,
                    "line-chain | assembly-tree | grid-mesh");
  bench->add_option("--machines", bench_machines, "machine count");
  bench->add_option("--seeds", bench_seeds, "number of seeds (1..k)");
  bench->add_option("--budget", bench_budget, "per-instance budget seconds");
  bench->add_option("--agents", bench_agents, "agent budget");
  bench->add_option("--cycles", bench_cycles, "simulation cycles");
  bench->add_option("--csv", bench_csv, "also write results as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) {
      try {
        load_instance(validate_path, strict_buffers);
      } catch (const sfe::ValidationError& e) {
        for (const auto& rule : e.rules)
          std::fprintf(stderr, "violation: %s\n", rule.c_str());
        return kExitValidationFailed;
      }
      return 0;
    }
    if (*solve) return run_solve(sopt);
    if (*simulate) {
      sfe::SFEInstance inst = load_instance(sim_instance, false);
      sfe::TrafficSystemEmbedding emb =
          sfe::parse_embedding(inst, read_file(sim_embedding));
      auto bad = sfe::check_embedding(inst, emb);
      if (!bad.empty()) {
        for (const auto& v : bad)
          std::fprintf(stderr, "embedding violates %s: %s\n",
                       v.constraint.c_str(), v.detail.c_str());
        return kExitValidationFailed;
      }
      sfe::SimReport report = sfe::run_simulation(inst, emb, sim_cycles,
                                                  sim_seed);
      if (!sim_trace.empty())
        emit_sim_trace(inst, emb, sim_cycles, sim_seed, sim_trace);
      std::cout << report_to_json(report);
      return report.violations.empty() ? 0 : kExitValidationFailed;
    }
    if (*bench)
      return run_bench(bench_family, bench_machines, bench_seeds, bench_budget,
                       bench_agents, bench_cycles, bench_csv);
  } catch (const sfe::ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitParseError;
  } catch (const sfe::ValidationError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitValidationFailed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitParseError;
  }
  return 0;
}
