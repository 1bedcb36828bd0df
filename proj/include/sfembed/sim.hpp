#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sfembed/tplan.hpp"

namespace sfe {

struct StepViolation {
  long long t = 0;  // timestep of the post-move state
  std::string rule;
  std::string detail;
};

struct SimReport {
  int cycles = 0;
  long long timesteps = 0;
  // Deliveries into the output machines per timestep, measured after one
  // warm-up cycle; absent when only the warm-up cycle ran.
  std::optional<double> measured_throughput;
  long long deliveries = 0;
  std::vector<StepViolation> violations;
  bool periodicity_ok = false;
  double max_step_wall_ms = 0;
  double mean_step_wall_ms = 0;
};

// Movement legality derived straight from the grid, kept separate from the
// generator so it can catch generator bugs.
struct MoveRules {
  std::vector<std::vector<int>> exits;  // flat cell -> legal next flat cells

  static MoveRules from_layout(const Layout& g) {
    MoveRules rules;
    rules.exits.resize(g.cells.size());
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x) {
        Coord c{x, y};
        if (g.is_road(c)) {
          Coord e = g.road_exit(c);
          if (g.is_traversable(e)) rules.exits[g.flat(c)].push_back(g.flat(e));
        } else if (g.is_junction(c)) {
          for (Coord n : g.neighbors4(c))
            if (g.is_road(n) && g.road_exit(n) != c)
              rules.exits[g.flat(c)].push_back(g.flat(n));
        }
      }
    return rules;
  }
};

// Flags vertex conflicts, edge swaps, illegal moves, cargo changes away from
// buffer cells, and negative buffers between two consecutive states.
inline std::vector<StepViolation> check_step(const FactoryState& prev,
                                             const FactoryState& next,
                                             const SFEInstance& inst) {
  static_assert(kNullToken == 0);
  std::vector<StepViolation> out;
  const long long t = next.t;
  if (prev.agent_count() != next.agent_count()) {
    out.push_back({t, "AgentCountChanged", ""});
    return out;
  }
  const MoveRules rules = MoveRules::from_layout(inst.layout);

  std::map<int, int> occupied;  // next cell -> agent
  for (int a = 0; a < next.agent_count(); ++a) {
    int from = prev.agent_cell[a], to = next.agent_cell[a];
    auto [it, fresh] = occupied.emplace(to, a);
    if (!fresh)
      out.push_back({t, "VertexConflict",
                     "agents " + std::to_string(it->second) + " and " +
                         std::to_string(a) + " share cell " +
                         std::to_string(to)});
    if (to != from) {
      const auto& exits = rules.exits[from];
      if (std::find(exits.begin(), exits.end(), to) == exits.end())
        out.push_back({t, "IllegalMove",
                       "agent " + std::to_string(a) + " jumped from " +
                           std::to_string(from) + " to " + std::to_string(to)});
    }
  }
  for (int a = 0; a < next.agent_count(); ++a) {
    int from = prev.agent_cell[a], to = next.agent_cell[a];
    if (to == from) continue;
    for (int b = a + 1; b < next.agent_count(); ++b)
      if (prev.agent_cell[b] == to && next.agent_cell[b] == from)
        out.push_back({t, "EdgeConflict",
                       "agents " + std::to_string(a) + " and " +
                           std::to_string(b) + " swapped cells"});
  }

  for (int a = 0; a < next.agent_count(); ++a) {
    TokenId before = prev.agent_cargo[a], after = next.agent_cargo[a];
    if (before == after) continue;
    Coord cell = inst.layout.coord(next.agent_cell[a]);
    bool legal = false;
    if (before != kNullToken && after == kNullToken) {
      for (const MachineSpec& m : inst.machines)
        if (m.input_cell && *m.input_cell == cell) legal = true;
    } else if (before == kNullToken && after != kNullToken) {
      for (const MachineSpec& m : inst.machines)
        if (m.output_cell && *m.output_cell == cell) legal = true;
    }
    if (!legal)
      out.push_back({t, "CargoTeleport",
                     "agent " + std::to_string(a) + " changed cargo " +
                         std::to_string(before) + "->" + std::to_string(after) +
                         " away from a matching buffer cell"});
  }

  for (const auto* buffers : {&next.input_buffer, &next.output_buffer})
    for (const auto& buf : *buffers)
      for (auto [tok, count] : buf)
        if (count < 0)
          out.push_back({t, "NegativeBuffer",
                         "token " + std::to_string(tok) + " count " +
                             std::to_string(count)});
  return out;
}

namespace detail {

// Aggregate queue fingerprint: per road (index 0 collects junction cells),
// how many agents carry each token. Used for the cycle-periodicity check.
inline std::vector<std::vector<long long>> road_aggregate(
    const SFEInstance& inst, const FactoryState& st) {
  std::vector<std::vector<long long>> agg(
      inst.road_count() + 1,
      std::vector<long long>(inst.token_count() + 1, 0));
  for (int a = 0; a < st.agent_count(); ++a) {
    int road = inst.road_of_cell[st.agent_cell[a]];
    agg[road][st.agent_cargo[a]] += 1;
  }
  return agg;
}

}  // namespace detail

// Runs the generator for `cycles` full plan cycles, re-checking every step
// with the independent movement rules, verifying buffer deltas, and measuring
// empirical throughput (warm-up cycle excluded).
inline SimReport run_simulation(const SFEInstance& inst,
                                const TrafficSystemEmbedding& emb, int cycles,
                                uint64_t seed) {
  if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
  SimReport report;
  report.cycles = cycles;
  const long long cycle_len =
      static_cast<long long>(emb.hyper.num_epochs) * emb.hyper.epoch_len;
  const long long total = cycle_len * cycles;
  report.timesteps = total;

  const int out_process = inst.output_process;
  long long per_run_inputs = 0;  // tokens one output-process run consumes
  for (auto [tok, count] : inst.procedure.processes[out_process].inputs)
    per_run_inputs += count;

  FactoryState st;
  GeneratorState gen;
  try {
    std::tie(st, gen) = initialize_sf(inst, emb);
  } catch (const std::runtime_error& e) {
    report.violations.push_back({0, "InitializationFailed", e.what()});
    return report;
  }

  std::vector<std::vector<std::vector<long long>>> boundary_aggregates;
  double wall_sum_ms = 0;

  for (long long t = 0; t < total; ++t) {
    FactoryState prev = st;
    bool conversion_step =
        t % cycle_len == 0 && t > 0;  // machines run one aggregate cycle here
    auto t0 = std::chrono::steady_clock::now();
    try {
      step(inst, emb, st, gen, seed);
    } catch (const std::runtime_error& e) {
      report.violations.push_back({t + 1, "GeneratorError", e.what()});
      break;
    }
    std::chrono::duration<double, std::milli> ms =
        std::chrono::steady_clock::now() - t0;
    wall_sum_ms += ms.count();
    report.max_step_wall_ms = std::max(report.max_step_wall_ms, ms.count());

    auto step_violations = check_step(prev, st, inst);
    report.violations.insert(report.violations.end(), step_violations.begin(),
                             step_violations.end());

    // Buffer deltas must equal observed cargo changes (plus the aggregate
    // machine run at cycle boundaries).
    std::vector<std::map<TokenId, long long>> dep(inst.machine_count()),
        pick(inst.machine_count());
    long long deliveries_this_step = 0;
    for (int a = 0; a < st.agent_count(); ++a) {
      TokenId before = prev.agent_cargo[a], after = st.agent_cargo[a];
      if (before == after) continue;
      Coord cell = inst.layout.coord(st.agent_cell[a]);
      for (int m = 0; m < inst.machine_count(); ++m) {
        if (before != kNullToken && after == kNullToken &&
            inst.machines[m].input_cell && *inst.machines[m].input_cell == cell) {
          dep[m][before] += 1;
          if (emb.assign[emb.dims.mp_idx(m, out_process)] && t >= cycle_len)
            deliveries_this_step += 1;
        }
        if (before == kNullToken && after != kNullToken &&
            inst.machines[m].output_cell &&
            *inst.machines[m].output_cell == cell)
          pick[m][after] += 1;
      }
    }
    report.deliveries += deliveries_this_step;
    for (int m = 0; m < inst.machine_count(); ++m) {
      for (TokenId tok = 1; tok <= inst.token_count(); ++tok) {
        auto count = [tok](const std::map<TokenId, long long>& buf) {
          auto it = buf.find(tok);
          return it == buf.end() ? 0LL : it->second;
        };
        long long conv_in = 0, conv_out = 0;
        if (conversion_step)
          for (int T = 0; T < emb.dims.epochs; ++T) {
            conv_in += emb.deposit[emb.dims.pd_idx(m, T, tok)];
            conv_out += emb.pickup[emb.dims.pd_idx(m, T, tok)];
          }
        long long want_in =
            count(prev.input_buffer[m]) + dep[m][tok] - conv_in;
        long long want_out =
            count(prev.output_buffer[m]) - pick[m][tok] + conv_out;
        if (count(st.input_buffer[m]) != want_in ||
            count(st.output_buffer[m]) != want_out) {
          report.violations.push_back(
              {t + 1, "BufferMismatch",
               "machine " + std::to_string(inst.machines[m].id) + " token " +
                   std::to_string(tok)});
        }
      }
    }

    if (st.t % cycle_len == 0)
      boundary_aggregates.push_back(detail::road_aggregate(inst, st));
  }

  report.mean_step_wall_ms = total > 0 ? wall_sum_ms / total : 0;
  report.periodicity_ok = true;
  for (size_t k = 1; k < boundary_aggregates.size(); ++k)
    if (boundary_aggregates[k] != boundary_aggregates[0])
      report.periodicity_ok = false;

  if (cycles >= 2 && report.violations.empty()) {
    double window = static_cast<double>((cycles - 1) * cycle_len);
    report.measured_throughput =
        per_run_inputs > 0
            ? static_cast<double>(report.deliveries) / (window * per_run_inputs)
            : 0.0;
  }
  return report;
}

}  // namespace sfe
