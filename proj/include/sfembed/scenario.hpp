#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "sfembed/model.hpp"

namespace sfe {

// Parametric stand-ins for the three industry shapes: a sequential stage
// chain, a fan-in assembly tree, and a mesh of parallel redundant machines.
enum class ScenarioFamily { LineChain, AssemblyTree, GridMesh };

inline const char* to_string(ScenarioFamily f) {
  switch (f) {
    case ScenarioFamily::LineChain: return "line-chain";
    case ScenarioFamily::AssemblyTree: return "assembly-tree";
    case ScenarioFamily::GridMesh: return "grid-mesh";
  }
  return "?";
}

inline std::optional<ScenarioFamily> scenario_family_from_string(
    const std::string& s) {
  if (s == "line-chain") return ScenarioFamily::LineChain;
  if (s == "assembly-tree") return ScenarioFamily::AssemblyTree;
  if (s == "grid-mesh") return ScenarioFamily::GridMesh;
  return std::nullopt;
}

struct ScenarioSpec {
  ScenarioFamily family = ScenarioFamily::GridMesh;
  int machine_count = 8;
  int process_count = 0;    // 0 = derived from the machine count
  // Upper bound on per-process token copies. Counts above 1 multiply the
  // required upstream flow and can make small epoch counts infeasible.
  int max_token_count = 1;
  int road_len = 6;         // road cells per lattice segment (>= 5)
  int agents = 1000;
  uint64_t seed = 1;
};

namespace detail {

// The generated factory is a one-way road lattice (clockwise boundary ring,
// alternating interior rows and columns) whose horizontal streets can carry
// "docks": a short stretch between two inserted junctions plus a return lane
// underneath, forming a local two-road cycle. A producer's output cell on the
// stretch and a consumer's input cell on the return lane let agents shuttle
// tokens between the two machines with short cyclic plans.
struct DockCells {
  std::vector<Coord> stretch;  // forward lane cells (up to 2 buffer cells)
  Coord return_cell;           // one buffer cell on the return lane
};

class LatticeBuilder {
 public:
  LatticeBuilder(int junction_dim, int road_len)
      : k_(junction_dim), len_(road_len), spacing_(road_len + 1) {
    g_.width = (k_ - 1) * spacing_ + 1;
    g_.height = (k_ - 1) * spacing_ + 1;
    g_.cells.assign(static_cast<size_t>(g_.width) * g_.height, '.');
    for (int r = 0; r < k_; ++r)
      for (int c = 0; c < k_; ++c) set(c * spacing_, r * spacing_, '+');
    for (int r = 0; r < k_; ++r)
      for (int c = 0; c + 1 < k_; ++c) {
        int y = r * spacing_;
        for (int i = 1; i <= len_; ++i)
          set(c * spacing_ + i, y, row_east(r) ? '>' : '<');
      }
    for (int c = 0; c < k_; ++c) {
      bool down = c == 0 ? false : (c == k_ - 1 ? true : c % 2 == 1);
      for (int r = 0; r + 1 < k_; ++r) {
        int x = c * spacing_;
        for (int i = 1; i <= len_; ++i)
          set(x, r * spacing_ + i, down ? 'v' : '^');
      }
    }
  }

  // Docks avoid the boundary rows, so the outer ring always stays plain
  // one-way streets.
  int dock_capacity() const { return (k_ - 2) * (k_ - 1); }

  // Carves a dock into the horizontal segment (col, row+1)->(col+1, row+1).
  DockCells add_dock(int index) {
    int row = 1 + index / (k_ - 1), col = index % (k_ - 1);
    int px = col * spacing_, py = row * spacing_;
    bool east = row_east(row);
    int lane_y = py + 1;
    int m1 = east ? px + 2 : px + len_ - 1;  // junction nearer the tail
    int m2 = east ? px + len_ - 1 : px + 2;
    set(m1, py, '+');
    set(m2, py, '+');
    DockCells cells;
    for (int x = px + 3; x <= px + len_ - 2; ++x) cells.stretch.push_back({x, py});
    // return lane from m2 back to m1
    for (int x = px + 2; x <= px + len_ - 1; ++x)
      set(x, lane_y, east ? '<' : '>');
    set(m1, lane_y, lane_y < py ? 'v' : '^');
    cells.return_cell = {px + len_ / 2, lane_y};
    return cells;
  }

  Layout take() { return std::move(g_); }

 private:
  bool row_east(int r) const {
    return r == 0 ? true : (r == k_ - 1 ? false : r % 2 == 0);
  }
  void set(int x, int y, char c) {
    g_.cells[static_cast<size_t>(y) * g_.width + x] = c;
  }

  int k_, len_, spacing_;
  Layout g_;
};

// Process graph roles: role 0 is a source; the last role is the output sink;
// parents[i] lists the roles feeding role i.
struct ProcedurePlan {
  ManufacturingProcedure procedure;
  std::vector<std::vector<int>> parents;  // per role, producer roles
};

inline ProcedurePlan chain_procedure(int stages, int max_count,
                                     std::mt19937_64& rng) {
  ProcedurePlan plan;
  ManufacturingProcedure& proc = plan.procedure;
  for (int i = 1; i < stages; ++i)
    plan.procedure.tokens.push_back({i, "s" + std::to_string(i)});
  for (int i = 1; i <= stages; ++i) {
    Process p;
    p.id = i;
    if (i > 1)
      p.inputs[i - 1] =
          1 + static_cast<int>(rng() % static_cast<uint64_t>(max_count));
    if (i < stages) p.outputs[i] = 1;
    p.is_output = (i == stages);
    proc.processes.push_back(std::move(p));
    plan.parents.push_back(i > 1 ? std::vector<int>{i - 2}
                                 : std::vector<int>{});
  }
  return plan;
}

inline ProcedurePlan tree_procedure(int leaves, int max_count,
                                    std::mt19937_64& rng) {
  ProcedurePlan plan;
  ManufacturingProcedure& proc = plan.procedure;
  int next_token = 1;
  std::vector<int> frontier_tokens, frontier_roles;
  for (int i = 0; i < leaves; ++i) {
    int tok = next_token++;
    proc.tokens.push_back({tok, "part" + std::to_string(tok)});
    Process p;
    p.id = static_cast<int>(proc.processes.size()) + 1;
    p.outputs[tok] = 1;
    proc.processes.push_back(std::move(p));
    plan.parents.push_back({});
    frontier_tokens.push_back(tok);
    frontier_roles.push_back(i);
  }
  while (frontier_tokens.size() > 1) {
    int tok = next_token++;
    proc.tokens.push_back({tok, "asm" + std::to_string(tok)});
    Process p;
    p.id = static_cast<int>(proc.processes.size()) + 1;
    p.inputs[frontier_tokens[0]] =
        1 + static_cast<int>(rng() % static_cast<uint64_t>(max_count));
    p.inputs[frontier_tokens[1]] = 1;
    p.outputs[tok] = 1;
    proc.processes.push_back(std::move(p));
    plan.parents.push_back({frontier_roles[0], frontier_roles[1]});
    frontier_tokens.erase(frontier_tokens.begin(), frontier_tokens.begin() + 2);
    frontier_roles.erase(frontier_roles.begin(), frontier_roles.begin() + 2);
    frontier_tokens.push_back(tok);
    frontier_roles.push_back(static_cast<int>(plan.parents.size()) - 1);
  }
  Process out;
  out.id = static_cast<int>(proc.processes.size()) + 1;
  out.inputs[frontier_tokens[0]] = 1;
  out.is_output = true;
  proc.processes.push_back(out);
  plan.parents.push_back({frontier_roles[0]});
  return plan;
}

}  // namespace detail

// Deterministically generates a valid instance: a strongly connected one-way
// lattice with docked buffer cells for complete process pipelines and
// randomly scattered buffer cells for the redundant machines.
inline SFEInstance generate_scenario(const ScenarioSpec& spec) {
  if (spec.machine_count < 3)
    throw ValidationError({"scenario needs at least 3 machines"});
  if (spec.road_len < 5)
    throw ValidationError({"scenario road_len must be at least 5"});
  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL +
                      static_cast<uint64_t>(spec.family) * 131 +
                      static_cast<uint64_t>(spec.machine_count));

  detail::ProcedurePlan plan;
  switch (spec.family) {
    case ScenarioFamily::LineChain: {
      int stages = spec.process_count > 0
                       ? spec.process_count
                       : std::clamp(spec.machine_count / 3 + 2, 3, 8);
      stages = std::min(stages, spec.machine_count);
      plan = detail::chain_procedure(stages, spec.max_token_count, rng);
      break;
    }
    case ScenarioFamily::GridMesh: {
      int stages = spec.process_count > 0 ? spec.process_count : 5;
      stages = std::min(stages, spec.machine_count);
      plan = detail::chain_procedure(stages, spec.max_token_count, rng);
      break;
    }
    case ScenarioFamily::AssemblyTree: {
      int leaves = spec.process_count > 0 ? std::max(2, spec.process_count / 2)
                                          : 3;
      while (2 * leaves > spec.machine_count && leaves > 2) --leaves;
      plan = detail::tree_procedure(leaves, spec.max_token_count, rng);
      break;
    }
  }

  const int roles = static_cast<int>(plan.procedure.processes.size());

  // One machine per role first, then spread the leftovers; grid-mesh pushes
  // the redundancy into the middle stages.
  std::vector<int> machine_role;
  for (int r = 0; r < roles; ++r) machine_role.push_back(r);
  int round_robin = 0;
  while (static_cast<int>(machine_role.size()) < spec.machine_count) {
    if (spec.family == ScenarioFamily::GridMesh && roles > 2) {
      // Half the redundancy spread evenly (more complete pipelines), half
      // concentrated in the middle stages.
      if (rng() % 2 == 0)
        machine_role.push_back(round_robin++ % roles);
      else
        machine_role.push_back(
            1 + static_cast<int>(
                    rng() % static_cast<uint64_t>(std::max(1, roles - 2))));
    } else {
      machine_role.push_back(
          static_cast<int>(rng() % static_cast<uint64_t>(roles)));
    }
  }

  // Complete pipelines: every copy of the procedure whose roles all have a
  // machine left gets docked buffer cells.
  std::vector<std::vector<int>> machines_of_role(roles);
  for (size_t m = 0; m < machine_role.size(); ++m)
    machines_of_role[machine_role[m]].push_back(static_cast<int>(m));
  int pipelines = spec.machine_count;
  for (int r = 0; r < roles; ++r)
    pipelines =
        std::min(pipelines, static_cast<int>(machines_of_role[r].size()));

  // Docks needed: one per consuming role per pipeline.
  int consuming_roles = 0;
  for (int r = 0; r < roles; ++r)
    if (!plan.parents[r].empty()) ++consuming_roles;
  int docks_needed = pipelines * consuming_roles;

  int buffer_cells = 0;
  for (int role : machine_role) {
    const Process& p = plan.procedure.processes[role];
    buffer_cells += (p.is_source() ? 0 : 1) + (p.is_sink() ? 0 : 1);
  }

  int k = 3;
  while ((k - 2) * (k - 1) < docks_needed ||
         (2 * k * k - 2 * k) * spec.road_len <
             buffer_cells + 4 * docks_needed + std::max(8, buffer_cells / 3))
    ++k;

  detail::LatticeBuilder builder(k, spec.road_len);
  std::vector<detail::DockCells> docks;
  std::vector<int> dock_slots(builder.dock_capacity());
  for (size_t i = 0; i < dock_slots.size(); ++i)
    dock_slots[i] = static_cast<int>(i);
  std::shuffle(dock_slots.begin(), dock_slots.end(), rng);
  for (int d = 0; d < docks_needed; ++d)
    docks.push_back(builder.add_dock(dock_slots[d]));
  Layout layout = builder.take();

  std::vector<MachineSpec> machines(machine_role.size());
  for (size_t m = 0; m < machine_role.size(); ++m) {
    machines[m].id = static_cast<int>(m) + 1;
    for (int pid : {plan.procedure.processes[machine_role[m]].id})
      machines[m].supported[pid] = 1 + static_cast<int>(rng() % 3);
  }
  // grid-mesh machines can run both of a pair of neighbouring stages
  if (spec.family == ScenarioFamily::GridMesh)
    for (size_t m = 0; m < machine_role.size(); ++m) {
      int role = machine_role[m];
      if (role >= 1 && role + 2 < roles)
        machines[m].supported[plan.procedure.processes[role + 1].id] =
            1 + static_cast<int>(rng() % 3);
    }

  // Dock assignment: for pipeline p and each consuming role, the consumers'
  // input cell goes on the return lane and the producers' output cells on
  // the stretch.
  int next_dock = 0;
  for (int p = 0; p < pipelines; ++p) {
    for (int r = 0; r < roles; ++r) {
      if (plan.parents[r].empty()) continue;
      detail::DockCells& dock = docks[next_dock++];
      machines[machines_of_role[r][p]].input_cell = dock.return_cell;
      for (size_t src = 0; src < plan.parents[r].size(); ++src)
        machines[machines_of_role[plan.parents[r][src]][p]].output_cell =
            dock.stretch.at(src);
    }
  }

  // Remaining buffer cells land on unused road cells.
  std::set<Coord> used;
  for (const detail::DockCells& d : docks) {
    used.insert(d.return_cell);
    for (Coord c : d.stretch) used.insert(c);
  }
  std::vector<Coord> free_cells;
  for (int y = 0; y < layout.height; ++y)
    for (int x = 0; x < layout.width; ++x)
      if (layout.is_road({x, y}) && !used.count({x, y}))
        free_cells.push_back({x, y});
  std::shuffle(free_cells.begin(), free_cells.end(), rng);
  size_t next_free = 0;
  for (size_t m = 0; m < machines.size(); ++m) {
    const Process& p = plan.procedure.processes[machine_role[m]];
    if (!p.is_source() && !machines[m].input_cell)
      machines[m].input_cell = free_cells.at(next_free++);
    if (!p.is_sink() && !machines[m].output_cell)
      machines[m].output_cell = free_cells.at(next_free++);
  }

  return SFEInstance::create(plan.procedure, std::move(machines),
                             std::move(layout), spec.agents);
}

}  // namespace sfe
