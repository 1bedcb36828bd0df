#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfe {

// Token ids are dense 1..|T|; id 0 is the null token (empty cargo).
using TokenId = int;
inline constexpr TokenId kNullToken = 0;

struct Coord {
  int x = 0;
  int y = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

struct Token {
  TokenId id = 0;
  std::string name;
};

struct Process {
  int id = 0;
  std::map<TokenId, int> inputs;   // token -> copies consumed per run
  std::map<TokenId, int> outputs;  // token -> copies emitted per run
  bool is_output = false;

  bool is_source() const { return inputs.empty(); }
  bool is_sink() const { return outputs.empty(); }
  int num_in(TokenId t) const {
    auto it = inputs.find(t);
    return it == inputs.end() ? 0 : it->second;
  }
  int num_out(TokenId t) const {
    auto it = outputs.find(t);
    return it == outputs.end() ? 0 : it->second;
  }
};

struct ManufacturingProcedure {
  std::vector<Token> tokens;  // ids 1..tokens.size(), in declaration order
  std::vector<Process> processes;

  int token_count() const { return static_cast<int>(tokens.size()); }
};

struct MachineSpec {
  int id = 0;
  std::map<int, int> supported;  // process id -> runtime in timesteps
  std::optional<Coord> input_cell;
  std::optional<Coord> output_cell;
  // Derived during instance validation: a source machine supports only
  // source processes and has no input cell; a sink machine supports only
  // sink processes and has no output cell.
  bool is_source = false;
  bool is_sink = false;
};

// Grid characters: '>' '<' '^' 'v' road cell with that exit direction,
// '+' junction cell, '#' obstacle, '.' empty non-traversable.
struct Layout {
  int width = 0;
  int height = 0;
  std::string cells;  // row-major

  static bool is_road_char(char c) {
    return c == '>' || c == '<' || c == '^' || c == 'v';
  }
  static bool is_junction_char(char c) { return c == '+'; }
  static bool is_traversable_char(char c) {
    return is_road_char(c) || is_junction_char(c);
  }

  bool in_bounds(Coord c) const {
    return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height;
  }
  char at(Coord c) const { return cells[static_cast<size_t>(c.y) * width + c.x]; }
  int flat(Coord c) const { return c.y * width + c.x; }
  Coord coord(int flat_index) const {
    return {flat_index % width, flat_index / width};
  }
  bool is_road(Coord c) const { return in_bounds(c) && is_road_char(at(c)); }
  bool is_junction(Coord c) const {
    return in_bounds(c) && is_junction_char(at(c));
  }
  bool is_traversable(Coord c) const {
    return in_bounds(c) && is_traversable_char(at(c));
  }

  // The cell a road cell points at; only meaningful for road cells.
  Coord road_exit(Coord c) const {
    switch (at(c)) {
      case '>': return {c.x + 1, c.y};
      case '<': return {c.x - 1, c.y};
      case '^': return {c.x, c.y - 1};
      default:  return {c.x, c.y + 1};  // 'v'
    }
  }

  std::vector<Coord> neighbors4(Coord c) const {
    std::vector<Coord> out;
    for (Coord n : {Coord{c.x + 1, c.y}, Coord{c.x - 1, c.y},
                    Coord{c.x, c.y + 1}, Coord{c.x, c.y - 1}}) {
      if (in_bounds(n)) out.push_back(n);
    }
    return out;
  }

  int traversable_count() const {
    int n = 0;
    for (char c : cells)
      if (is_traversable_char(c)) ++n;
    return n;
  }
};

enum class LayoutRule {
  EmptyGrid,
  NoJunction,
  NotStronglyConnected,
  BadRoadCellDegree,
  BadJunctionDegree,
};

inline const char* to_string(LayoutRule r) {
  switch (r) {
    case LayoutRule::EmptyGrid: return "EmptyGrid";
    case LayoutRule::NoJunction: return "NoJunction";
    case LayoutRule::NotStronglyConnected: return "NotStronglyConnected";
    case LayoutRule::BadRoadCellDegree: return "BadRoadCellDegree";
    case LayoutRule::BadJunctionDegree: return "BadJunctionDegree";
  }
  return "?";
}

struct LayoutViolation {
  LayoutRule rule;
  Coord cell{-1, -1};
  std::string detail;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(std::vector<std::string> violated)
      : std::runtime_error(join(violated)), rules(std::move(violated)) {}
  std::vector<std::string> rules;

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "instance validation failed:";
    for (const auto& r : v) s += "\n  - " + r;
    return s;
  }
};

namespace detail {

// Arcs of the layout graph. A road cell has one arc to the cell it points
// at. A junction has an arc to every adjacent road cell that does not point
// back into it (those cells take the junction as their entry).
inline std::vector<std::vector<int>> layout_arcs(const Layout& g) {
  std::vector<std::vector<int>> arcs(g.cells.size());
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      Coord c{x, y};
      if (g.is_road(c)) {
        Coord e = g.road_exit(c);
        if (g.is_traversable(e)) arcs[g.flat(c)].push_back(g.flat(e));
      } else if (g.is_junction(c)) {
        for (Coord n : g.neighbors4(c))
          if (g.is_road(n) && g.road_exit(n) != c)
            arcs[g.flat(c)].push_back(g.flat(n));
      }
    }
  }
  return arcs;
}

// Iterative Tarjan SCC over the traversable cells.
inline int count_sccs(const Layout& g, const std::vector<std::vector<int>>& arcs) {
  const int n = static_cast<int>(g.cells.size());
  std::vector<int> index(n, -1), low(n, 0), on_stack(n, 0);
  std::vector<int> stack;
  int next_index = 0, sccs = 0;

  struct Frame {
    int v;
    size_t child;
  };
  for (int start = 0; start < n; ++start) {
    if (!Layout::is_traversable_char(g.cells[start]) || index[start] != -1)
      continue;
    std::vector<Frame> frames{{start, 0}};
    index[start] = low[start] = next_index++;
    stack.push_back(start);
    on_stack[start] = 1;
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.child < arcs[f.v].size()) {
        int w = arcs[f.v][f.child++];
        if (index[w] == -1) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = 1;
          frames.push_back({w, 0});
        } else if (on_stack[w]) {
          low[f.v] = std::min(low[f.v], index[w]);
        }
      } else {
        if (low[f.v] == index[f.v]) {
          ++sccs;
          int w;
          do {
            w = stack.back();
            stack.pop_back();
            on_stack[w] = 0;
          } while (w != f.v);
        }
        int v = f.v;
        frames.pop_back();
        if (!frames.empty())
          low[frames.back().v] = std::min(low[frames.back().v], low[v]);
      }
    }
  }
  return sccs;
}

}  // namespace detail

// Checks the per-cell degree rules, the junction-existence rule, and strong
// connectivity of the layout graph. Violations are returned as data.
inline std::vector<LayoutViolation> validate_layout(const Layout& g) {
  std::vector<LayoutViolation> out;
  if (g.width == 0 || g.height == 0 || g.traversable_count() == 0) {
    out.push_back({LayoutRule::EmptyGrid, {-1, -1}, "no traversable cells"});
    return out;
  }

  int junctions = 0;
  auto arcs = detail::layout_arcs(g);

  // entry counts per cell
  std::vector<int> entries(g.cells.size(), 0);
  for (size_t v = 0; v < arcs.size(); ++v)
    for (int w : arcs[v]) ++entries[w];

  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      Coord c{x, y};
      if (g.is_road(c)) {
        Coord e = g.road_exit(c);
        if (!g.is_traversable(e)) {
          out.push_back({LayoutRule::BadRoadCellDegree, c,
                         "road cell exit points at a non-traversable cell"});
        }
        if (entries[g.flat(c)] != 1) {
          out.push_back({LayoutRule::BadRoadCellDegree, c,
                         "road cell has " + std::to_string(entries[g.flat(c)]) +
                             " entry cells, expected 1"});
        }
      } else if (g.is_junction(c)) {
        ++junctions;
        int in = 0;
        for (Coord n : g.neighbors4(c))
          if (g.is_road(n) && g.road_exit(n) == c) ++in;
        int exits = static_cast<int>(arcs[g.flat(c)].size());
        if (in < 1 || exits < 1) {
          out.push_back({LayoutRule::BadJunctionDegree, c,
                         "junction cell needs at least one entry and one exit "
                         "road cell"});
        }
      }
    }
  }

  if (junctions == 0)
    out.push_back({LayoutRule::NoJunction, {-1, -1},
                   "layout must contain at least one junction cell"});

  if (detail::count_sccs(g, arcs) > 1)
    out.push_back({LayoutRule::NotStronglyConnected, {-1, -1},
                   "layout graph is not strongly connected"});
  return out;
}

struct Road {
  int id = 0;  // 1-based, assigned in row-major order of the tail cell
  std::vector<Coord> path;  // tail .. head (head is adjacent to to_junction)
  int from_junction = 0;
  int to_junction = 0;
  std::vector<int> inputs_on;   // machine indices with input cell on this road
  std::vector<int> outputs_on;  // machine indices with output cell on this road

  int len() const { return static_cast<int>(path.size()); }
  Coord tail() const { return path.front(); }
  Coord head() const { return path.back(); }
};

struct Junction {
  int id = 0;  // 1-based, assigned in row-major order of the cell
  Coord cell;
  std::vector<int> entry_roads;  // road ids with to_junction == id
  std::vector<int> exit_roads;   // road ids with from_junction == id
};

struct TrafficSystem {
  std::vector<Road> roads;
  std::vector<Junction> junctions;

  const Road& road(int id) const { return roads[id - 1]; }
  const Junction& junction(int id) const { return junctions[id - 1]; }
};

// Groups the road cells into maximal junction-to-junction chains and the
// junction cells into junctions. Deterministic: ids follow row-major order.
inline TrafficSystem extract_traffic_system(
    const Layout& g, const std::vector<MachineSpec>& machines) {
  TrafficSystem ts;

  std::vector<Coord> junction_cells;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      if (g.is_junction({x, y})) junction_cells.push_back({x, y});

  std::map<Coord, int> junction_id;
  for (size_t i = 0; i < junction_cells.size(); ++i) {
    Junction j;
    j.id = static_cast<int>(i) + 1;
    j.cell = junction_cells[i];
    junction_id[j.cell] = j.id;
    ts.junctions.push_back(j);
  }

  // Walk chains from every junction exit until the next junction.
  std::vector<Road> chains;
  std::set<Coord> covered;
  for (const Junction& j : ts.junctions) {
    for (Coord n : g.neighbors4(j.cell)) {
      if (!g.is_road(n) || g.road_exit(n) == j.cell) continue;
      Road r;
      r.from_junction = j.id;
      Coord cur = n;
      while (true) {
        if (covered.count(cur))
          throw ValidationError({"road cell chain overlaps another road at (" +
                                 std::to_string(cur.x) + "," +
                                 std::to_string(cur.y) + ")"});
        covered.insert(cur);
        r.path.push_back(cur);
        Coord e = g.road_exit(cur);
        if (g.is_junction(e)) {
          r.to_junction = junction_id.at(e);
          break;
        }
        if (!g.is_road(e))
          throw ValidationError({"road cell chain does not terminate at a "
                                 "junction cell"});
        cur = e;
      }
      chains.push_back(std::move(r));
    }
  }

  // Any road cell not reached from a junction would be a junction-free loop.
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      if (g.is_road({x, y}) && !covered.count({x, y}))
        throw ValidationError({"road cell (" + std::to_string(x) + "," +
                               std::to_string(y) +
                               ") is not on any junction-to-junction road"});

  std::sort(chains.begin(), chains.end(), [&](const Road& a, const Road& b) {
    return std::pair(a.tail().y, a.tail().x) < std::pair(b.tail().y, b.tail().x);
  });
  for (size_t i = 0; i < chains.size(); ++i) chains[i].id = static_cast<int>(i) + 1;

  for (size_t mi = 0; mi < machines.size(); ++mi) {
    auto place = [&](const std::optional<Coord>& cell, bool input) {
      if (!cell) return;
      for (Road& r : chains) {
        if (std::find(r.path.begin(), r.path.end(), *cell) != r.path.end()) {
          (input ? r.inputs_on : r.outputs_on).push_back(static_cast<int>(mi));
          return;
        }
      }
      throw ValidationError({"machine buffer cell (" + std::to_string(cell->x) +
                             "," + std::to_string(cell->y) +
                             ") is not a road cell"});
    };
    place(machines[mi].input_cell, true);
    place(machines[mi].output_cell, false);
  }

  ts.roads = std::move(chains);
  for (const Road& r : ts.roads) {
    ts.junctions[r.to_junction - 1].entry_roads.push_back(r.id);
    ts.junctions[r.from_junction - 1].exit_roads.push_back(r.id);
  }
  return ts;
}

struct SFEInstance {
  ManufacturingProcedure procedure;
  std::vector<MachineSpec> machines;
  Layout layout;
  TrafficSystem traffic;
  int agent_count = 0;

  // Derived lookups (filled by create()).
  int output_process = -1;               // index into procedure.processes
  std::vector<int> road_of_cell;         // flat cell -> road id (0 = none)
  std::vector<int> junction_of_cell;     // flat cell -> junction id (0 = none)
  std::map<int, int> process_index_by_id;
  std::map<int, int> machine_index_by_id;
  std::map<std::string, TokenId> token_by_name;

  int machine_count() const { return static_cast<int>(machines.size()); }
  int process_count() const {
    return static_cast<int>(procedure.processes.size());
  }
  int token_count() const { return procedure.token_count(); }
  int road_count() const { return static_cast<int>(traffic.roads.size()); }
  int junction_count() const {
    return static_cast<int>(traffic.junctions.size());
  }
  int max_road_len() const {
    int m = 0;
    for (const Road& r : traffic.roads) m = std::max(m, r.len());
    return m;
  }
  // Runtime of process p on machine m, 0 when unsupported.
  int runtime(int machine_index, int process_index) const {
    const auto& sup = machines[machine_index].supported;
    auto it = sup.find(procedure.processes[process_index].id);
    return it == sup.end() ? 0 : it->second;
  }
  bool supports(int machine_index, int process_index) const {
    return runtime(machine_index, process_index) > 0;
  }

  static SFEInstance create(ManufacturingProcedure procedure,
                            std::vector<MachineSpec> machines, Layout layout,
                            int agent_count,
                            bool strict_one_buffer_per_road = false);
};

inline SFEInstance SFEInstance::create(ManufacturingProcedure procedure,
                                       std::vector<MachineSpec> machines,
                                       Layout layout, int agent_count,
                                       bool strict_one_buffer_per_road) {
  std::vector<std::string> bad;

  // --- procedure rules ---
  std::set<std::string> names;
  for (const Token& t : procedure.tokens)
    if (!names.insert(t.name).second)
      bad.push_back("duplicate token name '" + t.name + "'");
  const int num_tokens = procedure.token_count();

  int output_count = 0;
  std::set<int> process_ids;
  for (const Process& p : procedure.processes) {
    if (!process_ids.insert(p.id).second)
      bad.push_back("duplicate process id " + std::to_string(p.id));
    if (p.is_output) {
      ++output_count;
      if (!p.is_sink())
        bad.push_back("output process " + std::to_string(p.id) +
                      " must be a sink process");
    }
    if (p.inputs.empty() && p.outputs.empty())
      bad.push_back("process " + std::to_string(p.id) +
                    " consumes and produces nothing");
    for (const auto& side : {p.inputs, p.outputs})
      for (auto [tok, count] : side) {
        if (tok < 1 || tok > num_tokens)
          bad.push_back("process " + std::to_string(p.id) +
                        " references undeclared token " + std::to_string(tok));
        if (count < 1)
          bad.push_back("process " + std::to_string(p.id) +
                        " has a non-positive token count");
      }
  }
  if (output_count != 1)
    bad.push_back("exactly one process must be marked output, found " +
                  std::to_string(output_count));

  // --- machine rules ---
  std::set<int> machine_ids;
  std::set<Coord> buffer_cells;
  std::map<int, const Process*> process_by_id;
  for (const Process& p : procedure.processes) process_by_id[p.id] = &p;

  for (MachineSpec& m : machines) {
    if (!machine_ids.insert(m.id).second)
      bad.push_back("duplicate machine id " + std::to_string(m.id));
    bool any_source = false, any_sink = false, any_regular = false;
    for (auto [pid, rho] : m.supported) {
      auto it = process_by_id.find(pid);
      if (it == process_by_id.end()) {
        bad.push_back("machine " + std::to_string(m.id) +
                      " supports unknown process " + std::to_string(pid));
        continue;
      }
      if (rho < 1)
        bad.push_back("machine " + std::to_string(m.id) + " has runtime " +
                      std::to_string(rho) + " < 1 for process " +
                      std::to_string(pid));
      if (it->second->is_source())
        any_source = true;
      else if (it->second->is_sink())
        any_sink = true;
      else
        any_regular = true;
    }
    if ((any_source && (any_sink || any_regular)) ||
        (any_sink && any_regular))
      bad.push_back("machine " + std::to_string(m.id) +
                    " mixes source/sink processes with other processes");
    m.is_source = any_source;
    m.is_sink = any_sink;
    if (m.is_source && m.input_cell)
      bad.push_back("source machine " + std::to_string(m.id) +
                    " must not have an input cell");
    if (m.is_sink && m.output_cell)
      bad.push_back("sink machine " + std::to_string(m.id) +
                    " must not have an output cell");
    if (!m.is_source && !m.input_cell)
      bad.push_back("machine " + std::to_string(m.id) +
                    " needs an input cell");
    if (!m.is_sink && !m.output_cell)
      bad.push_back("machine " + std::to_string(m.id) +
                    " needs an output cell");
    for (const auto& cell : {m.input_cell, m.output_cell}) {
      if (!cell) continue;
      if (!layout.is_road(*cell))
        bad.push_back("machine " + std::to_string(m.id) + " buffer cell (" +
                      std::to_string(cell->x) + "," + std::to_string(cell->y) +
                      ") is not a road cell");
      if (!buffer_cells.insert(*cell).second)
        bad.push_back("buffer cell (" + std::to_string(cell->x) + "," +
                      std::to_string(cell->y) +
                      ") is shared by two machine buffers");
    }
  }

  if (agent_count < 0) bad.push_back("agent count must be nonnegative");

  for (const LayoutViolation& v : validate_layout(layout))
    bad.push_back(std::string("layout: ") + to_string(v.rule) +
                  (v.detail.empty() ? "" : " (" + v.detail + ")"));

  if (!bad.empty()) throw ValidationError(std::move(bad));

  SFEInstance inst;
  inst.procedure = std::move(procedure);
  inst.machines = std::move(machines);
  inst.layout = std::move(layout);
  inst.agent_count = agent_count;
  inst.traffic = extract_traffic_system(inst.layout, inst.machines);

  if (strict_one_buffer_per_road) {
    for (const Road& r : inst.traffic.roads)
      if (r.inputs_on.size() + r.outputs_on.size() > 1)
        bad.push_back("road " + std::to_string(r.id) +
                      " carries more than one buffer cell (strict mode)");
    if (!bad.empty()) throw ValidationError(std::move(bad));
  }

  inst.road_of_cell.assign(inst.layout.cells.size(), 0);
  inst.junction_of_cell.assign(inst.layout.cells.size(), 0);
  for (const Road& r : inst.traffic.roads)
    for (Coord c : r.path) inst.road_of_cell[inst.layout.flat(c)] = r.id;
  for (const Junction& j : inst.traffic.junctions)
    inst.junction_of_cell[inst.layout.flat(j.cell)] = j.id;

  for (size_t i = 0; i < inst.procedure.processes.size(); ++i) {
    inst.process_index_by_id[inst.procedure.processes[i].id] =
        static_cast<int>(i);
    if (inst.procedure.processes[i].is_output)
      inst.output_process = static_cast<int>(i);
  }
  for (size_t i = 0; i < inst.machines.size(); ++i)
    inst.machine_index_by_id[inst.machines[i].id] = static_cast<int>(i);
  for (const Token& t : inst.procedure.tokens) inst.token_by_name[t.name] = t.id;

  return inst;
}

}  // namespace sfe
