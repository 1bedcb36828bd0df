#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sfembed/model.hpp"
#include "sfembed/rational.hpp"

namespace sfe {

struct BuildError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct HyperParams {
  int num_epochs = 1;  // N
  int epoch_len = 1;   // L, in timesteps

  // Agents must be able to traverse the longest road within one epoch.
  bool valid_for(const SFEInstance& inst) const {
    return num_epochs >= 1 && epoch_len >= inst.max_road_len() + 1;
  }
};

// Tensor dimensions of an embedding, kept with it so the flat storage can be
// indexed without the instance at hand.
struct TensorDims {
  int machines = 0, processes = 0, roads = 0, epochs = 0, tokens = 0;

  // b_in/b_out: (road, epoch, token incl. the null token)
  size_t b_size() const {
    return static_cast<size_t>(roads) * epochs * (tokens + 1);
  }
  size_t b_idx(int road_index, int epoch, TokenId tok) const {
    return (static_cast<size_t>(road_index) * epochs + epoch) * (tokens + 1) +
           tok;
  }
  // pickup/deposit: (machine, epoch, non-null token)
  size_t pd_size() const {
    return static_cast<size_t>(machines) * epochs * tokens;
  }
  size_t pd_idx(int machine_index, int epoch, TokenId tok) const {
    return (static_cast<size_t>(machine_index) * epochs + epoch) * tokens +
           (tok - 1);
  }
  size_t mp_idx(int machine_index, int process_index) const {
    return static_cast<size_t>(machine_index) * processes + process_index;
  }
};

// The traffic-system embedding: process assignment, run rates, epoch-granular
// agent/token flows per road, and pickup/deposit counts per machine.
struct TrafficSystemEmbedding {
  HyperParams hyper;
  TensorDims dims;
  std::vector<uint8_t> assign;          // |M| x |P| binary matrix
  std::vector<Rat> rate;                // |M| x |P| runs per timestep
  std::vector<long long> b_in, b_out;   // |R| x N x (|T|+1)
  std::vector<long long> pickup, deposit;  // |M| x N x |T|
  Rat objective;                        // throughput, finished products/step

  static TrafficSystemEmbedding zero(const SFEInstance& inst,
                                     HyperParams hyper) {
    TrafficSystemEmbedding e;
    e.hyper = hyper;
    e.dims = {inst.machine_count(), inst.process_count(), inst.road_count(),
              hyper.num_epochs, inst.token_count()};
    e.assign.assign(static_cast<size_t>(e.dims.machines) * e.dims.processes, 0);
    e.rate.assign(e.assign.size(), Rat{});
    e.b_in.assign(e.dims.b_size(), 0);
    e.b_out.assign(e.dims.b_size(), 0);
    e.pickup.assign(e.dims.pd_size(), 0);
    e.deposit.assign(e.dims.pd_size(), 0);
    return e;
  }

  int assigned_process(int machine_index) const {
    for (int p = 0; p < dims.processes; ++p)
      if (assign[dims.mp_idx(machine_index, p)]) return p;
    return -1;
  }
  // Agents placed by the plan: everyone counted outbound in epoch 0.
  long long agents_used() const {
    long long n = 0;
    for (int r = 0; r < dims.roads; ++r)
      for (TokenId tok = 0; tok <= dims.tokens; ++tok)
        n += b_out[dims.b_idx(r, 0, tok)];
    return n;
  }

  friend bool operator==(const TrafficSystemEmbedding& a,
                         const TrafficSystemEmbedding& b) {
    return a.hyper.num_epochs == b.hyper.num_epochs &&
           a.hyper.epoch_len == b.hyper.epoch_len && a.assign == b.assign &&
           a.rate == b.rate && a.b_in == b.b_in && a.b_out == b.b_out &&
           a.pickup == b.pickup && a.deposit == b.deposit;
  }
};

using Embedding = TrafficSystemEmbedding;

// ---------------------------------------------------------------------------
// Linear-program abstraction
// ---------------------------------------------------------------------------

enum class VarType { Continuous, Integer, Binary };
enum class RowSense { LE, GE, EQ };
enum class SolveStatus { Optimal, FeasibleIncumbent, Infeasible,
                         NoIncumbentAtDeadline };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::FeasibleIncumbent: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::NoIncumbentAtDeadline: return "no_incumbent";
  }
  return "?";
}

inline constexpr double kLpInfinity = 1e30;

struct LpTerm {
  int var;
  double coef;
};

struct LpRow {
  RowSense sense;
  double rhs;
  std::vector<LpTerm> terms;
  std::string tag;
};

struct LpVar {
  VarType type;
  double lb, ub;
};

// Backend-neutral model container: decision variables, linear rows, and a
// linear objective.
class LpModel {
 public:
  int add_var(VarType type, double lb, double ub) {
    vars_.push_back({type, lb, ub});
    return static_cast<int>(vars_.size()) - 1;
  }
  void add_row(RowSense sense, double rhs, std::vector<LpTerm> terms,
               std::string tag = {}) {
    rows_.push_back({sense, rhs, std::move(terms), std::move(tag)});
  }
  void set_objective_maximize(std::vector<LpTerm> terms) {
    objective_ = std::move(terms);
  }

  const std::vector<LpVar>& vars() const { return vars_; }
  const std::vector<LpRow>& rows() const { return rows_; }
  const std::vector<LpTerm>& objective() const { return objective_; }

 private:
  std::vector<LpVar> vars_;
  std::vector<LpRow> rows_;
  std::vector<LpTerm> objective_;
};

struct LpSolution {
  SolveStatus status = SolveStatus::NoIncumbentAtDeadline;
  double objective = 0.0;
  std::vector<double> values;

  bool has_solution() const {
    return status == SolveStatus::Optimal ||
           status == SolveStatus::FeasibleIncumbent;
  }
};

// A MILP solver adapter. solve() respects the deadline and reports whether
// it proved optimality, stopped with an incumbent, proved infeasibility, or
// ran out of time without an incumbent. Throws BackendError on solver
// failure (distinct from "no solution").
class LpBackend {
 public:
  virtual ~LpBackend() = default;
  virtual LpSolution solve(const LpModel& model, double deadline_seconds) = 0;
};

using BackendFactory = std::function<std::unique_ptr<LpBackend>()>;

// ---------------------------------------------------------------------------
// TS-MILP construction
// ---------------------------------------------------------------------------

// Variable offsets of a built model, for reading solutions back.
struct TsMilpVars {
  TensorDims dims;
  int x0 = 0, r0 = 0, b_in0 = 0, b_out0 = 0, pk0 = 0, dp0 = 0;

  int x(int m, int p) const { return x0 + static_cast<int>(dims.mp_idx(m, p)); }
  int r(int m, int p) const { return r0 + static_cast<int>(dims.mp_idx(m, p)); }
  int b_in(int road, int T, TokenId tok) const {
    return b_in0 + static_cast<int>(dims.b_idx(road, T, tok));
  }
  int b_out(int road, int T, TokenId tok) const {
    return b_out0 + static_cast<int>(dims.b_idx(road, T, tok));
  }
  int pk(int m, int T, TokenId tok) const {
    return pk0 + static_cast<int>(dims.pd_idx(m, T, tok));
  }
  int dp(int m, int T, TokenId tok) const {
    return dp0 + static_cast<int>(dims.pd_idx(m, T, tok));
  }
};

struct TsMilp {
  LpModel model;
  TsMilpVars vars;
};

// Builds the TS-MILP: binary assignment x(m,p); continuous rates r(m,p);
// nonnegative integer flow tensors b_in/b_out and pickup/deposit tensors;
// constraint families C1..C14; objective max sum_m r(m, output process).
inline TsMilp build_ts_milp(const SFEInstance& inst, HyperParams hyper) {
  if (!hyper.valid_for(inst))
    throw BuildError("hyperparameters invalid: need N >= 1 and L >= " +
                     std::to_string(inst.max_road_len() + 1) + ", got N=" +
                     std::to_string(hyper.num_epochs) + " L=" +
                     std::to_string(hyper.epoch_len));
  if (inst.output_process < 0) throw BuildError("instance has no output process");

  const int M = inst.machine_count(), P = inst.process_count();
  const int R = inst.road_count(), N = hyper.num_epochs;
  const int nT = inst.token_count();
  const long long NL = static_cast<long long>(N) * hyper.epoch_len;

  TsMilp out;
  out.vars.dims = {M, P, R, N, nT};
  LpModel& lp = out.model;
  TsMilpVars& v = out.vars;

  v.x0 = 0;
  for (int m = 0; m < M; ++m)
    for (int p = 0; p < P; ++p) lp.add_var(VarType::Binary, 0, 1);
  v.r0 = M * P;
  for (int m = 0; m < M; ++m)
    for (int p = 0; p < P; ++p) {
      double ub = inst.supports(m, p) ? 1.0 / inst.runtime(m, p) : 0.0;
      lp.add_var(VarType::Continuous, 0, ub);
    }
  v.b_in0 = 2 * M * P;
  auto road_len = [&](int road) { return inst.traffic.roads[road].len(); };
  for (int road = 0; road < R; ++road)
    for (int T = 0; T < N; ++T)
      for (TokenId tok = 0; tok <= nT; ++tok)
        lp.add_var(VarType::Integer, 0, road_len(road));
  v.b_out0 = v.b_in0 + static_cast<int>(out.vars.dims.b_size());
  for (int road = 0; road < R; ++road)
    for (int T = 0; T < N; ++T)
      for (TokenId tok = 0; tok <= nT; ++tok)
        lp.add_var(VarType::Integer, 0, road_len(road));
  // Pickups/deposits are bounded by the carrying capacity of the road that
  // hosts the buffer cell (via C10/C11 + C13); sinks have no output buffer
  // and sources no input buffer, so those entries are pinned to zero.
  v.pk0 = v.b_out0 + static_cast<int>(out.vars.dims.b_size());
  for (int m = 0; m < M; ++m) {
    double ub = 0;
    if (inst.machines[m].output_cell)
      ub = road_len(
          inst.road_of_cell[inst.layout.flat(*inst.machines[m].output_cell)] -
          1);
    for (int T = 0; T < N; ++T)
      for (TokenId tok = 1; tok <= nT; ++tok)
        lp.add_var(VarType::Integer, 0, ub);
  }
  v.dp0 = v.pk0 + static_cast<int>(out.vars.dims.pd_size());
  for (int m = 0; m < M; ++m) {
    double ub = 0;
    if (inst.machines[m].input_cell)
      ub = road_len(
          inst.road_of_cell[inst.layout.flat(*inst.machines[m].input_cell)] -
          1);
    for (int T = 0; T < N; ++T)
      for (TokenId tok = 1; tok <= nT; ++tok)
        lp.add_var(VarType::Integer, 0, ub);
  }

  auto tag = [](const char* c, std::initializer_list<int> idx) {
    std::string s = c;
    s += '[';
    bool first = true;
    for (int i : idx) {
      if (!first) s += ',';
      s += std::to_string(i);
      first = false;
    }
    return s + ']';
  };

  // C1: a machine runs at most one process.
  for (int m = 0; m < M; ++m) {
    std::vector<LpTerm> terms;
    for (int p = 0; p < P; ++p) terms.push_back({v.x(m, p), 1});
    lp.add_row(RowSense::LE, 1, std::move(terms), tag("C1", {m}));
  }
  // C2: no assignment to unsupported processes.
  for (int m = 0; m < M; ++m)
    for (int p = 0; p < P; ++p)
      if (!inst.supports(m, p))
        lp.add_row(RowSense::EQ, 0, {{v.x(m, p), 1}}, tag("C2", {m, p}));
  // C3: rate is capped by the process runtime.
  for (int m = 0; m < M; ++m)
    for (int p = 0; p < P; ++p)
      if (inst.supports(m, p))
        lp.add_row(RowSense::LE, 1.0 / inst.runtime(m, p), {{v.r(m, p), 1}},
                   tag("C3", {m, p}));
  // C4: non-zero rate requires assignment.
  for (int m = 0; m < M; ++m)
    for (int p = 0; p < P; ++p)
      lp.add_row(RowSense::LE, 0, {{v.r(m, p), 1}, {v.x(m, p), -1}},
                 tag("C4", {m, p}));
  // C5: per cycle, pickups from a non-sink machine match its production.
  for (int m = 0; m < M; ++m) {
    if (inst.machines[m].is_sink) continue;
    for (TokenId tok = 1; tok <= nT; ++tok) {
      std::vector<LpTerm> terms;
      for (int T = 0; T < N; ++T) terms.push_back({v.pk(m, T, tok), 1});
      for (int p = 0; p < P; ++p) {
        double c = inst.procedure.processes[p].num_out(tok) *
                   static_cast<double>(NL);
        if (c != 0) terms.push_back({v.r(m, p), -c});
      }
      lp.add_row(RowSense::EQ, 0, std::move(terms), tag("C5", {m, tok}));
    }
  }
  // C6: per cycle, deposits into a non-source machine match its consumption.
  for (int m = 0; m < M; ++m) {
    if (inst.machines[m].is_source) continue;
    for (TokenId tok = 1; tok <= nT; ++tok) {
      std::vector<LpTerm> terms;
      for (int T = 0; T < N; ++T) terms.push_back({v.dp(m, T, tok), 1});
      for (int p = 0; p < P; ++p) {
        double c = inst.procedure.processes[p].num_in(tok) *
                   static_cast<double>(NL);
        if (c != 0) terms.push_back({v.r(m, p), -c});
      }
      lp.add_row(RowSense::EQ, 0, std::move(terms), tag("C6", {m, tok}));
    }
  }
  // C7: road-level conservation of each non-null token.
  for (int road = 0; road < R; ++road) {
    const Road& rd = inst.traffic.roads[road];
    for (TokenId tok = 1; tok <= nT; ++tok)
      for (int T = 0; T < N; ++T) {
        std::vector<LpTerm> terms{{v.b_out(road, (T + 1) % N, tok), 1},
                                  {v.b_in(road, T, tok), -1}};
        for (int m : rd.inputs_on) terms.push_back({v.dp(m, T, tok), 1});
        for (int m : rd.outputs_on) terms.push_back({v.pk(m, T, tok), -1});
        lp.add_row(RowSense::EQ, 0, std::move(terms), tag("C7", {road, T, tok}));
      }
  }
  // C8: road-level conservation of the null token.
  for (int road = 0; road < R; ++road) {
    const Road& rd = inst.traffic.roads[road];
    for (int T = 0; T < N; ++T) {
      std::vector<LpTerm> terms{{v.b_out(road, (T + 1) % N, kNullToken), 1},
                                {v.b_in(road, T, kNullToken), -1}};
      for (int m : rd.outputs_on)
        for (TokenId tok = 1; tok <= nT; ++tok)
          terms.push_back({v.pk(m, T, tok), 1});
      for (int m : rd.inputs_on)
        for (TokenId tok = 1; tok <= nT; ++tok)
          terms.push_back({v.dp(m, T, tok), -1});
      lp.add_row(RowSense::EQ, 0, std::move(terms), tag("C8", {road, T}));
    }
  }
  // C9: agents entering a junction during an epoch leave it that epoch.
  for (const Junction& j : inst.traffic.junctions)
    for (int T = 0; T < N; ++T)
      for (TokenId tok = 0; tok <= nT; ++tok) {
        std::vector<LpTerm> terms;
        for (int rid : j.exit_roads) terms.push_back({v.b_in(rid - 1, T, tok), 1});
        for (int rid : j.entry_roads)
          terms.push_back({v.b_out(rid - 1, T, tok), -1});
        lp.add_row(RowSense::EQ, 0, std::move(terms), tag("C9", {j.id, T, tok}));
      }
  // C10: deposits on a road are covered by agents entering with that token.
  for (int road = 0; road < R; ++road) {
    const Road& rd = inst.traffic.roads[road];
    for (TokenId tok = 1; tok <= nT; ++tok)
      for (int T = 0; T < N; ++T) {
        std::vector<LpTerm> terms;
        for (int m : rd.inputs_on) terms.push_back({v.dp(m, T, tok), 1});
        terms.push_back({v.b_in(road, T, tok), -1});
        lp.add_row(RowSense::LE, 0, std::move(terms), tag("C10", {road, T, tok}));
      }
  }
  // C11: pickups on a road are covered by agents entering empty.
  for (int road = 0; road < R; ++road) {
    const Road& rd = inst.traffic.roads[road];
    for (int T = 0; T < N; ++T) {
      std::vector<LpTerm> terms;
      for (int m : rd.outputs_on)
        for (TokenId tok = 1; tok <= nT; ++tok)
          terms.push_back({v.pk(m, T, tok), 1});
      terms.push_back({v.b_in(road, T, kNullToken), -1});
      lp.add_row(RowSense::LE, 0, std::move(terms), tag("C11", {road, T}));
    }
  }
  // C12: the plan uses at most the available agents.
  {
    std::vector<LpTerm> terms;
    for (int road = 0; road < R; ++road)
      for (TokenId tok = 0; tok <= nT; ++tok)
        terms.push_back({v.b_out(road, 0, tok), 1});
    lp.add_row(RowSense::LE, inst.agent_count, std::move(terms), "C12");
  }
  // C13: everyone inbound and outbound in one epoch fits on the road.
  for (int road = 0; road < R; ++road)
    for (int T = 0; T < N; ++T) {
      std::vector<LpTerm> terms;
      for (TokenId tok = 0; tok <= nT; ++tok) {
        terms.push_back({v.b_in(road, T, tok), 1});
        terms.push_back({v.b_out(road, T, tok), 1});
      }
      lp.add_row(RowSense::LE, road_len(road), std::move(terms),
                 tag("C13", {road, T}));
    }
  // C14: the epoch is long enough for every agent to clear its junction and
  // reach the queue on its exit road.
  for (const Junction& j : inst.traffic.junctions)
    for (int rid : j.exit_roads)
      for (int T = 0; T < N; ++T) {
        std::vector<LpTerm> terms;
        for (int ent : j.entry_roads)
          for (TokenId tok = 0; tok <= nT; ++tok)
            terms.push_back({v.b_out(ent - 1, T, tok), 1});
        for (TokenId tok = 0; tok <= nT; ++tok)
          terms.push_back({v.b_in(rid - 1, T, tok), -1});
        lp.add_row(RowSense::LE,
                   hyper.epoch_len - inst.traffic.road(rid).len() - 1,
                   std::move(terms), tag("C14", {j.id, rid, T}));
      }

  std::vector<LpTerm> obj;
  for (int m = 0; m < M; ++m) obj.push_back({v.r(m, inst.output_process), 1});
  lp.set_objective_maximize(std::move(obj));
  return out;
}

// ---------------------------------------------------------------------------
// Embedding checking (independent arithmetic re-evaluation of C1..C14)
// ---------------------------------------------------------------------------

struct EmbeddingViolation {
  std::string constraint;  // "C1".."C14", "shape", "objective"
  std::string detail;
};

inline std::vector<EmbeddingViolation> check_embedding(
    const SFEInstance& inst, const TrafficSystemEmbedding& e) {
  std::vector<EmbeddingViolation> out;
  const int M = inst.machine_count(), P = inst.process_count();
  const int R = inst.road_count(), nT = inst.token_count();
  const int N = e.hyper.num_epochs;
  const TensorDims& d = e.dims;

  if (d.machines != M || d.processes != P || d.roads != R || d.tokens != nT ||
      d.epochs != N || e.hyper.epoch_len < inst.max_road_len() + 1 ||
      e.assign.size() != static_cast<size_t>(M) * P ||
      e.rate.size() != e.assign.size() || e.b_in.size() != d.b_size() ||
      e.b_out.size() != d.b_size() || e.pickup.size() != d.pd_size() ||
      e.deposit.size() != d.pd_size()) {
    out.push_back({"shape", "tensor shapes or hyperparameters do not match "
                            "the instance"});
    return out;
  }

  for (const auto* tensor : {&e.b_in, &e.b_out, &e.pickup, &e.deposit})
    for (long long v : *tensor)
      if (v < 0) {
        out.push_back({"shape", "negative tensor entry"});
        return out;
      }

  const Rat NL(static_cast<long long>(N) * e.hyper.epoch_len);
  auto idx = [&](const char* c, std::initializer_list<long long> parts) {
    std::string s = c;
    s += '[';
    bool first = true;
    for (long long p : parts) {
      if (!first) s += ',';
      s += std::to_string(p);
      first = false;
    }
    return s + ']';
  };

  for (int m = 0; m < M; ++m) {
    long long assigned = 0;
    for (int p = 0; p < P; ++p) {
      uint8_t x = e.assign[d.mp_idx(m, p)];
      const Rat& r = e.rate[d.mp_idx(m, p)];
      if (x > 1) out.push_back({"C1", idx("x not binary", {m, p})});
      assigned += x;
      if (x && !inst.supports(m, p))
        out.push_back({"C2", idx("assignment to unsupported process", {m, p})});
      if (inst.supports(m, p) && r > Rat(1, inst.runtime(m, p)))
        out.push_back({"C3", idx("rate above 1/runtime", {m, p})});
      if (r > Rat(static_cast<long long>(x)))
        out.push_back({"C4", idx("positive rate without assignment", {m, p})});
      if (r < Rat(0)) out.push_back({"C4", idx("negative rate", {m, p})});
    }
    if (assigned > 1)
      out.push_back({"C1", idx("machine assigned several processes", {m})});
  }

  for (int m = 0; m < M; ++m) {
    for (TokenId tok = 1; tok <= nT; ++tok) {
      if (!inst.machines[m].is_sink) {
        long long picked = 0;
        for (int T = 0; T < N; ++T) picked += e.pickup[d.pd_idx(m, T, tok)];
        Rat produced;
        for (int p = 0; p < P; ++p)
          produced += e.rate[d.mp_idx(m, p)] *
                      Rat(inst.procedure.processes[p].num_out(tok)) * NL;
        if (Rat(picked) != produced)
          out.push_back({"C5", idx("pickups != production over a cycle",
                                   {m, tok})});
      }
      if (!inst.machines[m].is_source) {
        long long deposited = 0;
        for (int T = 0; T < N; ++T) deposited += e.deposit[d.pd_idx(m, T, tok)];
        Rat consumed;
        for (int p = 0; p < P; ++p)
          consumed += e.rate[d.mp_idx(m, p)] *
                      Rat(inst.procedure.processes[p].num_in(tok)) * NL;
        if (Rat(deposited) != consumed)
          out.push_back({"C6", idx("deposits != consumption over a cycle",
                                   {m, tok})});
      }
    }
    // Buffers a machine does not have stay untouched.
    for (int T = 0; T < N; ++T)
      for (TokenId tok = 1; tok <= nT; ++tok) {
        if (inst.machines[m].is_sink && e.pickup[d.pd_idx(m, T, tok)] != 0)
          out.push_back({"C5", idx("pickup from a sink machine", {m, T, tok})});
        if (inst.machines[m].is_source && e.deposit[d.pd_idx(m, T, tok)] != 0)
          out.push_back({"C6", idx("deposit into a source machine",
                                   {m, T, tok})});
      }
  }

  for (int road = 0; road < R; ++road) {
    const Road& rd = inst.traffic.roads[road];
    for (int T = 0; T < N; ++T) {
      for (TokenId tok = 1; tok <= nT; ++tok) {
        long long lhs = e.b_out[d.b_idx(road, (T + 1) % N, tok)];
        long long rhs = e.b_in[d.b_idx(road, T, tok)];
        for (int m : rd.inputs_on) rhs -= e.deposit[d.pd_idx(m, T, tok)];
        for (int m : rd.outputs_on) rhs += e.pickup[d.pd_idx(m, T, tok)];
        if (lhs != rhs)
          out.push_back({"C7", idx("token conservation broken on road",
                                   {rd.id, T, tok})});
      }
      long long lhs0 = e.b_out[d.b_idx(road, (T + 1) % N, kNullToken)];
      long long rhs0 = e.b_in[d.b_idx(road, T, kNullToken)];
      for (int m : rd.outputs_on)
        for (TokenId tok = 1; tok <= nT; ++tok)
          rhs0 -= e.pickup[d.pd_idx(m, T, tok)];
      for (int m : rd.inputs_on)
        for (TokenId tok = 1; tok <= nT; ++tok)
          rhs0 += e.deposit[d.pd_idx(m, T, tok)];
      if (lhs0 != rhs0)
        out.push_back({"C8", idx("null-token conservation broken on road",
                                 {rd.id, T})});

      for (TokenId tok = 1; tok <= nT; ++tok) {
        long long dep = 0;
        for (int m : rd.inputs_on) dep += e.deposit[d.pd_idx(m, T, tok)];
        if (dep > e.b_in[d.b_idx(road, T, tok)])
          out.push_back({"C10", idx("more deposits than inbound carriers",
                                    {rd.id, T, tok})});
      }
      long long picks = 0;
      for (int m : rd.outputs_on)
        for (TokenId tok = 1; tok <= nT; ++tok)
          picks += e.pickup[d.pd_idx(m, T, tok)];
      if (picks > e.b_in[d.b_idx(road, T, kNullToken)])
        out.push_back({"C11", idx("more pickups than inbound empty agents",
                                  {rd.id, T})});

      long long total = 0;
      for (TokenId tok = 0; tok <= nT; ++tok)
        total += e.b_in[d.b_idx(road, T, tok)] + e.b_out[d.b_idx(road, T, tok)];
      if (total > rd.len())
        out.push_back({"C13", idx("road over capacity", {rd.id, T})});
    }
  }

  for (const Junction& j : inst.traffic.junctions)
    for (int T = 0; T < N; ++T) {
      for (TokenId tok = 0; tok <= nT; ++tok) {
        long long in = 0, outflow = 0;
        for (int rid : j.exit_roads) in += e.b_in[d.b_idx(rid - 1, T, tok)];
        for (int rid : j.entry_roads)
          outflow += e.b_out[d.b_idx(rid - 1, T, tok)];
        if (in != outflow)
          out.push_back({"C9", idx("junction flow imbalance", {j.id, T, tok})});
      }
      long long entering = 0;
      for (int rid : j.entry_roads)
        for (TokenId tok = 0; tok <= nT; ++tok)
          entering += e.b_out[d.b_idx(rid - 1, T, tok)];
      for (int rid : j.exit_roads) {
        long long inbound = 0;
        for (TokenId tok = 0; tok <= nT; ++tok)
          inbound += e.b_in[d.b_idx(rid - 1, T, tok)];
        long long need = entering + inst.traffic.road(rid).len() - inbound + 1;
        if (e.hyper.epoch_len < need)
          out.push_back({"C14", idx("epoch too short for junction clearance",
                                    {j.id, rid, T})});
      }
    }

  long long placed = e.agents_used();
  if (placed > inst.agent_count)
    out.push_back({"C12", "plan uses " + std::to_string(placed) +
                              " agents, available " +
                              std::to_string(inst.agent_count)});

  Rat theta;
  for (int m = 0; m < M; ++m)
    theta += e.rate[d.mp_idx(m, inst.output_process)];
  if (theta != e.objective)
    out.push_back({"objective",
                   "objective does not equal the summed output-process rate"});

  return out;
}

// ---------------------------------------------------------------------------
// Solving and extraction
// ---------------------------------------------------------------------------

namespace detail {

inline long long round_integer(double v, const char* what) {
  double r = std::round(v);
  if (std::abs(v - r) > 1e-5)
    throw BackendError(std::string("solver returned a non-integral value for ") +
                       what + ": " + std::to_string(v));
  return static_cast<long long>(r);
}

// Rates are reconstructed exactly from the integer tensors via the cycle
// accounting (C5/C6), so the embedding carries rationals, not solver floats.
inline Rat derive_rate(const SFEInstance& inst, const TrafficSystemEmbedding& e,
                       int m, int p) {
  const Process& proc = inst.procedure.processes[p];
  const long long NL =
      static_cast<long long>(e.hyper.num_epochs) * e.hyper.epoch_len;
  for (auto [tok, count] : proc.inputs) {
    long long dep = 0;
    for (int T = 0; T < e.hyper.num_epochs; ++T)
      dep += e.deposit[e.dims.pd_idx(m, T, tok)];
    return Rat(dep, count * NL);
  }
  for (auto [tok, count] : proc.outputs) {
    long long picked = 0;
    for (int T = 0; T < e.hyper.num_epochs; ++T)
      picked += e.pickup[e.dims.pd_idx(m, T, tok)];
    return Rat(picked, count * NL);
  }
  return Rat(0);
}

inline TrafficSystemEmbedding extract_embedding(const SFEInstance& inst,
                                                const TsMilp& milp,
                                                HyperParams hyper,
                                                const std::vector<double>& x) {
  TrafficSystemEmbedding e = TrafficSystemEmbedding::zero(inst, hyper);
  const TsMilpVars& v = milp.vars;
  const TensorDims& d = v.dims;

  for (int m = 0; m < d.machines; ++m)
    for (int p = 0; p < d.processes; ++p)
      e.assign[d.mp_idx(m, p)] =
          static_cast<uint8_t>(round_integer(x[v.x(m, p)], "assignment"));
  for (int road = 0; road < d.roads; ++road)
    for (int T = 0; T < d.epochs; ++T)
      for (TokenId tok = 0; tok <= d.tokens; ++tok) {
        e.b_in[d.b_idx(road, T, tok)] =
            round_integer(x[v.b_in(road, T, tok)], "b_in");
        e.b_out[d.b_idx(road, T, tok)] =
            round_integer(x[v.b_out(road, T, tok)], "b_out");
      }
  for (int m = 0; m < d.machines; ++m)
    for (int T = 0; T < d.epochs; ++T)
      for (TokenId tok = 1; tok <= d.tokens; ++tok) {
        e.pickup[d.pd_idx(m, T, tok)] =
            round_integer(x[v.pk(m, T, tok)], "pickup");
        e.deposit[d.pd_idx(m, T, tok)] =
            round_integer(x[v.dp(m, T, tok)], "deposit");
      }
  for (int m = 0; m < d.machines; ++m) {
    int p = e.assigned_process(m);
    if (p >= 0) e.rate[d.mp_idx(m, p)] = derive_rate(inst, e, m, p);
  }
  for (int m = 0; m < d.machines; ++m)
    e.objective += e.rate[d.mp_idx(m, inst.output_process)];
  return e;
}

}  // namespace detail

struct SolveResult {
  SolveStatus status = SolveStatus::NoIncumbentAtDeadline;
  std::optional<TrafficSystemEmbedding> embedding;
};

// Builds and solves the TS-MILP under a wall-clock deadline. Returns the
// rounded, checked embedding on success and no embedding when the model is
// infeasible or the deadline passed without an incumbent.
inline SolveResult solve_ts_milp(const SFEInstance& inst, HyperParams hyper,
                                 LpBackend& backend, double deadline_seconds) {
  TsMilp milp = build_ts_milp(inst, hyper);
  LpSolution sol = backend.solve(milp.model, deadline_seconds);
  SolveResult out;
  out.status = sol.status;
  if (!sol.has_solution()) return out;

  TrafficSystemEmbedding e =
      detail::extract_embedding(inst, milp, hyper, sol.values);
  auto violations = check_embedding(inst, e);
  if (!violations.empty()) {
    std::string msg = "solver returned an embedding that fails re-checking:";
    for (size_t i = 0; i < violations.size() && i < 4; ++i)
      msg += " " + violations[i].constraint + "(" + violations[i].detail + ")";
    throw BackendError(msg);
  }
  out.embedding = std::move(e);
  return out;
}

}  // namespace sfe
