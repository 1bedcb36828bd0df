#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfembed/milp.hpp"
#include "sfembed/model.hpp"

namespace sfe {

struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PlanDriftError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnmetDemandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyBufferError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Snapshot of the factory at one timestep: buffer contents, agent positions
// (flat cell indices), agent cargo.
struct FactoryState {
  long long t = 0;
  std::vector<std::map<TokenId, long long>> input_buffer;   // per machine
  std::vector<std::map<TokenId, long long>> output_buffer;  // per machine
  std::vector<int> agent_cell;
  std::vector<TokenId> agent_cargo;

  int agent_count() const { return static_cast<int>(agent_cell.size()); }
};

// Residual demand for the two live epochs. The generator needs epoch T for
// junction admissions and epoch T-1 for cargo changes of agents that entered
// their road late in the previous epoch.
struct ResidualSlabs {
  long long base_epoch = -1;  // absolute epoch of slab 1; slab 0 is base-1
  std::vector<long long> b_in[2], b_out[2];  // road x (token incl. null)
  std::vector<long long> pk[2], dp[2];       // machine x token

  // Slab index for an absolute epoch, -1 when outside the retained window.
  int slot(long long epoch) const {
    if (epoch == base_epoch) return 1;
    if (epoch == base_epoch - 1) return 0;
    return -1;
  }
};

struct GeneratorState {
  ResidualSlabs residuals;
  std::vector<uint8_t> can_change;      // agent may still change cargo here
  std::vector<long long> arrival_epoch; // epoch of entry into current road;
                                        // -1 until the first junction passage
  std::vector<int> occupancy;           // flat cell -> agent index or -1
};

namespace tgen {

inline size_t b_slab_idx(const TensorDims& d, int road_index, TokenId tok) {
  return static_cast<size_t>(road_index) * (d.tokens + 1) + tok;
}
inline size_t pd_slab_idx(const TensorDims& d, int machine_index, TokenId tok) {
  return static_cast<size_t>(machine_index) * d.tokens + (tok - 1);
}

}  // namespace tgen

// Rotates the residual window to epoch T: drops the epoch T-2 slab (whose
// entries must have drained to zero), keeps T-1, and installs fresh copies of
// the embedding tensors at slab T mod N.
inline void adjust_state_for_new_epoch(const TrafficSystemEmbedding& emb,
                                       GeneratorState& gen, long long T) {
  ResidualSlabs& rs = gen.residuals;
  const TensorDims& d = emb.dims;

  auto check_drained = [&](const std::vector<long long>& v, const char* name) {
    for (size_t i = 0; i < v.size(); ++i)
      if (v[i] != 0)
        throw UnmetDemandError(
            std::string(name) + " residual for epoch " +
            std::to_string(T - 2) + " not drained (flat index " +
            std::to_string(i) + ", remaining " + std::to_string(v[i]) + ")");
  };
  check_drained(rs.b_in[0], "b_in");
  check_drained(rs.b_out[0], "b_out");
  check_drained(rs.pk[0], "pickup");
  check_drained(rs.dp[0], "deposit");

  for (auto* pair : {&rs.b_in, &rs.b_out, &rs.pk, &rs.dp})
    (*pair)[0] = std::move((*pair)[1]);

  int slab = static_cast<int>(T % emb.hyper.num_epochs);
  rs.b_in[1].assign(static_cast<size_t>(d.roads) * (d.tokens + 1), 0);
  rs.b_out[1].assign(rs.b_in[1].size(), 0);
  for (int road = 0; road < d.roads; ++road)
    for (TokenId tok = 0; tok <= d.tokens; ++tok) {
      rs.b_in[1][tgen::b_slab_idx(d, road, tok)] =
          emb.b_in[d.b_idx(road, slab, tok)];
      rs.b_out[1][tgen::b_slab_idx(d, road, tok)] =
          emb.b_out[d.b_idx(road, slab, tok)];
    }
  rs.pk[1].assign(static_cast<size_t>(d.machines) * d.tokens, 0);
  rs.dp[1].assign(rs.pk[1].size(), 0);
  for (int m = 0; m < d.machines; ++m)
    for (TokenId tok = 1; tok <= d.tokens; ++tok) {
      rs.pk[1][tgen::pd_slab_idx(d, m, tok)] = emb.pickup[d.pd_idx(m, slab, tok)];
      rs.dp[1][tgen::pd_slab_idx(d, m, tok)] = emb.deposit[d.pd_idx(m, slab, tok)];
    }
  rs.base_epoch = T;
}

// Places the initial agent queues and pre-seeds every machine buffer with one
// full cycle of its consumption/production, so buffers never run dry while
// the plan loops.
inline std::pair<FactoryState, GeneratorState> initialize_sf(
    const SFEInstance& inst, const TrafficSystemEmbedding& emb) {
  const TensorDims& d = emb.dims;
  FactoryState st;
  GeneratorState gen;
  st.input_buffer.resize(inst.machine_count());
  st.output_buffer.resize(inst.machine_count());
  gen.occupancy.assign(inst.layout.cells.size(), -1);

  for (int road = 0; road < d.roads; ++road) {
    const Road& rd = inst.traffic.roads[road];
    long long q = 0;
    for (TokenId tok = 0; tok <= d.tokens; ++tok)
      q += emb.b_out[d.b_idx(road, 0, tok)];
    if (q > rd.len())
      throw CapacityError("road " + std::to_string(rd.id) + " cannot hold " +
                          std::to_string(q) + " initial agents");
    // contiguous queue ending at the head cell, token ids ascending from the
    // head backwards
    int pos = rd.len() - 1;
    for (TokenId tok = 0; tok <= d.tokens; ++tok) {
      for (long long k = 0; k < emb.b_out[d.b_idx(road, 0, tok)]; ++k) {
        int agent = st.agent_count();
        int cell = inst.layout.flat(rd.path[pos--]);
        st.agent_cell.push_back(cell);
        st.agent_cargo.push_back(tok);
        gen.occupancy[cell] = agent;
      }
    }
  }
  gen.can_change.assign(st.agent_count(), 0);
  gen.arrival_epoch.assign(st.agent_count(), -1);

  for (int m = 0; m < d.machines; ++m)
    for (TokenId tok = 1; tok <= d.tokens; ++tok) {
      long long consumed = 0, produced = 0;
      for (int T = 0; T < d.epochs; ++T) {
        consumed += emb.deposit[d.pd_idx(m, T, tok)];
        produced += emb.pickup[d.pd_idx(m, T, tok)];
      }
      if (consumed > 0) st.input_buffer[m][tok] = consumed;
      if (produced > 0) st.output_buffer[m][tok] = produced;
    }

  gen.residuals.b_in[0].assign(static_cast<size_t>(d.roads) * (d.tokens + 1), 0);
  gen.residuals.b_out[0] = gen.residuals.b_in[0];
  gen.residuals.b_in[1] = gen.residuals.b_in[0];
  gen.residuals.b_out[1] = gen.residuals.b_in[0];
  gen.residuals.pk[0].assign(static_cast<size_t>(d.machines) * d.tokens, 0);
  gen.residuals.dp[0] = gen.residuals.pk[0];
  gen.residuals.pk[1] = gen.residuals.pk[0];
  gen.residuals.dp[1] = gen.residuals.pk[0];
  gen.residuals.base_epoch = -1;
  return {std::move(st), std::move(gen)};
}

namespace tgen {

struct NextState {
  std::vector<int> occupancy;     // flat cell -> agent at t+1
  std::vector<int> agent_cell;    // agent -> flat cell at t+1
  std::vector<TokenId> cargo;     // agent cargo at t+1
};

inline void move_agent_on_junction(const SFEInstance& inst,
                                   const TrafficSystemEmbedding& emb,
                                   const FactoryState& st, GeneratorState& gen,
                                   NextState& next, const Junction& j,
                                   int agent, long long T,
                                   std::mt19937_64& rng) {
  TokenId cargo = st.agent_cargo[agent];
  int slot = gen.residuals.slot(T);
  std::vector<int> candidates;
  if (slot >= 0) {
    for (int rid : j.exit_roads)
      if (gen.residuals.b_in[slot][b_slab_idx(emb.dims, rid - 1, cargo)] > 0)
        candidates.push_back(rid);
  }
  if (candidates.empty())
    throw PlanDriftError("agent " + std::to_string(agent) + " on junction " +
                         std::to_string(j.id) + " carrying token " +
                         std::to_string(cargo) + " has no exit road with " +
                         "remaining demand in epoch " + std::to_string(T));
  int rid = candidates[rng() % candidates.size()];
  int tail = inst.layout.flat(inst.traffic.road(rid).tail());
  if (next.occupancy[tail] != -1)
    throw PlanDriftError("tail of road " + std::to_string(rid) +
                         " already claimed at the next timestep");
  next.occupancy[tail] = agent;
  next.agent_cell[agent] = tail;
  gen.residuals.b_in[slot][b_slab_idx(emb.dims, rid - 1, cargo)] -= 1;
  gen.can_change[agent] = 1;
  gen.arrival_epoch[agent] = T;
}

// Advances agents along one road, processing cells head to tail so a blocked
// agent is known before the agent behind it is placed. The agent on the last
// road cell may only step onto the junction if it entered in an earlier
// epoch.
inline void move_agents_on_road(const SFEInstance& inst,
                                const TrafficSystemEmbedding& emb,
                                const FactoryState& st, GeneratorState& gen,
                                NextState& next, const Road& road, long long T) {
  const int len = road.len();
  const int junction_cell =
      inst.layout.flat(inst.traffic.junction(road.to_junction).cell);
  for (int i = len - 1; i >= 0; --i) {
    int cell = inst.layout.flat(road.path[i]);
    int agent = gen.occupancy[cell];
    if (agent < 0) continue;
    int exit_cell = i + 1 < len ? inst.layout.flat(road.path[i + 1])
                                : junction_cell;
    bool must_wait =
        (i == len - 1) && gen.arrival_epoch[agent] == T;  // new arrival
    if (!must_wait && next.occupancy[exit_cell] == -1) {
      next.occupancy[exit_cell] = agent;
      next.agent_cell[agent] = exit_cell;
      if (i == len - 1) {
        int slot = gen.residuals.slot(T);
        size_t idx = b_slab_idx(emb.dims, road.id - 1, st.agent_cargo[agent]);
        if (slot < 0 || gen.residuals.b_out[slot][idx] <= 0)
          throw PlanDriftError("road " + std::to_string(road.id) +
                               " outflow exceeds the plan in epoch " +
                               std::to_string(T));
        gen.residuals.b_out[slot][idx] -= 1;
      }
    } else {
      if (next.occupancy[cell] != -1)
        throw PlanDriftError("cell conflict while agents wait on road " +
                             std::to_string(road.id));
      next.occupancy[cell] = agent;
      next.agent_cell[agent] = cell;
    }
  }
}

inline void deposit_token(const SFEInstance& inst,
                          const TrafficSystemEmbedding& emb, FactoryState& st,
                          GeneratorState& gen, NextState& next) {
  for (int m = 0; m < inst.machine_count(); ++m) {
    const MachineSpec& mach = inst.machines[m];
    if (mach.is_source || !mach.input_cell) continue;
    int agent = next.occupancy[inst.layout.flat(*mach.input_cell)];
    if (agent < 0) continue;
    TokenId cargo = st.agent_cargo[agent];
    if (cargo == kNullToken || !gen.can_change[agent]) continue;
    int slot = gen.residuals.slot(gen.arrival_epoch[agent]);
    if (slot < 0) continue;
    auto& res = gen.residuals.dp[slot][pd_slab_idx(emb.dims, m, cargo)];
    if (res <= 0) continue;
    res -= 1;
    next.cargo[agent] = kNullToken;
    st.input_buffer[m][cargo] += 1;
    gen.can_change[agent] = 0;
  }
}

inline void pickup_token(const SFEInstance& inst,
                         const TrafficSystemEmbedding& emb, FactoryState& st,
                         GeneratorState& gen, NextState& next) {
  for (int m = 0; m < inst.machine_count(); ++m) {
    const MachineSpec& mach = inst.machines[m];
    if (mach.is_sink || !mach.output_cell) continue;
    int agent = next.occupancy[inst.layout.flat(*mach.output_cell)];
    if (agent < 0) continue;
    if (st.agent_cargo[agent] != kNullToken || !gen.can_change[agent]) continue;
    int slot = gen.residuals.slot(gen.arrival_epoch[agent]);
    if (slot < 0) continue;
    // take the token with the largest remaining demand; ties go to the
    // smaller token id
    TokenId best = kNullToken;
    long long best_res = 0;
    for (TokenId tok = 1; tok <= emb.dims.tokens; ++tok) {
      long long res = gen.residuals.pk[slot][pd_slab_idx(emb.dims, m, tok)];
      if (res > best_res) {
        best_res = res;
        best = tok;
      }
    }
    if (best == kNullToken) continue;
    auto it = st.output_buffer[m].find(best);
    if (it == st.output_buffer[m].end() || it->second <= 0)
      throw EmptyBufferError("machine " + std::to_string(mach.id) +
                             " output buffer lacks token " +
                             std::to_string(best) + " demanded by the plan");
    if (--it->second == 0) st.output_buffer[m].erase(it);
    gen.residuals.pk[slot][pd_slab_idx(emb.dims, m, best)] -= 1;
    next.cargo[agent] = best;
    gen.can_change[agent] = 0;
  }
}

// One cycle of aggregate machine execution: every machine consumes from its
// input buffer and produces into its output buffer exactly the amounts the
// cycle accounting (C5/C6) prescribes.
inline void run_cycle_conversion(const SFEInstance& inst,
                                 const TrafficSystemEmbedding& emb,
                                 FactoryState& st) {
  const TensorDims& d = emb.dims;
  for (int m = 0; m < d.machines; ++m)
    for (TokenId tok = 1; tok <= d.tokens; ++tok) {
      long long consumed = 0, produced = 0;
      for (int T = 0; T < d.epochs; ++T) {
        consumed += emb.deposit[d.pd_idx(m, T, tok)];
        produced += emb.pickup[d.pd_idx(m, T, tok)];
      }
      if (consumed > 0) {
        auto it = st.input_buffer[m].find(tok);
        if (it == st.input_buffer[m].end() || it->second < consumed)
          throw EmptyBufferError("machine " +
                                 std::to_string(inst.machines[m].id) +
                                 " input buffer lacks a cycle of token " +
                                 std::to_string(tok));
        if ((it->second -= consumed) == 0) st.input_buffer[m].erase(it);
      }
      if (produced > 0) st.output_buffer[m][tok] += produced;
    }
}

}  // namespace tgen

// Advances the factory by one timestep: epoch bookkeeping, junction moves,
// road moves, deposits, pickups, cargo carry-over. Deterministic given
// (state, gen, rng_seed).
inline void step(const SFEInstance& inst, const TrafficSystemEmbedding& emb,
                 FactoryState& st, GeneratorState& gen, uint64_t rng_seed) {
  const long long t = st.t;
  const int L = emb.hyper.epoch_len;
  const int N = emb.hyper.num_epochs;
  const long long T = t / L;

  for (int a = 0; a < st.agent_count(); ++a)
    if (gen.occupancy[st.agent_cell[a]] != a)
      throw PlanDriftError("occupancy vector inconsistent with agent cells");

  if (t % L == 0) {
    if (T > 0 && T % N == 0) tgen::run_cycle_conversion(inst, emb, st);
    adjust_state_for_new_epoch(emb, gen, T);
  }

  tgen::NextState next;
  next.occupancy.assign(inst.layout.cells.size(), -1);
  next.agent_cell.assign(st.agent_count(), -1);
  next.cargo = st.agent_cargo;

  std::mt19937_64 rng(rng_seed ^ (0x9e3779b97f4a7c15ULL *
                                  static_cast<uint64_t>(t + 1)));
  for (const Junction& j : inst.traffic.junctions) {
    int agent = gen.occupancy[inst.layout.flat(j.cell)];
    if (agent >= 0)
      tgen::move_agent_on_junction(inst, emb, st, gen, next, j, agent, T, rng);
  }
  for (const Road& road : inst.traffic.roads)
    tgen::move_agents_on_road(inst, emb, st, gen, next, road, T);

  tgen::deposit_token(inst, emb, st, gen, next);
  tgen::pickup_token(inst, emb, st, gen, next);

  for (int a = 0; a < st.agent_count(); ++a)
    if (next.agent_cell[a] < 0)
      throw PlanDriftError("agent " + std::to_string(a) +
                           " was not placed at the next timestep");

  st.t = t + 1;
  st.agent_cell = std::move(next.agent_cell);
  st.agent_cargo = std::move(next.cargo);
  gen.occupancy = std::move(next.occupancy);
}

}  // namespace sfe
