#pragma once

#include <chrono>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfembed/log.hpp"
#include "sfembed/milp.hpp"

namespace sfe {

struct SearchConfig {
  double budget_seconds = 60.0;  // global wall-clock budget
  int gamma = 2;                 // consecutive-failure limit
  int delta = 1;                 // epoch-length increment in timesteps
  std::optional<int> max_num_epochs;  // optional cap on N; default unbounded
  // Also stop after gamma consecutive epoch-count increments without
  // improvement. When off, the epoch count keeps growing until the budget
  // expires, which is the behaviour the completeness argument relies on.
  bool gamma_limits_num_epochs = true;
  // Test mode: when set, the budget is counted in solve attempts instead of
  // wall-clock time, which makes search traces reproducible.
  std::optional<int> budget_solves;
  double mip_rel_gap = 0.0;

  bool valid() const {
    return gamma >= 1 && delta >= 1 &&
           (budget_solves ? *budget_solves >= 0 : budget_seconds >= 0);
  }
};

// Strict improvement with an absolute tolerance; no solution counts as -inf.
inline constexpr double kImprovementTol = 1e-9;
inline bool improves(double candidate, double incumbent) {
  return candidate > incumbent + kImprovementTol;
}

struct TraceEntry {
  int n = 0;
  int l = 0;
  std::string outcome;  // optimal | feasible | infeasible | no_incumbent
  std::optional<double> objective;
  double elapsed_ms = 0;
};

struct SearchResult {
  std::optional<TrafficSystemEmbedding> best;
  int best_n = 0;
  int best_l = 0;
  std::vector<TraceEntry> trace;

  double best_objective() const {
    return best ? best->objective.to_double()
                : -std::numeric_limits<double>::infinity();
  }
};

// Shared timer across every solve of one search. The wall-clock variant is
// polled with 100 ms granularity by the solver deadline handling; the
// solve-count variant is exact and used in tests.
class SearchClock {
 public:
  virtual ~SearchClock() = default;
  virtual bool expired() const = 0;
  virtual double remaining_seconds() const = 0;
  virtual void note_solve() {}
};

class WallClock final : public SearchClock {
 public:
  explicit WallClock(double budget_seconds)
      : start_(std::chrono::steady_clock::now()), budget_(budget_seconds) {}
  bool expired() const override { return remaining_seconds() <= 0; }
  double remaining_seconds() const override {
    std::chrono::duration<double> used =
        std::chrono::steady_clock::now() - start_;
    return budget_ - used.count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
  double budget_;
};

class SolveCountClock final : public SearchClock {
 public:
  explicit SolveCountClock(int max_solves) : max_solves_(max_solves) {}
  bool expired() const override { return used_ >= max_solves_; }
  double remaining_seconds() const override { return 1e9; }
  void note_solve() override { ++used_; }

 private:
  int max_solves_;
  int used_ = 0;
};

inline std::unique_ptr<SearchClock> make_clock(const SearchConfig& cfg) {
  if (cfg.budget_solves)
    return std::make_unique<SolveCountClock>(*cfg.budget_solves);
  return std::make_unique<WallClock>(cfg.budget_seconds);
}

// Sweeps the epoch length upward from just above the minimum traversal
// requirement, keeping the best embedding; stops after gamma consecutive
// attempts without strict improvement or when the shared timer expires.
inline std::pair<std::optional<TrafficSystemEmbedding>, std::optional<int>>
plan_for_num_epochs(const SFEInstance& inst, int num_epochs, SearchClock& clock,
                    const SearchConfig& cfg, LpBackend& backend,
                    std::vector<TraceEntry>& trace) {
  std::optional<TrafficSystemEmbedding> best;
  std::optional<int> best_len;
  int epoch_len = inst.max_road_len() + cfg.delta;
  int failures = 0;

  while (!clock.expired() && failures < cfg.gamma) {
    auto t0 = std::chrono::steady_clock::now();
    SolveResult sol = solve_ts_milp(inst, {num_epochs, epoch_len}, backend,
                                    clock.remaining_seconds());
    clock.note_solve();
    std::chrono::duration<double, std::milli> ms =
        std::chrono::steady_clock::now() - t0;

    TraceEntry entry{num_epochs, epoch_len, to_string(sol.status),
                     std::nullopt, ms.count()};
    double incumbent = best ? best->objective.to_double()
                            : -std::numeric_limits<double>::infinity();
    if (sol.embedding) {
      entry.objective = sol.embedding->objective.to_double();
      SFE_LOG_DEBUG("solve N=%d L=%d -> %s obj=%.6f", num_epochs, epoch_len,
                    entry.outcome.c_str(), *entry.objective);
      if (improves(*entry.objective, incumbent)) {
        best = std::move(sol.embedding);
        best_len = epoch_len;
        failures = 0;
      } else {
        ++failures;
      }
    } else {
      SFE_LOG_DEBUG("solve N=%d L=%d -> %s", num_epochs, epoch_len,
                    entry.outcome.c_str());
      ++failures;
    }
    trace.push_back(std::move(entry));
    epoch_len += cfg.delta;
  }
  return {std::move(best), best_len};
}

// Anytime search over the number of epochs: tries N = 1, 2, 3, ... while the
// budget lasts, keeping the strictly better incumbent. Also stops after gamma
// consecutive N increments without improvement.
inline SearchResult ts_planner(const SFEInstance& inst, const SearchConfig& cfg,
                               const BackendFactory& backend_factory) {
  if (!cfg.valid()) throw BuildError("invalid search configuration");
  SearchResult result;
  auto clock = make_clock(cfg);
  std::unique_ptr<LpBackend> backend;

  int failures = 0;
  for (int n = 1; !clock->expired(); ++n) {
    if (!backend) backend = backend_factory();
    auto [emb, len] =
        plan_for_num_epochs(inst, n, *clock, cfg, *backend, result.trace);
    if (emb && improves(emb->objective.to_double(), result.best_objective())) {
      result.best = std::move(emb);
      result.best_n = n;
      result.best_l = *len;
      failures = 0;
    } else {
      ++failures;
    }
    if (cfg.gamma_limits_num_epochs && failures >= cfg.gamma) break;
    if (cfg.max_num_epochs && n >= *cfg.max_num_epochs) break;
  }
  SFE_LOG_INFO("search done: %zu solves, best N=%d L=%d obj=%s",
               result.trace.size(), result.best_n, result.best_l,
               result.best ? result.best->objective.to_decimal().c_str()
                           : "none");
  return result;
}

// Line-delimited JSON rendering of the search trace.
inline std::string trace_to_ndjson(const std::vector<TraceEntry>& trace) {
  std::string out;
  for (const TraceEntry& e : trace) {
    nlohmann::ordered_json j;
    j["n"] = e.n;
    j["l"] = e.l;
    j["outcome"] = e.outcome;
    j["objective"] = e.objective ? nlohmann::ordered_json(*e.objective)
                                 : nlohmann::ordered_json(nullptr);
    j["elapsed_ms"] = e.elapsed_ms;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace sfe
