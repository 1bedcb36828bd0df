#pragma once

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "json.hpp"
#include "sfembed/log.hpp"
#include "sfembed/milp.hpp"

namespace sfe {

// MILP adapter backed by the HiGHS solver through scipy.optimize.milp. A
// python worker process is spawned once per backend instance and reused for
// every solve, so the scipy import cost is paid a single time.
class ScipyMilpBackend final : public LpBackend {
 public:
  explicit ScipyMilpBackend(std::string worker_path = default_worker_path(),
                            double mip_rel_gap = 0.0)
      : worker_path_(std::move(worker_path)), mip_rel_gap_(mip_rel_gap) {}

  ScipyMilpBackend(const ScipyMilpBackend&) = delete;
  ScipyMilpBackend& operator=(const ScipyMilpBackend&) = delete;

  ~ScipyMilpBackend() override { shutdown(); }

  static std::string default_worker_path() {
    if (const char* env = std::getenv("SFE_MILP_WORKER")) return env;
#ifdef SFEMBED_WORKER_PATH
    return SFEMBED_WORKER_PATH;
#else
    return "tools/milp_worker.py";
#endif
  }

  LpSolution solve(const LpModel& model, double deadline_seconds) override {
    LpSolution out;
    if (deadline_seconds <= 1e-3) {
      out.status = SolveStatus::NoIncumbentAtDeadline;
      return out;
    }
    ensure_worker();

    nlohmann::json req;
    req["maximize"] = true;
    auto obj = nlohmann::json::array();
    for (const LpTerm& t : model.objective())
      obj.push_back({t.var, t.coef});
    req["obj"] = std::move(obj);
    auto cols = nlohmann::json::array();
    for (const LpVar& v : model.vars())
      cols.push_back({v.lb, v.ub, v.type == VarType::Continuous ? 0 : 1});
    req["cols"] = std::move(cols);
    auto rows = nlohmann::json::array();
    for (const LpRow& r : model.rows()) {
      nlohmann::json row;
      auto terms = nlohmann::json::array();
      for (const LpTerm& t : r.terms) terms.push_back({t.var, t.coef});
      row["terms"] = std::move(terms);
      row["sense"] = r.sense == RowSense::LE   ? "<="
                     : r.sense == RowSense::GE ? ">="
                                               : "=";
      row["rhs"] = r.rhs;
      rows.push_back(std::move(row));
    }
    req["rows"] = std::move(rows);
    req["time_limit"] = deadline_seconds;
    req["mip_rel_gap"] = mip_rel_gap_;

    std::string line = req.dump();
    line += '\n';
    if (fwrite(line.data(), 1, line.size(), to_child_) != line.size() ||
        fflush(to_child_) != 0) {
      shutdown();
      throw BackendError("failed to send model to the MILP worker");
    }

    std::string reply = read_line();
    nlohmann::json res;
    try {
      res = nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception&) {
      shutdown();
      throw BackendError("unparseable MILP worker reply: " + reply);
    }
    std::string status = res.value("status", "error");
    if (status == "optimal")
      out.status = SolveStatus::Optimal;
    else if (status == "feasible")
      out.status = SolveStatus::FeasibleIncumbent;
    else if (status == "infeasible")
      out.status = SolveStatus::Infeasible;
    else if (status == "no_incumbent")
      out.status = SolveStatus::NoIncumbentAtDeadline;
    else
      throw BackendError("MILP worker error: " +
                         res.value("detail", std::string("unknown")));
    if (out.has_solution()) {
      out.objective = res.value("objective", 0.0);
      out.values = res.at("x").get<std::vector<double>>();
      if (out.values.size() != model.vars().size())
        throw BackendError("MILP worker returned a wrong-sized solution");
    }
    return out;
  }

 private:
  void ensure_worker() {
    if (pid_ > 0) return;
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
      throw BackendError("failed to create worker pipes");
    pid_t pid = fork();
    if (pid < 0) throw BackendError("failed to fork the MILP worker");
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execlp("python3", "python3", worker_path_.c_str(),
             static_cast<char*>(nullptr));
      perror("exec milp worker");
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    pid_ = pid;
    to_child_ = fdopen(to_child[1], "w");
    from_child_ = fdopen(from_child[0], "r");
    if (!to_child_ || !from_child_) {
      shutdown();
      throw BackendError("failed to open worker pipe streams");
    }
    SFE_LOG_DEBUG("milp worker started (pid %d, %s)", static_cast<int>(pid_),
                  worker_path_.c_str());
  }

  std::string read_line() {
    std::string line;
    int c;
    while ((c = fgetc(from_child_)) != EOF && c != '\n')
      line += static_cast<char>(c);
    if (c == EOF) {
      shutdown();
      throw BackendError(
          "MILP worker exited unexpectedly (is scipy available and the "
          "worker path correct? set SFE_MILP_WORKER to override)");
    }
    return line;
  }

  void shutdown() {
    if (to_child_) {
      fputs("quit\n", to_child_);
      fflush(to_child_);
      fclose(to_child_);
      to_child_ = nullptr;
    }
    if (from_child_) {
      fclose(from_child_);
      from_child_ = nullptr;
    }
    if (pid_ > 0) {
      int status = 0;
      if (waitpid(pid_, &status, WNOHANG) == 0) {
        kill(pid_, SIGTERM);
        waitpid(pid_, &status, 0);
      }
      pid_ = -1;
    }
  }

  std::string worker_path_;
  double mip_rel_gap_;
  pid_t pid_ = -1;
  FILE* to_child_ = nullptr;
  FILE* from_child_ = nullptr;
};

inline BackendFactory scipy_backend_factory(double mip_rel_gap = 0.0) {
  return [mip_rel_gap] {
    return std::make_unique<ScipyMilpBackend>(
        ScipyMilpBackend::default_worker_path(), mip_rel_gap);
  };
}

}  // namespace sfe
