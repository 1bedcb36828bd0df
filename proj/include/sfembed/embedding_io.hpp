#pragma once

#include <string>

#include "json.hpp"
#include "sfembed/milp.hpp"

namespace sfe {

using ordered_json = nlohmann::ordered_json;

// Embedding document: hyperparameters, per-machine assignment and rational
// rate, sparse flow/pickup/deposit tensors keyed by external ids, and the
// objective as a decimal string. Key order is fixed for diffability.
inline std::string serialize_embedding(const SFEInstance& inst,
                                       const TrafficSystemEmbedding& e) {
  const TensorDims& d = e.dims;
  ordered_json doc;
  doc["hyper"] = {{"N", e.hyper.num_epochs}, {"L", e.hyper.epoch_len}};

  ordered_json assign = ordered_json::object();
  ordered_json rate = ordered_json::object();
  for (int m = 0; m < d.machines; ++m) {
    std::string mid = std::to_string(inst.machines[m].id);
    int p = e.assigned_process(m);
    assign[mid] = p < 0 ? ordered_json(nullptr)
                        : ordered_json(inst.procedure.processes[p].id);
    ordered_json rates = ordered_json::object();
    for (int q = 0; q < d.processes; ++q) {
      const Rat& r = e.rate[d.mp_idx(m, q)];
      if (!r.is_zero())
        rates[std::to_string(inst.procedure.processes[q].id)] = {r.num(),
                                                                 r.den()};
    }
    rate[mid] = rates;
  }
  doc["assign"] = assign;
  doc["rate"] = rate;

  auto token_key = [&](TokenId tok) {
    return tok == kNullToken ? std::string("null")
                             : inst.procedure.tokens[tok - 1].name;
  };
  auto flows = [&](const std::vector<long long>& tensor) {
    ordered_json out = ordered_json::object();
    for (int road = 0; road < d.roads; ++road) {
      ordered_json per_epoch = ordered_json::object();
      for (int T = 0; T < d.epochs; ++T) {
        ordered_json per_token = ordered_json::object();
        for (TokenId tok = 0; tok <= d.tokens; ++tok) {
          long long v = tensor[d.b_idx(road, T, tok)];
          if (v != 0) per_token[token_key(tok)] = v;
        }
        if (!per_token.empty()) per_epoch[std::to_string(T)] = per_token;
      }
      if (!per_epoch.empty())
        out[std::to_string(inst.traffic.roads[road].id)] = per_epoch;
    }
    return out;
  };
  doc["b_in"] = flows(e.b_in);
  doc["b_out"] = flows(e.b_out);

  auto moves = [&](const std::vector<long long>& tensor) {
    ordered_json out = ordered_json::object();
    for (int m = 0; m < d.machines; ++m) {
      ordered_json per_epoch = ordered_json::object();
      for (int T = 0; T < d.epochs; ++T) {
        ordered_json per_token = ordered_json::object();
        for (TokenId tok = 1; tok <= d.tokens; ++tok) {
          long long v = tensor[d.pd_idx(m, T, tok)];
          if (v != 0) per_token[token_key(tok)] = v;
        }
        if (!per_token.empty()) per_epoch[std::to_string(T)] = per_token;
      }
      if (!per_epoch.empty())
        out[std::to_string(inst.machines[m].id)] = per_epoch;
    }
    return out;
  };
  doc["pickup"] = moves(e.pickup);
  doc["deposit"] = moves(e.deposit);
  doc["objective"] = e.objective.to_decimal();
  return doc.dump(2) + "\n";
}

inline TrafficSystemEmbedding parse_embedding(const SFEInstance& inst,
                                              const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("invalid JSON: ") + ex.what());
  }
  try {
    HyperParams hyper{doc.at("hyper").at("N").get<int>(),
                      doc.at("hyper").at("L").get<int>()};
    TrafficSystemEmbedding e = TrafficSystemEmbedding::zero(inst, hyper);
    const TensorDims& d = e.dims;

    for (auto& [mid, pid] : doc.at("assign").items()) {
      int m = inst.machine_index_by_id.at(std::stoi(mid));
      if (!pid.is_null())
        e.assign[d.mp_idx(m, inst.process_index_by_id.at(pid.get<int>()))] = 1;
    }
    for (auto& [mid, rates] : doc.at("rate").items()) {
      int m = inst.machine_index_by_id.at(std::stoi(mid));
      for (auto& [pid, frac] : rates.items()) {
        int p = inst.process_index_by_id.at(std::stoi(pid));
        e.rate[d.mp_idx(m, p)] =
            Rat(frac.at(0).get<long long>(), frac.at(1).get<long long>());
      }
    }

    auto token_id = [&](const std::string& key) {
      if (key == "null") return kNullToken;
      auto it = inst.token_by_name.find(key);
      if (it == inst.token_by_name.end())
        throw ParseError("unknown token '" + key + "' in embedding");
      return it->second;
    };
    auto read_flows = [&](const char* key, std::vector<long long>& tensor,
                          bool with_null) {
      for (auto& [rid, per_epoch] : doc.at(key).items()) {
        int index;
        if (with_null) {
          index = std::stoi(rid) - 1;
          if (index < 0 || index >= d.roads)
            throw ParseError("unknown road id in embedding");
        } else {
          index = inst.machine_index_by_id.at(std::stoi(rid));
        }
        for (auto& [ep, per_token] : per_epoch.items()) {
          int T = std::stoi(ep);
          if (T < 0 || T >= d.epochs)
            throw ParseError("epoch index out of range in embedding");
          for (auto& [tok_key, count] : per_token.items()) {
            TokenId tok = token_id(tok_key);
            if (!with_null && tok == kNullToken)
              throw ParseError("null token in a pickup/deposit tensor");
            size_t idx = with_null ? d.b_idx(index, T, tok)
                                   : d.pd_idx(index, T, tok);
            tensor[idx] = count.get<long long>();
          }
        }
      }
    };
    read_flows("b_in", e.b_in, true);
    read_flows("b_out", e.b_out, true);
    read_flows("pickup", e.pickup, false);
    read_flows("deposit", e.deposit, false);

    for (int m = 0; m < d.machines; ++m)
      e.objective += e.rate[d.mp_idx(m, inst.output_process)];
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("malformed embedding document: ") + ex.what());
  } catch (const std::out_of_range&) {
    throw ParseError("embedding references unknown machine/process ids");
  } catch (const std::invalid_argument&) {
    throw ParseError("malformed id key in embedding document");
  }
}

}  // namespace sfe
