#pragma once

#include <string>

#include "json.hpp"
#include "sfembed/model.hpp"

namespace sfe {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline const ordered_json& require(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end())
    throw ParseError(std::string("missing key '") + key + "'");
  return *it;
}

inline std::optional<Coord> parse_cell(const ordered_json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_integer() ||
      !(*it)[1].is_number_integer())
    throw ParseError(std::string("'") + key + "' must be [x,y] or null");
  return Coord{(*it)[0].get<int>(), (*it)[1].get<int>()};
}

}  // namespace detail

// Parses the instance document. Throws ParseError on malformed input and
// ValidationError when the decoded instance breaks a model rule.
inline SFEInstance parse_instance(const std::string& text,
                                  bool strict_one_buffer_per_road = false) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("instance document must be an object");

  try {
    ManufacturingProcedure proc;
    const auto& toks = detail::require(doc, "tokens");
    if (!toks.is_array()) throw ParseError("'tokens' must be a list of names");
    std::map<std::string, TokenId> token_ids;
    for (const auto& t : toks) {
      if (!t.is_string()) throw ParseError("token names must be strings");
      Token tok;
      tok.id = static_cast<TokenId>(proc.tokens.size()) + 1;
      tok.name = t.get<std::string>();
      token_ids[tok.name] = tok.id;
      proc.tokens.push_back(std::move(tok));
    }

    auto parse_side = [&](const ordered_json& obj, const char* key) {
      std::map<TokenId, int> side;
      auto it = obj.find(key);
      if (it == obj.end()) return side;
      if (!it->is_object())
        throw ParseError(std::string("'") + key + "' must be name->count");
      for (auto& [name, count] : it->items()) {
        auto tid = token_ids.find(name);
        if (tid == token_ids.end())
          throw ParseError("undeclared token '" + name + "'");
        if (!count.is_number_integer())
          throw ParseError("token counts must be integers");
        side[tid->second] = count.get<int>();
      }
      return side;
    };

    const auto& procs = detail::require(doc, "processes");
    if (!procs.is_array()) throw ParseError("'processes' must be a list");
    for (const auto& pj : procs) {
      Process p;
      p.id = detail::require(pj, "id").get<int>();
      p.inputs = parse_side(pj, "inputs");
      p.outputs = parse_side(pj, "outputs");
      p.is_output = pj.value("output", false);
      proc.processes.push_back(std::move(p));
    }

    std::vector<MachineSpec> machines;
    const auto& machs = detail::require(doc, "machines");
    if (!machs.is_array()) throw ParseError("'machines' must be a list");
    for (const auto& mj : machs) {
      MachineSpec m;
      m.id = detail::require(mj, "id").get<int>();
      const auto& sup = detail::require(mj, "supported");
      if (!sup.is_object())
        throw ParseError("'supported' must be process->runtime");
      for (auto& [pid, rho] : sup.items()) {
        if (!rho.is_number_integer())
          throw ParseError("runtimes must be integers");
        m.supported[std::stoi(pid)] = rho.get<int>();
      }
      m.input_cell = detail::parse_cell(mj, "input_cell");
      m.output_cell = detail::parse_cell(mj, "output_cell");
      machines.push_back(std::move(m));
    }

    int agents = detail::require(doc, "agents").get<int>();

    Layout layout;
    const auto& grid = detail::require(doc, "grid");
    if (!grid.is_array() || grid.empty())
      throw ParseError("'grid' must be a non-empty list of strings");
    layout.height = static_cast<int>(grid.size());
    for (const auto& row : grid) {
      if (!row.is_string()) throw ParseError("grid rows must be strings");
      std::string s = row.get<std::string>();
      if (layout.width == 0) layout.width = static_cast<int>(s.size());
      if (static_cast<int>(s.size()) != layout.width)
        throw ParseError("grid rows must have equal length");
      for (char c : s)
        if (std::string(">^<v+#.").find(c) == std::string::npos)
          throw ParseError(std::string("unknown grid character '") + c + "'");
      layout.cells += s;
    }

    return SFEInstance::create(std::move(proc), std::move(machines),
                               std::move(layout), agents,
                               strict_one_buffer_per_road);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed instance document: ") + e.what());
  }
}

inline std::string serialize_instance(const SFEInstance& inst) {
  ordered_json doc;
  doc["tokens"] = ordered_json::array();
  for (const Token& t : inst.procedure.tokens) doc["tokens"].push_back(t.name);

  doc["processes"] = ordered_json::array();
  for (const Process& p : inst.procedure.processes) {
    ordered_json pj;
    pj["id"] = p.id;
    ordered_json in = ordered_json::object(), out = ordered_json::object();
    for (auto [tok, count] : p.inputs)
      in[inst.procedure.tokens[tok - 1].name] = count;
    for (auto [tok, count] : p.outputs)
      out[inst.procedure.tokens[tok - 1].name] = count;
    pj["inputs"] = in;
    pj["outputs"] = out;
    pj["output"] = p.is_output;
    doc["processes"].push_back(pj);
  }

  doc["machines"] = ordered_json::array();
  for (const MachineSpec& m : inst.machines) {
    ordered_json mj;
    mj["id"] = m.id;
    ordered_json sup = ordered_json::object();
    for (auto [pid, rho] : m.supported) sup[std::to_string(pid)] = rho;
    mj["supported"] = sup;
    mj["input_cell"] =
        m.input_cell ? ordered_json{m.input_cell->x, m.input_cell->y}
                     : ordered_json(nullptr);
    mj["output_cell"] =
        m.output_cell ? ordered_json{m.output_cell->x, m.output_cell->y}
                      : ordered_json(nullptr);
    doc["machines"].push_back(mj);
  }

  doc["agents"] = inst.agent_count;
  doc["grid"] = ordered_json::array();
  for (int y = 0; y < inst.layout.height; ++y)
    doc["grid"].push_back(
        inst.layout.cells.substr(static_cast<size_t>(y) * inst.layout.width,
                                 inst.layout.width));
  return doc.dump(2) + "\n";
}

}  // namespace sfe
