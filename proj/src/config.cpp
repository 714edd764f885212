#include "hdsa/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

namespace hdsa {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::invalid_argument("config: " + path + ": " + what);
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected a boolean");
  return j.get<bool>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

using Handler = std::function<void(const json&, const std::string&)>;

// Dispatches every key of an object to its handler; unknown keys are errors.
void parse_object(const json& j, const std::string& path,
                  const std::map<std::string, Handler>& handlers) {
  if (!j.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) fail(path + "." + key, "unknown key");
    it->second(value, path + "." + key);
  }
}

void parse_nominals(const json& j, const std::string& path, AuxNominals& nom) {
  std::map<std::string, Handler> handlers;
  for (int idx = 0; idx < aux::count; ++idx)
    handlers[aux::name(idx)] = [&nom, idx](const json& v, const std::string& p) {
      nom.set(idx, as_double(v, p));
    };
  handlers["t_amb"] = [&](const json& v, const std::string& p) { nom.t_amb = as_double(v, p); };
  handlers["sigma_x1"] = [&](const json& v, const std::string& p) { nom.sigma_x1 = as_double(v, p); };
  handlers["sigma_x2"] = [&](const json& v, const std::string& p) { nom.sigma_x2 = as_double(v, p); };
  parse_object(j, path, handlers);
  if (nom.s2 == 0.0) fail(path + ".s2", "flux width must be nonzero");
  if (nom.sigma_x1 <= 0.0 || nom.sigma_x2 <= 0.0)
    fail(path + ".sigma_x1", "source spreads must be positive");
}

void parse_solver(const json& j, const std::string& path, SolverConfig& s) {
  parse_object(j, path, {
    {"grad_tol_rel", [&](const json& v, const std::string& p) { s.grad_tol_rel = as_double(v, p); }},
    {"max_newton", [&](const json& v, const std::string& p) { s.max_newton = as_int(v, p); }},
    {"armijo_c1", [&](const json& v, const std::string& p) { s.armijo_c1 = as_double(v, p); }},
    {"backtrack", [&](const json& v, const std::string& p) { s.backtrack = as_double(v, p); }},
    {"max_backtracks", [&](const json& v, const std::string& p) { s.max_backtracks = as_int(v, p); }},
    {"max_cg", [&](const json& v, const std::string& p) { s.max_cg = as_int(v, p); }},
    {"forcing_cap", [&](const json& v, const std::string& p) { s.forcing_cap = as_double(v, p); }},
    {"gauss_newton", [&](const json& v, const std::string& p) { s.gauss_newton = as_bool(v, p); }},
  });
  if (s.grad_tol_rel <= 0.0) fail(path + ".grad_tol_rel", "must be positive");
  if (s.max_newton < 0) fail(path + ".max_newton", "must be nonnegative");
  if (s.armijo_c1 <= 0.0 || s.armijo_c1 >= 1.0) fail(path + ".armijo_c1", "must lie in (0, 1)");
  if (s.backtrack <= 0.0 || s.backtrack >= 1.0) fail(path + ".backtrack", "must lie in (0, 1)");
  if (s.max_backtracks < 1) fail(path + ".max_backtracks", "must be at least 1");
  if (s.max_cg < 1) fail(path + ".max_cg", "must be at least 1");
  if (s.forcing_cap <= 0.0 || s.forcing_cap >= 1.0) fail(path + ".forcing_cap", "must lie in (0, 1)");
}

void parse_lowrank(const json& j, const std::string& path, LowRankConfig& l) {
  parse_object(j, path, {
    {"threshold", [&](const json& v, const std::string& p) { l.threshold = as_double(v, p); }},
    {"max_rank", [&](const json& v, const std::string& p) { l.max_rank = as_int(v, p); }},
    {"gauss_newton", [&](const json& v, const std::string& p) { l.gauss_newton = as_bool(v, p); }},
  });
  if (l.threshold < 0.0) fail(path + ".threshold", "must be nonnegative");
  if (l.max_rank < 1) fail(path + ".max_rank", "must be at least 1");
}

void parse_spread(const json& j, const std::string& path, SpreadConfig& s) {
  parse_object(j, path, {
    {"groups", [&](const json& v, const std::string& p) { s.groups = as_int(v, p); }},
    {"sizes", [&](const json& v, const std::string& p) {
       if (!v.is_array() || v.empty()) fail(p, "expected a nonempty array");
       s.sizes.clear();
       for (std::size_t i = 0; i < v.size(); ++i)
         s.sizes.push_back(as_int(v[i], p + "[" + std::to_string(i) + "]"));
     }},
    {"pool", [&](const json& v, const std::string& p) { s.pool = as_int(v, p); }},
  });
  if (s.groups < 2) fail(path + ".groups", "must be at least 2");
  for (int size : s.sizes)
    if (size < 2) fail(path + ".sizes", "every group size must be at least 2");
  if (s.pool < 2) fail(path + ".pool", "must be at least 2");
}

void parse_oracle(const json& j, const std::string& path, OracleConfig& o) {
  parse_object(j, path, {
    {"prior_mean", [&](const json& v, const std::string& p) { o.prior_mean = as_double(v, p); }},
    {"prior_variance", [&](const json& v, const std::string& p) { o.prior_variance = as_double(v, p); }},
    {"theta", [&](const json& v, const std::string& p) { o.theta = as_double(v, p); }},
    {"noise_std", [&](const json& v, const std::string& p) { o.noise_std = as_double(v, p); }},
    {"second_mode_scale", [&](const json& v, const std::string& p) { o.second_mode_scale = as_double(v, p); }},
    {"consistent_forward", [&](const json& v, const std::string& p) { o.consistent_forward = as_bool(v, p); }},
    {"n_samples", [&](const json& v, const std::string& p) { o.n_samples = as_int(v, p); }},
    {"grid_points", [&](const json& v, const std::string& p) { o.grid_points = as_int(v, p); }},
    {"grid_lo", [&](const json& v, const std::string& p) { o.grid_lo = as_double(v, p); }},
    {"grid_hi", [&](const json& v, const std::string& p) { o.grid_hi = as_double(v, p); }},
  });
  if (o.prior_variance <= 0.0) fail(path + ".prior_variance", "must be positive");
  if (o.noise_std <= 0.0) fail(path + ".noise_std", "must be positive");
  if (o.n_samples < 1) fail(path + ".n_samples", "must be at least 1");
  if (o.grid_points < 2) fail(path + ".grid_points", "must be at least 2");
  if (!(o.grid_hi > o.grid_lo)) fail(path + ".grid_hi", "must exceed grid_lo");
}

}  // namespace

std::vector<std::array<double, 2>> RunConfig::effective_sensors() const {
  if (!sensors.empty()) return sensors;
  // Evenly spaced 5x5 interior grid spanning [0.1, 0.9] in each direction.
  std::vector<std::array<double, 2>> grid;
  for (int iy = 0; iy < 5; ++iy)
    for (int ix = 0; ix < 5; ++ix)
      grid.push_back({(2 * ix + 1) / 10.0, (2 * iy + 1) / 10.0});
  return grid;
}

RunConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }

  RunConfig c;
  parse_object(j, "$", {
    {"mesh_cells", [&](const json& v, const std::string& p) { c.mesh_cells = as_int(v, p); }},
    {"prior_alpha", [&](const json& v, const std::string& p) { c.prior_alpha = as_double(v, p); }},
    {"prior_phi", [&](const json& v, const std::string& p) { c.prior_phi = as_double(v, p); }},
    {"nominals", [&](const json& v, const std::string& p) { parse_nominals(v, p, c.nominals); }},
    {"aux_scale", [&](const json& v, const std::string& p) { c.aux_scale = as_double(v, p); }},
    {"noise_std", [&](const json& v, const std::string& p) { c.noise_std = as_double(v, p); }},
    {"sensors", [&](const json& v, const std::string& p) {
       if (!v.is_array()) fail(p, "expected an array of [x, y] pairs");
       c.sensors.clear();
       for (std::size_t i = 0; i < v.size(); ++i) {
         const std::string ep = p + "[" + std::to_string(i) + "]";
         if (!v[i].is_array() || v[i].size() != 2) fail(ep, "expected an [x, y] pair");
         const double x = as_double(v[i][0], ep), y = as_double(v[i][1], ep);
         if (x < 0.0 || x > 1.0 || y < 0.0 || y > 1.0)
           fail(ep, "sensor outside the unit square");
         c.sensors.push_back({x, y});
       }
     }},
    {"solver", [&](const json& v, const std::string& p) { parse_solver(v, p, c.solver); }},
    {"lowrank", [&](const json& v, const std::string& p) { parse_lowrank(v, p, c.lowrank); }},
    {"inverse_apply", [&](const json& v, const std::string& p) {
       c.inverse_apply = as_string(v, p);
       if (c.inverse_apply != "lowrank" && c.inverse_apply != "cg")
         fail(p, "must be 'lowrank' or 'cg'");
     }},
    {"n_samples", [&](const json& v, const std::string& p) { c.n_samples = as_int(v, p); }},
    {"spread", [&](const json& v, const std::string& p) { parse_spread(v, p, c.spread); }},
    {"oracle", [&](const json& v, const std::string& p) { parse_oracle(v, p, c.oracle); }},
    {"master_seed", [&](const json& v, const std::string& p) {
       if (!v.is_number_unsigned() && !v.is_number_integer()) fail(p, "expected an integer");
       c.master_seed = v.get<std::uint64_t>();
     }},
    {"workers", [&](const json& v, const std::string& p) { c.workers = as_int(v, p); }},
    {"persist_samples", [&](const json& v, const std::string& p) { c.persist_samples = as_bool(v, p); }},
  });

  if (c.mesh_cells < 2) fail("$.mesh_cells", "must be at least 2");
  if (c.prior_alpha <= 0.0) fail("$.prior_alpha", "must be positive");
  if (c.prior_phi <= 0.0) fail("$.prior_phi", "must be positive");
  if (c.aux_scale <= 0.0) fail("$.aux_scale", "must be positive");
  if (c.noise_std <= 0.0) fail("$.noise_std", "must be positive");
  if (c.n_samples < 1) fail("$.n_samples", "must be at least 1");
  if (c.workers < 1) fail("$.workers", "must be at least 1");
  return c;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string serialize_config(const RunConfig& c) {
  json nominals;
  for (int idx = 0; idx < aux::count; ++idx) nominals[aux::name(idx)] = c.nominals.get(idx);
  nominals["t_amb"] = c.nominals.t_amb;
  nominals["sigma_x1"] = c.nominals.sigma_x1;
  nominals["sigma_x2"] = c.nominals.sigma_x2;

  json sensors = json::array();
  for (const auto& s : c.sensors) sensors.push_back({s[0], s[1]});

  const json j = {
      {"mesh_cells", c.mesh_cells},
      {"prior_alpha", c.prior_alpha},
      {"prior_phi", c.prior_phi},
      {"nominals", nominals},
      {"aux_scale", c.aux_scale},
      {"noise_std", c.noise_std},
      {"sensors", sensors},
      {"solver",
       {{"grad_tol_rel", c.solver.grad_tol_rel},
        {"max_newton", c.solver.max_newton},
        {"armijo_c1", c.solver.armijo_c1},
        {"backtrack", c.solver.backtrack},
        {"max_backtracks", c.solver.max_backtracks},
        {"max_cg", c.solver.max_cg},
        {"forcing_cap", c.solver.forcing_cap},
        {"gauss_newton", c.solver.gauss_newton}}},
      {"lowrank",
       {{"threshold", c.lowrank.threshold},
        {"max_rank", c.lowrank.max_rank},
        {"gauss_newton", c.lowrank.gauss_newton}}},
      {"inverse_apply", c.inverse_apply},
      {"n_samples", c.n_samples},
      {"spread",
       {{"groups", c.spread.groups}, {"sizes", c.spread.sizes}, {"pool", c.spread.pool}}},
      {"oracle",
       {{"prior_mean", c.oracle.prior_mean},
        {"prior_variance", c.oracle.prior_variance},
        {"theta", c.oracle.theta},
        {"noise_std", c.oracle.noise_std},
        {"second_mode_scale", c.oracle.second_mode_scale},
        {"consistent_forward", c.oracle.consistent_forward},
        {"n_samples", c.oracle.n_samples},
        {"grid_points", c.oracle.grid_points},
        {"grid_lo", c.oracle.grid_lo},
        {"grid_hi", c.oracle.grid_hi}}},
      {"master_seed", c.master_seed},
      {"workers", c.workers},
      {"persist_samples", c.persist_samples},
  };
  return j.dump(2);
}

std::uint64_t config_digest(const RunConfig& config) {
  RunConfig canonical = config;
  canonical.workers = 1;
  canonical.persist_samples = false;
  const std::string text = serialize_config(canonical);
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace hdsa
