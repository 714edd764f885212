#include "hdsa/commands.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "hdsa/ledger.hpp"
#include "hdsa/log.hpp"
#include "hdsa/oracle1d.hpp"
#include "hdsa/rng.hpp"

namespace hdsa {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_doubles(const fs::path& path, const double* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(double)));
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Eigen::VectorXd read_doubles(const fs::path& path, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
    throw std::runtime_error("truncated array file: " + path.string());
  return v;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

std::string sample_file(int index, const char* field) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "samples/s%04d_%s.f64", index, field);
  return buf;
}

/// One CSV row from already formatted cells.
std::string csv_row(const std::vector<std::string>& cells) {
  std::string row;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) row += ',';
    row += cells[i];
  }
  row += '\n';
  return row;
}

json ledger_json_value(const CostLedger& ledger) {
  return json::parse(ledger_to_json(ledger));
}

void write_standard_outputs(const fs::path& out, const RunConfig& config,
                            const CostLedger& ledger) {
  write_text(out / "resolved_config.json", serialize_config(config) + "\n");
  write_text(out / "ledger.json", ledger_to_json(ledger) + "\n");
}

/// Shared guard: prepares the output directory, runs the body, and converts
/// any failure into an error.json record plus a nonzero exit status.
int guarded(const char* name, const std::string& out_dir,
            const std::function<void(const fs::path&)>& body) {
  const fs::path out(out_dir);
  try {
    fs::create_directories(out);
    body(out);
    return 0;
  } catch (const std::exception& e) {
    log_line(0, name, " failed: ", e.what());
    try {
      const json record = {{"command", name}, {"error", e.what()}};
      write_text(out / "error.json", record.dump(2) + "\n");
    } catch (...) {
      // The error record is best effort; the exit status is authoritative.
    }
    return 1;
  }
}

}  // namespace

std::string format_double(double value) {
  if (!std::isfinite(value)) return value > 0 ? "inf" : (value < 0 ? "-inf" : "nan");
  char buf[40];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) return buf;
  }
  return buf;
}

void persist_sample_artifacts(const std::string& out_dir, const RunConfig& config,
                              std::uint64_t seed,
                              const std::vector<SampleRecord>& records) {
  const fs::path out(out_dir);
  fs::create_directories(out / "samples");

  json entries = json::array();
  for (const auto& rec : records) {
    json entry = {{"index", rec.index},
                  {"draw", sample_file(rec.index, "draw")},
                  {"data_base", sample_file(rec.index, "data_base")},
                  {"data_noise", sample_file(rec.index, "data_noise")}};
    write_doubles(out / entry["draw"].get<std::string>(), rec.draw.data(),
                  static_cast<std::size_t>(rec.draw.size()));
    write_doubles(out / entry["data_base"].get<std::string>(), rec.obs.base.data(),
                  static_cast<std::size_t>(rec.obs.base.size()));
    write_doubles(out / entry["data_noise"].get<std::string>(), rec.obs.noise.data(),
                  static_cast<std::size_t>(rec.obs.noise.size()));
    if (rec.map_point.size() > 0) {
      entry["map"] = sample_file(rec.index, "map");
      write_doubles(out / entry["map"].get<std::string>(), rec.map_point.data(),
                    static_cast<std::size_t>(rec.map_point.size()));
    } else {
      entry["map"] = nullptr;
    }
    entries.push_back(std::move(entry));
  }

  const json manifest = {
      {"format", "float64 arrays, native byte order"},
      {"master_seed", seed},
      {"config_digest", digest_hex(config_digest(config))},
      {"field_length", records.empty() ? 0 : records.front().draw.size()},
      {"n_sensors", records.empty() ? 0 : records.front().obs.base.size()},
      {"n_samples", records.size()},
      {"samples", entries},
  };
  write_text(out / "manifest.json", manifest.dump(2) + "\n");
}

std::optional<std::vector<PersistedSample>> load_sample_artifacts(
    const std::string& out_dir, const RunConfig& config, std::uint64_t seed) {
  const fs::path out(out_dir);
  const fs::path manifest_path = out / "manifest.json";
  if (!fs::exists(manifest_path)) return std::nullopt;

  std::ifstream in(manifest_path);
  json manifest;
  in >> manifest;
  if (manifest.at("master_seed").get<std::uint64_t>() != seed)
    throw std::runtime_error("manifest seed does not match the requested run");
  if (manifest.at("config_digest").get<std::string>() != digest_hex(config_digest(config)))
    throw std::runtime_error("manifest config digest does not match the requested run");

  const auto field_length = manifest.at("field_length").get<std::size_t>();
  const auto n_sensors = manifest.at("n_sensors").get<std::size_t>();
  std::vector<PersistedSample> samples;
  for (const auto& entry : manifest.at("samples")) {
    PersistedSample s;
    s.index = entry.at("index").get<int>();
    s.draw = read_doubles(out / entry.at("draw").get<std::string>(), field_length);
    s.data_base =
        read_doubles(out / entry.at("data_base").get<std::string>(), n_sensors);
    s.data_noise =
        read_doubles(out / entry.at("data_noise").get<std::string>(), n_sensors);
    if (!entry.at("map").is_null())
      s.map_point = read_doubles(out / entry.at("map").get<std::string>(), field_length);
    samples.push_back(std::move(s));
  }
  return samples;
}

int cmd_synthesize(const RunConfig& config, const std::string& out_dir) {
  return guarded("synthesize", out_dir, [&](const fs::path& out) {
    const HdsaEngine engine(config);
    const std::uint64_t seed = config.master_seed;
    const ComplementaryParams params = engine.nominal_params();

    CostLedger ledger;
    ledger.samples.resize(static_cast<std::size_t>(config.n_samples));
    std::vector<SampleRecord> records(static_cast<std::size_t>(config.n_samples));

    std::string csv = "sample,draw_norm_m,data_norm,noise_norm\n";
    for (int i = 0; i < config.n_samples; ++i) {
      SampleRecord& rec = records[static_cast<std::size_t>(i)];
      rec.index = i;
      rec.draw = engine.prior_draw(i, seed);
      SolveCounter counter;
      rec.obs = engine.sample_data(i, seed, rec.draw, &counter);
      ledger.samples[static_cast<std::size_t>(i)].data_generation = counter.solves;
      csv += csv_row({std::to_string(i), format_double(engine.prior().mass_norm(rec.draw)),
                      format_double(rec.obs.data(params).norm()),
                      format_double(rec.obs.noise.norm())});
    }

    write_text(out / "samples.csv", csv);
    persist_sample_artifacts(out_dir, config, seed, records);
    write_standard_outputs(out, config, ledger);
  });
}

namespace {

std::string solve_stats_csv(const std::vector<SampleRecord>& records,
                            const PriorOperators& prior) {
  std::string csv =
      "sample,converged,newton_steps,cg_iterations,linesearch_extra,pde_solves,"
      "initial_grad_norm,final_grad_norm,final_cost,map_norm_m\n";
  for (const auto& rec : records) {
    const double map_norm =
        rec.map_point.size() > 0 ? prior.mass_norm(rec.map_point) : 0.0;
    csv += csv_row({std::to_string(rec.index), rec.converged ? "1" : "0",
                    std::to_string(rec.stats.newton_steps),
                    std::to_string(rec.stats.cg_iterations),
                    std::to_string(rec.stats.linesearch_extra),
                    std::to_string(rec.stats.pde_solves),
                    format_double(rec.stats.initial_grad_norm),
                    format_double(rec.stats.final_grad_norm),
                    format_double(rec.stats.final_cost), format_double(map_norm)});
  }
  return csv;
}

}  // namespace

int cmd_map(const RunConfig& config, const std::string& out_dir) {
  return guarded("map", out_dir, [&](const fs::path& out) {
    const HdsaEngine engine(config);
    const std::uint64_t seed = config.master_seed;
    const ComplementaryParams params = engine.nominal_params();

    // A matching set of persisted artifacts warm-starts the solves, which is
    // what makes an interrupted run cheap to resume.
    std::optional<std::vector<PersistedSample>> resume;
    if (config.persist_samples) resume = load_sample_artifacts(out_dir, config, seed);

    CostLedger ledger;
    ledger.samples.resize(static_cast<std::size_t>(config.n_samples));
    std::vector<SampleRecord> records(static_cast<std::size_t>(config.n_samples));

    for (int i = 0; i < config.n_samples; ++i) {
      const auto s = static_cast<std::size_t>(i);
      SampleRecord& rec = records[s];
      SampleCosts& costs = ledger.samples[s];
      rec.index = i;
      rec.draw = engine.prior_draw(i, seed);
      {
        SolveCounter counter;
        rec.obs = engine.sample_data(i, seed, rec.draw, &counter);
        costs.data_generation = counter.solves;
      }
      NodalField start = rec.draw;
      if (resume && s < resume->size() && (*resume)[s].map_point.size() > 0)
        start = (*resume)[s].map_point;
      SolveCounter counter;
      auto [map_point, stats] =
          solve_map(engine.problem(), rec.obs, params, start, config.solver, &counter);
      rec.map_point = std::move(map_point);
      rec.stats = stats;
      rec.converged = stats.converged;
      costs.inverse_solve = counter.solves;
      costs.newton_steps = stats.newton_steps;
      costs.cg_iterations = stats.cg_iterations;
      costs.linesearch_extra = stats.linesearch_extra;
      costs.converged = stats.converged;
    }

    write_text(out / "solve_stats.csv", solve_stats_csv(records, engine.prior()));
    if (config.persist_samples)
      persist_sample_artifacts(out_dir, config, seed, records);
    write_standard_outputs(out, config, ledger);
  });
}

namespace {

std::string sensitivities_csv(const SensitivityReport& report,
                              const ComplementaryParams& params) {
  std::string csv =
      "# raw map indices are field M-norms per unit theta; raw bayes_risk "
      "indices are risk units per unit theta; *_norm columns are divided by "
      "the QoI scale and are dimensionless per unit theta\n";
  csv +=
      "qoi,subgroup,member,pointwise_raw,pointwise_norm,generalized_raw,"
      "generalized_norm,n_s,seed\n";
  const std::string n_s = std::to_string(report.n_samples);
  const std::string seed = std::to_string(report.seed);
  for (const char* qoi : {"map", "bayes_risk"}) {
    const bool is_map = std::string(qoi) == "map";
    const auto& pointwise = is_map ? report.map_pointwise : report.risk_pointwise;
    const auto& pointwise_norm =
        is_map ? report.map_pointwise_norm : report.risk_pointwise_norm;
    const auto& generalized = is_map ? report.map_generalized : report.risk_generalized;
    const auto& generalized_norm =
        is_map ? report.map_generalized_norm : report.risk_generalized_norm;
    for (std::size_t g = 0; g < report.scheme.groups.size(); ++g) {
      const Subgroup& group = report.scheme.groups[g];
      for (int member : group.members) {
        csv += csv_row({qoi, group.name, params.component_name(member),
                        format_double(pointwise[member]),
                        format_double(pointwise_norm[member]),
                        format_double(generalized[static_cast<Eigen::Index>(g)]),
                        format_double(generalized_norm[static_cast<Eigen::Index>(g)]),
                        n_s, seed});
      }
    }
  }
  return csv;
}

json report_json_value(const SensitivityReport& report, const RunConfig& config,
                       const ComplementaryParams& params) {
  json subgroups = json::array();
  for (std::size_t g = 0; g < report.scheme.groups.size(); ++g) {
    const Subgroup& group = report.scheme.groups[g];
    json members = json::array();
    for (int member : group.members) members.push_back(params.component_name(member));
    const auto gi = static_cast<Eigen::Index>(g);
    subgroups.push_back({{"name", group.name},
                         {"members", members},
                         {"map_generalized", report.map_generalized[gi]},
                         {"map_generalized_norm", report.map_generalized_norm[gi]},
                         {"risk_generalized", report.risk_generalized[gi]},
                         {"risk_generalized_norm", report.risk_generalized_norm[gi]}});
  }
  json components = json::array();
  for (int j = 0; j < params.dim(); ++j) {
    components.push_back({{"name", params.component_name(j)},
                          {"risk_gradient", report.risk_gradient[j]},
                          {"risk_pointwise", report.risk_pointwise[j]},
                          {"risk_pointwise_norm", report.risk_pointwise_norm[j]},
                          {"map_pointwise", report.map_pointwise[j]},
                          {"map_pointwise_norm", report.map_pointwise_norm[j]}});
  }
  return {{"command", "hdsa"},
          {"seed", report.seed},
          {"config_digest", digest_hex(config_digest(config))},
          {"n_samples", report.n_samples},
          {"n_excluded", report.n_excluded},
          {"bayes_risk", report.bayes_risk},
          {"avg_map_norm", report.avg_map_norm},
          {"subgroups", subgroups},
          {"components", components},
          {"warnings", report.warnings}};
}

}  // namespace

int cmd_hdsa(const RunConfig& config, const std::string& out_dir) {
  return guarded("hdsa", out_dir, [&](const fs::path& out) {
    const HdsaEngine engine(config);
    const ComplementaryParams params = engine.nominal_params();

    CostLedger ledger;
    const SensitivityReport report = engine.run_pipeline(config.master_seed, &ledger);

    write_text(out / "sensitivities.csv", sensitivities_csv(report, params));
    write_text(out / "solve_stats.csv", solve_stats_csv(report.samples, engine.prior()));
    write_text(out / "report.json",
               report_json_value(report, config, params).dump(2) + "\n");
    if (config.persist_samples)
      persist_sample_artifacts(out_dir, config, config.master_seed, report.samples);
    write_standard_outputs(out, config, ledger);
  });
}

namespace {

double grid_mean(const Eigen::VectorXd& grid, const Eigen::VectorXd& pdf) {
  // Trapezoid moments on a uniform grid; the pdf is already normalized.
  const double h = grid[1] - grid[0];
  double m = 0.0;
  for (Eigen::Index i = 0; i + 1 < grid.size(); ++i)
    m += 0.5 * h * (grid[i] * pdf[i] + grid[i + 1] * pdf[i + 1]);
  return m;
}

double grid_std(const Eigen::VectorXd& grid, const Eigen::VectorXd& pdf) {
  const double mean = grid_mean(grid, pdf);
  const double h = grid[1] - grid[0];
  double v = 0.0;
  auto sq = [mean](double x) { return (x - mean) * (x - mean); };
  for (Eigen::Index i = 0; i + 1 < grid.size(); ++i)
    v += 0.5 * h * (sq(grid[i]) * pdf[i] + sq(grid[i + 1]) * pdf[i + 1]);
  return std::sqrt(std::max(0.0, v));
}

}  // namespace

int cmd_oracle(const RunConfig& config, const std::string& out_dir) {
  return guarded("oracle", out_dir, [&](const fs::path& out) {
    const OracleConfig& oc = config.oracle;
    ScalarProblem problem;
    problem.prior_mean = oc.prior_mean;
    problem.prior_variance = oc.prior_variance;
    problem.theta_nominal = oc.theta;
    problem.noise_std = oc.noise_std;
    problem.second_mode_scale = oc.second_mode_scale;
    problem.consistent_forward = oc.consistent_forward;

    const std::uint64_t seed = config.master_seed;
    Gaussian draw_rng(derive_seed(seed, 0));
    const double m_true = oc.prior_mean + std::sqrt(oc.prior_variance) * draw_rng();

    const std::vector<double> sensors = problem.effective_sensors();
    Gaussian noise_rng(derive_seed(seed, 1));
    Eigen::VectorXd y(static_cast<Eigen::Index>(sensors.size()));
    for (std::size_t k = 0; k < sensors.size(); ++k)
      y[static_cast<Eigen::Index>(k)] =
          forward_1d(problem, m_true, oc.theta, sensors[k]) + oc.noise_std * noise_rng();

    // State curve with the noisy observations riding on it.
    const double pi = 3.14159265358979323846;
    std::string state_csv = "x,state\n";
    const int curve_points = 301;
    for (int i = 0; i < curve_points; ++i) {
      const double x = pi * i / (curve_points - 1);
      state_csv += csv_row({format_double(x),
                            format_double(forward_1d(problem, m_true, oc.theta, x))});
    }
    write_text(out / "state.csv", state_csv);

    std::string data_csv = "x,observation\n";
    for (std::size_t k = 0; k < sensors.size(); ++k)
      data_csv += csv_row({format_double(sensors[k]),
                           format_double(y[static_cast<Eigen::Index>(k)])});
    write_text(out / "data.csv", data_csv);

    // Prior, nominal posterior, and perturbed posterior on a common grid,
    // all with the same frozen data.
    const double theta_perturbed = oc.theta + 0.01;
    Eigen::VectorXd grid(oc.grid_points);
    for (int i = 0; i < oc.grid_points; ++i)
      grid[i] = oc.grid_lo + (oc.grid_hi - oc.grid_lo) * i / (oc.grid_points - 1);
    const Eigen::VectorXd post_nominal = posterior_pdf(problem, oc.theta, y, grid);
    const Eigen::VectorXd post_perturbed = posterior_pdf(problem, theta_perturbed, y, grid);
    Eigen::VectorXd prior_pdf(oc.grid_points);
    for (int i = 0; i < oc.grid_points; ++i) {
      const double d = grid[i] - oc.prior_mean;
      prior_pdf[i] = std::exp(-0.5 * d * d / oc.prior_variance) /
                     std::sqrt(2.0 * pi * oc.prior_variance);
    }
    std::string dens_csv = "m,prior,posterior_nominal,posterior_perturbed\n";
    for (int i = 0; i < oc.grid_points; ++i)
      dens_csv += csv_row({format_double(grid[i]), format_double(prior_pdf[i]),
                           format_double(post_nominal[i]),
                           format_double(post_perturbed[i])});
    write_text(out / "densities.csv", dens_csv);

    const double map_nominal = map_1d(problem, oc.theta, y);
    const double map_perturbed = map_1d(problem, theta_perturbed, y);
    const double sensitivity = scalar_map_sensitivity(problem, oc.theta, y);
    const double fd_step = 1e-5;
    const double sensitivity_fd = (map_1d(problem, oc.theta + fd_step, y) -
                                   map_1d(problem, oc.theta - fd_step, y)) /
                                  (2.0 * fd_step);

    const ScalarHdsaResult pipeline = scalar_hdsa(problem, oc.n_samples, seed);

    const json summary = {
        {"command", "oracle"},
        {"seed", seed},
        {"m_true", m_true},
        {"theta_nominal", oc.theta},
        {"theta_perturbed", theta_perturbed},
        {"map_nominal", map_nominal},
        {"map_perturbed", map_perturbed},
        {"posterior_mean_nominal", grid_mean(grid, post_nominal)},
        {"posterior_mean_perturbed", grid_mean(grid, post_perturbed)},
        {"posterior_std_nominal", grid_std(grid, post_nominal)},
        {"posterior_std_perturbed", grid_std(grid, post_perturbed)},
        {"map_sensitivity_formula", sensitivity},
        {"map_sensitivity_fd", sensitivity_fd},
        {"pipeline",
         {{"n_samples", oc.n_samples},
          {"bayes_risk", pipeline.bayes_risk},
          {"risk_sensitivity", pipeline.risk_sensitivity},
          {"fd_risk_sensitivity", pipeline.fd_risk_sensitivity},
          {"map_sensitivity", pipeline.map_sensitivity},
          {"fd_map_sensitivity", pipeline.fd_map_sensitivity}}},
    };
    write_text(out / "summary.json", summary.dump(2) + "\n");

    CostLedger ledger;  // closed-form model: no PDE solves anywhere
    write_standard_outputs(out, config, ledger);
  });
}

int cmd_spread(const RunConfig& config, const std::string& out_dir) {
  return guarded("spread", out_dir, [&](const fs::path& out) {
    const HdsaEngine engine(config);
    CostLedger ledger;
    const SpreadStudy study = engine.run_spread(config.master_seed, &ledger);

    std::string csv = "qoi,subgroup,group_size,mean,stddev,min,max\n";
    for (const auto& row : study.rows)
      csv += csv_row({row.qoi, row.subgroup, std::to_string(row.group_size),
                      format_double(row.mean), format_double(row.stddev),
                      format_double(row.min), format_double(row.max)});
    write_text(out / "spread.csv", csv);
    write_standard_outputs(out, config, ledger);
  });
}

int run_command(const std::string& name, const RunConfig& config,
                const std::string& out_dir) {
  if (name == "synthesize") return cmd_synthesize(config, out_dir);
  if (name == "map") return cmd_map(config, out_dir);
  if (name == "hdsa") return cmd_hdsa(config, out_dir);
  if (name == "oracle") return cmd_oracle(config, out_dir);
  if (name == "spread") return cmd_spread(config, out_dir);
  throw std::invalid_argument("unknown command: " + name);
}

}  // namespace hdsa
