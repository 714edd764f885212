#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hdsa/config.hpp"
#include "hdsa/hdsa.hpp"

namespace hdsa {

/// Per-sample artifacts as persisted by the binary dumps (flat float64
/// arrays, one file per field, described by manifest.json).
struct PersistedSample {
  int index = 0;
  NodalField draw;
  Eigen::VectorXd data_base, data_noise;
  NodalField map_point;  // size 0 when the phase that produces it never ran
};

/// Writes sample artifacts under <out_dir>/samples plus a manifest carrying
/// the master seed and the config digest, so a later run can verify it is
/// resuming the same experiment.
void persist_sample_artifacts(const std::string& out_dir, const RunConfig& config,
                              std::uint64_t seed,
                              const std::vector<SampleRecord>& records);

/// Loads artifacts written by persist_sample_artifacts. Returns nullopt when
/// no manifest is present; throws when one is present but does not match the
/// given config digest and seed or the files are inconsistent.
std::optional<std::vector<PersistedSample>> load_sample_artifacts(
    const std::string& out_dir, const RunConfig& config, std::uint64_t seed);

/// Subcommand entry points. Each writes its reports under out_dir and
/// returns a process exit status; failures leave an error.json behind.
int cmd_synthesize(const RunConfig& config, const std::string& out_dir);
int cmd_map(const RunConfig& config, const std::string& out_dir);
int cmd_hdsa(const RunConfig& config, const std::string& out_dir);
int cmd_oracle(const RunConfig& config, const std::string& out_dir);
int cmd_spread(const RunConfig& config, const std::string& out_dir);

/// Dispatch by subcommand name ("synthesize", "map", "hdsa", "oracle",
/// "spread"); unknown names raise std::invalid_argument.
int run_command(const std::string& name, const RunConfig& config,
                const std::string& out_dir);

/// Shortest text that parses back to exactly the same double.
std::string format_double(double value);

}  // namespace hdsa
