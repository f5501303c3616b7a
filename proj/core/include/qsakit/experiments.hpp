#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "qsakit/probing.hpp"

namespace qsa {

std::string library_version();

/// Declarative experiment description, loaded from a JSON file. Numeric,
/// string and list parameters keep the schema open per experiment kind while
/// staying round-trip exact.
struct ExperimentConfig {
  std::string kind;
  std::uint64_t seed = 1;
  std::string output_dir;
  bool full_scale = false;
  std::map<std::string, double> num;
  std::map<std::string, std::string> str;
  std::map<std::string, std::vector<double>> lists;
  std::vector<ProbeTermSpec> probe;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  void save(const std::string& path) const;

  double get_num(const std::string& key, double fallback) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const;

  /// Known experiment kinds.
  static const std::vector<std::string>& kinds();
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string detail;
};

/// Everything a finished run leaves behind: the config snapshot, the output
/// files, timing, and the acceptance-check summary. Serialized next to the
/// outputs as manifest.json.
struct RunManifest {
  std::string kind;
  std::string config_json;
  std::string output_dir;
  std::vector<std::string> outputs;
  double wall_clock_s = 0.0;
  std::string version;
  std::vector<CheckResult> checks;

  bool all_pass() const;
  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

/// Runs the named experiment, writes CSVs plus manifest.json under the
/// resolved output directory, and returns the manifest. The environment
/// variable QSAKIT_OUTPUT_ROOT prefixes relative output directories.
RunManifest run_experiment(const ExperimentConfig& config);
RunManifest run_experiment_file(const std::string& config_path);

/// Recomputes the manifest's checks from the output files on disk and
/// reports mismatches to `log`. Returns true when every check passes and
/// matches the stored verdicts.
bool verify_manifest(const std::string& manifest_path, std::ostream& log);

/// Long-format plot data (`experiment,series,x,y`) aggregated from the
/// manifest's outputs, stable ordering.
void emit_plotdata(const RunManifest& manifest, std::ostream& os);

/// Probe term serialization used inside configs.
std::string probe_convention_name(ProbeConvention c);
ProbeConvention probe_convention_from_name(const std::string& name);

}  // namespace qsa
