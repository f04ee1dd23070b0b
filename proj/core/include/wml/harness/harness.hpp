#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wml::harness {

std::string version();

enum class Experiment { outage, teamdc, edge, detect };

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& name);  // throws ConfigError

// Flat `section.key -> value` table. Every key an experiment understands has
// a default; anything else is rejected at resolve time.
class ExperimentConfig {
 public:
  ExperimentConfig() = default;
  explicit ExperimentConfig(Experiment e);

  Experiment experiment() const { return experiment_; }
  std::uint64_t seed() const;
  std::filesystem::path output_path() const;

  // Last writer wins. Unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;  // comma-separated
  std::vector<std::int64_t> get_ints(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  // Parses every value once so type errors surface before a run starts.
  void validate() const;

 private:
  Experiment experiment_ = Experiment::outage;
  std::map<std::string, std::string> values_;
};

// `run.experiment` picks the key set; its absence is a ConfigError.
// Lines are `section.key = value`; `#` starts a comment; blank lines skipped.
ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
ExperimentConfig default_config(Experiment e);

// `key = value` lines of the resolved table, sorted by key.
std::string echo(const ExperimentConfig& cfg);

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  std::optional<double> y_stderr;
};

struct Curve {
  std::string name;
  std::string x_label;
  std::string y_label;
  std::vector<CurvePoint> points;

  bool has_stderr() const;
  void validate() const;  // non-empty, x strictly increasing
};

struct ExperimentRecord {
  ExperimentConfig config;
  std::vector<Curve> curves;
  // deterministic facts about the run (data source actually used, ...)
  std::map<std::string, std::string> info;
  double runtime_seconds = 0.0;  // reported, never written into the CSVs
};

// Runs the configured experiment. Divergence propagates as DivergenceError,
// missing datasets as DatasetError.
ExperimentRecord run(const ExperimentConfig& cfg);

// <dir>/<curve>.csv per curve: `#` metadata (version, experiment, resolved
// config), header `x_label,y_label[,y_stderr]`, %.12g values.
void write_record(const ExperimentRecord& record, const std::filesystem::path& dir);
std::string curve_csv(const ExperimentRecord& record, const Curve& curve);

// Reads a directory written by write_record. The config is rebuilt from the
// metadata block.
ExperimentRecord read_record(const std::filesystem::path& dir);
Curve parse_curve_csv(const std::string& name, const std::string& text, ExperimentConfig* config_out = nullptr);

struct CurveDelta {
  std::string name;
  double max_abs_delta = 0.0;
  bool passed = true;
};

struct CompareReport {
  std::vector<CurveDelta> curves;
  bool passed() const;
};

// Throws InvalidArgument on differing curve names or x grids.
CompareReport compare(const ExperimentRecord& a, const ExperimentRecord& b, double tolerance);

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitDataset = 4;

// Directory holding the MNIST IDX files: WML_DATA_DIR, else ./data/mnist.
std::filesystem::path default_data_dir();

}  // namespace wml::harness
