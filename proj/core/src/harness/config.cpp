#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "wml/errors.hpp"
#include "wml/harness/harness.hpp"

namespace wml::harness {

namespace {

enum class Kind { integer, unsigned_integer, real, boolean, text, reals, integers, choice, choices };

struct KeySpec {
  const char* key;
  const char* fallback;
  Kind kind;
  std::vector<std::string> allowed = {};
};

const std::vector<KeySpec>& common_keys() {
  static const std::vector<KeySpec> keys{
      {"run.experiment", "", Kind::choice, {"outage", "teamdc", "edge", "detect"}},
      {"run.seed", "0", Kind::unsigned_integer},
      {"run.output", "results", Kind::text},
  };
  return keys;
}

const std::vector<KeySpec>& experiment_keys(Experiment e) {
  static const std::vector<KeySpec> outage{
      {"outage.antennas", "2", Kind::integer},
      {"outage.history", "50", Kind::integer},
      {"outage.gammas", "0.25,0.5,1,2", Kind::reals},
      {"outage.constraint", "sum_power", Kind::choice, {"sum_power", "per_antenna"}},
      {"outage.limit", "1", Kind::real},
      {"outage.problems", "20", Kind::integer},
      {"outage.temperature_ratio", "0.1", Kind::real},
      {"outage.step_size", "0.5", Kind::real},
      {"outage.iterations", "2000", Kind::integer},
      {"outage.minibatch", "16", Kind::integer},
      {"outage.mc_samples", "100000", Kind::integer},
  };
  static const std::vector<KeySpec> teamdc{
      {"team.sigma1", "1.0", Kind::real},
      {"team.sigma2", "0", Kind::real},
      {"team.p_values", "1,2,5,10,20,50", Kind::reals},
      {"team.link_snr_db", "10", Kind::real},
      {"team.message_dim", "1", Kind::integer},
      {"team.gain_mean", "1", Kind::real},
      {"team.grid_points", "1001", Kind::integer},
      {"team.initial_power_fraction", "0.95", Kind::real},
      {"team.seeds", "1", Kind::integer},
      {"train.batch_size", "400", Kind::integer},
      {"train.epochs", "1000", Kind::integer},
      {"train.dropout", "0.3", Kind::real},
      {"train.learning_rate", "3e-5", Kind::real},
      {"train.n_train", "4000", Kind::integer},
      {"train.n_test", "10000", Kind::integer},
      {"train.hidden", "50,50,50,50", Kind::integers},
  };
  static const std::vector<KeySpec> edge{
      {"edge.schemes", "analog,digital", Kind::choices, {"analog", "digital"}},
      {"edge.k_values", "5,15,25", Kind::integers},
      {"edge.channel_uses", "7850", Kind::integer},
      {"edge.energy", "20000", Kind::real},
      {"edge.noise_variance", "1", Kind::real},
      {"edge.projection", "identity", Kind::choice, {"identity", "gaussian"}},
      {"edge.projection_seed", "0", Kind::unsigned_integer},
      {"edge.bits_per_entry", "4", Kind::integer},
      {"edge.fading", "none", Kind::choice, {"none", "rayleigh"}},
      {"edge.power_cutoff", "10", Kind::real},
      {"edge.rounds", "300", Kind::integer},
      {"edge.local_batch", "128", Kind::integer},
      {"edge.learning_rate", "1e-3", Kind::real},
      {"edge.eval_interval", "10", Kind::integer},
      {"edge.seeds", "1", Kind::integer},
      {"data.source", "auto", Kind::choice, {"auto", "mnist", "synthetic"}},
      {"data.dir", "", Kind::text},
      {"data.fallback", "true", Kind::boolean},
      {"data.n_train", "10000", Kind::integer},
      {"data.n_test", "2000", Kind::integer},
      {"data.synthetic_seed", "7", Kind::unsigned_integer},
  };
  static const std::vector<KeySpec> detect{
      {"detect.n_rx", "8", Kind::integer},
      {"detect.n_tx", "4", Kind::integer},
      {"detect.layers", "6", Kind::integer},
      {"detect.hidden", "40", Kind::integer},
      {"detect.train_snr_db", "10", Kind::real},
      {"detect.n_train", "4000000", Kind::integer},
      {"detect.batch_size", "500", Kind::integer},
      {"detect.learning_rate", "1e-3", Kind::real},
      {"detect.test_instances", "10000", Kind::integer},
      {"detect.snr_values", "0,5,10,15", Kind::reals},
  };
  switch (e) {
    case Experiment::outage: return outage;
    case Experiment::teamdc: return teamdc;
    case Experiment::edge: return edge;
    case Experiment::detect: return detect;
  }
  throw ConfigError("unknown experiment");
}

const KeySpec* find_key(Experiment e, const std::string& key) {
  for (const auto* list : {&common_keys(), &experiment_keys(e)}) {
    for (const auto& k : *list) {
      if (key == k.key) return &k;
    }
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("config: " + key + " expects an unsigned integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + v + "'");
}

void check_value(const KeySpec& spec, const std::string& v) {
  const std::string key = spec.key;
  switch (spec.kind) {
    case Kind::integer: to_int(key, v); break;
    case Kind::unsigned_integer: to_uint(key, v); break;
    case Kind::real: to_double(key, v); break;
    case Kind::boolean: to_bool(key, v); break;
    case Kind::text: break;
    case Kind::reals:
      for (const auto& s : split_list(v)) to_double(key, s);
      break;
    case Kind::integers:
      for (const auto& s : split_list(v)) to_int(key, s);
      break;
    case Kind::choice:
      if (std::find(spec.allowed.begin(), spec.allowed.end(), trim(v)) == spec.allowed.end()) {
        throw ConfigError("config: " + key + " does not accept '" + v + "'");
      }
      break;
    case Kind::choices:
      for (const auto& s : split_list(v)) {
        if (std::find(spec.allowed.begin(), spec.allowed.end(), s) == spec.allowed.end()) {
          throw ConfigError("config: " + key + " does not accept '" + s + "'");
        }
      }
      break;
  }
}

// (key, value) pairs from `key = value` lines and `key=value` overrides.
std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError("config: expected 'section.key = value', got '" + line + "'");
  std::string key = trim(line.substr(0, eq));
  if (key.empty()) throw ConfigError("config: empty key in '" + line + "'");
  return {key, trim(line.substr(eq + 1))};
}

}  // namespace

std::string version() {
#ifdef WML_VERSION
  return WML_VERSION;
#else
  return "unknown";
#endif
}

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::outage: return "outage";
    case Experiment::teamdc: return "teamdc";
    case Experiment::edge: return "edge";
    case Experiment::detect: return "detect";
  }
  return "unknown";
}

Experiment parse_experiment(const std::string& name) {
  const std::string t = trim(name);
  if (t == "outage") return Experiment::outage;
  if (t == "teamdc") return Experiment::teamdc;
  if (t == "edge") return Experiment::edge;
  if (t == "detect") return Experiment::detect;
  throw ConfigError("config: unknown experiment '" + name + "'");
}

ExperimentConfig::ExperimentConfig(Experiment e) : experiment_(e) {
  for (const auto* list : {&common_keys(), &experiment_keys(e)}) {
    for (const auto& k : *list) values_[k.key] = k.fallback;
  }
  values_["run.experiment"] = to_string(e);
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(experiment_, key);
  if (spec == nullptr) {
    throw ConfigError("config: unknown key '" + key + "' for experiment " + to_string(experiment_));
  }
  if (key == "run.experiment" && parse_experiment(value) != experiment_) {
    throw ConfigError("config: run.experiment cannot change once set");
  }
  check_value(*spec, value);
  values_[key] = trim(value);
}

std::string ExperimentConfig::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: missing key '" + key + "'");
  return it->second;
}

double ExperimentConfig::get_double(const std::string& key) const { return to_double(key, get_string(key)); }
std::int64_t ExperimentConfig::get_int(const std::string& key) const { return to_int(key, get_string(key)); }
std::uint64_t ExperimentConfig::get_uint(const std::string& key) const { return to_uint(key, get_string(key)); }
bool ExperimentConfig::get_bool(const std::string& key) const { return to_bool(key, get_string(key)); }

std::vector<double> ExperimentConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : split_list(get_string(key))) out.push_back(to_double(key, s));
  return out;
}

std::vector<std::int64_t> ExperimentConfig::get_ints(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& s : split_list(get_string(key))) out.push_back(to_int(key, s));
  return out;
}

std::vector<std::string> ExperimentConfig::get_strings(const std::string& key) const {
  return split_list(get_string(key));
}

std::uint64_t ExperimentConfig::seed() const { return get_uint("run.seed"); }
std::filesystem::path ExperimentConfig::output_path() const { return get_string("run.output"); }

void ExperimentConfig::validate() const {
  for (const auto& [key, value] : values_) {
    const KeySpec* spec = find_key(experiment_, key);
    if (spec == nullptr) throw ConfigError("config: unknown key '" + key + "'");
    check_value(*spec, value);
  }
}

ExperimentConfig default_config(Experiment e) { return ExperimentConfig(e); }

ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  std::vector<std::pair<std::string, std::string>> assignments;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    assignments.push_back(split_assignment(line));
  }
  for (const auto& o : overrides) assignments.push_back(split_assignment(o));

  std::optional<Experiment> experiment;
  for (const auto& [k, v] : assignments) {
    if (k == "run.experiment") experiment = parse_experiment(v);  // last writer wins
  }
  if (!experiment) throw ConfigError("config: run.experiment is required");
  ExperimentConfig cfg(*experiment);
  for (const auto& [k, v] : assignments) {
    if (k != "run.experiment") cfg.set(k, v);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

std::string echo(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.values()) out += k + " = " + v + "\n";
  return out;
}

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("WML_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return std::filesystem::path("data") / "mnist";
}

}  // namespace wml::harness
