#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wml/errors.hpp"
#include "wml/harness/harness.hpp"

namespace wml::harness {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_number(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidArgument("csv: bad number '" + s + "'");
  }
  if (used != s.size()) throw InvalidArgument("csv: bad number '" + s + "'");
  return v;
}

}  // namespace

bool Curve::has_stderr() const {
  for (const auto& p : points) {
    if (p.y_stderr) return true;
  }
  return false;
}

void Curve::validate() const {
  if (points.empty()) throw InvalidArgument("curve " + name + ": no points");
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (!(points[i].x > points[i - 1].x)) throw InvalidArgument("curve " + name + ": x not strictly increasing");
  }
}

std::string curve_csv(const ExperimentRecord& record, const Curve& curve) {
  curve.validate();
  std::string out = "# wml " + version() + "\n";
  out += "# experiment = " + to_string(record.config.experiment()) + "\n";
  for (const auto& [k, v] : record.config.values()) out += "# config: " + k + " = " + v + "\n";
  for (const auto& [k, v] : record.info) out += "# info: " + k + " = " + v + "\n";
  const bool err = curve.has_stderr();
  out += curve.x_label + "," + curve.y_label + (err ? ",y_stderr" : "") + "\n";
  for (const auto& p : curve.points) {
    out += fmt(p.x) + "," + fmt(p.y);
    if (err) out += "," + (p.y_stderr ? fmt(*p.y_stderr) : std::string("nan"));
    out += "\n";
  }
  return out;
}

void write_record(const ExperimentRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& c : record.curves) {
    std::ofstream out(dir / (c.name + ".csv"), std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidArgument("cannot write " + (dir / (c.name + ".csv")).string());
    out << curve_csv(record, c);
  }
}

Curve parse_curve_csv(const std::string& name, const std::string& text, ExperimentConfig* config_out) {
  Curve c;
  c.name = name;
  std::stringstream ss(text);
  std::string line;
  std::vector<std::pair<std::string, std::string>> entries;
  std::string experiment;
  bool header = false;
  bool err = false;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string cfg_tag = "# config: ";
      const std::string exp_tag = "# experiment = ";
      if (line.rfind(cfg_tag, 0) == 0) {
        const std::string body = line.substr(cfg_tag.size());
        const auto eq = body.find(" = ");
        if (eq == std::string::npos) throw InvalidArgument("csv: malformed config line '" + line + "'");
        entries.emplace_back(body.substr(0, eq), body.substr(eq + 3));
      } else if (line.rfind(exp_tag, 0) == 0) {
        experiment = line.substr(exp_tag.size());
      }
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (!header) {
      if (cols.size() < 2 || cols.size() > 3) throw InvalidArgument("csv: bad header in " + name);
      c.x_label = cols[0];
      c.y_label = cols[1];
      err = cols.size() == 3;
      header = true;
      continue;
    }
    if (cols.size() != (err ? 3u : 2u)) throw InvalidArgument("csv: bad row in " + name + ": '" + line + "'");
    CurvePoint p{parse_number(cols[0]), parse_number(cols[1]), {}};
    if (err && cols[2] != "nan") p.y_stderr = parse_number(cols[2]);
    c.points.push_back(p);
  }
  if (!header) throw InvalidArgument("csv: no header in " + name);
  if (config_out != nullptr) {
    if (experiment.empty()) throw InvalidArgument("csv: no experiment line in " + name);
    ExperimentConfig cfg(parse_experiment(experiment));
    for (const auto& [k, v] : entries) {
      if (k != "run.experiment") cfg.set(k, v);
    }
    *config_out = cfg;
  }
  return c;
}

ExperimentRecord read_record(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidArgument("not a record directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  if (files.empty()) throw InvalidArgument("no curves under " + dir.string());
  std::sort(files.begin(), files.end());
  ExperimentRecord rec;
  bool first = true;
  for (const auto& f : files) {
    ExperimentConfig cfg;
    rec.curves.push_back(parse_curve_csv(f.stem().string(), read_file(f), &cfg));
    if (first) rec.config = cfg;
    first = false;
  }
  return rec;
}

bool CompareReport::passed() const {
  for (const auto& c : curves) {
    if (!c.passed) return false;
  }
  return true;
}

CompareReport compare(const ExperimentRecord& a, const ExperimentRecord& b, double tolerance) {
  if (!(tolerance >= 0.0)) throw InvalidArgument("compare: tolerance must be >= 0");
  auto find = [](const ExperimentRecord& r, const std::string& name) -> const Curve* {
    for (const auto& c : r.curves) {
      if (c.name == name) return &c;
    }
    return nullptr;
  };
  if (a.curves.size() != b.curves.size()) throw InvalidArgument("compare: records hold different curve sets");
  CompareReport report;
  for (const auto& ca : a.curves) {
    const Curve* cb = find(b, ca.name);
    if (cb == nullptr) throw InvalidArgument("compare: curve " + ca.name + " missing from the second record");
    if (ca.points.size() != cb->points.size()) throw InvalidArgument("compare: x grids differ for " + ca.name);
    CurveDelta d{ca.name, 0.0, true};
    for (std::size_t i = 0; i < ca.points.size(); ++i) {
      if (ca.points[i].x != cb->points[i].x) throw InvalidArgument("compare: x grids differ for " + ca.name);
      const double delta = std::abs(ca.points[i].y - cb->points[i].y);
      // NaN on either side counts as a failure
      if (!(delta <= d.max_abs_delta)) d.max_abs_delta = std::isnan(delta) ? delta : std::max(d.max_abs_delta, delta);
    }
    d.passed = d.max_abs_delta <= tolerance;
    report.curves.push_back(d);
  }
  return report;
}

}  // namespace wml::harness
