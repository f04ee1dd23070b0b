#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wml/errors.hpp"
#include "wml/harness/harness.hpp"

using namespace wml;
using namespace wml::harness;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("wml-harness-" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentRecord toy_record() {
  ExperimentRecord r;
  r.config = default_config(Experiment::outage);
  r.curves.push_back({"a", "x", "y", {{0.0, 1.0, {}}, {1.0, 0.5, {}}, {2.0, 0.25, {}}}});
  r.curves.push_back({"b", "x", "y", {{1.0, 0.1, 0.01}, {2.0, 0.2, 0.02}}});
  return r;
}

}  // namespace

TEST(ConfigTest, DefaultsOverridesAndUnknownKeys) {
  const auto cfg = parse_config_text("run.experiment = edge\n# comment\n\nedge.rounds = 50  # trailing\n",
                                     {"edge.rounds=70", "run.seed=3"});
  EXPECT_EQ(cfg.experiment(), Experiment::edge);
  EXPECT_EQ(cfg.get_int("edge.rounds"), 70);  // last writer wins
  EXPECT_EQ(cfg.seed(), 3u);
  EXPECT_EQ(cfg.get_ints("edge.k_values"), (std::vector<std::int64_t>{5, 15, 25}));
  EXPECT_EQ(cfg.get_strings("edge.schemes"), (std::vector<std::string>{"analog", "digital"}));

  EXPECT_THROW(parse_config_text("run.experiment = edge\nedge.nope = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("edge.rounds = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("run.experiment = edge\nedge.rounds = many\n"), ConfigError);
  EXPECT_THROW(parse_config_text("run.experiment = edge\nedge.fading = sometimes\n"), ConfigError);
  EXPECT_THROW(parse_config_text("run.experiment = edge\nteam.sigma1 = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("run.experiment = bogus\n"), ConfigError);
  EXPECT_THROW(parse_config_text("run.experiment = edge\njust words\n"), ConfigError);
}

TEST(ConfigTest, InfinityIsAccepted) {
  const auto cfg = parse_config_text("run.experiment = teamdc\nteam.link_snr_db = inf\n");
  EXPECT_TRUE(std::isinf(cfg.get_double("team.link_snr_db")));
}

TEST(ConfigTest, EchoRoundTrips) {
  const auto cfg = parse_config_text("run.experiment = detect\ndetect.n_tx = 3\n", {"detect.snr_values=1,2"});
  const auto again = parse_config_text(echo(cfg));
  EXPECT_EQ(again.values(), cfg.values());
}

TEST(ConfigTest, LoadFromFile) {
  const auto dir = scratch("load");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "c.cfg") << "run.experiment = outage\noutage.problems = 4\n";
  EXPECT_EQ(load_config(dir / "c.cfg").get_int("outage.problems"), 4);
  EXPECT_THROW(load_config(dir / "missing.cfg"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(CsvTest, FormatAndMetadataRoundTrip) {
  ExperimentRecord r = toy_record();
  r.config.set("outage.gammas", "0.5,2");
  r.info["note"] = "x";
  const std::string text = curve_csv(r, r.curves[1]);
  EXPECT_NE(text.find("# experiment = outage\n"), std::string::npos);
  EXPECT_NE(text.find("# config: outage.gammas = 0.5,2\n"), std::string::npos);
  EXPECT_NE(text.find("# info: note = x\n"), std::string::npos);
  EXPECT_NE(text.find("\nx,y,y_stderr\n1,0.1,0.01\n2,0.2,0.02\n"), std::string::npos);
  ExperimentConfig back;
  const Curve c = parse_curve_csv("b", text, &back);
  EXPECT_EQ(back.values(), r.config.values());
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(*c.points[1].y_stderr, 0.02);
  EXPECT_EQ(curve_csv(r, r.curves[0]).find("y_stderr"), std::string::npos);
}

TEST(CsvTest, TwelveSignificantDigits) {
  ExperimentRecord r = toy_record();
  r.curves[0].points[0].y = 1.0 / 3.0;
  EXPECT_NE(curve_csv(r, r.curves[0]).find("\n0,0.333333333333\n"), std::string::npos);
}

TEST(CurveTest, Invariants) {
  Curve empty{"e", "x", "y", {}};
  EXPECT_THROW(empty.validate(), InvalidArgument);
  Curve flat{"f", "x", "y", {{1.0, 0.0, {}}, {1.0, 0.0, {}}}};
  EXPECT_THROW(flat.validate(), InvalidArgument);
}

TEST(CompareTest, SelfShiftedAndMismatchedGrids) {
  const ExperimentRecord a = toy_record();
  const auto self = compare(a, a, 1e-9);
  EXPECT_TRUE(self.passed());
  for (const auto& c : self.curves) EXPECT_EQ(c.max_abs_delta, 0.0);

  ExperimentRecord b = a;
  for (auto& p : b.curves[1].points) p.y += 2e-3;
  const auto shifted = compare(a, b, 1e-3);
  EXPECT_FALSE(shifted.passed());
  EXPECT_TRUE(shifted.curves[0].passed);
  EXPECT_FALSE(shifted.curves[1].passed);
  EXPECT_EQ(shifted.curves[1].name, "b");

  ExperimentRecord c = a;
  c.curves[0].points[1].x = 1.5;
  EXPECT_THROW(compare(a, c, 1.0), InvalidArgument);
  ExperimentRecord d = a;
  d.curves[1].name = "z";
  EXPECT_THROW(compare(a, d, 1.0), InvalidArgument);
}

TEST(RunTest, OutageRecordIsReproducibleOnDisk) {
  auto cfg = default_config(Experiment::outage);
  cfg.set("outage.problems", "2");
  cfg.set("outage.iterations", "100");
  cfg.set("outage.mc_samples", "2000");
  const auto d1 = scratch("o1"), d2 = scratch("o2");
  write_record(run(cfg), d1);
  write_record(run(cfg), d2);
  for (const char* name : {"sgd_sample_outage", "sgd_mc_outage", "mrt_mc_outage"}) {
    const std::string f = std::string(name) + ".csv";
    ASSERT_TRUE(std::filesystem::exists(d1 / f)) << f;
    EXPECT_EQ(slurp(d1 / f), slurp(d2 / f));
  }
  const auto back = read_record(d1);
  EXPECT_EQ(back.config.values(), cfg.values());
  EXPECT_TRUE(compare(back, read_record(d2), 0.0).passed());
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST(RunTest, TeamdcProducesSixSchemeCurves) {
  auto cfg = default_config(Experiment::teamdc);
  cfg.set("team.p_values", "1,10");
  cfg.set("team.grid_points", "51");
  cfg.set("train.epochs", "2");
  cfg.set("train.n_train", "400");
  cfg.set("train.n_test", "200");
  cfg.set("train.hidden", "8");
  const auto rec = run(cfg);
  ASSERT_EQ(rec.curves.size(), 6u);
  for (const auto& c : rec.curves) {
    EXPECT_EQ(c.x_label, "p_max");
    EXPECT_EQ(c.y_label, "normalized_sum_rate");
    EXPECT_EQ(c.points.size(), 2u);
  }
  EXPECT_EQ(rec.curves[0].name, "centralized");
  EXPECT_EQ(rec.curves[0].points[0].y, 1.0);
}

TEST(RunTest, EdgeProducesSchemeByWorkerCurves) {
  auto cfg = default_config(Experiment::edge);
  cfg.set("edge.rounds", "3");
  cfg.set("edge.local_batch", "8");
  cfg.set("data.source", "synthetic");
  cfg.set("data.n_train", "300");
  cfg.set("data.n_test", "50");
  const auto rec = run(cfg);
  std::vector<std::string> names;
  for (const auto& c : rec.curves) names.push_back(c.name);
  EXPECT_EQ(names, (std::vector<std::string>{"analog_k5", "analog_k15", "analog_k25", "digital_k5", "digital_k15",
                                             "digital_k25"}));
  EXPECT_EQ(rec.info.at("data.used"), "synthetic");
}

TEST(RunTest, MissingDatasetWithoutFallback) {
  auto cfg = default_config(Experiment::edge);
  cfg.set("data.source", "mnist");
  cfg.set("data.dir", (std::filesystem::temp_directory_path() / "wml-no-such-dir").string());
  cfg.set("data.fallback", "false");
  EXPECT_THROW(run(cfg), DatasetError);
}

TEST(RunTest, BadValuesAreConfigErrors) {
  auto cfg = default_config(Experiment::outage);
  cfg.set("outage.gammas", "1,0.5");
  EXPECT_THROW(run(cfg), ConfigError);
  auto e = default_config(Experiment::edge);
  e.set("edge.k_values", "0");
  EXPECT_THROW(run(e), ConfigError);
}

TEST(DataDirTest, EnvironmentOverride) {
  ::setenv("WML_DATA_DIR", "/tmp/mnist-here", 1);
  EXPECT_EQ(default_data_dir(), std::filesystem::path("/tmp/mnist-here"));
  ::unsetenv("WML_DATA_DIR");
  EXPECT_EQ(default_data_dir(), std::filesystem::path("data") / "mnist");
}
