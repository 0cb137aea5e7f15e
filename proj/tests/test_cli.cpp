#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "regunc/io.hpp"

namespace {

namespace fs = std::filesystem;
using regunc::io::json;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("regunc_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  int run(const std::string& args, const std::string& out = "out") const {
    const std::string cmd = std::string(REGUNC_CLI) + " " + args + " --output-dir " + (dir_ / out).string() + " > " +
                            (dir_ / "stdout.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  fs::path write(const std::string& name, const std::string& content) const {
    const auto p = dir_ / name;
    regunc::io::write_file_atomic(p, content);
    return p;
  }

  std::string read(const std::string& rel) const { return regunc::io::read_file(dir_ / rel); }

  /// CSV as header-name -> column cells.
  std::map<std::string, std::vector<std::string>> columns(const std::string& rel) const {
    std::istringstream in(read(rel));
    std::string line;
    std::getline(in, line);
    std::vector<std::string> names = split(line);
    std::map<std::string, std::vector<std::string>> out;
    while (std::getline(in, line)) {
      const auto cells = split(line);
      for (std::size_t i = 0; i < names.size(); ++i) out[names[i]].push_back(cells.at(i));
    }
    return out;
  }

  /// CSV rows keyed by the concatenation of the first `key` cells.
  std::map<std::string, std::string> keyed(const std::string& rel, std::size_t key) const {
    std::istringstream in(read(rel));
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::string> out;
    while (std::getline(in, line)) {
      const auto cells = split(line);
      std::string k;
      for (std::size_t i = 0; i < key; ++i) k += (i ? "," : "") + cells[i];
      out[k] = cells.back();
    }
    return out;
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
  }

  fs::path dir_;
};

std::string two_points() {
  return R"({"points": [
  {"id": "a", "members": [{"mu": 1, "sigma2": 2}, {"mu": 1, "sigma2": 2}]},
  {"id": "b", "members": [{"mu": 0, "sigma2": 1}, {"mu": 2, "sigma2": 0.5}, {"mu": -1, "sigma2": 3}]}
]}
)";
}

TEST_F(Cli, MeasuresIdenticalMembersHaveZeroExcess) {
  const auto in = write("in.json", two_points());
  ASSERT_EQ(run("measures --input " + in.string()), 0);
  const auto cols = columns("out/measures.csv");
  EXPECT_EQ(cols.at("id")[0], "a");
  std::size_t checked = 0;
  for (const auto& [name, cells] : cols) {
    if (name.find("_Exc_") == std::string::npos || cells[0] == "NA") continue;
    EXPECT_NEAR(std::stod(cells[0]), 0.0, 1e-12) << name;
    ++checked;
  }
  EXPECT_GE(checked, 20u);
}

TEST_F(Cli, SquaredErrorZeroColumns) {
  const auto in = write("in.json", two_points());
  ASSERT_EQ(run("measures --rules SE --input " + in.string()), 0);
  const auto cols = columns("out/measures.csv");
  EXPECT_EQ(cols.size(), 17u);
  for (const char* c : {"SE_Exc_3a_2", "SE_Exc_3b_2"})
    for (const auto& v : cols.at(c)) EXPECT_EQ(v, "0");
}

TEST_F(Cli, LogEnsembleEntropyNeedsFallback) {
  const auto in = write("in.json", two_points());
  ASSERT_EQ(run("measures --rules LOG --input " + in.string()), 0);
  auto cols = columns("out/measures.csv");
  for (const auto& v : cols.at("LOG_Bayes_2")) EXPECT_EQ(v, "NA");
  EXPECT_NE(cols.at("LOG_Bayes_1")[1], "NA");

  ASSERT_EQ(run("measures --rules LOG --oracle-fallback --input " + in.string(), "fb"), 0);
  cols = columns("fb/measures.csv");
  for (const auto& [name, cells] : cols)
    for (const auto& v : cells) EXPECT_NE(v, "NA") << name;
  // A single distinct member: the mixture entropy is the Gaussian entropy.
  EXPECT_NEAR(std::stod(cols.at("LOG_Bayes_2")[0]), std::stod(cols.at("LOG_Bayes_1")[0]), 1e-9);
}

TEST_F(Cli, EstimatorSelectionAndOrder) {
  const auto in = write("in.json", two_points());
  ASSERT_EQ(run("measures --rules QUADRATIC,CRPS --estimators Tot_1_1,Bayes_3b --input " + in.string()), 0);
  EXPECT_EQ(read("out/measures.csv").substr(0, read("out/measures.csv").find('\n')),
            "id,QUADRATIC_Tot_1_1,QUADRATIC_Bayes_3b,CRPS_Tot_1_1,CRPS_Bayes_3b");
  EXPECT_EQ(run("measures --estimators Tot_9_9 --input " + in.string()), 1);
  EXPECT_EQ(run("measures --rules HINGE --input " + in.string()), 1);
}

TEST_F(Cli, MeasuresDeterministicAndManifest) {
  const auto in = write("in.json", two_points());
  ASSERT_EQ(run("measures --seed 17 --input " + in.string(), "a"), 0);
  ASSERT_EQ(run("measures --seed 17 --input " + in.string(), "b"), 0);
  EXPECT_EQ(read("a/measures.csv"), read("b/measures.csv"));
  const auto m = json::parse(read("a/manifest.json"));
  EXPECT_EQ(m.at("command"), "measures");
  EXPECT_EQ(m.at("seed"), 17);
  EXPECT_EQ(m.at("version"), REGUNC_VERSION);
  EXPECT_EQ(m.at("config").at("input"), in.string());
}

TEST_F(Cli, MalformedInputIsUsageError) {
  const auto bad = write("bad.json", "{\"points\": [\n  {\"id\": \"a\",, }\n]}");
  EXPECT_EQ(run("measures --input " + bad.string()), 1);
  EXPECT_NE(read("stdout.txt").find("line 2"), std::string::npos);
  const auto schema = write("schema.json", "{\"points\": [{\"id\": \"a\", \"members\": [{\"mu\": 0}]}]}");
  EXPECT_EQ(run("measures --input " + schema.string()), 1);
  EXPECT_NE(read("stdout.txt").find("sigma2"), std::string::npos);
  EXPECT_EQ(run("measures --input " + (dir_ / "missing.json").string()), 1);
  EXPECT_EQ(run("measures"), 1);
  EXPECT_EQ(run(""), 1);
}

TEST_F(Cli, OracleCheck) {
  EXPECT_EQ(run("oracle-check --trials 0"), 1);
  ASSERT_EQ(run("oracle-check --trials 10 --seed 3", "a"), 0);
  ASSERT_EQ(run("oracle-check --trials 10 --seed 3", "b"), 0);
  EXPECT_EQ(read("a/oracle_check.csv"), read("b/oracle_check.csv"));
  const auto m = json::parse(read("a/manifest.json"));
  EXPECT_EQ(m.at("passed"), true);
}

TEST_F(Cli, ShiftTable) {
  ASSERT_EQ(run("shift --kind mean-location --replicates 2000"), 0);
  const auto rows = keyed("out/shift.csv", 3);
  EXPECT_EQ(rows.size(), 64u);
  for (const auto& [k, dir] : rows) EXPECT_TRUE(dir == "flat" || dir == "NA") << k;
  EXPECT_EQ(rows.at("mean-location,LOG,Bayes_2"), "NA");
  EXPECT_EQ(run("shift --kind sideways"), 1);
}

TEST_F(Cli, SelectiveOracleOrderingGivesZero) {
  // Single-member points N(0, e) with target sqrt(e): SE Bayes-1 equals the
  // squared error exactly.
  std::string doc = "{\"points\": [\n";
  for (int i = 0; i < 30; ++i) {
    const double e = 0.1 + 0.37 * i + 0.01 * (i % 7);
    doc += std::string(i ? ",\n" : "") + "{\"id\": \"p" + std::to_string(i) + "\", \"members\": [{\"mu\": 0, \"sigma2\": " +
           regunc::io::format_double(e) + "}], \"target\": " + regunc::io::format_double(std::sqrt(e)) + "}";
  }
  doc += "\n]}\n";
  const auto in = write("in.json", doc);
  ASSERT_EQ(run("selective --rules SE --input " + in.string()), 0);
  const auto rows = keyed("out/prr.csv", 2);
  EXPECT_NEAR(std::stod(rows.at("SE,Bayes_1")), 0.0, 1e-12);
  // Every excess cell is zero for single-member points: PRR 1 (random).
  EXPECT_NEAR(std::stod(rows.at("SE,Exc_1_1")), 1.0, 1e-12);

  const auto no_target = write("nt.json", two_points());
  EXPECT_EQ(run("selective --input " + no_target.string()), 1);
  EXPECT_NE(read("stdout.txt").find("'target'"), std::string::npos);
}

TEST_F(Cli, OodSeparatedGroups) {
  std::string doc = "{\"points\": [\n";
  for (int i = 0; i < 20; ++i) {
    const bool ood = i >= 12;
    const double v = (ood ? 5.0 : 0.5) + 0.01 * i;
    doc += std::string(i ? ",\n" : "") + "{\"id\": \"p" + std::to_string(i) + "\", \"members\": [{\"mu\": 0, \"sigma2\": " +
           regunc::io::format_double(v) + "}, {\"mu\": " + (ood ? "3" : "0.1") + ", \"sigma2\": 1}], \"group\": \"" +
           (ood ? "ood" : "id") + "\"}";
  }
  doc += "\n]}\n";
  const auto in = write("in.json", doc);
  ASSERT_EQ(run("ood --input " + in.string()), 0);
  const auto rows = keyed("out/auroc.csv", 2);
  EXPECT_EQ(rows.at("SE,Bayes_1"), "1");
  EXPECT_EQ(rows.at("SE,Exc_1_1"), "1");
  EXPECT_EQ(rows.at("LOG,Bayes_2"), "NA");

  const auto no_group = write("ng.json", two_points());
  EXPECT_EQ(run("ood --input " + no_group.string()), 1);
  EXPECT_NE(read("stdout.txt").find("'group'"), std::string::npos);
}

TEST_F(Cli, CorrelateTables) {
  std::string doc = "{\"points\": [\n";
  for (int i = 0; i < 40; ++i) {
    doc += std::string(i ? ",\n" : "") + "{\"id\": \"p" + std::to_string(i) + "\", \"members\": [{\"mu\": " +
           regunc::io::format_double(0.1 * i) + ", \"sigma2\": " + regunc::io::format_double(1.0 + 0.05 * (i % 9)) +
           "}, {\"mu\": " + regunc::io::format_double(-0.07 * i * (i % 3)) + ", \"sigma2\": " +
           regunc::io::format_double(0.3 + 0.02 * (i % 5)) + "}]}";
  }
  doc += "\n]}\n";
  const auto in = write("in.json", doc);
  ASSERT_EQ(run("correlate --input " + in.string()), 0);
  const auto est = keyed("out/tau_estimators.csv", 3);
  EXPECT_EQ(est.size(), 4u * 16u * 15u / 2u);
  EXPECT_EQ(est.at("CRPS,Exc_1_1,Exc_2_1"), "1");
  EXPECT_EQ(est.at("LOG,Bayes_1,Bayes_2"), "NA");
  const auto rules = keyed("out/tau_rules.csv", 3);
  EXPECT_EQ(rules.size(), 16u * 6u);
  EXPECT_EQ(rules.at("Bayes_3a,CRPS,SE"), "1");
  EXPECT_EQ(rules.at("Bayes_2,CRPS,LOG"), "NA");
}

TEST_F(Cli, TrainWritesArtifacts) {
  ASSERT_EQ(run("train --seed 2 --members 2 --epochs 3 --n-train 200"), 0);
  for (const char* f : {"checkpoint.json", "train_data.csv", "predictions.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  const auto ps = regunc::io::load_prediction_set(dir_ / "out/predictions.json");
  EXPECT_EQ(ps.size(), 400u);
  EXPECT_EQ(*ps.front().group, "id");
  EXPECT_EQ(*ps.back().group, "ood");
  EXPECT_EQ(ps.front().ensemble.size(), 2u);
  EXPECT_EQ(columns("out/train_data.csv").at("x").size(), 200u);

  ASSERT_EQ(run("ood --rules SE --input " + (dir_ / "out/predictions.json").string(), "ood"), 0);
  ASSERT_EQ(run("selective --rules SE --input " + (dir_ / "out/predictions.json").string(), "sel"), 0);
}

TEST_F(Cli, SynthDemoDeterministic) {
  const std::string args = "synth-demo --seed 4 --members 2 --epochs 3 --n-train 100 --grid-points 15 --rules CRPS";
  ASSERT_EQ(run(args, "a"), 0);
  ASSERT_EQ(run(args, "b"), 0);
  EXPECT_EQ(read("a/synth_demo.csv"), read("b/synth_demo.csv"));
  const auto cols = columns("a/synth_demo.csv");
  EXPECT_EQ(cols.at("x").size(), 15u);
  EXPECT_EQ(cols.at("x").front(), "-7");
  EXPECT_TRUE(cols.count("LOG_Exc_1_1"));
  EXPECT_TRUE(cols.count("CRPS_Bayes_1"));
}

TEST_F(Cli, ActiveHasRandomBaseline) {
  ASSERT_EQ(run("active --pool-size 120 --test-size 50 --iterations 2 --batch 10 --members 2 --epochs 2 "
                "--min-steps 0 --rules SE,LOG"),
            0);
  const auto cols = columns("out/active_nll.csv");
  ASSERT_TRUE(cols.count("Random"));
  EXPECT_TRUE(cols.count("SE_Exc_1_1"));
  EXPECT_TRUE(cols.count("LOG_Exc_1_1"));
  EXPECT_EQ(cols.at("iteration").size(), 3u);
  EXPECT_EQ(cols.at("labelled").back(), "40");
  // Same initial set for every acquisition function.
  EXPECT_EQ(cols.at("Random")[0], cols.at("SE_Exc_1_1")[0]);
}

}  // namespace
