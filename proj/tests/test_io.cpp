#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "regunc/experiments.hpp"
#include "regunc/io.hpp"

namespace regunc::io {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("regunc_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::create_directories(dir);
  return dir / name;
}

PredictionSet sample_set() {
  std::mt19937_64 rng(1);
  const experiments::EnsembleSampler sampler;
  PredictionSet ps;
  for (int i = 0; i < 25; ++i) {
    PredictionPoint p{"p" + std::to_string(i), sampler(rng), std::nullopt, std::nullopt};
    if (i % 2) p.target = 0.1 * i - 1.0 / 3.0;
    if (i % 3) p.group = i % 3 == 1 ? "id" : "ood";
    ps.push_back(std::move(p));
  }
  return ps;
}

TEST(FormatDouble, RoundTrips) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) / 7.0;
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_cell(std::nullopt), "NA");
  EXPECT_EQ(format_cell(0.5), "0.5");
}

TEST(PredictionSetIo, RoundTripIsByteIdentical) {
  const auto ps = sample_set();
  const auto text = serialize_prediction_set(ps);
  const auto back = parse_prediction_set(text);
  ASSERT_EQ(back.size(), ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    EXPECT_EQ(back[i].id, ps[i].id);
    EXPECT_EQ(back[i].target, ps[i].target);
    EXPECT_EQ(back[i].group, ps[i].group);
    ASSERT_EQ(back[i].ensemble.size(), ps[i].ensemble.size());
    for (std::size_t k = 0; k < ps[i].ensemble.size(); ++k) EXPECT_EQ(back[i].ensemble[k], ps[i].ensemble[k]);
  }
  EXPECT_EQ(serialize_prediction_set(back), text);

  const auto path = scratch("set.json");
  save_prediction_set(path, ps);
  EXPECT_EQ(read_file(path), text);
  EXPECT_EQ(serialize_prediction_set(load_prediction_set(path)), text);
}

TEST(PredictionSetIo, SyntaxErrorReportsPosition) {
  const std::string text = "{\"points\": [\n  {\"id\": \"a\", \"members\": [{\"mu\": 1,, \"sigma2\": 1}]}\n]}";
  try {
    parse_prediction_set(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_GT(e.column(), 1u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

void expect_schema_error(const std::string& text, const std::string& needle) {
  try {
    parse_prediction_set(text);
    FAIL() << "expected ParseError for " << text;
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(PredictionSetIo, SchemaErrorsNameTheField) {
  expect_schema_error("{}", "'points'");
  expect_schema_error("{\"points\": [{\"members\": [{\"mu\": 0, \"sigma2\": 1}]}]}", "'id'");
  expect_schema_error("{\"points\": [{\"id\": \"a\"}]}", "'members'");
  expect_schema_error("{\"points\": [{\"id\": \"a\", \"members\": [{\"mu\": 0}]}]}", "'sigma2'");
  expect_schema_error("{\"points\": [{\"id\": \"a\", \"members\": [{\"sigma2\": 1}]}]}", "'mu'");
  expect_schema_error("{\"points\": [{\"id\": \"a\", \"members\": []}]}", "members");
  expect_schema_error("{\"points\": [{\"id\": \"a\", \"members\": [{\"mu\": \"x\", \"sigma2\": 1}]}]}", ".mu");
}

TEST(PredictionSetIo, RejectsInvalidValues) {
  expect_schema_error("{\"points\": [{\"id\": \"a\", \"members\": [{\"mu\": 0, \"sigma2\": 0}]}]}", "sigma2 must be > 0");
  expect_schema_error("{\"points\": [{\"id\": \"a\", \"members\": [{\"mu\": 0, \"sigma2\": -2}]}]}", "sigma2");
  expect_schema_error(
      "{\"points\": [{\"id\": \"a\", \"members\": [{\"mu\": 0, \"sigma2\": 1}]},"
      " {\"id\": \"a\", \"members\": [{\"mu\": 1, \"sigma2\": 1}]}]}",
      "duplicate id 'a'");
}

TEST(PredictionSetIo, MissingFile) {
  EXPECT_THROW(load_prediction_set(scratch("does_not_exist.json")), UsageError);
}

TEST(WriteFileAtomic, ReplacesContentAndLeavesNoTemporary) {
  const auto path = scratch("nested/out.csv");
  write_file_atomic(path, "first\n");
  write_file_atomic(path, "second\n");
  EXPECT_EQ(read_file(path), "second\n");
  auto tmp = path;
  tmp += ".tmp";
  EXPECT_FALSE(fs::exists(tmp));
}

TEST(CsvTable, Renders) {
  CsvTable t{{"a", "b"}, {{"1", "NA"}, {"x", "2"}}};
  EXPECT_EQ(t.str(), "a,b\n1,NA\nx,2\n");
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  const auto data = experiments::to_dataset(synthetic::gen_two_curve_mixture(100, -4.0, 4.0, 3));
  trainer::TrainConfig cfg;
  cfg.epochs = 5;
  const auto pred = trainer::train_ensemble(data, 2, trainer::MlpSpec{}, cfg);
  const auto path = scratch("ckpt.json");
  save_checkpoint(path, pred);
  const auto back = load_checkpoint(path);
  ASSERT_EQ(back.members.size(), 2u);
  for (double x : {-7.0, -1.0, 0.3, 5.0}) {
    const double xv[1] = {x};
    const auto a = pred.predict_one(xv);
    const auto b = back.predict_one(xv);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(a[k], b[k]);
  }
}

TEST(Checkpoint, RejectsForeignDocuments) {
  EXPECT_THROW(checkpoint_from_json(json{{"format", "other"}}), ParseError);
  EXPECT_THROW(checkpoint_from_json(json{{"format", "regunc-ensemble"}, {"version", 2}}), ParseError);
  const auto path = scratch("broken.json");
  write_file_atomic(path, "{not json");
  EXPECT_THROW(load_checkpoint(path), ParseError);
}

}  // namespace
}  // namespace regunc::io
