#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cwgen/config.hpp"
#include "cwgen/errors.hpp"
#include "cwgen/pipeline.hpp"

using namespace cwgen;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cwgen_test_" + name);
  fs::remove_all(p);
  return p;
}

config::RunConfig tiny(const fs::path& out) {
  auto c = config::parse(R"(
[data]
dim = 2
length = 400
history = 6
horizon = 4
[jmce]
window = 3
hidden = 6
projection = 4
width = 8
epochs = 2
[gen]
hidden = 6
projection = 4
width = 8
epochs = 2
n_steps = 5
[eval]
members = 10
corr_window = 3
[run]
seeds = 0-1
)");
  c.run.output = out;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("blob ids follow the git convention") {
  CHECK(pipeline::blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(pipeline::blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(pipeline::sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
}

TEST_CASE("config defaults and overrides") {
  const auto d = config::defaults();
  CHECK(d.run.seeds.size() == 10);
  CHECK(d.data.history == 24);
  CHECK(config::check(d).empty());

  auto c = config::parse("[data]\nlevel_shift = 1.0\n# comment\n; other\n\n[run]\nseeds = 2-4,9\n");
  CHECK(c.data.level_shift == 1.0);
  CHECK(c.run.seeds == std::vector<std::uint64_t>{2, 3, 4, 9});

  config::apply_overrides(c, {"gen.epochs=3", "eval.members=20"});
  CHECK(c.gen.epochs == 3);
  CHECK(c.eval.members == 20);
  CHECK_THROWS_AS(config::apply_overrides(c, {"gen.epochs"}), ConfigError);
}

TEST_CASE("config parser reports every problem at once") {
  try {
    config::parse("[data]\nhistory = -1\nbogus = 2\nhistory = 3\nno equals sign\n[nope]\nx = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus") != std::string::npos);
    CHECK(msg.find("duplicate") != std::string::npos);
    CHECK(msg.find("nope") != std::string::npos);
    CHECK(msg.find("<config>:2:") != std::string::npos);
    CHECK(msg.find("<config>:5:") != std::string::npos);
  }
  CHECK_THROWS_AS(config::parse("[eval]\nmembers = 15\n"), ConfigError);
  CHECK_THROWS_AS(config::parse("[jmce]\nwindow = 4\n"), ConfigError);
  CHECK_THROWS_AS(config::parse("[run]\nseeds = 5-2\n"), ConfigError);
}

TEST_CASE("canonical lines round-trip as overrides") {
  const auto c = tiny("out");
  std::vector<std::string> lines;
  std::istringstream in(config::canonical(c));
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find(" = ");
    lines.push_back(line.substr(0, eq) + "=" + line.substr(eq + 3));
  }
  auto d = config::defaults();
  config::apply_overrides(d, lines);
  CHECK(config::canonical(d) == config::canonical(c));
}

TEST_CASE("stage hashes depend only on upstream sections") {
  auto a = config::defaults();
  auto b = a;
  b.eval.members = 50;
  CHECK(pipeline::stage_config_hash(a, "train-jmce") == pipeline::stage_config_hash(b, "train-jmce"));
  CHECK(pipeline::stage_config_hash(a, "train-gen") == pipeline::stage_config_hash(b, "train-gen"));
  CHECK(pipeline::stage_config_hash(a, "sample") != pipeline::stage_config_hash(b, "sample"));
  b = a;
  b.data.level_shift = 1.0;
  CHECK(pipeline::stage_config_hash(a, "gen-data") != pipeline::stage_config_hash(b, "gen-data"));
}

TEST_CASE("level shift only moves the test split") {
  auto c = tiny("unused");
  const auto base = pipeline::prepare_dataset(c, 0);
  c.data.level_shift = 1.0;
  const auto shifted = pipeline::prepare_dataset(c, 0);
  CHECK(shifted.splits.train.values == base.splits.train.values);
  CHECK(shifted.splits.val.values == base.splits.val.values);
  for (std::size_t k = 0; k < base.splits.test.values.data().size(); ++k)
    CHECK(shifted.splits.test.values.data()[k] == doctest::Approx(base.splits.test.values.data()[k] + 1.0));
}

TEST_CASE("stages refuse to run without their inputs") {
  const fs::path out = scratch("prereq");
  const auto c = tiny(out);
  std::ostringstream log;
  CHECK_THROWS_AS(pipeline::train_jmce(c, {}, log), PrerequisiteError);
  pipeline::gen_data(c, {{0}, {}, {}}, log);
  CHECK_THROWS_AS(pipeline::train_gen(c, {{0}, {generative::Kind::kDiffusion}, {generative::Variant::kCw}}, log),
                  PrerequisiteError);
  CHECK_THROWS_AS(pipeline::sample(c, {{0}, {}, {}}, log), PrerequisiteError);

  // A different data config invalidates downstream stages.
  auto changed = c;
  changed.data.level_shift = 0.5;
  CHECK_THROWS_AS(pipeline::train_jmce(changed, {{0}, {}, {}}, log), PrerequisiteError);

  // A tampered artifact is detected.
  std::ofstream(pipeline::seed_dir(c, 0) / "data" / "train.csv", std::ios::app) << "1,2\n";
  CHECK_THROWS_AS(pipeline::train_jmce(c, {{0}, {}, {}}, log), PrerequisiteError);
  fs::remove_all(out);
}

TEST_CASE("end-to-end run is reproducible") {
  const fs::path out = scratch("e2e");
  const auto c = tiny(out);
  std::ostringstream log;
  const auto rep = pipeline::run_all(c, log);
  CHECK(rep.rows.size() == 4 * pipeline::kMetricNames.size());
  CHECK(rep.per_seed.size() == 8);
  CHECK(rep.seed_win.total == 8);
  CHECK(rep.table_win.at("CRPS").total == 2);
  CHECK(rep.text.find("Seed-level CW win rate") != std::string::npos);
  for (const auto& r : rep.rows) {
    if (r.metric == "CondFID") continue;
    CHECK(r.summary.n == 2);
    CHECK(std::isfinite(r.summary.mean));
  }
  for (const char* f : {"manifest.json", "metrics.tsv", "per_seed.tsv", "report.txt"}) CHECK(fs::exists(out / f));
  CHECK(fs::exists(pipeline::jmce_path(c, 1)));
  CHECK(fs::exists(pipeline::model_path(c, 1, "flow_cw")));

  std::map<fs::path, std::string> first;
  for (const auto& e : fs::recursive_directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") first[e.path()] = slurp(e.path());

  std::ostringstream log2;
  pipeline::run_all(c, log2);
  for (const auto& [p, bytes] : first) CHECK_MESSAGE(slurp(p) == bytes, p.string());

  // Evaluation can be redone from the stored samples alone.
  std::ostringstream log3;
  pipeline::evaluate(c, {{1}, {}, {}}, log3);
  CHECK(slurp(pipeline::seed_dir(c, 1) / "summary_diff_cw.tsv") == first[pipeline::seed_dir(c, 1) / "summary_diff_cw.tsv"]);
  fs::remove_all(out);
}
