#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "cwgen/config.hpp"
#include "cwgen/data.hpp"
#include "cwgen/generative.hpp"
#include "cwgen/metrics.hpp"

namespace cwgen::pipeline {

struct Dataset {
  data::Splits splits;
  std::vector<data::TimeSeriesWindow> train;  // stride 1
  std::vector<data::TimeSeriesWindow> val;    // stride 1
  std::vector<data::TimeSeriesWindow> test;   // non-overlapping

  std::size_t dim() const { return splits.train.dim(); }
};

/// Synthetic series for `seed` (or the configured CSV), chronological split,
/// train-statistics z-score, then data.level_shift added to the test split.
Dataset prepare_dataset(const config::RunConfig& config, std::uint64_t seed);

/// Git blob id: SHA-1 over "blob <size>\0" followed by the bytes, lowercase hex.
std::string blob_sha1(const std::string& bytes);
std::string sha1_hex(const std::string& bytes);

/// Hash of the config sections a stage depends on.
std::string stage_config_hash(const config::RunConfig& config, const std::string& stage);

inline const std::vector<std::string> kStages = {"gen-data", "train-jmce", "train-gen", "sample", "evaluate",
                                                 "report"};

/// Restricts a stage to some seeds, kinds or variants; empty means everything configured.
struct Selection {
  std::vector<std::uint64_t> seeds;
  std::vector<generative::Kind> kinds;
  std::vector<generative::Variant> variants;
};

/// Output directory layout, relative to run.output:
///   manifest.json
///   seed_<s>/data/{train,val,test}.csv, stats.tsv          gen-data
///   seed_<s>/jmce.ckpt, jmce_log.tsv, jmce_summary.tsv      train-jmce
///   seed_<s>/gen_<kind>_<variant>.ckpt, _log.tsv            train-gen
///   seed_<s>/samples_<kind>_<variant>.ckpt                  sample
///   seed_<s>/scores_*.tsv, summary_*.tsv, plot_*.tsv        evaluate
///   metrics.tsv, per_seed.tsv, report.txt                   report
/// Each stage checks that the artifacts it reads are listed in the manifest
/// under the current config hash, and throws PrerequisiteError naming the stage
/// to rerun otherwise.
void gen_data(const config::RunConfig& config, const Selection& sel, std::ostream& log);
void train_jmce(const config::RunConfig& config, const Selection& sel, std::ostream& log);
void train_gen(const config::RunConfig& config, const Selection& sel, std::ostream& log);
void sample(const config::RunConfig& config, const Selection& sel, std::ostream& log);
void evaluate(const config::RunConfig& config, const Selection& sel, std::ostream& log);

inline const std::vector<std::string> kMetricNames = {"CRPS", "QICE", "ProbCorr", "CondFID", "ProbMSE", "ProbMAE"};

struct SeedValue {
  std::uint64_t seed = 0;
  std::string model;    // "diff" | "flow"
  std::string variant;  // "raw" | "cw"
  std::map<std::string, double> values;
};

struct Report {
  std::vector<metrics::MetricRow> rows;  // mean and std over seeds
  std::vector<SeedValue> per_seed;
  /// Per metric: comparisons of seed-averaged Raw and CW rows, one per model.
  std::map<std::string, metrics::WinRate> table_win;
  /// (model, metric, seed) comparisons over CRPS and ProbCorr.
  metrics::WinRate seed_win;
  std::string text;
};

/// Aggregates per-seed summaries. Needs both variants of every configured kind.
Report report(const config::RunConfig& config, std::ostream& log);

/// All stages in order for every configured seed, then the report.
Report run_all(const config::RunConfig& config, std::ostream& log);

/// Seed used for the sampler of a given training seed; shared by Raw and CW.
std::uint64_t sampling_seed(std::uint64_t seed);

std::filesystem::path seed_dir(const config::RunConfig& config, std::uint64_t seed);
std::filesystem::path model_path(const config::RunConfig& config, std::uint64_t seed, const std::string& id);
std::filesystem::path jmce_path(const config::RunConfig& config, std::uint64_t seed);

}  // namespace cwgen::pipeline
