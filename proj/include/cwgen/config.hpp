#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cwgen/data.hpp"
#include "cwgen/generative.hpp"
#include "cwgen/jmce.hpp"

namespace cwgen::config {

struct DataSection {
  std::string source = "synthetic";  // "synthetic" | "csv"
  std::filesystem::path csv;
  bool timestamp_column = false;
  data::SyntheticConfig synthetic;
  std::array<double, 3> ratios = {7.0, 1.0, 2.0};
  std::size_t history = 24;
  std::size_t horizon = 12;
  double level_shift = 0.0;
};

struct EvalSection {
  std::size_t members = 100;
  std::size_t qice_bins = 10;
  std::size_t corr_window = 15;
  std::size_t plot_window = 0;  // test window written to the plot-data files
};

struct RunSection {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::filesystem::path output = "runs/synthetic";
};

/// Everything a pipeline run needs. Model dimensions (d, T_h, T_f) live in the
/// data section and are copied into the model configs by jmce_config/gen_config.
struct RunConfig {
  DataSection data;
  jmce::JmceConfig jmce;
  generative::GenConfig gen;
  std::vector<generative::Kind> kinds = {generative::Kind::kDiffusion, generative::Kind::kFlow};
  std::vector<generative::Variant> variants = {generative::Variant::kRaw, generative::Variant::kCw};
  EvalSection eval;
  RunSection run;
};

RunConfig defaults();

/// Parses "[section]" / "key = value" text on top of the defaults. Blank lines
/// and lines starting with '#' or ';' are ignored. Throws ConfigError listing
/// every malformed line, unknown or duplicate key, bad value and failed check.
RunConfig parse(std::string_view text, std::string_view origin = "<config>");

/// File plus "section.key=value" overrides applied after the file.
RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Applies overrides to an already parsed config; same error behaviour as parse().
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

/// All violations of cross-field constraints, empty when the config is usable.
std::vector<std::string> check(const RunConfig& config);

/// One "section.key = value" line per field in table order. Stable input for the config hash.
std::string canonical(const RunConfig& config);

/// Markdown table of every key with its default and meaning.
std::string reference_page();

/// Model configs for one seed; `dim` is the dataset dimension.
jmce::JmceConfig jmce_config(const RunConfig& config, std::size_t dim, std::uint64_t seed);
generative::GenConfig gen_config(const RunConfig& config, std::size_t dim, generative::Kind kind,
                                 generative::Variant variant, std::uint64_t seed);

}  // namespace cwgen::config
