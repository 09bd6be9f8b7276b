#include "cwgen/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cwgen/errors.hpp"
#include "cwgen/jmce.hpp"
#include "cwgen/nn/checkpoint.hpp"

namespace cwgen::pipeline {

namespace fs = std::filesystem;
using config::RunConfig;
using generative::Kind;
using generative::Variant;
using json = nlohmann::json;

Dataset prepare_dataset(const RunConfig& config, std::uint64_t seed) {
  data::Series series;
  if (config.data.source == "csv") {
    series = data::load_csv(config.data.csv, data::CsvSchema{config.data.timestamp_column});
  } else {
    series = data::generate_synthetic(config.data.synthetic, seed).series;
  }
  data::SplitSpec spec;
  spec.ratios = config.data.ratios;
  spec.history = config.data.history;
  spec.horizon = config.data.horizon;
  Dataset ds;
  ds.splits = data::split_and_normalize(series, spec);
  if (config.data.level_shift != 0.0) data::apply_level_shift(ds.splits.test, config.data.level_shift);
  const auto th = config.data.history, tf = config.data.horizon;
  ds.train = data::make_windows(ds.splits.train, th, tf, data::WindowMode::kTraining);
  ds.val = data::make_windows(ds.splits.val, th, tf, data::WindowMode::kTraining);
  ds.test = data::make_windows(ds.splits.test, th, tf, data::WindowMode::kEvaluation);
  return ds;
}

std::string sha1_hex(const std::string& bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) {
    throw NumericError("sha1: digest computation failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string blob_sha1(const std::string& bytes) {
  std::string framed = "blob " + std::to_string(bytes.size());
  framed.push_back('\0');
  framed += bytes;
  return sha1_hex(framed);
}

std::string stage_config_hash(const RunConfig& config, const std::string& stage) {
  std::set<std::string> sections = {"data"};
  const auto pos = std::find(kStages.begin(), kStages.end(), stage);
  if (pos == kStages.end()) throw ContractViolation("unknown stage '" + stage + "'");
  const auto rank = pos - kStages.begin();
  if (rank >= 1) sections.insert("jmce");
  if (rank >= 2) sections.insert("gen");
  if (rank >= 3) sections.insert("eval");
  std::istringstream in(config::canonical(config));
  std::string keep;
  for (std::string line; std::getline(in, line);) {
    const std::string section = line.substr(0, line.find('.'));
    if (sections.count(section) || (rank >= 5 && line.rfind("run.seeds", 0) == 0)) keep += line + "\n";
  }
  return sha1_hex(keep);
}

std::uint64_t sampling_seed(std::uint64_t seed) { return seed ^ 0x73616d706c65ULL; }

fs::path seed_dir(const RunConfig& config, std::uint64_t seed) {
  return config.run.output / ("seed_" + std::to_string(seed));
}
fs::path jmce_path(const RunConfig& config, std::uint64_t seed) { return seed_dir(config, seed) / "jmce.ckpt"; }
fs::path model_path(const RunConfig& config, std::uint64_t seed, const std::string& id) {
  return seed_dir(config, seed) / ("gen_" + id + ".ckpt");
}

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw DataError("cannot write " + p.string());
  }
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// manifest.json: artifact path (relative to the output dir) -> provenance.
class Manifest {
 public:
  explicit Manifest(const RunConfig& config) : root_(config.run.output), path_(root_ / "manifest.json") {
    if (fs::exists(path_)) {
      try {
        doc_ = json::parse(read_bytes(path_));
      } catch (const json::exception& e) {
        throw DataError("corrupt manifest " + path_.string() + ": " + e.what());
      }
    }
    if (!doc_.is_object()) doc_ = json::object();
    if (!doc_.contains("artifacts")) doc_["artifacts"] = json::object();
    doc_["format"] = 1;
  }

  // Records a file that was just written.
  void record(const fs::path& file, const std::string& stage, std::uint64_t seed, const std::string& hash) {
    const std::string bytes = read_bytes(file);
    doc_["artifacts"][rel(file)] = {{"stage", stage},       {"seed", seed},
                                    {"config_hash", hash}, {"blob", blob_sha1(bytes)},
                                    {"bytes", bytes.size()}, {"written", now_utc()}};
    save();
  }

  void write(const fs::path& file, const std::string& bytes, const std::string& stage, std::uint64_t seed,
             const std::string& hash) {
    write_bytes(file, bytes);
    record(file, stage, seed, hash);
  }

  // Throws PrerequisiteError unless `file` was produced by `stage` under `hash` and is unchanged.
  void require(const fs::path& file, const std::string& stage, const std::string& hash) const {
    const std::string key = rel(file);
    const auto& arts = doc_["artifacts"];
    if (!fs::exists(file) || !arts.contains(key)) {
      throw PrerequisiteError("missing " + file.string() + "; run `cwgen " + stage + "` first");
    }
    const auto& e = arts[key];
    if (e.value("config_hash", "") != hash) {
      throw PrerequisiteError(file.string() + " was produced under a different configuration; rerun `cwgen " +
                              stage + "`");
    }
    if (e.value("blob", "") != blob_sha1(read_bytes(file))) {
      throw PrerequisiteError(file.string() + " does not match its manifest checksum; rerun `cwgen " + stage + "`");
    }
  }

 private:
  std::string rel(const fs::path& file) const { return fs::relative(file, root_).generic_string(); }
  void save() const { write_bytes(path_, doc_.dump(2) + "\n"); }

  fs::path root_;
  fs::path path_;
  json doc_;
};

std::vector<std::uint64_t> seeds_of(const RunConfig& c, const Selection& sel) {
  return sel.seeds.empty() ? c.run.seeds : sel.seeds;
}

struct ModelSpec {
  Kind kind;
  Variant variant;
  std::string id() const { return generative::to_string(kind) + "_" + generative::to_string(variant); }
};

std::vector<ModelSpec> models_of(const RunConfig& c, const Selection& sel) {
  const auto& ks = sel.kinds.empty() ? c.kinds : sel.kinds;
  const auto& vs = sel.variants.empty() ? c.variants : sel.variants;
  std::vector<ModelSpec> out;
  for (Kind k : ks)
    for (Variant v : vs) out.push_back({k, v});
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const char* kSplitNames[3] = {"train", "val", "test"};

Dataset load_dataset(const RunConfig& c, std::uint64_t seed, const Manifest& manifest) {
  const std::string hash = stage_config_hash(c, "gen-data");
  const fs::path dir = seed_dir(c, seed) / "data";
  std::vector<data::Series> parts;
  for (const char* name : kSplitNames) {
    const fs::path p = dir / (std::string(name) + ".csv");
    manifest.require(p, "gen-data", hash);
    parts.push_back(data::load_csv(p));
  }
  Dataset ds;
  ds.splits = {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
  const auto th = c.data.history, tf = c.data.horizon;
  ds.train = data::make_windows(ds.splits.train, th, tf, data::WindowMode::kTraining);
  ds.val = data::make_windows(ds.splits.val, th, tf, data::WindowMode::kTraining);
  ds.test = data::make_windows(ds.splits.test, th, tf, data::WindowMode::kEvaluation);
  return ds;
}

jmce::JmceModel load_jmce(const RunConfig& c, std::uint64_t seed, const Manifest& manifest) {
  const fs::path p = jmce_path(c, seed);
  manifest.require(p, "train-jmce", stage_config_hash(c, "train-jmce"));
  return jmce::JmceModel::load(p);
}

double min_eigenvalue_over(const jmce::JmceModel& model, const std::vector<data::TimeSeriesWindow>& windows) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& o : model.predict(windows))
    for (std::size_t t = 0; t < o.horizon(); ++t) m = std::min(m, linalg::min_eigenvalue(o.covariance(t)));
  return m;
}

std::map<std::string, double> read_summary(const fs::path& p) {
  std::ifstream in(p);
  std::map<std::string, double> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    out[line.substr(0, tab)] = std::stod(line.substr(tab + 1));
  }
  return out;
}

}  // namespace

void gen_data(const RunConfig& c, const Selection& sel, std::ostream& log) {
  Manifest manifest(c);
  const std::string hash = stage_config_hash(c, "gen-data");
  for (std::uint64_t seed : seeds_of(c, sel)) {
    const Dataset ds = prepare_dataset(c, seed);
    const fs::path dir = seed_dir(c, seed) / "data";
    fs::create_directories(dir);
    const data::Series* parts[3] = {&ds.splits.train, &ds.splits.val, &ds.splits.test};
    for (int i = 0; i < 3; ++i) {
      const fs::path p = dir / (std::string(kSplitNames[i]) + ".csv");
      data::write_csv(p, *parts[i]);
      manifest.record(p, "gen-data", seed, hash);
    }
    std::string stats = "variable\tmean\tstd\n";
    for (std::size_t i = 0; i < ds.dim(); ++i) {
      const auto& s = ds.splits.train;
      stats += (i < s.names.size() ? s.names[i] : "x" + std::to_string(i)) + "\t" + num(s.mean[i]) + "\t" +
               num(s.std[i]) + "\n";
    }
    manifest.write(dir / "stats.tsv", stats, "gen-data", seed, hash);
    log << "[gen-data] seed " << seed << ": " << ds.train.size() << " train / " << ds.val.size() << " val / "
        << ds.test.size() << " test windows\n";
  }
}

void train_jmce(const RunConfig& c, const Selection& sel, std::ostream& log) {
  Manifest manifest(c);
  const std::string hash = stage_config_hash(c, "train-jmce");
  for (std::uint64_t seed : seeds_of(c, sel)) {
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset ds = load_dataset(c, seed, manifest);
    const auto r = jmce::train_jmce(ds.train, ds.val, config::jmce_config(c, ds.dim(), seed));
    const fs::path p = jmce_path(c, seed);
    r.model.save(p);
    manifest.record(p, "train-jmce", seed, hash);

    std::string tsv = "epoch\ttrain_total\tval_l2\tval_l_f\tval_l_svd\tval_eigen_penalty\tval_total\n";
    for (const auto& e : r.epochs) {
      tsv += std::to_string(e.epoch) + "\t" + num(e.train_total) + "\t" + num(e.val.l2) + "\t" + num(e.val.l_f) +
             "\t" + num(e.val.l_svd) + "\t" + num(e.val.eigen_penalty) + "\t" + num(e.val.total) + "\n";
    }
    manifest.write(seed_dir(c, seed) / "jmce_log.tsv", tsv, "train-jmce", seed, hash);

    const double min_eig = min_eigenvalue_over(r.model, ds.val);
    std::string summary = "key\tvalue\n";
    summary += "best_epoch\t" + std::to_string(r.best_epoch) + "\n";
    summary += "aborted\t" + std::to_string(r.aborted ? 1 : 0) + "\n";
    summary += "min_val_eigenvalue\t" + num(min_eig) + "\n";
    manifest.write(seed_dir(c, seed) / "jmce_summary.tsv", summary, "train-jmce", seed, hash);
    log << "[train-jmce] seed " << seed << ": best epoch " << r.best_epoch << ", min validation eigenvalue "
        << num(min_eig) << " (" << std::fixed << std::setprecision(1) << seconds_since(t0) << " s)\n"
        << std::defaultfloat;
    if (r.aborted) log << "[train-jmce] seed " << seed << ": stopped early: " << r.abort_reason << "\n";
  }
}

void train_gen(const RunConfig& c, const Selection& sel, std::ostream& log) {
  Manifest manifest(c);
  const std::string hash = stage_config_hash(c, "train-gen");
  for (std::uint64_t seed : seeds_of(c, sel)) {
    const Dataset ds = load_dataset(c, seed, manifest);
    std::unique_ptr<jmce::JmceModel> jm;
    for (const auto& m : models_of(c, sel)) {
      const auto t0 = std::chrono::steady_clock::now();
      if (m.variant == Variant::kCw && !jm) jm = std::make_unique<jmce::JmceModel>(load_jmce(c, seed, manifest));
      std::unique_ptr<generative::JmcePrior> prior;
      if (jm) prior = std::make_unique<generative::JmcePrior>(*jm);
      const auto gc = config::gen_config(c, ds.dim(), m.kind, m.variant, seed);
      const auto r = generative::train_generative(ds.train, ds.val, gc,
                                                  m.variant == Variant::kCw ? prior.get() : nullptr);
      const fs::path p = model_path(c, seed, m.id());
      r.model.save(p);
      manifest.record(p, "train-gen", seed, hash);
      std::string tsv = "epoch\tval_loss\n";
      for (std::size_t e = 0; e < r.val_losses.size(); ++e) tsv += std::to_string(e) + "\t" + num(r.val_losses[e]) + "\n";
      manifest.write(seed_dir(c, seed) / ("gen_" + m.id() + "_log.tsv"), tsv, "train-gen", seed, hash);
      log << "[train-gen] seed " << seed << " " << m.id() << ": best epoch " << r.best_epoch << ", val loss "
          << num(r.val_losses[r.best_epoch]) << " (" << std::fixed << std::setprecision(1) << seconds_since(t0)
          << " s)\n"
          << std::defaultfloat;
      if (r.aborted) log << "[train-gen] seed " << seed << " " << m.id() << ": stopped early: " << r.abort_reason << "\n";
    }
  }
}

void sample(const RunConfig& c, const Selection& sel, std::ostream& log) {
  Manifest manifest(c);
  const std::string gen_hash = stage_config_hash(c, "train-gen");
  const std::string hash = stage_config_hash(c, "sample");
  for (std::uint64_t seed : seeds_of(c, sel)) {
    const Dataset ds = load_dataset(c, seed, manifest);
    std::unique_ptr<jmce::JmceModel> jm;
    for (const auto& m : models_of(c, sel)) {
      const auto t0 = std::chrono::steady_clock::now();
      const fs::path mp = model_path(c, seed, m.id());
      manifest.require(mp, "train-gen", gen_hash);
      const auto model = generative::GenModel::load(mp);
      if (m.variant == Variant::kCw && !jm) jm = std::make_unique<jmce::JmceModel>(load_jmce(c, seed, manifest));
      std::unique_ptr<generative::JmcePrior> prior;
      if (m.variant == Variant::kCw) prior = std::make_unique<generative::JmcePrior>(*jm);
      const auto ens = generative::sample(model, ds.test, prior.get(), c.eval.members, sampling_seed(seed));

      std::vector<nn::NamedTensor> tensors;
      const std::size_t n = c.data.horizon * ds.dim();
      for (const auto& e : ens) {
        nn::Tensor t = nn::Tensor::matrix(e.size(), n);
        for (std::size_t j = 0; j < e.size(); ++j) {
          const auto flat = data::to_time_major(e.members[j]);
          std::copy(flat.begin(), flat.end(), t.data().begin() + static_cast<long>(j * n));
        }
        tensors.push_back({"window." + std::to_string(e.window), std::move(t)});
      }
      const fs::path p = seed_dir(c, seed) / ("samples_" + m.id() + ".ckpt");
      manifest.write(p, nn::encode_checkpoint(tensors), "sample", seed, hash);
      log << "[sample] seed " << seed << " " << m.id() << ": " << ens.size() << " windows x " << c.eval.members
          << " members (" << std::fixed << std::setprecision(1) << seconds_since(t0) << " s)\n"
          << std::defaultfloat;
    }
  }
}

void evaluate(const RunConfig& c, const Selection& sel, std::ostream& log) {
  Manifest manifest(c);
  const std::string hash = stage_config_hash(c, "evaluate");
  const std::string sample_hash = stage_config_hash(c, "sample");
  for (std::uint64_t seed : seeds_of(c, sel)) {
    const Dataset ds = load_dataset(c, seed, manifest);
    const std::size_t d = ds.dim(), tf = c.data.horizon;
    if (c.eval.plot_window >= ds.test.size()) {
      throw ConfigError("eval.plot_window = " + std::to_string(c.eval.plot_window) + " but the test split has " +
                        std::to_string(ds.test.size()) + " windows");
    }
    for (const auto& m : models_of(c, sel)) {
      const fs::path sp = seed_dir(c, seed) / ("samples_" + m.id() + ".ckpt");
      manifest.require(sp, "sample", sample_hash);
      const auto tensors = nn::read_checkpoint(sp);

      std::vector<std::vector<linalg::Matrix>> ensembles;
      std::vector<linalg::Matrix> truths;
      std::string scores = "window\tCRPS\tQICE\tProbCorr\tProbCorr_steps\tProbMSE\tProbMAE\n";
      std::map<std::string, double> sums;
      std::size_t corr_windows = 0;
      for (std::size_t w = 0; w < ds.test.size(); ++w) {
        const nn::NamedTensor* t = nn::find_tensor(tensors, "window." + std::to_string(w));
        if (t == nullptr || t->tensor.cols() != d * tf) {
          throw DataError(sp.string() + ": missing or malformed samples for window " + std::to_string(w));
        }
        std::vector<linalg::Matrix> members;
        for (std::size_t j = 0; j < t->tensor.rows(); ++j)
          members.push_back(data::from_time_major(t->tensor.data().subspan(j * d * tf, d * tf), d, tf));
        const auto& truth = ds.test[w].future;
        const auto s = metrics::score_window(members, truth, c.eval.corr_window, c.eval.qice_bins);
        scores += std::to_string(w) + "\t" + num(s.crps) + "\t" + num(s.qice) + "\t" + num(s.prob_corr.value) + "\t" +
                  std::to_string(s.prob_corr.used) + "\t" + num(s.prob_mse) + "\t" + num(s.prob_mae) + "\n";
        sums["CRPS"] += s.crps;
        sums["QICE"] += s.qice;
        sums["ProbMSE"] += s.prob_mse;
        sums["ProbMAE"] += s.prob_mae;
        if (s.prob_corr.used > 0) {
          sums["ProbCorr"] += s.prob_corr.value;
          ++corr_windows;
        }
        if (w == c.eval.plot_window) {
          const auto mean = metrics::ensemble_mean(members), sd = metrics::ensemble_std(members);
          std::string plot = "dim\tstep\ttruth\tmean\tlower\tupper\tsample\n";
          for (std::size_t i = 0; i < d; ++i)
            for (std::size_t k = 0; k < tf; ++k)
              plot += std::to_string(i) + "\t" + std::to_string(k) + "\t" + num(truth(i, k)) + "\t" + num(mean(i, k)) +
                      "\t" + num(mean(i, k) - sd(i, k)) + "\t" + num(mean(i, k) + sd(i, k)) + "\t" +
                      num(members.front()(i, k)) + "\n";
          manifest.write(seed_dir(c, seed) / ("plot_" + m.id() + ".tsv"), plot, "evaluate", seed, hash);
        }
        ensembles.push_back(std::move(members));
        truths.push_back(truth);
      }
      manifest.write(seed_dir(c, seed) / ("scores_" + m.id() + ".tsv"), scores, "evaluate", seed, hash);

      const double nw = static_cast<double>(ds.test.size());
      std::map<std::string, double> summary = {
          {"CRPS", sums["CRPS"] / nw},       {"QICE", sums["QICE"] / nw},
          {"ProbMSE", sums["ProbMSE"] / nw}, {"ProbMAE", sums["ProbMAE"] / nw},
          {"ProbCorr", corr_windows ? sums["ProbCorr"] / static_cast<double>(corr_windows)
                                    : std::numeric_limits<double>::quiet_NaN()}};
      std::string fid_note;
      if (ds.test.size() >= 2) {
        const auto fid = metrics::cond_fid(ensembles, truths);
        summary["CondFID"] = fid.value;
        if (fid.jittered) fid_note = " (CondFID jittered)";
      } else {
        summary["CondFID"] = std::numeric_limits<double>::quiet_NaN();
      }
      std::string text = "metric\tvalue\n";
      for (const auto& name : kMetricNames) text += name + "\t" + num(summary[name]) + "\n";
      manifest.write(seed_dir(c, seed) / ("summary_" + m.id() + ".tsv"), text, "evaluate", seed, hash);
      log << "[evaluate] seed " << seed << " " << m.id() << ": CRPS " << num(summary["CRPS"]) << ", ProbCorr "
          << num(summary["ProbCorr"]) << ", ProbMSE " << num(summary["ProbMSE"]) << fid_note << "\n";
    }
  }
}

Report report(const RunConfig& c, std::ostream& log) {
  Manifest manifest(c);
  const std::string eval_hash = stage_config_hash(c, "evaluate");
  const std::string hash = stage_config_hash(c, "report");
  const auto models = models_of(c, {});
  Report rep;
  for (std::uint64_t seed : c.run.seeds) {
    for (const auto& m : models) {
      const fs::path p = seed_dir(c, seed) / ("summary_" + m.id() + ".tsv");
      manifest.require(p, "evaluate", eval_hash);
      rep.per_seed.push_back({seed, generative::to_string(m.kind), generative::to_string(m.variant), read_summary(p)});
    }
  }

  for (const auto& m : models) {
    for (const auto& metric : kMetricNames) {
      std::vector<double> xs;
      for (const auto& s : rep.per_seed)
        if (s.model == generative::to_string(m.kind) && s.variant == generative::to_string(m.variant) &&
            std::isfinite(s.values.at(metric)))
          xs.push_back(s.values.at(metric));
      metrics::MetricRow row{metric, generative::to_string(m.kind), generative::to_string(m.variant), {}};
      if (!xs.empty()) row.summary = metrics::summarize(xs);
      rep.rows.push_back(row);
    }
  }

  const bool paired = std::find(c.variants.begin(), c.variants.end(), Variant::kRaw) != c.variants.end() &&
                      std::find(c.variants.begin(), c.variants.end(), Variant::kCw) != c.variants.end();
  if (paired) {
    for (const auto& cmp : metrics::pair_rows(rep.rows)) {
      auto& w = rep.table_win[cmp.metric];
      ++w.total;
      if (cmp.cw < cmp.raw) ++w.wins;
    }
    for (std::uint64_t seed : c.run.seeds) {
      for (Kind k : c.kinds) {
        const SeedValue *raw = nullptr, *cw = nullptr;
        for (const auto& s : rep.per_seed) {
          if (s.seed != seed || s.model != generative::to_string(k)) continue;
          (s.variant == "raw" ? raw : cw) = &s;
        }
        for (const char* metric : {"CRPS", "ProbCorr"}) {
          ++rep.seed_win.total;
          if (cw->values.at(metric) < raw->values.at(metric)) ++rep.seed_win.wins;
        }
      }
    }
  }

  std::string tsv = "metric\tmodel\tvariant\tmean\tstd\tn\n";
  for (const auto& r : rep.rows)
    tsv += r.metric + "\t" + r.model + "\t" + r.variant + "\t" + num(r.summary.mean) + "\t" + num(r.summary.std) +
           "\t" + std::to_string(r.summary.n) + "\n";
  manifest.write(c.run.output / "metrics.tsv", tsv, "report", 0, hash);

  std::string ps = "seed\tmodel\tvariant";
  for (const auto& name : kMetricNames) ps += "\t" + name;
  ps += "\n";
  for (const auto& s : rep.per_seed) {
    ps += std::to_string(s.seed) + "\t" + s.model + "\t" + s.variant;
    for (const auto& name : kMetricNames) ps += "\t" + num(s.values.at(name));
    ps += "\n";
  }
  manifest.write(c.run.output / "per_seed.tsv", ps, "report", 0, hash);

  // Text table: one row per (model, variant), "mean (std)" cells, '*' on the better of a Raw/CW pair.
  auto cell_of = [&](const std::string& model, const std::string& variant, const std::string& metric) {
    for (const auto& r : rep.rows)
      if (r.model == model && r.variant == variant && r.metric == metric) return &r;
    return static_cast<const metrics::MetricRow*>(nullptr);
  };
  std::ostringstream os;
  os << "Metrics over " << c.run.seeds.size() << " seeds, " << c.eval.members
     << " samples per test window; mean (std) across seeds, lower is better, * marks the better of Raw and CW.\n\n";
  os << std::left << std::setw(8) << "model" << std::setw(9) << "variant";
  for (const auto& name : kMetricNames) os << std::setw(20) << name;
  os << "\n";
  for (const auto& m : models) {
    const std::string model = generative::to_string(m.kind), variant = generative::to_string(m.variant);
    os << std::setw(8) << model << std::setw(9) << (m.variant == Variant::kCw ? "CW" : "Raw");
    for (const auto& name : kMetricNames) {
      const auto* r = cell_of(model, variant, name);
      const auto* other = cell_of(model, m.variant == Variant::kCw ? "raw" : "cw", name);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f (%.4f)%s", r->summary.mean, r->summary.std,
                    other && r->summary.mean < other->summary.mean ? "*" : "");
      os << std::setw(20) << buf;
    }
    os << "\n";
  }
  if (paired) {
    os << std::setw(17) << "CW win rate";
    for (const auto& name : kMetricNames) {
      const auto& w = rep.table_win[name];
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f%% (%zu/%zu)", 100.0 * w.rate(), w.wins, w.total);
      os << std::setw(20) << buf;
    }
    os << "\n\nSeed-level CW win rate on CRPS and ProbCorr: " << rep.seed_win.wins << "/" << rep.seed_win.total;
    char buf[32];
    std::snprintf(buf, sizeof buf, " (%.2f%%)\n", 100.0 * rep.seed_win.rate());
    os << buf;
  }
  rep.text = os.str();
  manifest.write(c.run.output / "report.txt", rep.text, "report", 0, hash);
  log << rep.text;
  return rep;
}

Report run_all(const RunConfig& c, std::ostream& log) {
  gen_data(c, {}, log);
  if (std::find(c.variants.begin(), c.variants.end(), Variant::kCw) != c.variants.end()) train_jmce(c, {}, log);
  train_gen(c, {}, log);
  sample(c, {}, log);
  evaluate(c, {}, log);
  return report(c, log);
}

}  // namespace cwgen::pipeline
