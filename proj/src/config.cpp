#include "cwgen/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cwgen/errors.hpp"

namespace cwgen::config {
namespace {

using generative::Kind;
using generative::Variant;

struct BadValue {
  std::string what;
};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto p = s.find(',');
    out.push_back(trim(s.substr(0, p)));
    if (p == std::string_view::npos) break;
    s.remove_prefix(p + 1);
  }
  return out;
}

std::size_t to_size(std::string_view s) {
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) throw BadValue{"expected a non-negative integer"};
  return v;
}

std::uint64_t to_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) throw BadValue{"expected a non-negative integer"};
  return v;
}

double to_double(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || s.empty() || !std::isfinite(v))
    throw BadValue{"expected a finite number"};
  return v;
}

bool to_bool(std::string_view s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw BadValue{"expected true or false"};
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + f(xs[i]);
  return s;
}

std::vector<std::uint64_t> to_seeds(std::string_view s) {
  std::vector<std::uint64_t> out;
  for (auto item : split_list(s)) {
    const auto dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(to_u64(item));
      continue;
    }
    const auto a = to_u64(trim(item.substr(0, dash))), b = to_u64(trim(item.substr(dash + 1)));
    if (b < a) throw BadValue{"descending seed range"};
    for (auto v = a; v <= b; ++v) out.push_back(v);
  }
  return out;
}

std::string weighting_name(diffusion::Weighting w) {
  return w == diffusion::Weighting::kSigmaSquared ? "sigma2" : "unweighted";
}

struct Field {
  const char* section;
  const char* key;
  const char* doc;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CW_SIZE(sec, name, member, doc) \
  Field{sec, name, doc, [](RunConfig& c, std::string_view v) { c.member = to_size(v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define CW_REAL(sec, name, member, doc) \
  Field{sec, name, doc, [](RunConfig& c, std::string_view v) { c.member = to_double(v); }, \
        [](const RunConfig& c) { return fmt(c.member); }}
#define CW_BOOL(sec, name, member, doc) \
  Field{sec, name, doc, [](RunConfig& c, std::string_view v) { c.member = to_bool(v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"data", "source", "synthetic or csv",
            [](RunConfig& c, std::string_view v) {
              if (v != "synthetic" && v != "csv") throw BadValue{"expected synthetic or csv"};
              c.data.source = std::string(v);
            },
            [](const RunConfig& c) { return c.data.source; }},
      Field{"data", "csv", "CSV path (rows are time steps, header row), relative to the working directory",
            [](RunConfig& c, std::string_view v) { c.data.csv = std::string(v); },
            [](const RunConfig& c) { return c.data.csv.string(); }},
      CW_BOOL("data", "timestamp_column", data.timestamp_column, "ignore the first CSV column"),
      CW_SIZE("data", "dim", data.synthetic.dim, "synthetic: number of variables"),
      CW_SIZE("data", "length", data.synthetic.length, "synthetic: series length"),
      CW_REAL("data", "trend_slope", data.synthetic.trend_slope, "synthetic: linear trend per step"),
      CW_REAL("data", "season_amplitude", data.synthetic.season_amplitude, "synthetic: seasonal amplitude"),
      CW_SIZE("data", "season_period", data.synthetic.season_period, "synthetic: seasonal period"),
      Field{"data", "var_coeff", "synthetic: VAR(1) diagonal, one value or one per variable",
            [](RunConfig& c, std::string_view v) {
              std::vector<double> xs;
              for (auto item : split_list(v)) xs.push_back(to_double(item));
              c.data.synthetic.var_coeff = xs;
            },
            [](const RunConfig& c) { return join(c.data.synthetic.var_coeff, fmt); }},
      CW_REAL("data", "noise_scale", data.synthetic.noise_scale, "synthetic: base innovation scale"),
      CW_REAL("data", "vol_amplitude", data.synthetic.vol_amplitude, "synthetic: relative amplitude of the volatility cycle, in [0, 1)"),
      CW_SIZE("data", "vol_period", data.synthetic.vol_period, "synthetic: volatility cycle period"),
      CW_REAL("data", "correlation", data.synthetic.correlation, "synthetic: innovation equicorrelation"),
      Field{"data", "ratios", "train:val:test split ratios",
            [](RunConfig& c, std::string_view v) {
              auto items = split_list(v);
              if (items.size() != 3) throw BadValue{"expected three comma-separated ratios"};
              for (std::size_t i = 0; i < 3; ++i) c.data.ratios[i] = to_double(items[i]);
            },
            [](const RunConfig& c) {
              return fmt(c.data.ratios[0]) + "," + fmt(c.data.ratios[1]) + "," + fmt(c.data.ratios[2]);
            }},
      CW_SIZE("data", "history", data.history, "T_h, conditioning length"),
      CW_SIZE("data", "horizon", data.horizon, "T_f, forecast length"),
      CW_REAL("data", "level_shift", data.level_shift, "additive shift of the normalized test split"),

      CW_SIZE("jmce", "window", jmce.window, "sliding-window width w for covariance targets (odd)"),
      CW_REAL("jmce", "lambda_min", jmce.lambda_min, "eigenvalue floor of the penalty"),
      CW_REAL("jmce", "w_eigen", jmce.w_eigen, "weight of the eigenvalue penalty"),
      CW_SIZE("jmce", "hidden", jmce.hidden, "recurrent encoder width"),
      CW_SIZE("jmce", "projection", jmce.projection, "per-variable projection width"),
      CW_SIZE("jmce", "width", jmce.width, "head width"),
      CW_REAL("jmce", "diag_init", jmce.diag_init, "initial output bias of the diagonal of L"),
      CW_BOOL("jmce", "skip_factors", jmce.skip_factors, "feed the linear history skip into the factor outputs too"),
      CW_SIZE("jmce", "epochs", jmce.epochs, "training epochs"),
      CW_SIZE("jmce", "batch", jmce.batch, "batch size"),
      CW_REAL("jmce", "lr", jmce.lr, "Adam learning rate"),
      CW_REAL("jmce", "final_lr_ratio", jmce.final_lr_ratio, "cosine decay target as a fraction of lr"),

      Field{"gen", "kinds", "comma list of diff, flow",
            [](RunConfig& c, std::string_view v) {
              std::vector<Kind> ks;
              for (auto item : split_list(v)) {
                try {
                  ks.push_back(generative::parse_kind(item));
                } catch (const ContractViolation&) {
                  throw BadValue{"unknown model kind '" + std::string(item) + "'"};
                }
              }
              c.kinds = ks;
            },
            [](const RunConfig& c) { return join(c.kinds, [](Kind k) { return generative::to_string(k); }); }},
      Field{"gen", "variants", "comma list of raw, cw",
            [](RunConfig& c, std::string_view v) {
              std::vector<Variant> vs;
              for (auto item : split_list(v)) {
                try {
                  vs.push_back(generative::parse_variant(item));
                } catch (const ContractViolation&) {
                  throw BadValue{"unknown variant '" + std::string(item) + "'"};
                }
              }
              c.variants = vs;
            },
            [](const RunConfig& c) {
              return join(c.variants, [](Variant v) { return generative::to_string(v); });
            }},
      CW_SIZE("gen", "hidden", gen.hidden, "recurrent encoder width"),
      CW_SIZE("gen", "projection", gen.projection, "per-variable projection width"),
      CW_SIZE("gen", "width", gen.width, "head width"),
      CW_SIZE("gen", "epochs", gen.epochs, "training epochs"),
      CW_SIZE("gen", "batch", gen.batch, "batch size"),
      CW_REAL("gen", "lr", gen.lr, "Adam learning rate"),
      CW_REAL("gen", "beta0", gen.schedule.beta0, "VP schedule beta at tau = 0"),
      CW_REAL("gen", "beta1", gen.schedule.beta1, "VP schedule beta at tau = 1"),
      Field{"gen", "n_steps", "sampler steps (diffusion and flow)",
            [](RunConfig& c, std::string_view v) { c.gen.schedule.n_steps = c.gen.flow.n_steps = to_size(v); },
            [](const RunConfig& c) { return std::to_string(c.gen.schedule.n_steps); }},
      Field{"gen", "tau_min", "early stopping time (diffusion and flow)",
            [](RunConfig& c, std::string_view v) { c.gen.schedule.tau_min = c.gen.flow.tau_min = to_double(v); },
            [](const RunConfig& c) { return fmt(c.gen.schedule.tau_min); }},
      Field{"gen", "weighting", "diffusion loss weighting: sigma2 (noise-prediction MSE) or unweighted (score MSE)",
            [](RunConfig& c, std::string_view v) {
              if (v == "sigma2") c.gen.weighting = diffusion::Weighting::kSigmaSquared;
              else if (v == "unweighted") c.gen.weighting = diffusion::Weighting::kUnweighted;
              else throw BadValue{"expected sigma2 or unweighted"};
            },
            [](const RunConfig& c) { return weighting_name(c.gen.weighting); }},

      CW_SIZE("eval", "members", eval.members, "samples per test window"),
      CW_SIZE("eval", "qice_bins", eval.qice_bins, "QICE intervals; must divide members"),
      CW_SIZE("eval", "corr_window", eval.corr_window, "sliding window for the ProbCorr target correlation (odd)"),
      CW_SIZE("eval", "plot_window", eval.plot_window, "test window exported as plot data"),

      Field{"run", "seeds", "comma list of seeds or ranges such as 0-9",
            [](RunConfig& c, std::string_view v) { c.run.seeds = to_seeds(v); },
            [](const RunConfig& c) { return join(c.run.seeds, [](std::uint64_t s) { return std::to_string(s); }); }},
      Field{"run", "output", "output directory",
            [](RunConfig& c, std::string_view v) { c.run.output = std::string(v); },
            [](const RunConfig& c) { return c.run.output.string(); }},
  };
  return table;
}

#undef CW_SIZE
#undef CW_REAL
#undef CW_BOOL

const Field* find(std::string_view section, std::string_view key) {
  for (const auto& f : fields())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

void assign(RunConfig& c, std::string_view section, std::string_view key, std::string_view value,
            const std::string& where, std::vector<std::string>& errors) {
  const Field* f = find(section, key);
  if (!f) {
    errors.push_back(where + ": unknown key " + std::string(section) + "." + std::string(key));
    return;
  }
  try {
    f->set(c, value);
  } catch (const BadValue& e) {
    errors.push_back(where + ": " + std::string(section) + "." + std::string(key) + " = '" + std::string(value) +
                     "': " + e.what);
  }
}

[[noreturn]] void fail(const std::vector<std::string>& errors) {
  std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                    (errors.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

bool odd_window(std::size_t w) { return w >= 3 && w % 2 == 1; }

void apply_overrides_into(RunConfig& c, const std::vector<std::string>& overrides, std::vector<std::string>& errors) {
  for (const auto& o : overrides) {
    const std::string where = "--set " + o;
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      errors.push_back(where + ": expected section.key=value");
      continue;
    }
    const std::string_view sv(o);
    assign(c, trim(sv.substr(0, dot)), trim(sv.substr(dot + 1, eq - dot - 1)), trim(sv.substr(eq + 1)), where,
           errors);
  }
}

}  // namespace

RunConfig defaults() { return RunConfig{}; }

std::vector<std::string> check(const RunConfig& c) {
  std::vector<std::string> e;
  const auto& d = c.data;
  if (d.source == "csv" && d.csv.empty()) e.push_back("data.csv must be set when data.source = csv");
  for (double r : d.ratios)
    if (!(r > 0.0)) e.push_back("data.ratios must be positive");
  if (d.history == 0) e.push_back("data.history must be positive");
  if (d.horizon == 0) e.push_back("data.horizon must be positive");
  if (d.source == "synthetic") {
    const auto& s = d.synthetic;
    if (s.dim < 2) e.push_back("data.dim must be at least 2 (cross-dimensional metrics)");
    if (s.var_coeff.size() != 1 && s.var_coeff.size() != s.dim)
      e.push_back("data.var_coeff needs one value or one per variable");
    for (double a : s.var_coeff)
      if (!(std::abs(a) < 1.0)) e.push_back("data.var_coeff entries must lie in (-1, 1)");
    if (!(s.vol_amplitude >= 0.0 && s.vol_amplitude < 1.0)) e.push_back("data.vol_amplitude must lie in [0, 1)");
    if (!(s.noise_scale > 0.0)) e.push_back("data.noise_scale must be positive");
    if (s.dim >= 2 && !(s.correlation < 1.0 && s.correlation > -1.0 / static_cast<double>(s.dim - 1)))
      e.push_back("data.correlation must lie in (-1/(dim-1), 1)");
    if (s.season_period == 0 || s.vol_period == 0) e.push_back("data periods must be positive");
    if (s.length < 5 * (d.history + d.horizon)) e.push_back("data.length is too short for the windows and splits");
  }

  const auto& j = c.jmce;
  if (!odd_window(j.window)) e.push_back("jmce.window must be odd and at least 3");
  if (!(j.lambda_min > 0.0)) e.push_back("jmce.lambda_min must be positive");
  if (!(j.w_eigen >= 0.0)) e.push_back("jmce.w_eigen must be non-negative");
  if (j.hidden == 0 || j.projection == 0 || j.width == 0) e.push_back("jmce widths must be positive");
  if (j.batch == 0) e.push_back("jmce.batch must be positive");
  if (!(j.lr > 0.0)) e.push_back("jmce.lr must be positive");
  if (!(j.final_lr_ratio > 0.0 && j.final_lr_ratio <= 1.0)) e.push_back("jmce.final_lr_ratio must lie in (0, 1]");

  const auto& g = c.gen;
  if (c.kinds.empty()) e.push_back("gen.kinds is empty");
  if (c.variants.empty()) e.push_back("gen.variants is empty");
  if (g.hidden == 0 || g.projection == 0 || g.width == 0) e.push_back("gen widths must be positive");
  if (g.batch == 0) e.push_back("gen.batch must be positive");
  if (!(g.lr > 0.0)) e.push_back("gen.lr must be positive");
  try {
    g.schedule.validate();
  } catch (const ContractViolation& ex) {
    e.push_back(std::string("gen schedule: ") + ex.what());
  }

  const auto& v = c.eval;
  if (v.members < 2) e.push_back("eval.members must be at least 2");
  if (v.qice_bins == 0 || (v.members >= 2 && v.members % v.qice_bins != 0))
    e.push_back("eval.qice_bins must be positive and divide eval.members");
  if (!odd_window(v.corr_window)) e.push_back("eval.corr_window must be odd and at least 3");

  if (c.run.seeds.empty()) e.push_back("run.seeds is empty");
  std::set<std::uint64_t> seen(c.run.seeds.begin(), c.run.seeds.end());
  if (seen.size() != c.run.seeds.size()) e.push_back("run.seeds contains duplicates");
  if (c.run.output.empty()) e.push_back("run.output must be set");
  return e;
}

namespace {

void parse_into(RunConfig& c, std::string_view text, std::string_view origin, std::vector<std::string>& errors) {
  std::set<std::string> seen;
  std::string section;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const std::string where = std::string(origin) + ":" + std::to_string(lineno);
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back(where + ": malformed section header");
        continue;
      }
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section != "data" && section != "jmce" && section != "gen" && section != "eval" && section != "run")
        errors.push_back(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      errors.push_back(where + ": expected key = value");
      continue;
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (section.empty()) {
      errors.push_back(where + ": key '" + std::string(key) + "' outside a section");
      continue;
    }
    if (!seen.insert(section + "." + std::string(key)).second) {
      errors.push_back(where + ": duplicate key " + section + "." + std::string(key));
      continue;
    }
    assign(c, section, key, value, where, errors);
  }
}

RunConfig finish(RunConfig c, std::vector<std::string>& errors) {
  for (auto& e : check(c)) errors.push_back(std::move(e));
  if (!errors.empty()) fail(errors);
  return c;
}

}  // namespace

RunConfig parse(std::string_view text, std::string_view origin) {
  RunConfig c;
  std::vector<std::string> errors;
  parse_into(c, text, origin, errors);
  return finish(std::move(c), errors);
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  std::vector<std::string> errors;
  RunConfig c = config;
  apply_overrides_into(c, overrides, errors);
  config = finish(std::move(c), errors);
}

RunConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  RunConfig c;
  std::vector<std::string> errors;
  parse_into(c, ss.str(), path.string(), errors);
  apply_overrides_into(c, overrides, errors);
  return finish(std::move(c), errors);
}

std::string canonical(const RunConfig& config) {
  std::string s;
  for (const auto& f : fields()) s += std::string(f.section) + "." + f.key + " = " + f.get(config) + "\n";
  return s;
}

std::string reference_page() {
  const RunConfig d;
  std::string s =
      "# Configuration reference\n\n"
      "Files use `[section]` headers and `key = value` lines; `#` and `;` start comment lines.\n"
      "Any key can be overridden on the command line with `--set section.key=value`.\n"
      "Unknown keys, duplicates and invalid values are all reported together.\n";
  std::string current;
  for (const auto& f : fields()) {
    if (current != f.section) {
      current = f.section;
      s += "\n## [" + current + "]\n\n| key | default | meaning |\n|---|---|---|\n";
    }
    s += std::string("| `") + f.key + "` | `" + f.get(d) + "` | " + f.doc + " |\n";
  }
  return s;
}

jmce::JmceConfig jmce_config(const RunConfig& config, std::size_t dim, std::uint64_t seed) {
  jmce::JmceConfig j = config.jmce;
  j.dim = dim;
  j.history = config.data.history;
  j.horizon = config.data.horizon;
  j.seed = seed;
  return j;
}

generative::GenConfig gen_config(const RunConfig& config, std::size_t dim, generative::Kind kind,
                                 generative::Variant variant, std::uint64_t seed) {
  generative::GenConfig g = config.gen;
  g.kind = kind;
  g.variant = variant;
  g.dim = dim;
  g.history = config.data.history;
  g.horizon = config.data.horizon;
  g.seed = seed;
  return g;
}

}  // namespace cwgen::config
