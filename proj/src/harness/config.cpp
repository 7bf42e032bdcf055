#include "kalbucy/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "kalbucy/random.hpp"

namespace kalbucy::harness {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Typed access to one section; remembers which keys were read so leftovers
// can be reported as unknown.
class SectionReader {
 public:
  SectionReader(const RawConfig& raw, std::string section)
      : raw_(raw), section_(std::move(section)) {}

  [[nodiscard]] bool present() const { return raw_.has_section(section_); }

  std::optional<RawConfig::Entry> entry(const std::string& key) {
    used_.insert(key);
    const RawConfig::Entry* e = raw_.find(section_, key);
    if (e == nullptr) return std::nullopt;
    return *e;
  }

  std::string text(const std::string& key, const std::string& fallback) {
    auto e = entry(key);
    return e ? e->value : fallback;
  }

  std::string required_text(const std::string& key) {
    auto e = entry(key);
    if (!e) fail_missing(key);
    return e->value;
  }

  double real(const std::string& key, double fallback) {
    auto e = entry(key);
    return e ? to_real(*e, key) : fallback;
  }

  long long integer(const std::string& key, long long fallback) {
    auto e = entry(key);
    return e ? to_integer(*e, key) : fallback;
  }

  std::vector<double> reals(const std::string& key) {
    std::vector<double> out;
    auto e = entry(key);
    if (!e) return out;
    for (const std::string& item : split_list(e->value)) {
      out.push_back(to_real(RawConfig::Entry{item, e->line}, key));
    }
    return out;
  }

  std::vector<long long> integers(const std::string& key) {
    std::vector<long long> out;
    auto e = entry(key);
    if (!e) return out;
    for (const std::string& item : split_list(e->value)) {
      out.push_back(to_integer(RawConfig::Entry{item, e->line}, key));
    }
    return out;
  }

  std::vector<std::string> words(const std::string& key, const std::string& fallback) {
    auto e = entry(key);
    return split_list(e ? e->value : fallback);
  }

  [[nodiscard]] int line_of(const std::string& key) const {
    const RawConfig::Entry* e = raw_.find(section_, key);
    return e != nullptr ? e->line : raw_.section_line(section_);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& message) const {
    throw ConfigError("[" + section_ + "] " + key + ": " + message, line_of(key));
  }

  [[noreturn]] void fail_missing(const std::string& key) const {
    throw ConfigError("[" + section_ + "] missing required key '" + key + "'",
                      raw_.section_line(section_));
  }

  void reject_unknown() const {
    if (!present()) return;
    for (const auto& [key, e] : raw_.sections().at(section_)) {
      if (used_.count(key) == 0) {
        throw ConfigError("[" + section_ + "] unknown key '" + key + "'", e.line);
      }
    }
  }

 private:
  double to_real(const RawConfig::Entry& e, const std::string& key) const {
    double v = 0.0;
    const char* begin = e.value.data();
    const char* end = begin + e.value.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
      throw ConfigError("[" + section_ + "] " + key + ": '" + e.value + "' is not a number", e.line);
    }
    return v;
  }

  long long to_integer(const RawConfig::Entry& e, const std::string& key) const {
    long long v = 0;
    const char* begin = e.value.data();
    const char* end = begin + e.value.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
      throw ConfigError("[" + section_ + "] " + key + ": '" + e.value + "' is not an integer",
                        e.line);
    }
    return v;
  }

  const RawConfig& raw_;
  std::string section_;
  std::set<std::string> used_;
};

ExperimentKind parse_kind(const std::string& s, const SectionReader& r) {
  if (s == "variance_decay") return ExperimentKind::variance_decay;
  if (s == "mse_cost") return ExperimentKind::mse_cost;
  if (s == "nc_complexity") return ExperimentKind::nc_complexity;
  if (s == "param_est") return ExperimentKind::param_est;
  if (s == "single_run") return ExperimentKind::single_run;
  r.fail("kind", "unknown experiment kind '" + s + "'");
}

int checked_int(long long v, long long lo, long long hi, const std::string& key,
                const SectionReader& r) {
  if (v < lo || v > hi) {
    r.fail(key, "value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
  }
  return static_cast<int>(v);
}

void parse_model(SectionReader& r, ModelConfig& m) {
  const std::string kind = r.required_text("kind");
  m.aux_d = r.real("aux_d", 1.4);
  if (kind == "grid") {
    m.kind = ModelKind::grid;
    auto& g = m.grid;
    g.k = checked_int(r.integer("k", g.k), 1, 100, "k", r);
    g.interaction_radius = r.real("interaction_radius", g.interaction_radius);
    g.drift_scale = r.real("drift_scale", g.drift_scale);
    g.stabilizer = r.real("stabilizer", g.stabilizer);
    g.obs_scale = r.real("obs_scale", g.obs_scale);
    g.sigma_signal = r.real("sigma_signal", g.sigma_signal);
    g.sigma_obs = r.real("sigma_obs", g.sigma_obs);
    g.init_mean = r.real("init_mean", g.init_mean);
    g.init_var = r.real("init_var", g.init_var);
    g.aux_d = m.aux_d;
    if (!(g.interaction_radius > 0.0)) r.fail("interaction_radius", "must be positive");
  } else if (kind == "scalar") {
    m.kind = ModelKind::scalar;
    auto& s = m.scalar;
    s.a = r.real("a", s.a);
    s.c = r.real("c", s.c);
    s.sigma_signal = r.real("sigma_signal", s.sigma_signal);
    s.sigma_obs = r.real("sigma_obs", s.sigma_obs);
    s.init_mean = r.real("init_mean", s.init_mean);
    s.init_var = r.real("init_var", s.init_var);
  } else if (kind == "lorenz96") {
    m.kind = ModelKind::lorenz96;
    auto& l = m.lorenz96;
    l.dim_x = checked_int(r.integer("dim_x", l.dim_x), 4, 100000, "dim_x", r);
    l.sigma_signal = r.real("sigma_signal", l.sigma_signal);
    l.sigma_obs = r.real("sigma_obs", l.sigma_obs);
    l.base_state = r.real("base_state", l.base_state);
    l.first_perturbation = r.real("first_perturbation", l.first_perturbation);
    l.init_var = r.real("init_var", l.init_var);
  } else {
    r.fail("kind", "unknown model kind '" + kind + "' (expected grid, scalar or lorenz96)");
  }
  m.theta = r.reals("theta");
  if (m.kind == ModelKind::lorenz96 && m.theta.size() != 1) {
    r.fail("theta", "lorenz96 needs exactly one forcing value");
  }
  if (m.kind != ModelKind::lorenz96 && m.theta.size() > 1) {
    r.fail("theta", "linear models accept at most one diagonal scale");
  }
}

void parse_filter(SectionReader& r, FilterConfig& f) {
  f.variants.clear();
  for (const std::string& v : r.words("variants", "vanilla")) {
    try {
      f.variants.push_back(parse_variant(v));
    } catch (const std::invalid_argument&) {
      r.fail("variants", "unknown variant '" + v + "'");
    }
  }
  const std::string loc = r.text("localization", "off");
  if (loc == "off") {
    f.localization = LocalizationMode::off;
  } else if (loc == "on") {
    f.localization = LocalizationMode::on;
  } else if (loc == "both") {
    f.localization = LocalizationMode::both;
  } else {
    r.fail("localization", "expected off, on or both");
  }
  const std::string taper = r.text("taper", "gaspari_cohn");
  try {
    f.taper.kind = parse_taper_kind(taper);
  } catch (const std::invalid_argument&) {
    r.fail("taper", "unknown taper '" + taper + "'");
  }
  f.taper.radius = r.real("taper_radius", 3.0);
  if (!(f.taper.radius > 0.0)) r.fail("taper_radius", "must be positive");
  f.start_level = checked_int(r.integer("start_level", f.start_level), 0, 30, "start_level", r);
  f.level_min = checked_int(r.integer("level_min", f.level_min), 1, 30, "level_min", r);
  f.level_max = checked_int(r.integer("level_max", f.level_max), 1, 30, "level_max", r);
  if (f.level_max < f.level_min) r.fail("level_max", "must not be below level_min");
  f.level = checked_int(r.integer("level", f.level), 0, 30, "level", r);
  f.particles = checked_int(r.integer("particles", f.particles), 2, 100000000, "particles", r);
  f.epsilons = r.reals("epsilons");
  for (double e : f.epsilons) {
    if (!(e > 0.0 && e < 1.0)) r.fail("epsilons", "every epsilon must lie in (0, 1)");
  }
  f.target_level = checked_int(r.integer("target_level", -1), -1, 30, "target_level", r);
  for (long long n : r.integers("plan_particles")) {
    f.plan_particles.push_back(checked_int(n, 2, 100000000, "plan_particles", r));
  }
  f.reference_offset =
      checked_int(r.integer("reference_offset", f.reference_offset), 0, 20, "reference_offset", r);
  f.reference_particles = checked_int(r.integer("reference_particles", f.reference_particles), 2,
                                      100000000, "reference_particles", r);
}

void parse_run(SectionReader& r, RunConfig& run) {
  run.horizon = checked_int(r.integer("horizon", run.horizon), 1, 1000000, "horizon", r);
  run.repeats = checked_int(r.integer("repeats", run.repeats), 1, 100000000, "repeats", r);
  const long long seed = r.integer("seed", 1);
  if (seed < 0) r.fail("seed", "must be non-negative");
  run.seed = static_cast<std::uint64_t>(seed);
  run.output = r.text("output", run.output);
  run.workers = checked_int(r.integer("workers", run.workers), 1, 1024, "workers", r);
}

void parse_param(SectionReader& r, ParamConfig& p) {
  p.theta0 = r.reals("theta0");
  if (p.theta0.empty()) r.fail_missing("theta0");
  p.iterations = checked_int(r.integer("iterations", p.iterations), 1, 100000000, "iterations", r);
  p.schedules.a0 = r.real("a0", p.schedules.a0);
  p.schedules.alpha = r.real("alpha", p.schedules.alpha);
  p.schedules.b0 = r.real("b0", p.schedules.b0);
  p.schedules.gamma = r.real("gamma", p.schedules.gamma);
  try {
    p.schedules.validate();
  } catch (const std::invalid_argument& e) {
    r.fail("alpha", e.what());
  }
  p.seeds = checked_int(r.integer("seeds", p.seeds), 1, 1000000, "seeds", r);
  for (const std::string& m : r.words("methods", "F1")) {
    try {
      p.methods.push_back(parse_method(m));
    } catch (const std::invalid_argument&) {
      r.fail("methods", "unknown method '" + m + "'");
    }
  }
}

}  // namespace

ConfigError::ConfigError(const std::string& message, int line)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
      line_(line) {}

RawConfig RawConfig::parse(const std::string& text) {
  RawConfig cfg;
  std::istringstream in(text);
  std::string raw_line;
  std::string current;
  int line_no = 0;
  while (std::getline(in, raw_line)) {
    ++line_no;
    const auto hash = raw_line.find('#');
    const std::string line = trim(hash == std::string::npos ? raw_line : raw_line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("malformed section header '" + line + "'", line_no);
      }
      current = trim(line.substr(1, line.size() - 2));
      if (current.empty()) throw ConfigError("empty section name", line_no);
      if (cfg.section_lines_.count(current) != 0) {
        throw ConfigError("duplicate section [" + current + "]", line_no);
      }
      cfg.section_lines_[current] = line_no;
      cfg.sections_[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    if (current.empty()) throw ConfigError("key outside of any section", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line_no);
    auto& section = cfg.sections_[current];
    if (section.count(key) != 0) {
      throw ConfigError("duplicate key '" + key + "' in [" + current + "]", line_no);
    }
    section[key] = Entry{value, line_no};
  }
  return cfg;
}

RawConfig RawConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", 0);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool RawConfig::has_section(const std::string& section) const {
  return sections_.count(section) != 0;
}

int RawConfig::section_line(const std::string& section) const {
  auto it = section_lines_.find(section);
  return it == section_lines_.end() ? 0 : it->second;
}

const RawConfig::Entry* RawConfig::find(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  auto e = s->second.find(key);
  return e == s->second.end() ? nullptr : &e->second;
}

std::string RawConfig::canonical() const {
  std::string out;
  for (const auto& [section, entries] : sections_) {
    for (const auto& [key, e] : entries) out += section + "." + key + "=" + e.value + "\n";
  }
  return out;
}

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::variance_decay: return "variance_decay";
    case ExperimentKind::mse_cost: return "mse_cost";
    case ExperimentKind::nc_complexity: return "nc_complexity";
    case ExperimentKind::param_est: return "param_est";
    case ExperimentKind::single_run: return "single_run";
  }
  return "unknown";
}

std::string method_name(Variant variant, bool localized) {
  const std::string base = variant == Variant::vanilla         ? "F1"
                           : variant == Variant::deterministic ? "F2"
                                                               : "F3";
  return localized ? "L-" + base : base;
}

std::pair<Variant, bool> parse_method(const std::string& name) {
  const bool localized = name.rfind("L-", 0) == 0;
  const std::string base = localized ? name.substr(2) : name;
  return {parse_variant(base), localized};
}

FilterModel ExperimentConfig::build_model() const {
  FilterModel m = [&] {
    switch (model.kind) {
      case ModelKind::grid: return build_grid_model(model.grid);
      case ModelKind::scalar: return build_scalar_model(model.scalar);
      case ModelKind::lorenz96: return build_lorenz96_model(model.lorenz96);
    }
    throw std::logic_error("unknown model kind");
  }();
  m.aux_d = model.aux_d;
  return m;
}

std::vector<bool> ExperimentConfig::localization_flags() const {
  switch (filter.localization) {
    case LocalizationMode::off: return {false};
    case LocalizationMode::on: return {true};
    case LocalizationMode::both: return {false, true};
  }
  return {false};
}

ExperimentConfig parse_experiment_config(const RawConfig& raw) {
  for (const auto& [section, entries] : raw.sections()) {
    static const std::set<std::string> known{"experiment", "model", "filter", "run", "param"};
    if (known.count(section) == 0) {
      throw ConfigError("unknown section [" + section + "]", raw.section_line(section));
    }
  }
  for (const char* required : {"experiment", "model", "run"}) {
    if (!raw.has_section(required)) {
      throw ConfigError(std::string("missing required section [") + required + "]", 0);
    }
  }

  ExperimentConfig cfg;
  SectionReader exp(raw, "experiment");
  cfg.kind = parse_kind(exp.required_text("kind"), exp);
  cfg.name = exp.text("name", to_string(cfg.kind));
  if (cfg.name.empty() ||
      !std::all_of(cfg.name.begin(), cfg.name.end(), [](unsigned char c) {
        return std::isalnum(c) || c == '_' || c == '-';
      })) {
    exp.fail("name", "use letters, digits, '_' or '-'");
  }
  exp.reject_unknown();

  SectionReader model(raw, "model");
  parse_model(model, cfg.model);
  model.reject_unknown();

  SectionReader filter(raw, "filter");
  parse_filter(filter, cfg.filter);
  filter.reject_unknown();

  SectionReader run(raw, "run");
  parse_run(run, cfg.run);
  run.reject_unknown();

  SectionReader param(raw, "param");
  if (cfg.kind == ExperimentKind::param_est) {
    if (!param.present()) throw ConfigError("param_est needs a [param] section", 0);
    parse_param(param, cfg.param);
    param.reject_unknown();
  } else if (param.present()) {
    throw ConfigError("[param] is only valid for param_est", raw.section_line("param"));
  }

  const bool linear = cfg.model.kind != ModelKind::lorenz96;
  switch (cfg.kind) {
    case ExperimentKind::mse_cost:
      if (!linear) model.fail("kind", "mse_cost needs a linear model (reference filter)");
      [[fallthrough]];
    case ExperimentKind::nc_complexity:
      if (cfg.filter.epsilons.empty()) filter.fail_missing("epsilons");
      break;
    case ExperimentKind::param_est:
      if (cfg.model.theta.empty()) model.fail_missing("theta");
      if (cfg.param.theta0.size() != cfg.model.theta.size()) {
        param.fail("theta0", "must have as many entries as [model] theta");
      }
      if (cfg.filter.target_level < 0 && cfg.filter.epsilons.size() != 1) {
        filter.fail("target_level", "param_est needs target_level with plan_particles, or one epsilon");
      }
      break;
    default: break;
  }
  if (cfg.filter.target_level >= 0) {
    if (cfg.filter.target_level <= cfg.filter.start_level) {
      filter.fail("target_level", "must exceed start_level");
    }
    if (static_cast<int>(cfg.filter.plan_particles.size()) !=
        cfg.filter.target_level - cfg.filter.start_level + 1) {
      filter.fail("plan_particles", "need one count per level from start_level to target_level");
    }
  }
  for (Variant v : cfg.filter.variants) {
    const bool multilevel = cfg.kind != ExperimentKind::single_run;
    if (multilevel && v == Variant::transport) {
      filter.fail("variants", "the transport variant cannot be used in multilevel experiments");
    }
  }
  for (const auto& [v, loc] : cfg.param.methods) {
    if (v == Variant::transport) param.fail("methods", "the transport variant has no coupling");
    (void)loc;
  }
  if (cfg.filter.localization != LocalizationMode::off || !cfg.param.methods.empty()) {
    bool wants_taper = cfg.filter.localization != LocalizationMode::off;
    for (const auto& m : cfg.param.methods) wants_taper = wants_taper || m.second;
    if (wants_taper && cfg.model.kind == ModelKind::scalar) {
      filter.fail("localization", "the scalar model has no geometry to localize on");
    }
  }
  if (cfg.kind == ExperimentKind::single_run && cfg.filter.variants.size() != 1) {
    filter.fail("variants", "single_run takes exactly one variant");
  }
  try {
    (void)cfg.build_model();
  } catch (const std::exception& e) {
    model.fail("kind", e.what());
  }
  cfg.config_hash = hash_label(raw.canonical());
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(RawConfig::load(path));
}

}  // namespace kalbucy::harness
