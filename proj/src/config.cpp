#include "rulab/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rulab/errors.hpp"

namespace rulab {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

class ValueParser {
public:
  ValueParser(std::string_view text, std::string context) : text_(text), ctx_(std::move(context)) {}

  json parse() {
    json v = value();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing characters after value");
    return v;
  }

private:
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(ctx_ + ": " + what); }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' ||
                                   text_[pos_] == '\n' || text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  json value() {
    skip_ws();
    if (pos_ >= text_.size()) fail("missing value");
    const char c = text_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    if (text_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      return true;
    }
    if (text_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      return false;
    }
    return number();
  }

  json string() {
    const auto close = text_.find('"', pos_ + 1);
    if (close == std::string_view::npos) fail("unterminated string");
    std::string s(text_.substr(pos_ + 1, close - pos_ - 1));
    pos_ = close + 1;
    return s;
  }

  json array() {
    ++pos_;
    json arr = json::array();
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == ']') {
      ++pos_;
      return arr;
    }
    for (;;) {
      arr.push_back(value());
      skip_ws();
      if (pos_ >= text_.size()) fail("unterminated array");
      if (text_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          return arr;
        }
        continue;
      }
      if (text_[pos_] == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }

  json number() {
    std::size_t end = pos_;
    while (end < text_.size() && std::string_view("+-.0123456789eE_").find(text_[end]) !=
                                     std::string_view::npos) {
      ++end;
    }
    std::string token;
    for (std::size_t i = pos_; i < end; ++i) {
      if (text_[i] != '_') token.push_back(text_[i]);
    }
    if (token.empty()) fail("cannot parse value");
    const char* first = token.data();
    if (*first == '+') ++first;
    const char* last = token.data() + token.size();
    const bool integral = token.find_first_of(".eE") == std::string::npos;
    if (integral) {
      long long iv = 0;
      const auto [ptr, ec] = std::from_chars(first, last, iv);
      if (ec == std::errc() && ptr == last) {
        pos_ = end;
        return iv;
      }
      // seeds use the full unsigned range
      std::uint64_t uv = 0;
      const auto [uptr, uec] = std::from_chars(first, last, uv);
      if (uec != std::errc() || uptr != last) fail("invalid integer '" + token + "'");
      pos_ = end;
      return uv;
    }
    double dv = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, dv);
    if (ec != std::errc() || ptr != last) fail("invalid number '" + token + "'");
    pos_ = end;
    return dv;
  }

  std::string_view text_;
  std::string ctx_;
  std::size_t pos_ = 0;
};

int bracket_depth(const std::string& s) {
  int depth = 0;
  bool in_string = false;
  for (char c : s) {
    if (c == '"') in_string = !in_string;
    if (in_string) continue;
    if (c == '[') ++depth;
    if (c == ']') --depth;
  }
  return depth;
}

const std::set<std::string> kSections = {"model", "preferences", "estimation", "solve", "sweep"};

const std::map<std::string, std::set<std::string>> kModelKeys = {
    {"finite_chain", {"transition", "growth", "stationary"}},
    {"singleton", {"k"}},
    {"by_constant_vol", {"mu_c", "rho", "sigma"}},
    {"by_stoch_vol",
     {"mu_c", "rho", "phi_e", "nu", "d_const", "sigma_bar", "phi_sigma", "M_bound", "eps_floor",
      "shock_support"}},
    {"mehra_prescott", {"g_rate", "a", "shock_scale"}},
    {"ssy",
     {"mu_c", "rho", "phi_c", "phi_z", "sigma_bar", "rho_hc", "rho_hz", "sigma_hc", "sigma_hz",
      "M_bound", "shock_support"}},
};

const std::set<std::string> kPreferenceKeys = {"beta", "gamma", "psi"};
const std::set<std::string> kEstimationKeys = {"p",        "n",       "m",      "J",
                                               "seed",     "init_law", "init_lo", "init_hi",
                                               "literal_formula", "batches"};
const std::set<std::string> kSolveKeys = {
    "nodes",        "span",         "discretization", "tol",       "max_iter",         "spectral_tol",
    "spectral_max_iter", "gelfand_n", "hs",     "operator",         "g0",
    "lambda_fn",    "lambda_value", "lambda_intercept", "lambda_slope", "lambda_lo",
    "lambda_hi",    "b_fn",         "b_value",   "b_intercept",      "b_slope",
    "b_lo",         "b_hi"};
const std::set<std::string> kSweepKeys = {"param_a", "a_min",   "a_max", "a_steps",    "param_b",
                                          "b_min",   "b_max",   "b_steps", "common_seed"};

void check_keys(const json& section, const std::string& name, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : section.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
  }
}

const json& section_or_empty(const json& tree, const std::string& name) {
  static const json empty = json::object();
  if (!tree.contains(name)) return empty;
  const json& s = tree.at(name);
  if (!s.is_object()) throw ConfigError("'" + name + "' must be a section");
  return s;
}

double get_number(const json& section, const std::string& where, const std::string& key) {
  if (!section.contains(key)) throw ConfigError("missing required key '" + where + "." + key + "'");
  const json& v = section.at(key);
  if (!v.is_number()) throw ConfigError("'" + where + "." + key + "' must be a number");
  return v.get<double>();
}

double get_number(const json& section, const std::string& where, const std::string& key,
                  double fallback) {
  return section.contains(key) ? get_number(section, where, key) : fallback;
}

int get_int(const json& section, const std::string& where, const std::string& key, int fallback) {
  if (!section.contains(key)) return fallback;
  const json& v = section.at(key);
  if (!v.is_number_integer()) throw ConfigError("'" + where + "." + key + "' must be an integer");
  return v.get<int>();
}

bool get_bool(const json& section, const std::string& where, const std::string& key,
              bool fallback) {
  if (!section.contains(key)) return fallback;
  const json& v = section.at(key);
  if (!v.is_boolean()) throw ConfigError("'" + where + "." + key + "' must be true or false");
  return v.get<bool>();
}

std::string get_string(const json& section, const std::string& where, const std::string& key,
                       const std::string& fallback) {
  if (!section.contains(key)) return fallback;
  const json& v = section.at(key);
  if (!v.is_string()) throw ConfigError("'" + where + "." + key + "' must be a string");
  return v.get<std::string>();
}

Eigen::MatrixXd get_matrix(const json& section, const std::string& key) {
  if (!section.contains(key)) throw ConfigError("missing required key 'model." + key + "'");
  const json& rows = section.at(key);
  if (!rows.is_array() || rows.empty()) {
    throw ConfigError("'model." + key + "' must be a nonempty array of rows");
  }
  const std::size_t n = rows.size();
  Eigen::MatrixXd out(n, rows.at(0).is_array() ? rows.at(0).size() : 0);
  for (std::size_t i = 0; i < n; ++i) {
    const json& row = rows.at(i);
    if (!row.is_array() || row.size() != static_cast<std::size_t>(out.cols())) {
      throw ConfigError("'model." + key + "' rows must be arrays of equal length");
    }
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!row.at(j).is_number()) throw ConfigError("'model." + key + "' entries must be numbers");
      out(i, j) = row.at(j).get<double>();
    }
  }
  return out;
}

PreferenceSpec build_preferences(const json& tree) {
  const json& s = section_or_empty(tree, "preferences");
  check_keys(s, "preferences", kPreferenceKeys);
  return make_preferences(get_number(s, "preferences", "beta"),
                          get_number(s, "preferences", "gamma"),
                          get_number(s, "preferences", "psi"));
}

ModelSpec build_model(const json& tree, const PreferenceSpec& prefs) {
  const json& s = section_or_empty(tree, "model");
  const std::string name = get_string(s, "model", "name", "");
  const auto allowed = kModelKeys.find(name);
  if (allowed == kModelKeys.end()) throw ConfigError("unknown or missing model.name '" + name + "'");
  std::set<std::string> keys = allowed->second;
  keys.insert("name");
  check_keys(s, "model", keys);
  auto num = [&](const std::string& key) { return get_number(s, "model", key); };
  auto opt = [&](const std::string& key, double fallback) {
    return get_number(s, "model", key, fallback);
  };

  ModelSpec model;
  if (name == "finite_chain") {
    FiniteChain chain = make_finite_chain(get_matrix(s, "transition"), get_matrix(s, "growth"));
    if (s.contains("stationary")) {
      const Eigen::MatrixXd row = get_matrix(json{{"stationary", json::array({s.at("stationary")})}},
                                             "stationary");
      chain.stationary = row.row(0).transpose();
    }
    model = std::move(chain);
  } else if (name == "singleton") {
    model = singleton_chain(num("k"), prefs.gamma());
  } else if (name == "by_constant_vol") {
    model = ByConstantVol{num("mu_c"), num("rho"), num("sigma")};
  } else if (name == "by_stoch_vol") {
    ByStochVolTruncated m{};
    m.mu_c = num("mu_c");
    m.rho = num("rho");
    m.phi_e = num("phi_e");
    m.nu = num("nu");
    if (s.contains("d_const") == s.contains("sigma_bar")) {
      throw ConfigError("by_stoch_vol needs exactly one of model.d_const and model.sigma_bar");
    }
    m.d_const = s.contains("d_const") ? num("d_const")
                                      : num("sigma_bar") * num("sigma_bar") * (1.0 - m.nu);
    m.phi_sigma = num("phi_sigma");
    m.M_bound = num("M_bound");
    m.eps_floor = opt("eps_floor", m.eps_floor);
    m.shock_support = opt("shock_support", m.shock_support);
    model = m;
  } else if (name == "mehra_prescott") {
    model = MehraPrescott{num("g_rate"), num("a"), opt("shock_scale", 1.0)};
  } else {
    Ssy m{};
    m.mu_c = num("mu_c");
    m.rho = num("rho");
    m.phi_c = num("phi_c");
    m.phi_z = num("phi_z");
    m.sigma_bar = num("sigma_bar");
    m.rho_hc = num("rho_hc");
    m.rho_hz = num("rho_hz");
    m.sigma_hc = num("sigma_hc");
    m.sigma_hz = num("sigma_hz");
    m.M_bound = num("M_bound");
    m.shock_support = opt("shock_support", m.shock_support);
    model = m;
  }
  validate(model);
  return model;
}

EstimationOptions build_estimation(const json& tree) {
  const json& s = section_or_empty(tree, "estimation");
  check_keys(s, "estimation", kEstimationKeys);
  EstimationOptions o;
  o.p = get_number(s, "estimation", "p", o.p);
  o.n = get_int(s, "estimation", "n", o.n);
  o.m = get_int(s, "estimation", "m", o.m);
  o.J = get_int(s, "estimation", "J", o.J);
  o.batches = get_int(s, "estimation", "batches", o.batches);
  if (s.contains("seed")) {
    const json& seed = s.at("seed");
    if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
      throw ConfigError("'estimation.seed' must be a nonnegative integer");
    }
    o.seed = seed.get<std::uint64_t>();
  }
  o.literal_formula = get_bool(s, "estimation", "literal_formula", false);
  const std::string law = get_string(s, "estimation", "init_law", "stationary");
  if (law == "stationary") {
    o.init = InitLaw::stationary();
  } else if (law == "uniform") {
    o.init = InitLaw::uniform(get_number(s, "estimation", "init_lo", 0.0),
                              get_number(s, "estimation", "init_hi", 100.0));
    if (!(o.init.hi > o.init.lo)) throw DomainError("estimation.init_hi must exceed init_lo");
  } else {
    throw ConfigError("'estimation.init_law' must be \"stationary\" or \"uniform\"");
  }
  if (!(o.p >= 1.0)) throw DomainError("estimation.p must be at least 1");
  if (o.n < 1 || o.m < 1 || o.J < 1 || o.batches < 1) {
    throw DomainError("estimation n, m, J and batches must be at least 1");
  }
  return o;
}

StateFunction build_state_function(const json& s, const std::string& prefix) {
  const std::string kind = get_string(s, "solve", prefix + "_fn", "constant");
  if (kind == "constant") {
    const double v = get_number(s, "solve", prefix + "_value", 1.0);
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("solve." + prefix + "_value must be positive");
    return StateFunction::constant(v);
  }
  if (kind == "exp_linear") {
    std::vector<double> slope;
    if (s.contains(prefix + "_slope")) {
      const json& arr = s.at(prefix + "_slope");
      if (!arr.is_array()) throw ConfigError("'solve." + prefix + "_slope' must be an array");
      for (const auto& v : arr) {
        if (!v.is_number()) throw ConfigError("'solve." + prefix + "_slope' must hold numbers");
        slope.push_back(v.get<double>());
      }
    }
    return StateFunction::exp_linear(get_number(s, "solve", prefix + "_intercept", 0.0),
                                     std::move(slope), get_number(s, "solve", prefix + "_lo"),
                                     get_number(s, "solve", prefix + "_hi"));
  }
  throw ConfigError("'solve." + prefix + "_fn' must be \"constant\" or \"exp_linear\"");
}

SolveSettings build_solve(const json& tree, int dim) {
  const json& s = section_or_empty(tree, "solve");
  check_keys(s, "solve", kSolveKeys);
  SolveSettings o;
  o.nodes = get_int(s, "solve", "nodes", o.nodes);
  o.span = get_number(s, "solve", "span", o.span);
  const std::string disc = get_string(s, "solve", "discretization", "nystrom");
  if (disc != "nystrom" && disc != "cell") {
    throw ConfigError("'solve.discretization' must be \"nystrom\" or \"cell\"");
  }
  o.discretization = parse_discretization(disc);
  o.tol = get_number(s, "solve", "tol", o.tol);
  o.max_iter = get_int(s, "solve", "max_iter", o.max_iter);
  o.spectral_tol = get_number(s, "solve", "spectral_tol", o.spectral_tol);
  o.spectral_max_iter = get_int(s, "solve", "spectral_max_iter", o.spectral_max_iter);
  o.gelfand_n = get_int(s, "solve", "gelfand_n", o.gelfand_n);
  o.hs = get_bool(s, "solve", "hs", o.hs);
  o.op = get_string(s, "solve", "operator", o.op);
  o.g0 = get_number(s, "solve", "g0", o.g0);
  o.lambda_fn = build_state_function(s, "lambda");
  o.b_fn = build_state_function(s, "b");
  if (o.op != "A" && o.op != "B") throw ConfigError("'solve.operator' must be \"A\" or \"B\"");
  if (o.nodes < 3) throw DomainError("solve.nodes must be at least 3");
  if (!(o.span > 0.0) || !(o.tol > 0.0) || !(o.spectral_tol > 0.0) || !(o.g0 > 0.0)) {
    throw DomainError("solve span, tolerances and g0 must be positive");
  }
  if (o.max_iter < 1 || o.spectral_max_iter < 1 || o.gelfand_n < 0) {
    throw DomainError("solve iteration limits must be positive");
  }
  for (const StateFunction* f : {&o.lambda_fn, &o.b_fn}) {
    if (f->kind == StateFunction::Kind::ExpLinear && f->slope.size() != static_cast<std::size_t>(dim)) {
      throw ConfigError("state-function slope must have one entry per state coordinate");
    }
  }
  return o;
}

SweepAxis build_axis(const json& s, const json& tree, const std::string& tag) {
  SweepAxis axis;
  const std::string name = get_string(s, "sweep", "param_" + tag, "");
  if (name.empty()) throw ConfigError("missing required key 'sweep.param_" + tag + "'");
  axis.name = resolve_parameter(tree, name);
  axis.lo = get_number(s, "sweep", tag + "_min");
  axis.hi = get_number(s, "sweep", tag + "_max");
  axis.steps = get_int(s, "sweep", tag + "_steps", 1);
  if (axis.steps < 0) throw DomainError("sweep steps must be nonnegative");
  return axis;
}

}  // namespace

json parse_toml(std::string_view text, const std::string& source) {
  json tree = json::object();
  json* current = nullptr;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const int start_line = line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(start_line);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      const std::string name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!kSections.count(name)) throw ConfigError(where + ": unknown section [" + name + "]");
      if (tree.contains(name)) throw ConfigError(where + ": duplicate section [" + name + "]");
      tree[name] = json::object();
      current = &tree[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    while (bracket_depth(value) > 0 && std::getline(in, raw)) {
      ++line_no;
      value += " " + trim(strip_comment(raw));
    }
    if (current == nullptr) throw ConfigError(where + ": key '" + key + "' outside any section");
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (current->contains(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    (*current)[key] = ValueParser(value, where + " key '" + key + "'").parse();
  }
  return tree;
}

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_toml(buffer.str(), path);
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' needs key=value");
  const std::string path = trim(std::string_view(assignment).substr(0, eq));
  const auto dot = path.find('.');
  if (dot == std::string::npos) {
    throw ConfigError("override key '" + path + "' must be section.key");
  }
  const std::string section = path.substr(0, dot);
  const std::string key = path.substr(dot + 1);
  if (!kSections.count(section)) throw ConfigError("unknown section '" + section + "' in override");
  tree[section][key] =
      ValueParser(trim(std::string_view(assignment).substr(eq + 1)), "override '" + path + "'")
          .parse();
}

std::string resolve_parameter(const json& tree, const std::string& name) {
  if (name.find('.') != std::string::npos) {
    const auto dot = name.find('.');
    const std::string section = name.substr(0, dot);
    if (section != "model" && section != "preferences") {
      throw ConfigError("sweep parameter '" + name + "' must live in [model] or [preferences]");
    }
    return name;
  }
  if (kPreferenceKeys.count(name)) return "preferences." + name;
  const json& model = section_or_empty(tree, "model");
  const std::string model_name_value = get_string(model, "model", "name", "");
  const auto keys = kModelKeys.find(model_name_value);
  if (keys != kModelKeys.end() && keys->second.count(name)) return "model." + name;
  throw ConfigError("sweep parameter '" + name + "' is not a model or preference parameter");
}

double SweepAxis::value(int index) const {
  if (steps <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(index) / static_cast<double>(steps - 1);
}

RunConfig build_run_config(const json& tree) {
  if (!tree.is_object()) throw ConfigError("config must be a table of sections");
  for (const auto& [name, _] : tree.items()) {
    if (!kSections.count(name)) throw ConfigError("unknown section [" + name + "]");
  }
  PreferenceSpec prefs = build_preferences(tree);
  ModelSpec model = build_model(tree, prefs);
  RunConfig config{tree, std::move(model), prefs, build_estimation(tree), {}, std::nullopt};
  config.solve = build_solve(tree, state_dim(config.model));
  if (tree.contains("sweep")) {
    const json& s = section_or_empty(tree, "sweep");
    check_keys(s, "sweep", kSweepKeys);
    SweepSettings sweep;
    sweep.a = build_axis(s, tree, "a");
    sweep.b = build_axis(s, tree, "b");
    sweep.common_seed = get_bool(s, "sweep", "common_seed", false);
    config.sweep = sweep;
  }
  return config;
}

}  // namespace rulab
