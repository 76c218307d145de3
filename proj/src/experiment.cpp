#include "grbf/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <variant>

namespace grbf {

std::string MethodSpec::name() const {
  if (method == Method::gmls) return "gmls:" + to_string(weight);
  return to_string(method);
}

MethodSpec MethodSpec::parse(const std::string& text) {
  MethodSpec spec;
  const auto colon = text.find(':');
  spec.method = method_from_string(text.substr(0, colon));
  if (colon != std::string::npos) {
    spec.weight = weight_scheme_from_string(text.substr(colon + 1));
    if (spec.method != Method::gmls) {
      throw UnsupportedModeError("only gmls accepts a weight scheme, got '" + text + "'");
    }
  } else {
    spec.weight = spec.method == Method::rbffd ? WeightScheme::phi_inverse : WeightScheme::one_over_k;
  }
  return spec;
}

std::string KPolicy::describe() const {
  return auto_tune ? "auto:K0=" + std::to_string(k) : "fixed:K=" + std::to_string(k);
}

MethodConfig ExperimentConfig::method_config(const MethodSpec& spec) const {
  MethodConfig c;
  c.method = spec.method;
  c.weight = spec.weight;
  c.l = l;
  c.kappa = kappa;
  c.delta = delta;
  c.k0 = k_policy.k;
  c.k_step = k_policy.k_step;
  c.gamma_th = k_policy.gamma_th;
  c.k_max = k_policy.k_max;
  c.auto_tune = k_policy.auto_tune;
  return c;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

using json = nlohmann::json;
using PathItem = std::variant<std::string, std::size_t>;
using Path = std::vector<PathItem>;

/// Finds the text offset of the value at a path inside valid JSON text.
class Locator {
 public:
  explicit Locator(const std::string& text) : s_(text) {}

  std::size_t find(const Path& path) {
    i_ = 0;
    skip_ws();
    return walk(path, 0);
  }

  std::pair<std::size_t, std::size_t> line_col(std::size_t offset) const {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k < offset && k < s_.size(); ++k) {
      if (s_[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    return {line, col};
  }

 private:
  static constexpr std::size_t npos = std::string::npos;

  void skip_ws() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }

  std::string read_string() {
    std::string out;
    ++i_;  // opening quote
    while (i_ < s_.size() && s_[i_] != '"') {
      if (s_[i_] == '\\' && i_ + 1 < s_.size()) ++i_;
      out += s_[i_++];
    }
    ++i_;
    return out;
  }

  void skip_value() {
    skip_ws();
    if (i_ >= s_.size()) return;
    if (s_[i_] == '"') {
      read_string();
      return;
    }
    if (s_[i_] == '{' || s_[i_] == '[') {
      int depth = 0;
      while (i_ < s_.size()) {
        const char c = s_[i_];
        if (c == '"') {
          read_string();
          continue;
        }
        if (c == '{' || c == '[') ++depth;
        if (c == '}' || c == ']') --depth;
        ++i_;
        if (depth == 0) return;
      }
      return;
    }
    while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != '}' && s_[i_] != ']' &&
           !std::isspace(static_cast<unsigned char>(s_[i_]))) {
      ++i_;
    }
  }

  std::size_t walk(const Path& path, std::size_t depth) {
    if (depth == path.size()) return i_;
    if (i_ >= s_.size()) return npos;
    if (s_[i_] == '{' && std::holds_alternative<std::string>(path[depth])) {
      ++i_;
      while (true) {
        skip_ws();
        if (i_ >= s_.size() || s_[i_] == '}') return npos;
        const std::string key = read_string();
        skip_ws();
        ++i_;  // colon
        skip_ws();
        if (key == std::get<std::string>(path[depth])) return walk(path, depth + 1);
        skip_value();
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
      }
    }
    if (s_[i_] == '[' && std::holds_alternative<std::size_t>(path[depth])) {
      ++i_;
      for (std::size_t index = 0;; ++index) {
        skip_ws();
        if (i_ >= s_.size() || s_[i_] == ']') return npos;
        if (index == std::get<std::size_t>(path[depth])) return walk(path, depth + 1);
        skip_value();
        skip_ws();
        if (i_ < s_.size() && s_[i_] == ',') ++i_;
      }
    }
    return npos;
  }

  const std::string& s_;
  std::size_t i_ = 0;
};

std::string path_string(const Path& path) {
  std::string out;
  for (const auto& item : path) {
    if (std::holds_alternative<std::string>(item)) {
      out += (out.empty() ? "" : ".") + std::get<std::string>(item);
    } else {
      out += "[" + std::to_string(std::get<std::size_t>(item)) + "]";
    }
  }
  return out.empty() ? "<root>" : out;
}

class ConfigReader {
 public:
  ConfigReader(const std::string& text, std::string source) : text_(text), source_(std::move(source)), locator_(text) {}

  [[noreturn]] void fail(const Path& path, const std::string& message) {
    std::size_t offset = locator_.find(path);
    // Fall back to the closest enclosing element that exists in the text.
    Path prefix = path;
    while (offset == std::string::npos && !prefix.empty()) {
      prefix.pop_back();
      offset = locator_.find(prefix);
    }
    const auto [line, col] = locator_.line_col(offset == std::string::npos ? 0 : offset);
    throw ConfigError(source_ + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + path_string(path) +
                      ": " + message);
  }

  const json& require(const json& obj, const Path& path, const std::string& key) {
    if (!obj.contains(key)) fail(path, "missing required key '" + key + "'");
    return obj.at(key);
  }

  std::string get_string(const json& v, const Path& path) {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }

  long long get_int(const json& v, const Path& path, long long lo, long long hi) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    const long long x = v.get<long long>();
    if (x < lo || x > hi) {
      fail(path, "value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  double get_positive(const json& v, const Path& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double x = v.get<double>();
    if (!(x > 0.0) || !std::isfinite(x)) fail(path, "expected a positive finite number");
    return x;
  }

  bool get_bool(const json& v, const Path& path) {
    if (!v.is_boolean()) fail(path, "expected true or false");
    return v.get<bool>();
  }

  void only_keys(const json& obj, const Path& path, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
        Path p = path;
        p.emplace_back(key);
        fail(p, "unknown key '" + key + "'");
      }
    }
  }

 private:
  const std::string& text_;
  std::string source_;
  Locator locator_;
};

constexpr long long kMaxInt = 1LL << 40;

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const Locator locator(text);
    const auto [line, col] = locator.line_col(e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON (" +
                      e.what() + ")");
  }
  ConfigReader r(text, source);
  r.only_keys(root, {}, {"format", "manifold", "mode", "methods", "N", "trials", "seed_base", "l", "kappa", "delta",
                         "K_policy", "inf_norm", "eigenvalues", "output_dir", "solver", "threads"});
  ExperimentConfig c;
  if (root.contains("format") && r.get_string(root["format"], {"format"}) != "grbf.experiment") {
    r.fail({"format"}, "expected \"grbf.experiment\"");
  }

  c.manifold = r.get_string(r.require(root, {}, "manifold"), {"manifold"});
  const auto& names = builtin_manifold_names();
  if (std::find(names.begin(), names.end(), c.manifold) == names.end()) {
    r.fail({"manifold"}, "unknown manifold '" + c.manifold + "'");
  }
  const ManifoldSpec spec = builtin_spec(c.manifold);
  if (root.contains("mode")) {
    try {
      c.mode = sampling_mode_from_string(r.get_string(root["mode"], {"mode"}));
    } catch (const ConfigError& e) {
      r.fail({"mode"}, e.what());
    }
    if (c.mode == SamplingMode::well_sampled && !spec.sampler.grid) {
      r.fail({"mode"}, "manifold '" + c.manifold + "' has no well_sampled grid");
    }
  }

  const json& methods = r.require(root, {}, "methods");
  if (!methods.is_array()) r.fail({"methods"}, "expected an array of method names");
  if (methods.empty()) r.fail({"methods"}, "method list is empty");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    try {
      c.methods.push_back(MethodSpec::parse(r.get_string(methods[i], {"methods", i})));
    } catch (const ConfigError& e) {
      r.fail({"methods", i}, e.what());
    }
  }

  const json& Ns = r.require(root, {}, "N");
  if (!Ns.is_array() || Ns.empty()) r.fail({"N"}, "expected a non-empty array of point counts");
  for (std::size_t i = 0; i < Ns.size(); ++i) c.Ns.push_back(r.get_int(Ns[i], {"N", i}, 2, kMaxInt));

  if (root.contains("trials")) c.trials = static_cast<int>(r.get_int(root["trials"], {"trials"}, 1, 100000));
  if (root.contains("seed_base")) {
    c.seed_base = static_cast<std::uint64_t>(r.get_int(root["seed_base"], {"seed_base"}, 0, kMaxInt));
  }
  if (root.contains("l")) c.l = static_cast<int>(r.get_int(root["l"], {"l"}, 2, 12));
  if (root.contains("kappa")) c.kappa = static_cast<int>(r.get_int(root["kappa"], {"kappa"}, 1, 12));
  if (root.contains("delta")) c.delta = r.get_positive(root["delta"], {"delta"});

  if (root.contains("K_policy")) {
    const json& kp = root["K_policy"];
    r.only_keys(kp, {"K_policy"}, {"type", "K", "K0", "k_step", "gamma_th", "k_max"});
    const std::string type = r.get_string(r.require(kp, {"K_policy"}, "type"), {"K_policy", "type"});
    if (type == "auto") {
      c.k_policy.auto_tune = true;
      c.k_policy.k = r.get_int(r.require(kp, {"K_policy"}, "K0"), {"K_policy", "K0"}, 2, kMaxInt);
      if (kp.contains("K")) r.fail({"K_policy", "K"}, "use K0 with type \"auto\"");
    } else if (type == "fixed") {
      c.k_policy.auto_tune = false;
      c.k_policy.k = r.get_int(r.require(kp, {"K_policy"}, "K"), {"K_policy", "K"}, 2, kMaxInt);
      if (kp.contains("K0")) r.fail({"K_policy", "K0"}, "use K with type \"fixed\"");
    } else {
      r.fail({"K_policy", "type"}, "expected \"auto\" or \"fixed\"");
    }
    if (kp.contains("k_step")) c.k_policy.k_step = r.get_int(kp["k_step"], {"K_policy", "k_step"}, 1, 1000);
    if (kp.contains("gamma_th")) c.k_policy.gamma_th = r.get_positive(kp["gamma_th"], {"K_policy", "gamma_th"});
    if (kp.contains("k_max")) c.k_policy.k_max = r.get_int(kp["k_max"], {"K_policy", "k_max"}, 0, kMaxInt);
  }

  if (root.contains("inf_norm")) c.inf_norm = r.get_bool(root["inf_norm"], {"inf_norm"});
  if (root.contains("eigenvalues")) {
    const json& ev = root["eigenvalues"];
    r.only_keys(ev, {"eigenvalues"}, {"count", "shift"});
    c.eig_count = r.get_int(r.require(ev, {"eigenvalues"}, "count"), {"eigenvalues", "count"}, 0, kMaxInt);
    if (ev.contains("shift")) {
      if (!ev["shift"].is_number()) r.fail({"eigenvalues", "shift"}, "expected a number");
      c.eig_shift = ev["shift"].get<double>();
    }
  }
  if (root.contains("output_dir")) c.output_dir = r.get_string(root["output_dir"], {"output_dir"});
  if (root.contains("solver")) {
    const json& sv = root["solver"];
    r.only_keys(sv, {"solver"}, {"tol", "direct_threshold", "max_iterations", "ilut_drop_tol", "ilut_fill_factor"});
    if (sv.contains("tol")) c.solver.tol = r.get_positive(sv["tol"], {"solver", "tol"});
    if (sv.contains("direct_threshold")) {
      c.solver.direct_threshold = r.get_int(sv["direct_threshold"], {"solver", "direct_threshold"}, 0, kMaxInt);
    }
    if (sv.contains("max_iterations")) {
      c.solver.max_iterations = static_cast<int>(r.get_int(sv["max_iterations"], {"solver", "max_iterations"}, 1, 1000000));
    }
    if (sv.contains("ilut_drop_tol")) c.solver.ilut_drop_tol = r.get_positive(sv["ilut_drop_tol"], {"solver", "ilut_drop_tol"});
    if (sv.contains("ilut_fill_factor")) {
      c.solver.ilut_fill_factor = static_cast<int>(r.get_int(sv["ilut_fill_factor"], {"solver", "ilut_fill_factor"}, 1, 1000));
    }
  }
  if (root.contains("threads")) c.threads = static_cast<int>(r.get_int(root["threads"], {"threads"}, 0, 1024));

  // Cross-field checks, reported at the most specific location.
  for (std::size_t i = 0; i < c.methods.size(); ++i) {
    try {
      c.method_config(c.methods[i]).validate(spec.d);
    } catch (const ConfigError& e) {
      r.fail({"methods", i}, e.what());
    }
  }
  const Index min_n = *std::min_element(c.Ns.begin(), c.Ns.end());
  if (c.k_policy.k >= min_n) {
    r.fail({"K_policy"}, "stencil size " + std::to_string(c.k_policy.k) + " must be below the smallest N=" +
                             std::to_string(min_n));
  }
  if (c.eig_count > min_n) r.fail({"eigenvalues", "count"}, "count exceeds the smallest N");
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str(), path);
}

std::string manifest_json(const ExperimentConfig& c) {
  json j;
  j["format"] = "grbf.experiment";
  j["manifold"] = c.manifold;
  j["mode"] = to_string(c.mode);
  j["methods"] = json::array();
  for (const auto& m : c.methods) j["methods"].push_back(m.name());
  j["N"] = c.Ns;
  j["trials"] = c.trials;
  j["seed_base"] = c.seed_base;
  j["l"] = c.l;
  j["kappa"] = c.kappa;
  j["delta"] = c.delta;
  json kp;
  kp["type"] = c.k_policy.auto_tune ? "auto" : "fixed";
  kp[c.k_policy.auto_tune ? "K0" : "K"] = c.k_policy.k;
  kp["k_step"] = c.k_policy.k_step;
  kp["gamma_th"] = c.k_policy.gamma_th;
  kp["k_max"] = c.k_policy.k_max;
  j["K_policy"] = kp;
  j["inf_norm"] = c.inf_norm;
  if (c.eig_count > 0) j["eigenvalues"] = {{"count", c.eig_count}, {"shift", c.eig_shift}};
  j["output_dir"] = c.output_dir;
  j["solver"] = {{"tol", c.solver.tol},
                 {"direct_threshold", c.solver.direct_threshold},
                 {"max_iterations", c.solver.max_iterations},
                 {"ilut_drop_tol", c.solver.ilut_drop_tol},
                 {"ilut_fill_factor", c.solver.ilut_fill_factor}};
  j["threads"] = c.threads;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Running

std::vector<RunRecord> run_experiment(const ExperimentConfig& config, const ProgressCallback& progress) {
  const ManifoldSpec spec = builtin_spec(config.manifold);
  const std::size_t n_methods = config.methods.size();
  const std::size_t n_sizes = config.Ns.size();
  const auto trials = static_cast<std::size_t>(config.trials);
  std::vector<RunRecord> records(n_methods * n_sizes * trials);
  auto slot = [&](std::size_t m, std::size_t n, std::size_t t) -> RunRecord& {
    return records[(m * n_sizes + n) * trials + t];
  };

  for (std::size_t n = 0; n < n_sizes; ++n) {
    const Index N = config.Ns[n];
    for (std::size_t t = 0; t < trials; ++t) {
      const int trial = static_cast<int>(t);
      const PointCloud cloud = sample_points(spec, N, config.mode, config.seed(trial));
      for (std::size_t m = 0; m < n_methods; ++m) {
        const MethodSpec& method = config.methods[m];
        RunRecord& rec = slot(m, n, t);
        rec.manifold = config.manifold;
        rec.method = method;
        rec.l = config.l;
        rec.kappa = config.kappa;
        rec.k_policy = config.k_policy.describe();
        rec.N = N;
        rec.trial = trial;
        rec.seed = config.seed(trial);
        const auto start = std::chrono::steady_clock::now();
        try {
          const MethodConfig mc = config.method_config(method);
          const SparseOperator op = assemble(cloud, mc, config.threads);
          ShiftedSolver solver(op.matrix, 1.0, config.solver);
          const Eigen::VectorXd F = solver.solve(cloud.h_values);
          rec.fe = forward_error(op, cloud.f_values, cloud.lap_values);
          rec.ie = inverse_error(F, cloud.f_values);
          if (config.inf_norm) rec.inf_norm_inv = inf_norm_inverse(solver).value;
          rec.mean_k = op.mean_k();
          rec.max_gamma_fail = op.max_gamma_fail(mc.gamma_th);
          rec.unconverged = op.unconverged_count();
          if (config.eig_count > 0) {
            EigenOptions eo;
            eo.solver = config.solver;
            rec.eigenvalues = leading_eigenvalues(op, config.eig_count, config.eig_shift, eo);
          }
        } catch (const ConfigError&) {
          throw;
        } catch (const Error& e) {
          throw NumericalFailure(method.name(), N, trial, e.what());
        }
        rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (progress) progress(rec);
      }
    }
  }
  return records;
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

}  // namespace

void write_convergence_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << "manifold,method,weight,l,kappa,K_policy,N,trial,seed,FE,IE,inf_norm_inv,mean_K,max_gamma_fail,wall_time_s\n";
  for (const auto& r : records) {
    out << r.manifold << ',' << to_string(r.method.method) << ',' << to_string(r.method.weight) << ',' << r.l << ','
        << r.kappa << ',' << r.k_policy << ',' << r.N << ',' << r.trial << ',' << r.seed << ',' << fmt(r.fe) << ','
        << fmt(r.ie) << ',' << fmt(r.inf_norm_inv) << ',' << fmt(r.mean_k) << ',' << fmt(r.max_gamma_fail) << ','
        << fmt(r.wall_time_s) << '\n';
  }
}

void write_eigenvalues_csv(std::ostream& out, const std::vector<RunRecord>& records) {
  out << "manifold,method,weight,N,trial,index,real,imag\n";
  for (const auto& r : records) {
    for (std::size_t k = 0; k < r.eigenvalues.size(); ++k) {
      out << r.manifold << ',' << to_string(r.method.method) << ',' << to_string(r.method.weight) << ',' << r.N << ','
          << r.trial << ',' << k << ',' << fmt(r.eigenvalues[k].real()) << ',' << fmt(r.eigenvalues[k].imag())
          << '\n';
    }
  }
}

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records) {
  std::vector<SummaryRow> rows;
  std::map<std::pair<std::string, Index>, std::vector<const RunRecord*>> groups;
  std::vector<std::pair<std::string, Index>> order;
  for (const auto& r : records) {
    const auto key = std::make_pair(r.method.name(), r.N);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  auto stats = [](std::vector<double> v, double& mean, double& sd, double& median) {
    const double n = static_cast<double>(v.size());
    mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    std::sort(v.begin(), v.end());
    median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  for (const auto& key : order) {
    const auto& group = groups[key];
    SummaryRow row;
    row.method = key.first;
    row.N = key.second;
    row.trials = static_cast<int>(group.size());
    std::vector<double> fe, ie;
    double inv = 0.0, k = 0.0;
    for (const RunRecord* r : group) {
      fe.push_back(r->fe);
      ie.push_back(r->ie);
      inv += r->inf_norm_inv;
      k += r->mean_k;
    }
    stats(fe, row.fe_mean, row.fe_std, row.fe_median);
    stats(ie, row.ie_mean, row.ie_std, row.ie_median);
    row.inf_norm_mean = inv / static_cast<double>(group.size());
    row.mean_k = k / static_cast<double>(group.size());
    rows.push_back(row);
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "method,N,trials,FE_mean,FE_std,FE_median,IE_mean,IE_std,IE_median,inf_norm_inv_mean,mean_K\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.N << ',' << r.trials << ',' << fmt(r.fe_mean) << ',' << fmt(r.fe_std) << ','
        << fmt(r.fe_median) << ',' << fmt(r.ie_mean) << ',' << fmt(r.ie_std) << ',' << fmt(r.ie_median) << ','
        << fmt(r.inf_norm_mean) << ',' << fmt(r.mean_k) << '\n';
  }
}

void write_run_outputs(const ExperimentConfig& config, const std::vector<RunRecord>& records) {
  namespace fs = std::filesystem;
  fs::create_directories(config.output_dir);
  auto open = [&](const std::string& name) {
    std::ofstream out(fs::path(config.output_dir) / name);
    if (!out) throw ConfigError("cannot write " + (fs::path(config.output_dir) / name).string());
    return out;
  };
  {
    auto out = open("convergence.csv");
    write_convergence_csv(out, records);
  }
  {
    auto out = open("summary.csv");
    write_summary_csv(out, summarize(records));
  }
  if (config.eig_count > 0) {
    auto out = open("eigenvalues.csv");
    write_eigenvalues_csv(out, records);
  }
  auto out = open("manifest.json");
  out << manifest_json(config);
}

std::vector<RunRecord> read_convergence_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("convergence.csv: empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("convergence.csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_manifold = column("manifold"), c_method = column("method"), c_weight = column("weight"),
                    c_l = column("l"), c_kappa = column("kappa"), c_policy = column("K_policy"), c_n = column("N"),
                    c_trial = column("trial"), c_seed = column("seed"), c_fe = column("FE"), c_ie = column("IE"),
                    c_inv = column("inf_norm_inv"), c_k = column("mean_K"), c_gamma = column("max_gamma_fail"),
                    c_time = column("wall_time_s");
  std::vector<RunRecord> records;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) {
      throw ConfigError("convergence.csv:" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " fields");
    }
    try {
      RunRecord r;
      r.manifold = cells[c_manifold];
      r.method.method = method_from_string(cells[c_method]);
      r.method.weight = weight_scheme_from_string(cells[c_weight]);
      r.l = std::stoi(cells[c_l]);
      r.kappa = std::stoi(cells[c_kappa]);
      r.k_policy = cells[c_policy];
      r.N = std::stoll(cells[c_n]);
      r.trial = std::stoi(cells[c_trial]);
      r.seed = std::stoull(cells[c_seed]);
      r.fe = std::stod(cells[c_fe]);
      r.ie = std::stod(cells[c_ie]);
      r.inf_norm_inv = std::stod(cells[c_inv]);
      r.mean_k = std::stod(cells[c_k]);
      r.max_gamma_fail = std::stod(cells[c_gamma]);
      r.wall_time_s = std::stod(cells[c_time]);
      records.push_back(r);
    } catch (const std::logic_error&) {
      throw ConfigError("convergence.csv:" + std::to_string(line_no) + ": malformed number");
    }
  }
  return records;
}

}  // namespace grbf
