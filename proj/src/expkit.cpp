#include "icsmdp/expkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "icsmdp/diagnostics.hpp"
#include "icsmdp/rng.hpp"

#include "expkit_internal.hpp"

namespace icsmdp {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) os << ' ';
    os << xs[i];
  }
  return os.str();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

const std::set<std::string>& protocol_keys() {
  static const std::set<std::string> keys = {
      "gap_epochs",  "mix_budget", "mix_starts",     "mix_rollouts", "mix_epochs",
      "mix_eps",     "ref_budget", "tolerance",      "eval_stream",
      "trivial_samples"};
  return keys;
}

}  // namespace

const std::vector<std::string>& known_experiments() {
  static const std::vector<std::string> ids = {
      "t1-ais-gap", "t2-sample-budget", "t2-mixing", "t2-retention",
      "routing",    "cpu",              "oracle-check"};
  return ids;
}

void ExperimentConfig::validate() const {
  const auto& ids = known_experiments();
  if (std::find(ids.begin(), ids.end(), experiment) == ids.end())
    throw std::invalid_argument("ExperimentConfig: unknown experiment id '" + experiment + "'");
  if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: seeds must be nonempty");
  std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
  if (uniq.size() != seeds.size())
    throw std::invalid_argument("ExperimentConfig: duplicate seeds");
  if (axis.name.empty()) throw std::invalid_argument("ExperimentConfig: axis name missing");
  if (axis.values.empty()) throw std::invalid_argument("ExperimentConfig: axis grid empty");
  if (eval_episodes < 1)
    throw std::invalid_argument("ExperimentConfig: eval_episodes must be >= 1");
  for (const auto& [k, v] : protocol) {
    (void)v;
    if (!protocol_keys().count(k))
      throw std::invalid_argument("ExperimentConfig: unknown experiment key '" + k + "'");
  }
  if (experiment != "routing") detail::axis_numeric(axis);  // numeric grids only
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  os << "experiment=" << experiment << '\n';
  os << "eval_episodes=" << eval_episodes << '\n';
  os << "seeds=" << join(seeds) << '\n';
  os << "axis.name=" << axis.name << '\n';
  os << "axis.grid=" << join(axis.values) << '\n';
  for (const auto& [k, v] : protocol) os << "protocol." << k << '=' << v << '\n';
  for (const auto& [k, v] : env) os << "env." << k << '=' << v << '\n';
  for (const auto& [k, v] : learner) os << "learner." << k << '=' << v << '\n';
  return os.str();
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  bool saw_experiment = false, saw_axis = false;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const std::string where = " (line " + std::to_string(line_no) + ")";
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("config: malformed section header" + where);
      section = trim(t.substr(1, t.size() - 2));
      if (section != "experiment" && section != "axis" && section != "env" &&
          section != "learner")
        throw std::invalid_argument("config: unknown section [" + section + "]" + where);
      if (section == "experiment") saw_experiment = true;
      if (section == "axis") saw_axis = true;
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected 'key = value'" + where);
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config: empty key" + where);
    if (section.empty())
      throw std::invalid_argument("config: key before any section" + where);
    if (section == "experiment") {
      if (key == "id") {
        cfg.experiment = value;
      } else if (key == "seeds") {
        cfg.seeds.clear();
        for (const auto& tok : split_ws(value))
          cfg.seeds.push_back(
              static_cast<std::uint64_t>(detail::to_int(tok, "seed" + where)));
      } else if (key == "output_dir") {
        cfg.output_dir = value;
      } else if (key == "eval_episodes") {
        cfg.eval_episodes = static_cast<int>(detail::to_int(value, key + where));
      } else if (protocol_keys().count(key)) {
        cfg.protocol[key] = value;
      } else {
        throw std::invalid_argument("config: unknown experiment key '" + key + "'" + where);
      }
    } else if (section == "axis") {
      if (key == "name") cfg.axis.name = value;
      else if (key == "grid") cfg.axis.values = split_ws(value);
      else throw std::invalid_argument("config: unknown axis key '" + key + "'" + where);
    } else if (section == "env") {
      cfg.env[key] = value;
    } else {
      cfg.learner[key] = value;
    }
  }
  if (!saw_experiment) throw std::invalid_argument("config: missing [experiment] section");
  if (!saw_axis) throw std::invalid_argument("config: missing [axis] section");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream body;
  body << in.rdbuf();
  return parse_config_text(body.str());
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = hash_str(cfg.canonical() + "|" + kCodeVersion);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

std::string run_record_csv_header() {
  return "experiment,axis_name,axis_label,axis_value,seed,error,gap_v,alpha_hat,"
         "t_mix,accuracy,aux_metric,epochs_used,wall_seconds,config_hash,flagged";
}

std::string to_csv_row(const RunRecord& r) {
  std::ostringstream os;
  os << r.experiment << ',' << r.axis_name << ',' << r.axis_label << ','
     << fmt_double(r.axis_value) << ',' << r.seed << ',' << fmt_double(r.error) << ','
     << fmt_double(r.gap_v) << ',' << fmt_double(r.alpha_hat) << ','
     << fmt_double(r.t_mix) << ',' << fmt_double(r.accuracy) << ','
     << fmt_double(r.aux_metric) << ',' << r.epochs_used << ','
     << fmt_double(r.wall_seconds) << ',' << r.hash << ',' << (r.flagged ? 1 : 0);
  return os.str();
}

std::vector<RunRecord> read_run_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open run csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("run csv is empty: " + path);
  if (trim(line) != run_record_csv_header())
    throw std::runtime_error("run csv has an unexpected header: " + path);
  std::vector<RunRecord> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 15)
      throw std::runtime_error("run csv line " + std::to_string(line_no) +
                               ": expected 15 fields, got " + std::to_string(f.size()));
    const std::string where = "run csv line " + std::to_string(line_no);
    RunRecord r;
    r.experiment = f[0];
    r.axis_name = f[1];
    r.axis_label = f[2];
    r.axis_value = detail::to_num(f[3], where);
    r.seed = static_cast<std::uint64_t>(detail::to_int(f[4], where));
    r.error = detail::to_num(f[5], where);
    r.gap_v = detail::to_num(f[6], where);
    r.alpha_hat = detail::to_num(f[7], where);
    r.t_mix = detail::to_num(f[8], where);
    r.accuracy = detail::to_num(f[9], where);
    r.aux_metric = detail::to_num(f[10], where);
    r.epochs_used = detail::to_int(f[11], where);
    r.wall_seconds = detail::to_num(f[12], where);
    r.hash = f[13];
    r.flagged = detail::to_int(f[14], where) != 0;
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_run_csv(const std::string& path, const std::vector<RunRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write run csv: " + path);
  out << run_record_csv_header() << '\n';
  for (const auto& r : rows) out << to_csv_row(r) << '\n';
}

// ---------------------------------------------------------------------------

namespace detail {

double to_num(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  if (t.empty()) throw std::invalid_argument(what + ": empty number");
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw std::invalid_argument(what + ": not a number: '" + s + "'");
  return v;
}

long long to_int(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  if (t.empty()) throw std::invalid_argument(what + ": empty integer");
  char* end = nullptr;
  long long v = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size())
    throw std::invalid_argument(what + ": not an integer: '" + s + "'");
  return v;
}

double map_num(const KvMap& m, const std::string& key, double fallback) {
  auto it = m.find(key);
  return it == m.end() ? fallback : to_num(it->second, key);
}

long long map_int(const KvMap& m, const std::string& key, long long fallback) {
  auto it = m.find(key);
  return it == m.end() ? fallback : to_int(it->second, key);
}

std::string map_str(const KvMap& m, const std::string& key, const std::string& fallback) {
  auto it = m.find(key);
  return it == m.end() ? fallback : it->second;
}

bool map_flag(const KvMap& m, const std::string& key, bool fallback) {
  auto it = m.find(key);
  if (it == m.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument(key + ": expected a boolean, got '" + v + "'");
}

std::vector<double> axis_numeric(const SweepAxis& axis) {
  std::vector<double> out;
  out.reserve(axis.values.size());
  for (const auto& v : axis.values) out.push_back(to_num(v, "axis '" + axis.name + "'"));
  return out;
}

LearnerConfig learner_from_map(const KvMap& m) {
  static const std::set<std::string> known = {
      "backend",    "schedule",   "eta0",        "k0",         "constant_eta",
      "nu",         "lambda0",    "eps0",        "eps_floor",  "eps_decay",
      "budget_epochs", "adaptable", "alpha_bootstrap", "mlp_hidden", "grad_clip",
      "q_init"};
  for (const auto& [k, v] : m) {
    (void)v;
    if (!known.count(k))
      throw std::invalid_argument("learner config: unknown key '" + k + "'");
  }
  LearnerConfig lc;
  const std::string backend = map_str(m, "backend", "tabular");
  if (backend == "tabular") lc.backend = LearnerConfig::Backend::kTabular;
  else if (backend == "mlp") lc.backend = LearnerConfig::Backend::kMlp;
  else throw std::invalid_argument("learner config: unknown backend '" + backend + "'");
  const std::string schedule = map_str(m, "schedule", "default");
  if (schedule == "default") lc.schedule = LearnerConfig::StepSchedule::kDefault;
  else if (schedule == "theorem") lc.schedule = LearnerConfig::StepSchedule::kTheorem;
  else if (schedule == "constant") lc.schedule = LearnerConfig::StepSchedule::kConstant;
  else throw std::invalid_argument("learner config: unknown schedule '" + schedule + "'");
  lc.eta0 = map_num(m, "eta0", lc.eta0);
  lc.k0 = map_num(m, "k0", lc.k0);
  lc.constant_eta = map_num(m, "constant_eta", lc.constant_eta);
  lc.nu = map_num(m, "nu", lc.nu);
  lc.lambda0 = map_num(m, "lambda0", lc.lambda0);
  lc.eps0 = map_num(m, "eps0", lc.eps0);
  lc.eps_floor = map_num(m, "eps_floor", lc.eps_floor);
  lc.eps_decay = map_num(m, "eps_decay", lc.eps_decay);
  lc.budget_epochs = map_int(m, "budget_epochs", lc.budget_epochs);
  lc.adaptable = map_flag(m, "adaptable", lc.adaptable);
  lc.alpha_bootstrap = map_flag(m, "alpha_bootstrap", lc.alpha_bootstrap);
  lc.grad_clip = map_num(m, "grad_clip", lc.grad_clip);
  lc.q_init = map_num(m, "q_init", lc.q_init);
  if (m.count("mlp_hidden")) {
    lc.mlp_hidden.clear();
    for (const auto& tok : split_ws(m.at("mlp_hidden")))
      lc.mlp_hidden.push_back(static_cast<int>(to_int(tok, "mlp_hidden")));
  }
  return lc;
}

void for_each_cell(int n_cells, const std::function<void(int)>& body) {
  int workers = std::min(worker_count(), n_cells);
  if (workers <= 1) {
    for (int i = 0; i < n_cells; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n_cells; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr out;
  out.n = static_cast<int>(xs.size());
  if (xs.empty()) {
    out.mean = std::nan("");
    out.stderr_ = std::nan("");
    return out;
  }
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / out.n;
  if (out.n < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.stderr_ = std::sqrt(ss / (out.n - 1) / out.n);
  return out;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::domain_error("ls_slope: need two or more paired points");
  MeanStderr mx = mean_stderr(x), my = mean_stderr(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx.mean) * (y[i] - my.mean);
    sxx += (x[i] - mx.mean) * (x[i] - mx.mean);
  }
  if (sxx == 0.0) throw std::domain_error("ls_slope: x has zero variance");
  return sxy / sxx;
}

namespace {

struct PointStats {
  std::string label;
  double value = 0.0;
  std::vector<double> error, gap, alpha, tmix, accuracy, aux;
  int n_flagged = 0;
};

std::vector<PointStats> group_points(const std::vector<RunRecord>& rows) {
  std::vector<PointStats> points;
  for (const auto& r : rows) {
    auto it = std::find_if(points.begin(), points.end(),
                           [&](const PointStats& p) { return p.label == r.axis_label; });
    if (it == points.end()) {
      points.push_back({});
      it = std::prev(points.end());
      it->label = r.axis_label;
      it->value = r.axis_value;
    }
    if (r.flagged) {
      ++it->n_flagged;
      continue;
    }
    it->error.push_back(r.error);
    it->gap.push_back(r.gap_v);
    it->alpha.push_back(r.alpha_hat);
    it->tmix.push_back(r.t_mix);
    it->accuracy.push_back(r.accuracy);
    it->aux.push_back(r.aux_metric);
  }
  return points;
}

nlohmann::json num_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

nlohmann::json corr_or_null(double (*corr)(const std::vector<double>&,
                                           const std::vector<double>&),
                            const std::vector<double>& x, const std::vector<double>& y) {
  try {
    return (*corr)(x, y);
  } catch (const std::domain_error&) {
    return nullptr;
  }
}

}  // namespace

nlohmann::json build_summary(const std::vector<RunRecord>& rows) {
  if (rows.empty()) throw std::runtime_error("build_summary: no rows");
  const std::string experiment = rows.front().experiment;
  const std::string hash = rows.front().hash;
  for (const auto& r : rows) {
    if (r.experiment != experiment)
      throw std::runtime_error("build_summary: rows mix experiments");
    if (r.hash != hash) throw std::runtime_error("build_summary: rows mix config hashes");
  }
  auto points = group_points(rows);
  int n_flagged = 0;
  for (const auto& p : points) n_flagged += p.n_flagged;

  nlohmann::json out;
  out["experiment"] = experiment;
  out["config_hash"] = hash;
  out["axis"] = rows.front().axis_name;
  out["n_rows"] = rows.size();
  out["n_flagged"] = n_flagged;

  nlohmann::json jpoints = nlohmann::json::array();
  for (const auto& p : points) {
    auto e = mean_stderr(p.error);
    auto g = mean_stderr(p.gap);
    auto a = mean_stderr(p.alpha);
    auto t = mean_stderr(p.tmix);
    auto acc = mean_stderr(p.accuracy);
    auto aux = mean_stderr(p.aux);
    jpoints.push_back({{"label", p.label},
                       {"value", p.value},
                       {"n", e.n},
                       {"n_flagged", p.n_flagged},
                       {"error_mean", num_or_null(e.mean)},
                       {"error_stderr", num_or_null(e.stderr_)},
                       {"gap_mean", num_or_null(g.mean)},
                       {"gap_stderr", num_or_null(g.stderr_)},
                       {"alpha_mean", num_or_null(a.mean)},
                       {"tmix_mean", num_or_null(t.mean)},
                       {"accuracy_mean", num_or_null(acc.mean)},
                       {"aux_mean", num_or_null(aux.mean)}});
  }
  out["points"] = jpoints;

  // Per-point seed averages with at least one usable row.
  std::vector<double> values, errors, gaps, alphas, tmixs, accs;
  for (const auto& p : points) {
    if (p.error.empty()) continue;
    values.push_back(p.value);
    errors.push_back(mean_stderr(p.error).mean);
    gaps.push_back(mean_stderr(p.gap).mean);
    alphas.push_back(mean_stderr(p.alpha).mean);
    tmixs.push_back(mean_stderr(p.tmix).mean);
    accs.push_back(mean_stderr(p.accuracy).mean);
  }

  if (experiment == "t1-ais-gap") {
    out["pearson_gap_alpha"] = corr_or_null(&pearson, gaps, alphas);
    out["n_points_used"] = values.size();
  } else if (experiment == "t2-sample-budget") {
    if (values.size() >= 2) {
      auto lo = std::min_element(values.begin(), values.end()) - values.begin();
      auto hi = std::max_element(values.begin(), values.end()) - values.begin();
      out["error_at_min_budget"] = errors[lo];
      out["error_at_max_budget"] = errors[hi];
      out["improves_with_budget"] = errors[hi] < errors[lo];
      double floor = *std::min_element(errors.begin(), errors.end());
      out["floor"] = floor;
      std::vector<double> lx, ly, rx, ry;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (errors[i] - floor > 1e-12) {
          lx.push_back(std::log(values[i]));
          ly.push_back(std::log(errors[i] - floor));
        }
        if (errors[i] > 0.0) {
          rx.push_back(std::log(values[i]));
          ry.push_back(std::log(errors[i]));
        }
      }
      out["slope_excess"] =
          lx.size() >= 2 ? nlohmann::json(ls_slope(lx, ly)) : nlohmann::json(nullptr);
      out["slope_raw"] =
          rx.size() >= 2 ? nlohmann::json(ls_slope(rx, ry)) : nlohmann::json(nullptr);
    }
  } else if (experiment == "t2-retention") {
    out["spearman_floor_alpha"] = corr_or_null(&spearman, errors, alphas);
    if (values.size() >= 2) {
      auto lo = std::min_element(values.begin(), values.end()) - values.begin();
      auto hi = std::max_element(values.begin(), values.end()) - values.begin();
      out["floor_at_min_retention"] = errors[lo];
      out["floor_at_max_retention"] = errors[hi];
      out["retention_ordering"] = errors[lo] > errors[hi];
    }
  } else if (experiment == "t2-mixing") {
    out["spearman_axis_tmix"] = corr_or_null(&spearman, values, tmixs);
    out["spearman_tmix_error"] = corr_or_null(&spearman, tmixs, errors);
  } else if (experiment == "routing") {
    double min_acc = 1.0, min_aux = 1.0;
    for (std::size_t i = 0; i < accs.size(); ++i) min_acc = std::min(min_acc, accs[i]);
    for (const auto& p : points)
      if (!p.aux.empty()) min_aux = std::min(min_aux, mean_stderr(p.aux).mean);
    out["min_accuracy"] = accs.empty() ? nlohmann::json(nullptr) : nlohmann::json(min_acc);
    out["min_shortest_fraction"] =
        accs.empty() ? nlohmann::json(nullptr) : nlohmann::json(min_aux);
    out["all_delivered"] = !accs.empty() && min_acc >= 1.0;
  } else if (experiment == "cpu") {
    nlohmann::json holdout = nullptr;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (values[i] < 1.0) holdout = accs[i];
    out["holdout_accuracy_mean"] = holdout;
    out["mean_accuracy"] =
        accs.empty() ? nlohmann::json(nullptr)
                     : nlohmann::json(mean_stderr(accs).mean);
  } else if (experiment == "oracle-check") {
    double max_error = 0.0;
    for (const auto& r : rows) max_error = std::max(max_error, r.error);
    out["max_error"] = max_error;
    out["n_failures"] = n_flagged;
    out["pass"] = n_flagged == 0;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

nlohmann::json summarize_rows(const std::vector<RunRecord>& rows) {
  return detail::build_summary(rows);
}

void persist_result(const std::string& dir, const ExperimentResult& result) {
  std::filesystem::create_directories(dir);
  write_run_csv(dir + "/runs.csv", result.rows);
  std::ofstream out(dir + "/summary.json");
  if (!out) throw std::runtime_error("cannot write summary: " + dir + "/summary.json");
  out << result.summary.dump(2) << '\n';
}

PlotSeries plot_data(const std::vector<RunRecord>& rows, const std::string& figure) {
  if (rows.empty()) throw std::runtime_error("plot_data: no rows");
  PlotSeries series;
  struct Point {
    std::string label;
    double value;
    std::vector<double> y, x_aux;
  };
  std::vector<Point> points;
  auto metric = [&](const RunRecord& r) -> double {
    if (figure == "error") return r.error;
    if (figure == "accuracy") return r.accuracy;
    if (figure == "tmix") return r.t_mix;
    if (figure == "t1-scatter") return r.gap_v;
    throw std::invalid_argument(
        "plot_data: unknown figure '" + figure +
        "' (available: error, accuracy, tmix, t1-scatter)");
  };
  for (const auto& r : rows) {
    auto it = std::find_if(points.begin(), points.end(),
                           [&](const Point& p) { return p.label == r.axis_label; });
    if (it == points.end()) {
      points.push_back({r.axis_label, r.axis_value, {}, {}});
      it = std::prev(points.end());
    }
    if (r.flagged) continue;
    it->y.push_back(metric(r));
    it->x_aux.push_back(r.alpha_hat);
  }
  for (const auto& p : points) {
    if (p.y.empty()) continue;
    auto stats = detail::mean_stderr(p.y);
    series.label.push_back(p.label);
    series.x.push_back(figure == "t1-scatter" ? detail::mean_stderr(p.x_aux).mean
                                              : p.value);
    series.y.push_back(stats.mean);
    series.y_stderr.push_back(stats.stderr_);
  }
  return series;
}

std::string plot_csv(const PlotSeries& series) {
  std::ostringstream os;
  os << "label,x,y,y_stderr\n";
  for (std::size_t i = 0; i < series.x.size(); ++i)
    os << series.label[i] << ',' << fmt_double(series.x[i]) << ','
       << fmt_double(series.y[i]) << ',' << fmt_double(series.y_stderr[i]) << '\n';
  return os.str();
}

int worker_count() {
  const char* env = std::getenv("ICQ_WORKERS");
  if (!env) return 1;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) return 1;
  return static_cast<int>(v);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.experiment == "t1-ais-gap") return run_t1(cfg);
  if (cfg.experiment == "t2-sample-budget" || cfg.experiment == "t2-mixing" ||
      cfg.experiment == "t2-retention")
    return run_t2(cfg);
  if (cfg.experiment == "routing") return run_routing(cfg);
  if (cfg.experiment == "cpu") return run_cpu(cfg);
  return run_oracle_check(cfg);
}

}  // namespace icsmdp
