#include "mfff/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "mfff/agepde.hpp"
#include "mfff/branching.hpp"
#include "mfff/charcurves.hpp"
#include "mfff/error.hpp"
#include "mfff/ffode.hpp"
#include "mfff/measure.hpp"
#include "mfff/simulate.hpp"
#include "mfff/spectral.hpp"

namespace mfff::cli {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& lines) {
  std::string s = "invalid configuration:";
  for (const auto& l : lines) s += "\n  " + l;
  return s;
}

// ---------------------------------------------------------------- schema

enum class Kind { Number, Integer, Boolean, String, NumberList, NumberOrNull, NumberListOrNull };

struct Field {
  const char* key;
  Kind kind;
  json def;
};

using Block = std::vector<Field>;

const std::map<std::string, Block>& block_schemas() {
  static const std::map<std::string, Block> s = {
      {"spectral", {{"band", Kind::Number, 5e-3}, {"tol", Kind::Number, 1e-12}}},
      {"tree",
       {{"replicas", Kind::Integer, 100000}, {"K", Kind::Integer, 20}, {"method", Kind::String, "monte_carlo"}}},
      {"ode",
       {{"model", Kind::String, "forest_fire"},
        {"K", Kind::Integer, 4000},
        {"dt", Kind::Number, 1e-3},
        {"T", Kind::NumberOrNull, nullptr},
        {"tail_policy", Kind::String, "sqrt_extrapolate"},
        {"store_every", Kind::Integer, 10},
        {"K_out", Kind::Integer, 50},
        {"v0", Kind::NumberListOrNull, nullptr},
        {"v0_K", Kind::Integer, 200}}},
      {"charcurve",
       {{"t", Kind::Number, 2.0}, {"ds", Kind::Number, 1e-3}, {"delta", Kind::Number, 1e-3},
        {"theta", Kind::Boolean, true}}},
      {"agepde",
       {{"T", Kind::NumberOrNull, nullptr},
        {"dt", Kind::Number, 1e-3},
        {"band", Kind::Number, 5e-3},
        {"prune_every", Kind::Integer, 100},
        {"prune_threshold", Kind::Number, 1e-12}}},
      {"simulation",
       {{"n", Kind::Integer, 1000},
        {"lambda", Kind::NumberOrNull, nullptr},
        {"T", Kind::NumberOrNull, nullptr},
        {"mode", Kind::String, "partition"},
        {"replicas", Kind::Integer, 1},
        {"K_out", Kind::Integer, 50}}},
      {"tolerances",
       {{"levy_sim_age", Kind::Number, 0.05},
        {"levy_age_char", Kind::Number, 0.02},
        {"l1_sim_ode", Kind::Number, 0.05},
        {"phi_gap", Kind::Number, 0.05}}},
  };
  return s;
}

struct CommandSpec {
  std::vector<std::string> blocks;
  json measure;
  std::vector<double> snapshot_times;
  json overrides = json::object();  // command-specific defaults, same shape as blocks
};

const std::map<std::string, CommandSpec>& command_specs() {
  static const std::map<std::string, CommandSpec> s = {
      {"spectral", {{"spectral"}, {{"type", "sech2"}}, {}}},
      {"tree", {{"tree"}, {{"type", "dirac"}, {"x", 1.0}}, {}}},
      {"ode", {{"ode"}, {{"type", "dirac"}, {"x", 0.0}}, {}}},
      {"charcurve", {{"ode", "charcurve"}, {{"type", "dirac"}, {"x", 0.0}}, {}, {{"ode", {{"K", 1000}}}}}},
      {"agepde", {{"agepde"}, {{"type", "dirac"}, {"x", 0.0}}, {0.0, 0.5, 1.0, 1.5, 2.0, 2.5}}},
      {"simulate", {{"simulation"}, {{"type", "dirac"}, {"x", 0.0}}, {}}},
      {"consistency-loop",
       {{"ode", "charcurve", "agepde", "simulation", "tolerances"},
        {{"type", "dirac"}, {"x", 0.0}},
        {0.5, 1.5, 2.5},
        {{"simulation", {{"n", 100000}, {"replicas", 10}}}}}},
  };
  return s;
}

bool matches(Kind k, const json& v) {
  switch (k) {
    case Kind::Number:
      return v.is_number();
    case Kind::Integer:
      return v.is_number_integer();
    case Kind::Boolean:
      return v.is_boolean();
    case Kind::String:
      return v.is_string();
    case Kind::NumberList:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
    case Kind::NumberOrNull:
      return v.is_null() || v.is_number();
    case Kind::NumberListOrNull:
      return v.is_null() || matches(Kind::NumberList, v);
  }
  return false;
}

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::Number:
      return "a number";
    case Kind::Integer:
      return "an integer";
    case Kind::Boolean:
      return "a boolean";
    case Kind::String:
      return "a string";
    case Kind::NumberList:
      return "a list of numbers";
    case Kind::NumberOrNull:
      return "a number or null";
    case Kind::NumberListOrNull:
      return "a list of numbers or null";
  }
  return "?";
}

// semantic checks on filled-in blocks
void check_values(const std::string& name, const json& b, std::vector<std::string>& problems) {
  auto positive = [&](const char* key) {
    if (b.contains(key) && b[key].is_number() && !(b[key].get<double>() > 0.0))
      problems.push_back(name + "." + key + ": must be > 0");
  };
  auto one_of = [&](const char* key, std::initializer_list<const char*> allowed) {
    if (!b.contains(key) || !b[key].is_string()) return;
    const auto v = b[key].get<std::string>();
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return v == a; })) {
      std::string list;
      for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
      problems.push_back(name + "." + key + ": '" + v + "' is not one of " + list);
    }
  };
  for (const char* key : {"band", "tol", "replicas", "K", "dt", "store_every", "K_out", "v0_K", "ds", "delta",
                          "prune_every", "n"})
    positive(key);
  if (b.contains("T") && b["T"].is_number() && b["T"].get<double>() < 0.0) problems.push_back(name + ".T: must be >= 0");
  if (name == "charcurve") positive("t");
  if (name == "tree") one_of("method", {"monte_carlo", "closed_form"});
  if (name == "ode") {
    one_of("model", {"flory", "smoluchowski", "forest_fire"});
    one_of("tail_policy", {"absorb", "sqrt_extrapolate"});
  }
  if (name == "simulation") {
    one_of("mode", {"partition", "full"});
    if (b["lambda"].is_number() && b["lambda"].get<double>() < 0.0)
      problems.push_back("simulation.lambda: must be >= 0 (null: n^{-1/2})");
  }
  if (name == "tolerances")
    for (const auto& [k, v] : b.items())
      if (v.is_number() && v.get<double>() < 0.0) problems.push_back("tolerances." + k + ": must be >= 0");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// ---------------------------------------------------------------- outputs

class Writer {
 public:
  Writer(const ExperimentConfig& cfg, std::string command) : cfg_(cfg), command_(std::move(command)) {
    std::filesystem::create_directories(cfg_.out_dir);
  }

  void file(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const auto path = std::filesystem::path(cfg_.out_dir) / name;
    {
      std::ofstream os(path, std::ios::binary);
      if (!os) throw InvalidArgument("cannot write " + path.string());
      body(os);
    }
    std::ofstream meta(path.string() + ".meta.json", std::ios::binary);
    meta << json{{"file", name},
                 {"command", command_},
                 {"version", kVersion},
                 {"seed", cfg_.seed},
                 {"config_hash", cfg_.hash()},
                 {"config", cfg_.resolved()},
                 {"created", timestamp()}}
                .dump(2)
         << '\n';
  }

  void json_file(const std::string& name, const json& j) {
    file(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }

 private:
  const ExperimentConfig& cfg_;
  std::string command_;
};

int worker_count(const ExperimentConfig& cfg) { return cfg.workers > 0 ? cfg.workers : omp_get_max_threads(); }

DiscreteMeasure initial_measure(const ExperimentConfig& cfg) {
  return discretize(measure_spec_from_json(cfg.measure), cfg.nodes);
}

double max_time(const std::vector<double>& ts, double fallback) {
  return ts.empty() ? fallback : *std::max_element(ts.begin(), ts.end());
}

// Runs body(r) for r = 0..R-1 on `workers` threads; rethrows the first error.
void parallel_replicas(int R, int workers, const std::function<void(int)>& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(R));
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (int r = 0; r < R; ++r) {
    try {
      body(r);
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------- commands

std::vector<double> initial_densities(const ExperimentConfig& cfg, const DiscreteMeasure& pi0) {
  const auto& b = cfg.blocks.at("ode");
  if (!b["v0"].is_null()) return b["v0"].get<std::vector<double>>();
  if (moment(pi0, 1) == 0.0) return {1.0};
  return progeny_law(pi0, b["v0_K"].get<int>(), SmallKClosedForm{}).v;
}

Trajectory solve_ode(const ExperimentConfig& cfg, const DiscreteMeasure& pi0, double T, std::ostream& log) {
  const auto& b = cfg.blocks.at("ode");
  SolverConfig sc;
  sc.K = b["K"].get<int>();
  sc.dt = b["dt"].get<double>();
  sc.tail_policy = tail_policy_from_string(b["tail_policy"].get<std::string>());
  sc.store_every = b["store_every"].get<int>();
  log << "ode: K = " << sc.K << ", T = " << T << '\n';
  return solve(model_from_string(b["model"].get<std::string>()), initial_densities(cfg, pi0), T, sc);
}

double phi_integral(const Trajectory& tr, double a, double b) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < tr.times.size(); ++i) {
    const double lo = std::max(a, tr.times[i]), hi = std::min(b, tr.times[i + 1]);
    if (hi <= lo) continue;
    s += (hi - lo) * 0.5 * (tr.phi_at(lo) + tr.phi_at(hi));
  }
  return s;
}

int cmd_spectral(const ExperimentConfig& cfg, std::ostream& log) {
  const auto& b = cfg.blocks.at("spectral");
  const auto pi = initial_measure(cfg);
  EigenOptions eo;
  eo.tol = b["tol"].get<double>();
  const auto eig = leading_eigenpair(pi, eo);
  const auto cls = classify(pi, eig, b["band"].get<double>());
  const double phi = phi_from_theta(pi, eig.theta);
  auto summary = eigenpair_header(eig);
  summary["classification"] = to_string(cls.tag);
  summary["certificate"] = cls.certificate;
  summary["phi"] = phi;
  summary["band"] = cls.band;
  summary["atoms"] = pi.size();
  Writer w(cfg, "spectral");
  w.file("eigenpair.csv", [&](std::ostream& os) { write_eigenpair_csv(os, pi, eig); });
  w.json_file("summary.json", summary);
  log << "lambda = " << format_double(eig.lambda) << ", " << to_string(cls.tag) << ", phi = " << format_double(phi)
      << '\n';
  return kPass;
}

int cmd_tree(const ExperimentConfig& cfg, std::ostream& log) {
  const auto& b = cfg.blocks.at("tree");
  const auto pi = initial_measure(cfg);
  const int K = b["K"].get<int>();
  omp_set_num_threads(worker_count(cfg));
  const auto law = b["method"] == "closed_form"
                       ? progeny_law(pi, K, SmallKClosedForm{})
                       : progeny_law(pi, K, MonteCarlo{b["replicas"].get<std::size_t>(), cfg.seed});
  json summary = {{"method", law.method},
                  {"samples", law.samples},
                  {"v", law.v},
                  {"std_err", law.std_err},
                  {"residual", law.residual}};
  if (moment(pi, 1) > 0.0 && classify(pi).tag == Criticality::Critical) {
    // 1 - E z^{|T|} ~ sqrt(2 phi) sqrt(1 - z) at criticality
    const double fit = sqrt_expansion_fit(pi).sqrt_2phi;
    const double expected = std::sqrt(2.0 * phi_from_theta(pi, leading_eigenpair(pi).theta));
    const double rel = std::abs(fit / expected - 1.0);
    summary["sqrt_expansion"] = {
        {"fit", fit}, {"expected", expected}, {"relative_error", rel}, {"tolerance", 0.02}, {"within", rel <= 0.02}};
  }
  Writer w(cfg, "tree");
  w.file("progeny.csv", [&](std::ostream& os) { write_csv(os, law); });
  w.json_file("summary.json", summary);
  log << "v_1 = " << format_double(law.v[0]) << '\n';
  return kPass;
}

int cmd_ode(const ExperimentConfig& cfg, std::ostream& log) {
  const auto& b = cfg.blocks.at("ode");
  const auto pi0 = initial_measure(cfg);
  const double T = b["T"].is_null() ? 3.0 : b["T"].get<double>();
  omp_set_num_threads(worker_count(cfg));
  const auto tr = solve_ode(cfg, pi0, T, log);
  double defect = 0.0;
  for (const auto& s : tr.states) defect = std::max(defect, std::abs(s.mass() - 1.0));
  auto summary = trajectory_summary(tr);
  summary["max_mass_defect"] = defect;
  Writer w(cfg, "ode");
  w.file("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, tr, b["K_out"].get<int>()); });
  w.json_file("summary.json", summary);
  log << "t_gel = " << format_double(tr.t_gel) << '\n';
  return kPass;
}

int cmd_charcurve(const ExperimentConfig& cfg, std::ostream& log) {
  const auto& b = cfg.blocks.at("charcurve");
  const auto pi0 = initial_measure(cfg);
  const double t = b["t"].get<double>();
  const double delta = b["delta"].get<double>();
  const double ds = b["ds"].get<double>();
  const auto& ob = cfg.blocks.at("ode");
  const double T = ob["T"].is_null() ? t + 2.0 * delta : ob["T"].get<double>();
  omp_set_num_threads(worker_count(cfg));
  const auto tr = solve_ode(cfg, pi0, T, log);
  const auto sol = solve_backward(tr, t, ds);
  const auto rp = reconstruct_pi(pi0, sol);
  json summary = {{"t", t},
                  {"t_gel", sol.t_gel},
                  {"psi_at_zero", sol.psi_at_zero},
                  {"consistency_error", consistency_error(sol, tr)},
                  {"mass_defect", rp.mass_defect},
                  {"burnt_mass", rp.burnt_mass},
                  {"surviving_mass", rp.surviving_mass}};
  Writer w(cfg, "charcurve");
  w.file("charcurve.csv", [&](std::ostream& os) { write_csv(os, sol); });
  w.file("pi.csv", [&](std::ostream& os) { write_csv(os, rp.pi); });
  if (!b["theta"].get<bool>()) {
    summary["theta"] = "skipped";
  } else if (tr.phi_at(t) < 1e-6 || t - delta <= tr.t_gel) {
    summary["theta"] = "skipped: no burning at t";
  } else {
    ThetaOptions to;
    to.delta = delta;
    to.ds = ds;
    const auto rt = reconstruct_theta(pi0, tr, t, to);
    const auto eig = leading_eigenpair(rt.pi);
    double gap = 0.0;
    for (std::size_t i = 0; i < rt.theta.size(); ++i) gap = std::max(gap, std::abs(rt.theta[i] - eig.theta[i]));
    summary["theta"] = {{"phi_t", rt.phi_t},
                        {"normalization", rt.normalization},
                        {"eigen_lambda", eig.lambda},
                        {"sup_gap_to_eigenfunction", gap}};
    w.file("theta.csv", [&](std::ostream& os) {
      os << "position,theta,eigenfunction\n";
      for (std::size_t i = 0; i < rt.theta.size(); ++i)
        os << format_double(rt.pi.positions()[i]) << ',' << format_double(rt.theta[i]) << ','
           << format_double(eig.theta[i]) << '\n';
    });
  }
  w.json_file("summary.json", summary);
  log << "psi_t(0) = " << format_double(sol.psi_at_zero) << '\n';
  return kPass;
}

AgeOptions age_options(const ExperimentConfig& cfg) {
  const auto& b = cfg.blocks.at("agepde");
  AgeOptions o;
  o.dt = b["dt"].get<double>();
  o.band = b["band"].get<double>();
  o.prune_every = b["prune_every"].get<int>();
  o.prune_threshold = b["prune_threshold"].get<double>();
  o.snapshot_times = cfg.snapshot_times;
  return o;
}

int cmd_agepde(const ExperimentConfig& cfg, std::ostream& log) {
  const auto& b = cfg.blocks.at("agepde");
  const double T = b["T"].is_null() ? max_time(cfg.snapshot_times, 2.5) : b["T"].get<double>();
  const auto tr = evolve(initial_measure(cfg), T, age_options(cfg));
  const double phi_max = tr.phi.empty() ? 0.0 : *std::max_element(tr.phi.begin(), tr.phi.end());
  json snaps = json::array();
  Writer w(cfg, "agepde");
  for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
    const auto& pi = tr.snapshots[i];
    snaps.push_back({{"t", tr.snapshot_times[i]}, {"mean_age", moment(pi, 1)}, {"atoms", pi.size()}});
    w.file("pi_t" + label(tr.snapshot_times[i]) + ".csv", [&](std::ostream& os) { write_csv(os, pi); });
  }
  w.file("agepde_summary.csv", [&](std::ostream& os) { write_summary_csv(os, tr); });
  w.json_file("summary.json", {{"T", T},
                               {"band", cfg.blocks.at("agepde")["band"]},
                               {"t_critical", tr.t_critical},
                               {"max_defect", tr.max_defect},
                               {"overshoot_steps", tr.overshoot_steps},
                               {"phi_max", phi_max},
                               {"snapshots", snaps}});
  log << "t_critical = " << format_double(tr.t_critical) << '\n';
  return kPass;
}

MfffConfig simulation_config(const ExperimentConfig& cfg, double T) {
  const auto& b = cfg.blocks.at("simulation");
  MfffConfig c;
  c.n = b["n"].get<int>();
  c.lambda = b["lambda"].is_null() ? -1.0 : b["lambda"].get<double>();
  c.init = measure_spec_from_json(cfg.measure);
  c.T = T;
  c.mode = b["mode"] == "full" ? IrgMode::FullGraph : IrgMode::PartitionOnly;
  c.snapshot_times = cfg.snapshot_times.empty() ? std::vector<double>{T} : cfg.snapshot_times;
  c.K_out = b["K_out"].get<int>();
  return c;
}

std::vector<MfffRun> run_replicas(const ExperimentConfig& cfg, const MfffConfig& c, std::ostream& log) {
  const int R = cfg.blocks.at("simulation")["replicas"].get<int>();
  log << "simulation: n = " << c.n << ", " << R << " replicas\n";
  std::vector<MfffRun> runs(static_cast<std::size_t>(R));
  parallel_replicas(R, worker_count(cfg), [&](int r) {
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(r));
    runs[static_cast<std::size_t>(r)] = run_mfff(c, rng);
  });
  return runs;
}

int cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
  const auto& b = cfg.blocks.at("simulation");
  const double T = b["T"].is_null() ? max_time(cfg.snapshot_times, 1.0) : b["T"].get<double>();
  const auto c = simulation_config(cfg, T);
  const auto runs = run_replicas(cfg, c, log);
  Writer w(cfg, "simulate");
  json reps = json::array();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto& run = runs[r];
    const std::string tag = "_r" + std::to_string(r);
    w.file("burnlog" + tag + ".csv", [&](std::ostream& os) { write_burnlog_csv(os, run.log); });
    json snaps = json::array();
    for (const auto& s : run.snapshots) {
      const std::string st = tag + "_t" + label(s.t);
      w.file("clusters" + st + ".csv", [&](std::ostream& os) { write_cluster_csv(os, s); });
      w.file("ages" + st + ".csv", [&](std::ostream& os) { write_csv(os, s.pi); });
      snaps.push_back({{"t", s.t}, {"Phi", s.Phi}, {"v_1", s.v.empty() ? 0.0 : s.v[0]}, {"mean_age", moment(s.pi, 1)}});
    }
    reps.push_back({{"replica", r},
                    {"lambda", run.lambda},
                    {"edge_events", run.edge_events},
                    {"lightning_events", run.lightning_events},
                    {"burns", run.log.events.size()},
                    {"snapshots", snaps}});
  }
  w.json_file("summary.json", {{"n", c.n}, {"T", T}, {"replicas", reps}});
  log << "wrote " << runs.size() << " replicas to " << cfg.out_dir << '\n';
  return kPass;
}

int cmd_consistency_loop(const ExperimentConfig& cfg, std::ostream& log) {
  const auto& tol = cfg.blocks.at("tolerances");
  const auto& cb = cfg.blocks.at("charcurve");
  const auto pi0 = initial_measure(cfg);
  const auto times = cfg.snapshot_times;
  if (times.empty()) throw InvalidArgument("consistency-loop: snapshot_times is empty");
  const double Tmax = max_time(times, 0.0);
  omp_set_num_threads(worker_count(cfg));
  const auto& ob = cfg.blocks.at("ode");
  const auto ode = solve_ode(cfg, pi0, ob["T"].is_null() ? Tmax + 0.01 : ob["T"].get<double>(), log);
  log << "agepde: T = " << Tmax << '\n';
  const auto age = evolve(pi0, Tmax, age_options(cfg));

  json gaps = json::array();
  bool pass = true;
  auto record = [&](const std::string& name, double t, double value) {
    const double limit = tol[name].get<double>();
    const bool ok = value <= limit;
    pass = pass && ok;
    gaps.push_back({{"name", name}, {"t", t}, {"value", value}, {"tolerance", limit}, {"status", ok ? "pass" : "fail"}});
    if (!ok) log << "FAIL " << name << " at t = " << t << ": " << format_double(value) << " > " << limit << '\n';
  };
  auto skip = [&](const std::string& name, double t) {
    gaps.push_back({{"name", name}, {"t", t}, {"value", nullptr}, {"tolerance", tol[name]}, {"status", "skipped"}});
  };

  for (double t : times) {
    const auto char_pi = reconstruct_pi(pi0, solve_backward(ode, t, cb["ds"].get<double>())).pi;
    record("levy_age_char", t, levy_distance(age.snapshot(t), char_pi));
  }

  const bool simulate = cfg.blocks.contains("simulation");
  if (simulate) {
    const auto c = simulation_config(cfg, Tmax);
    if (c.K_out < 50) throw InvalidArgument("consistency-loop: simulation.K_out must be >= 50");
    const auto runs = run_replicas(cfg, c, log);
    const double R = static_cast<double>(runs.size());
    double prev_t = 0.0, prev_Phi = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      // replicas pooled: mixture of the empirical age laws, averaged densities
      std::vector<double> pos, wts, v(50, 0.0);
      double Phi = 0.0;
      for (const auto& run : runs) {
        const auto& s = run.snapshots[i];
        pos.insert(pos.end(), s.pi.positions().begin(), s.pi.positions().end());
        for (double x : s.pi.weights()) wts.push_back(x / R);
        for (std::size_t k = 0; k < 50; ++k) v[k] += s.v[k] / R;
        Phi += s.Phi / R;
      }
      const double t = times[i];
      record("levy_sim_age", t, levy_distance(DiscreteMeasure(pos, wts), age.snapshot(t)));
      const auto vode = ode.v_at(t);
      double l1 = 0.0;
      for (std::size_t k = 0; k < 50; ++k) l1 += std::abs(v[k] - vode[k]);
      record("l1_sim_ode", t, l1);
      record("phi_gap", t, std::abs((Phi - prev_Phi) - phi_integral(ode, prev_t, t)));
      prev_t = t;
      prev_Phi = Phi;
    }
  } else {
    for (double t : times)
      for (const char* name : {"levy_sim_age", "l1_sim_ode", "phi_gap"}) skip(name, t);
  }

  Writer w(cfg, "consistency-loop");
  w.json_file("report.json", {{"times", times},
                              {"t_gel", ode.t_gel},
                              {"agepde_t_critical", age.t_critical},
                              {"simulation", simulate ? "run" : "skipped"},
                              {"gaps", gaps},
                              {"pass", pass}});
  log << (pass ? "consistency loop: pass" : "consistency loop: FAIL") << '\n';
  return pass ? kPass : kToleranceFailure;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

json ExperimentConfig::resolved() const {
  return {{"experiment", experiment}, {"measure", measure},  {"nodes", nodes},
          {"seed", seed},             {"blocks", blocks},   {"snapshot_times", snapshot_times}};
}

std::string ExperimentConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(resolved().dump());
  return os.str();
}

const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"spectral", "tree",     "ode",
                                             "charcurve", "agepde", "simulate",
                                             "consistency-loop"};
  return c;
}

ExperimentConfig load_config(const std::string& command, const std::optional<json>& file, const Overrides& flags) {
  const auto it = command_specs().find(command);
  if (it == command_specs().end()) throw ConfigError({"unknown command '" + command + "'"});
  const auto& spec = it->second;
  std::vector<std::string> problems;
  const json j = file.value_or(json::object());
  if (!j.is_object()) throw ConfigError({"config: top level must be an object"});

  ExperimentConfig cfg;
  cfg.experiment = command;
  cfg.measure = spec.measure;
  cfg.snapshot_times = spec.snapshot_times;

  for (const auto& [key, value] : j.items()) {
    if (key == "experiment") {
      if (value.is_string()) cfg.experiment = value.get<std::string>();
      else problems.push_back("experiment: must be a string");
    } else if (key == "measure") {
      try {
        measure_spec_from_json(value);
        cfg.measure = value;
      } catch (const InvalidArgument& e) {
        problems.push_back(e.what());
      } catch (const std::exception& e) {
        problems.push_back(std::string("measure: ") + e.what());
      }
    } else if (key == "nodes") {
      if (value.is_number_integer() && value.get<long>() > 0) cfg.nodes = value.get<int>();
      else problems.push_back("nodes: must be a positive integer");
    } else if (key == "seed") {
      if (value.is_number_integer() && value.get<long long>() >= 0) cfg.seed = value.get<std::uint64_t>();
      else problems.push_back("seed: must be a nonnegative integer");
    } else if (key == "out") {
      if (value.is_string()) cfg.out_dir = value.get<std::string>();
      else problems.push_back("out: must be a string");
    } else if (key == "workers") {
      if (value.is_number_integer() && value.get<long>() >= 0) cfg.workers = value.get<int>();
      else problems.push_back("workers: must be a nonnegative integer");
    } else if (key == "snapshot_times") {
      if (matches(Kind::NumberList, value)) cfg.snapshot_times = value.get<std::vector<double>>();
      else problems.push_back("snapshot_times: must be a list of numbers");
    } else if (std::find(spec.blocks.begin(), spec.blocks.end(), key) == spec.blocks.end()) {
      problems.push_back(key + ": unknown key for command '" + command + "'");
    } else if (!value.is_object()) {
      problems.push_back(key + ": must be an object");
    }
  }

  for (const auto& name : spec.blocks) {
    // an explicit config file may leave out the simulation block of the loop
    if (command == "consistency-loop" && name == "simulation" && file && !j.contains(name)) continue;
    json b = json::object();
    for (const auto& f : block_schemas().at(name)) b[f.key] = f.def;
    if (spec.overrides.contains(name))
      for (const auto& [k, v] : spec.overrides[name].items()) b[k] = v;
    if (j.contains(name) && j[name].is_object()) {
      for (const auto& [k, v] : j[name].items()) {
        const auto& schema = block_schemas().at(name);
        const auto f = std::find_if(schema.begin(), schema.end(), [&](const Field& x) { return k == x.key; });
        if (f == schema.end()) {
          problems.push_back(name + "." + k + ": unknown key");
        } else if (!matches(f->kind, v)) {
          problems.push_back(name + "." + k + ": must be " + kind_name(f->kind));
        } else {
          b[k] = v;
        }
      }
    }
    check_values(name, b, problems);
    cfg.blocks[name] = b;
  }

  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.out) cfg.out_dir = *flags.out;
  if (flags.workers) {
    if (*flags.workers < 0) problems.push_back("--workers: must be >= 0");
    cfg.workers = *flags.workers;
  }
  if (flags.snapshot_times) cfg.snapshot_times = *flags.snapshot_times;
  for (double t : cfg.snapshot_times)
    if (!(t >= 0.0) || !std::isfinite(t)) problems.push_back("snapshot_times: entries must be finite and >= 0");
  std::sort(cfg.snapshot_times.begin(), cfg.snapshot_times.end());

  if (!problems.empty()) throw ConfigError(problems);
  return cfg;
}

int run_command(const std::string& command, const ExperimentConfig& cfg, std::ostream& log) {
  static const std::map<std::string, int (*)(const ExperimentConfig&, std::ostream&)> table = {
      {"spectral", cmd_spectral}, {"tree", cmd_tree},         {"ode", cmd_ode},
      {"charcurve", cmd_charcurve}, {"agepde", cmd_agepde}, {"simulate", cmd_simulate},
      {"consistency-loop", cmd_consistency_loop}};
  try {
    return table.at(command)(cfg, log);
  } catch (const NumericalFailure& e) {
    log << "numerical failure: " << e.what() << " (value " << format_double(e.value()) << ")\n";
    return kNumericalFailure;
  } catch (const InvalidArgument& e) {
    log << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-field forest fire experiments", "mfff"};
  std::string command, config_path;
  std::uint64_t seed = 0;
  std::string out_dir;
  int workers = 0;
  std::vector<double> snaps;
  app.add_option("command", command, "Subcommand")->required()->check(CLI::IsMember(commands()));
  auto* o_config = app.add_option("--config", config_path, "JSON experiment config");
  auto* o_seed = app.add_option("--seed", seed, "Master seed");
  auto* o_out = app.add_option("--out", out_dir, "Output directory");
  auto* o_workers = app.add_option("--workers", workers, "Worker threads (0: all available)");
  auto* o_snaps = app.add_option("--snapshot-times", snaps, "Comma-separated snapshot times")->delimiter(',');
  app.set_version_flag("--version", kVersion);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kConfigError;
  }

  try {
    std::optional<json> file;
    if (*o_config) {
      std::ifstream is(config_path);
      if (!is) throw ConfigError({"--config: cannot open " + config_path});
      try {
        file = json::parse(is);
      } catch (const json::parse_error& e) {
        throw ConfigError({std::string("--config: ") + e.what()});
      }
    }
    Overrides flags;
    if (*o_seed) flags.seed = seed;
    if (*o_out) flags.out = out_dir;
    if (*o_workers) flags.workers = workers;
    if (*o_snaps) flags.snapshot_times = snaps;
    const auto cfg = load_config(command, file, flags);
    return run_command(command, cfg, out);
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kConfigError;
  }
}

}  // namespace mfff::cli
