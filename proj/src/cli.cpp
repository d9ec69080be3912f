#include "oniondos/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "oniondos/analytic.hpp"
#include "oniondos/attacker.hpp"
#include "oniondos/detect_exact.hpp"
#include "oniondos/detect_prob.hpp"
#include "oniondos/error.hpp"
#include "oniondos/network.hpp"
#include "oniondos/pathsel.hpp"
#include "oniondos/replay.hpp"
#include "oniondos/report.hpp"

#ifndef ONIONDOS_VERSION
#define ONIONDOS_VERSION "0.0.0"
#endif

namespace oniondos {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum class LogLevel { Quiet, Info, Debug };

LogLevel log_level_from_env() {
  const char* v = std::getenv("ONIONDOS_LOG");
  if (!v) return LogLevel::Info;
  const std::string s(v);
  if (s == "quiet") return LogLevel::Quiet;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

std::string render(double v) { return format_exact(v); }
std::string render(const std::string& v) { return v; }
template <typename T>
  requires std::is_integral_v<T>
std::string render(T v) {
  return std::to_string(v);
}

// A resolved command-line parameter, read back after parsing so the manifest
// records defaults as well as explicit values.
struct Param {
  std::string name;
  std::function<std::optional<std::string>()> value;
  bool flag = false;
  bool input = false;
};

struct Context {
  fs::path out_dir;
  ReportFormat format = ReportFormat::Csv;
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  LogLevel level = LogLevel::Info;
  std::ostream* err = nullptr;
  std::vector<std::string> outputs;

  void info(const std::string& msg) const {
    if (level != LogLevel::Quiet) *err << "oniondos: " << msg << '\n';
  }
  void debug(const std::string& msg) const {
    if (level == LogLevel::Debug) *err << "oniondos: " << msg << '\n';
  }

  fs::path output(const std::string& stem, const std::string& ext) {
    const fs::path p = out_dir / (stem + ext);
    outputs.push_back(p.string());
    return p;
  }
  void table(const std::string& stem, const ResultTable& t) { emit_report(output(stem, report_extension(format)), t, format); }
};

class Command {
 public:
  Command(CLI::App& app, const std::string& name, const std::string& help) : name_(name) {
    sub_ = app.add_subcommand(name, help);
    opt("--seed", seed_, "Random seed");
    opt("--jobs", jobs_, "Worker threads")->check(CLI::Range(1u, 1024u));
    opt("--out", out_, "Output directory");
    opt("--format", format_, "csv, json or gnuplot-data")->check(CLI::IsMember({"csv", "json", "gnuplot-data"}));
  }
  virtual ~Command() = default;

  CLI::App* app() const { return sub_; }
  const std::string& name() const { return name_; }
  const std::vector<Param>& params() const { return params_; }
  std::uint64_t seed() const { return seed_; }

  void execute(Context& ctx) {
    ctx.out_dir = out_;
    ctx.format = parse_report_format(format_);
    ctx.seed = seed_;
    ctx.jobs = jobs_;
    fs::create_directories(ctx.out_dir);
    run(ctx);
  }

 protected:
  virtual void run(Context& ctx) = 0;

  template <typename T>
  CLI::Option* opt(const std::string& name, T& var, const std::string& help) {
    CLI::Option* o = sub_->add_option(name, var, help);
    if constexpr (requires { var.has_value(); }) {
      params_.push_back({name, [&var]() -> std::optional<std::string> {
                           if (!var) return std::nullopt;
                           return render(*var);
                         }});
    } else {
      o->capture_default_str();
      params_.push_back({name, [&var]() -> std::optional<std::string> { return render(var); }});
    }
    return o;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& help) {
    CLI::Option* o = sub_->add_flag(name, var, help);
    params_.push_back({name, [&var]() -> std::optional<std::string> {
                         if (!var) return std::nullopt;
                         return std::string("true");
                       }, true});
    return o;
  }

  CLI::Option* input(const std::string& name, std::string& var, const std::string& help) {
    CLI::Option* o = sub_->add_option(name, var, help)->check(CLI::ExistingFile);
    params_.push_back({name, [&var]() -> std::optional<std::string> {
                         if (var.empty()) return std::nullopt;
                         return var;
                       }, false, true});
    return o;
  }

  CLI::App* sub_ = nullptr;

 private:
  std::string name_;
  std::vector<Param> params_;
  std::uint64_t seed_ = 1;
  unsigned jobs_ = 1;
  std::string out_ = ".";
  std::string format_ = "csv";
};

// Attacker options shared by the simulation and detection commands. A
// --config JSON supplies values that explicit flags override.
struct AttackerOptions {
  std::string config;
  double g = 0.10, e = 0.10, p_kill = 1.0, p_permit = 1.0;
  std::optional<double> p_kill_aware, p_kill_unaware;
  std::string strategy = "top-bandwidth";
  std::string context_mode = "none";
  CLI::Option *o_g = nullptr, *o_e = nullptr, *o_kill = nullptr, *o_permit = nullptr, *o_strategy = nullptr,
              *o_context = nullptr;

  AttackerSpec resolve() {
    AttackerSpec spec;
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw Error("cannot open attacker config: " + config);
      const AttackerSpec file = read_attacker_config(in);
      if (!o_g->count()) g = file.target_g;
      if (!o_e->count()) e = file.target_e;
      if (!o_kill->count()) p_kill = file.p_kill;
      if (!o_permit->count()) p_permit = file.p_permit;
      if (!p_kill_aware) p_kill_aware = file.p_kill_aware;
      if (!p_kill_unaware) p_kill_unaware = file.p_kill_unaware;
      if (!o_strategy->count()) strategy = to_string(file.strategy);
      if (!o_context->count()) context_mode = to_string(file.context_mode);
    }
    spec.target_g = g;
    spec.target_e = e;
    spec.p_kill = p_kill;
    spec.p_permit = p_permit;
    spec.p_kill_aware = p_kill_aware;
    spec.p_kill_unaware = p_kill_unaware;
    spec.strategy = parse_strategy(strategy);
    spec.context_mode = parse_context_mode(context_mode);
    spec.validate();
    return spec;
  }
};

class GenNetwork : public Command {
 public:
  explicit GenNetwork(CLI::App& app) : Command(app, "gen-network", "Generate a synthetic relay table") {
    input("--config", config_, "key=value generation config; explicit flags override it");
    bind("--n", &NetworkGenConfig::n, "Number of relays");
    bind("--gamma", &NetworkGenConfig::gamma, "Guard bandwidth fraction");
    bind("--eta", &NetworkGenConfig::eta, "Exit bandwidth fraction");
    bind("--zeta", &NetworkGenConfig::zeta, "Guard-exit bandwidth fraction");
    bind("--trial-count", &NetworkGenConfig::trial_count, "Trials recorded in the config");
    bind("--bw-median-gx", &NetworkGenConfig::bw_median_gx, "Median guard-exit bandwidth");
    bind("--bw-median-g0", &NetworkGenConfig::bw_median_g0, "Median guard-only bandwidth");
    bind("--bw-p90-gx", &NetworkGenConfig::bw_p90_gx, "90th percentile guard-exit bandwidth");
    bind("--bw-p90-g0", &NetworkGenConfig::bw_p90_g0, "90th percentile guard-only bandwidth");
    bind("--rel-mean", &NetworkGenConfig::rel_mean, "Mean reliability of healthy relays");
    bind("--presence-mean", &NetworkGenConfig::presence_mean, "Mean presence of healthy relays");
    bind("--flaky-fraction", &NetworkGenConfig::flaky_fraction, "Share of flaky relays");
    bind("--broken-fraction", &NetworkGenConfig::broken_fraction, "Share of broken relays");
    bind("--unhealthy-quantile", &NetworkGenConfig::unhealthy_quantile,
         "Unhealthy relays come from below this bandwidth quantile");
  }

 protected:
  void run(Context& ctx) override {
    if (!config_.empty()) {
      const NetworkGenConfig file = read_gen_config(fs::path(config_));
      for (auto& fill : fills_) fill(file);
    }
    const RelayTable table = generate_synthetic_network(cfg_, ctx.seed);
    write_relay_table(ctx.output("relays", ".csv"), table);
    const BandwidthSummary s = network_stats(table);
    ctx.info("generated " + std::to_string(table.size()) + " relays, gamma=" + format_number(s.gamma) +
             " eta=" + format_number(s.eta) + " zeta=" + format_number(s.zeta));
  }

 private:
  template <typename T>
  void bind(const std::string& name, T NetworkGenConfig::*field, const std::string& help) {
    CLI::Option* o = opt(name, cfg_.*field, help);
    fills_.push_back([this, o, field](const NetworkGenConfig& file) {
      if (!o->count()) cfg_.*field = file.*field;
    });
  }

  std::string config_;
  NetworkGenConfig cfg_;
  std::vector<std::function<void(const NetworkGenConfig&)>> fills_;
};

class GenTraces : public Command {
 public:
  explicit GenTraces(CLI::App& app) : Command(app, "gen-traces", "Generate lifecycle traces for a relay table") {
    input("--table", table_, "Relay table CSV")->required();
    opt("--trials", trials_, "Number of trials")->check(CLI::PositiveNumber);
  }

 protected:
  void run(Context& ctx) override {
    const RelayTable table = read_relay_table(fs::path(table_));
    const TraceSet traces = generate_lifecycle_traces(table, trials_, ctx.seed);
    write_traces(ctx.output("traces", ".csv"), traces);
    ctx.info("wrote " + std::to_string(trials_) + " trials for " + std::to_string(table.size()) + " relays");
  }

 private:
  std::string table_;
  std::size_t trials_ = 100;
};

class Stats : public Command {
 public:
  explicit Stats(CLI::App& app) : Command(app, "stats", "Bandwidth ratios and position weights") {
    input("--table", table_, "Relay table CSV")->required();
    input("--traces", traces_, "Restrict to the consensus of one trial");
    opt("--trial", trial_, "Trial index used with --traces");
  }

 protected:
  void run(Context& ctx) override {
    const RelayTable table = read_relay_table(fs::path(table_));
    BandwidthSummary s;
    std::size_t count = table.size();
    if (!traces_.empty()) {
      const TraceSet traces = read_traces(fs::path(traces_), table);
      if (trial_ >= traces.trial_count()) throw InvalidArgument("trial index out of range");
      const std::vector<bool> mask = traces.in_consensus(trial_);
      count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
      s = network_stats(table, mask);
    } else {
      s = network_stats(table);
    }
    const WeightSet w = compute_weights(s);
    ResultTable t{{"metric", "value"}, {}};
    t.add_row({"relays", std::to_string(count)});
    for (auto [name, v] : std::initializer_list<std::pair<const char*, double>>{
             {"G", s.G}, {"E", s.E}, {"T", s.T}, {"G0", s.G0}, {"E0", s.E0}, {"Z", s.Z},
             {"gamma", s.gamma}, {"eta", s.eta}, {"zeta", s.zeta}, {"gamma0", s.gamma0}, {"eta0", s.eta0},
             {"w_G0", w.w_G0}, {"w_E0", w.w_E0}, {"w_Z", w.w_Z}})
      t.add_row({name, format_number(v)});
    ctx.table("stats", t);
  }

 private:
  std::string table_, traces_;
  std::size_t trial_ = 0;
};

// Closed-form inputs shared by analytic and sweep.
struct AnalyticOptions {
  AnalyticInputs in;
  std::string context_mode = "none";
  std::string split = "strict";

  SplitCheck check() const {
    if (split == "strict") return SplitCheck::Strict;
    if (split == "as-written") return SplitCheck::AsWritten;
    throw InvalidArgument("unknown split check: " + split);
  }
};

class Analytic : public Command {
 public:
  explicit Analytic(CLI::App& app) : Command(app, "analytic", "Closed-form eventual control probability") {
    add_inputs(true);
  }

  void add_inputs(bool with_point) {
    opt("--gamma", a_.in.gamma, "Guard bandwidth fraction");
    opt("--eta", a_.in.eta, "Exit bandwidth fraction");
    opt("--zeta", a_.in.zeta, "Guard-exit bandwidth fraction");
    if (with_point) {
      opt("--g", a_.in.g, "Compromised guard fraction");
      opt("--e", a_.in.e, "Compromised exit fraction");
      opt("--z", a_.in.z, "Compromised guard-exit fraction");
    }
    opt("--p-kill", a_.in.p_kill, "Kill probability");
    opt("--p-permit", a_.in.p_permit, "Permit probability");
    opt("--p-kill-aware", a_.in.p_kill_aware, "Kill probability when the context is known");
    opt("--p-kill-unaware", a_.in.p_kill_unaware, "Kill probability when the context is unknown");
    opt("--context-mode", a_.context_mode, "none, all-positions or exit-only");
    opt("--k", a_.in.K, "Build attempts before giving up")->check(CLI::PositiveNumber);
    opt("--split", a_.split, "strict or as-written")->check(CLI::IsMember({"strict", "as-written"}));
  }

 protected:
  Analytic(CLI::App& app, const std::string& name, const std::string& help) : Command(app, name, help) {}

  void run(Context& ctx) override {
    a_.in.context_mode = parse_context_mode(a_.context_mode);
    const SplitCheck check = a_.check();
    const CompromiseProbs p = compromise_probs(a_.in, check);
    ResultTable t{{"g_star", "m_star", "e_star", "u0", "u1", "u2", "u3", "eventual_control"}, {}};
    std::vector<std::string> row{format_number(p.g_star), format_number(p.m_star), format_number(p.e_star)};
    for (int j = 0; j <= 3; ++j) row.push_back(format_number(unsuccessful_prob(j, a_.in, p)));
    const double ec = eventual_control_prob(a_.in, check);
    row.push_back(format_number(ec));
    t.add_row(row);
    ctx.table("analytic", t);
    ctx.info("eventual control " + format_number(ec));
  }

  AnalyticOptions a_;
};

class Sweep : public Analytic {
 public:
  explicit Sweep(CLI::App& app) : Analytic(app, "sweep", "Eventual control over a two-axis grid") {
    opt("--axis1", axis1_, "name:lo:hi:count, name in g, e, p_kill, p_permit")->required();
    opt("--axis2", axis2_, "name:lo:hi:count")->required();
    add_inputs(true);
    opt("--z-rule", z_rule_, "fixed, ratio, max-feasible or capped-ratio")
        ->check(CLI::IsMember({"fixed", "ratio", "max-feasible", "capped-ratio"}));
    opt("--z-ratio", z_ratio_, "z / min(g, e) for the ratio rules");
    flag("--long", long_, "Long format instead of a matrix");
  }

 protected:
  void run(Context& ctx) override {
    a_.in.context_mode = parse_context_mode(a_.context_mode);
    ZRule rule = ZRule::fixed(a_.in.z);
    if (z_rule_ == "ratio") rule = ZRule::ratio(z_ratio_);
    if (z_rule_ == "max-feasible") rule = ZRule::max_feasible();
    if (z_rule_ == "capped-ratio") rule = ZRule::capped_ratio(z_ratio_);
    const SweepResult r = sweep(SweepAxis::parse(axis1_), SweepAxis::parse(axis2_), a_.in, rule, a_.check());
    if (ctx.format == ReportFormat::Csv && !long_) {
      write_file_atomically(ctx.output("sweep", ".csv"), [&](std::ostream& out) { write_sweep_matrix(out, r); });
    } else {
      ctx.table("sweep", sweep_long_table(r));
    }
    ctx.info("swept " + std::to_string(r.axis1.values.size()) + "x" + std::to_string(r.axis2.values.size()) +
             " points");
  }

 private:
  std::string axis1_, axis2_;
  std::string z_rule_ = "fixed";
  double z_ratio_ = 1.5;
  bool long_ = false;
};

class WithAttacker : public Command {
 protected:
  WithAttacker(CLI::App& app, const std::string& name, const std::string& help, double default_g,
               const std::string& default_strategy)
      : Command(app, name, help) {
    input("--table", table_, "Relay table CSV")->required();
    input("--traces", traces_, "Lifecycle traces CSV")->required();
    atk_.g = atk_.e = default_g;
    atk_.strategy = default_strategy;
    input("--config", atk_.config, "Attacker config JSON; explicit flags override it");
    atk_.o_g = opt("--g", atk_.g, "Target compromised guard fraction");
    atk_.o_e = opt("--e", atk_.e, "Target compromised exit fraction");
    atk_.o_kill = opt("--p-kill", atk_.p_kill, "Kill probability");
    atk_.o_permit = opt("--p-permit", atk_.p_permit, "Permit probability");
    opt("--p-kill-aware", atk_.p_kill_aware, "Kill probability when the context is known");
    opt("--p-kill-unaware", atk_.p_kill_unaware, "Kill probability when the context is unknown");
    atk_.o_strategy = opt("--strategy", atk_.strategy, "top-bandwidth or reliable");
    atk_.o_context = opt("--context-mode", atk_.context_mode, "none, all-positions or exit-only");
  }

  struct Loaded {
    RelayTable table;
    TraceSet traces;
    AttackerSpec spec;
  };

  Loaded load(const Context& ctx) {
    RelayTable table = read_relay_table(fs::path(table_));
    TraceSet traces = read_traces(fs::path(traces_), table);
    AttackerSpec spec = atk_.resolve();
    const std::vector<bool> trial0 = traces.in_consensus(0);
    spec.compromised = compromise_relays(table, spec.target_g, spec.target_e, spec.strategy, &trial0, &traces);
    ctx.info("compromised " + std::to_string(spec.compromised.size()) + " relays");
    return {std::move(table), std::move(traces), std::move(spec)};
  }

  std::string table_, traces_;
  AttackerOptions atk_;
};

class Simulate : public WithAttacker {
 public:
  explicit Simulate(CLI::App& app)
      : WithAttacker(app, "simulate", "Replay clients building circuits against an attacker", 0.10,
                     "top-bandwidth") {
    opt("--clients", clients_, "Number of clients")->check(CLI::PositiveNumber);
    opt("--k", K_, "Build attempts before giving up")->check(CLI::PositiveNumber);
    opt("--boot", boot_, "Bootstrap resamples")->check(CLI::PositiveNumber);
    opt("--denominator", denominator_, "successful or all-clients")
        ->check(CLI::IsMember({"successful", "all-clients"}));
  }

 protected:
  void run(Context& ctx) override {
    const Loaded d = load(ctx);
    const ControlDenominator den =
        denominator_ == "successful" ? ControlDenominator::Successful : ControlDenominator::AllClients;
    const ReplayContext rc(d.table, d.traces, d.spec);
    const auto outcomes = run_attack_experiment(rc, clients_, K_, ctx.seed, ctx.jobs);
    const ControlStats s = bootstrap_stats(outcomes, boot_, 0, derive_seed(ctx.seed, 0xb007), den);
    const std::vector<bool> trial0 = d.traces.in_consensus(0);
    const BandwidthSummary bw = network_stats(d.table, trial0);
    const CompromisedFractions f = compromised_fractions(d.table, d.spec.compromised, &trial0);
    AnalyticInputs in;
    in.gamma = bw.gamma;
    in.eta = bw.eta;
    in.zeta = bw.zeta;
    in.g = f.g;
    in.e = f.e;
    in.z = f.z;
    in.p_kill = d.spec.p_kill;
    in.p_permit = d.spec.p_permit;
    in.p_kill_aware = d.spec.p_kill_aware;
    in.p_kill_unaware = d.spec.p_kill_unaware;
    in.context_mode = d.spec.context_mode;
    in.K = K_;

    ctx.table("outcomes", outcomes_table(outcomes));
    ResultTable t{{"metric", "value"}, {}};
    t.add_row({"compromised_relays", std::to_string(d.spec.compromised.size())});
    t.add_row({"g", format_number(f.g)});
    t.add_row({"e", format_number(f.e)});
    t.add_row({"z", format_number(f.z)});
    t.add_row({"clients", std::to_string(clients_)});
    t.add_row({"circuits_built", std::to_string(s.circuits_built)});
    t.add_row({"controlled_fraction", format_number(s.controlled_fraction)});
    t.add_row({"bootstrap_median", format_number(s.bootstrap_median)});
    t.add_row({"bootstrap_q1", format_number(s.bootstrap_q1)});
    t.add_row({"bootstrap_q3", format_number(s.bootstrap_q3)});
    t.add_row({"analytic", format_number(eventual_control_prob(in, SplitCheck::AsWritten))});
    ctx.table("summary", t);
    ctx.info("controlled fraction " + format_number(s.controlled_fraction));
  }

 private:
  std::size_t clients_ = 10000;
  int K_ = 120;
  std::size_t boot_ = 1000;
  std::string denominator_ = "successful";
};

class Compare : public Command {
 public:
  explicit Compare(CLI::App& app)
      : Command(app, "compare", "Analytic prediction against replay over a compromise grid") {
    input("--table", table_, "Relay table CSV")->required();
    input("--traces", traces_, "Lifecycle traces CSV")->required();
    opt("--grid", grid_, "lo:hi:count values of g = e");
    opt("--clients", cfg_.clients, "Clients per grid point")->check(CLI::PositiveNumber);
    opt("--boot", cfg_.n_boot, "Bootstrap resamples")->check(CLI::PositiveNumber);
    opt("--k", cfg_.K, "Build attempts before giving up")->check(CLI::PositiveNumber);
    opt("--p-kill", cfg_.p_kill, "Kill probability");
    opt("--p-permit", cfg_.p_permit, "Permit probability");
    opt("--strategy", strategy_, "top-bandwidth or reliable");
  }

 protected:
  void run(Context& ctx) override {
    const RelayTable table = read_relay_table(fs::path(table_));
    const TraceSet traces = read_traces(fs::path(traces_), table);
    cfg_.grid = SweepAxis::parse("g:" + grid_).values;
    cfg_.strategy = parse_strategy(strategy_);
    cfg_.jobs = ctx.jobs;
    const auto rows = compare_analytic_replay(table, traces, cfg_, ctx.seed);
    ResultTable t{{"r", "analytic", "sim_median", "sim_q1", "sim_q3"}, {}};
    for (const CompareRow& r : rows) {
      t.add_row({format_number(r.r), format_number(r.analytic), format_number(r.sim.bootstrap_median),
                 format_number(r.sim.bootstrap_q1), format_number(r.sim.bootstrap_q3)});
      ctx.debug("r=" + format_number(r.r) + " g=" + format_number(r.achieved.g) + " e=" +
                format_number(r.achieved.e) + " z=" + format_number(r.achieved.z));
    }
    ctx.table("compare", t);
    ctx.info("compared " + std::to_string(rows.size()) + " grid points");
  }

 private:
  std::string table_, traces_;
  std::string grid_ = "0.01:0.10:10";
  std::string strategy_ = "top-bandwidth";
  CompareConfig cfg_;
};

class FailureRate : public Command {
 public:
  explicit FailureRate(CLI::App& app)
      : Command(app, "failure-rate", "Per-trial circuit failure rate over uniformly chosen relays") {
    input("--table", table_, "Relay table CSV")->required();
    input("--traces", traces_, "Lifecycle traces CSV")->required();
    opt("--circuits", circuits_, "Circuits per trial")->check(CLI::PositiveNumber);
    opt("--resample", resample_, "Circuits per resample")->check(CLI::PositiveNumber);
    opt("--repetitions", repetitions_, "Resamples per trial")->check(CLI::PositiveNumber);
  }

 protected:
  void run(Context& ctx) override {
    const RelayTable table = read_relay_table(fs::path(table_));
    const TraceSet traces = read_traces(fs::path(traces_), table);
    const auto rates = circuit_failure_rate(traces, table, circuits_, ctx.seed, resample_, repetitions_);
    ResultTable t{{"trial", "median_failure_rate"}, {}};
    for (std::size_t i = 0; i < rates.size(); ++i) t.add_row({std::to_string(i), format_number(rates[i])});
    ctx.table("failure_rate", t);
    ctx.info("max failure rate " + format_number(*std::max_element(rates.begin(), rates.end())));
  }

 private:
  std::string table_, traces_;
  std::size_t circuits_ = 100, resample_ = 100, repetitions_ = 10;
};

class DetectExact : public Command {
 public:
  explicit DetectExact(CLI::App& app)
      : Command(app, "detect-exact", "Exact detection of a naive attacker with fixed-length probes") {
    opt("--n", n_, "Number of relays")->check(CLI::PositiveNumber);
    opt("--compromised-count", c_, "Compromised relays, drawn at random");
    opt("--k", cfg_.k, "Path length")->check(CLI::Range(std::size_t{2}, std::size_t{64}));
    opt("--p-kill", p_kill_, "Kill probability");
    opt("--p-permit", p_permit_, "Permit probability");
    opt("--natural-failure", f_, "Independent per-probe failure probability");
    opt("--repetitions", r_, "Attempts per probe; derived from --epsilon when omitted");
    opt("--epsilon", epsilon_, "Total misclassification budget");
    flag("--random-x", cfg_.random_x, "Draw X at random");
    flag("--shuffle-interior", cfg_.shuffle_interior, "Shuffle interior positions of rearranged probes");
  }

 protected:
  void run(Context& ctx) override {
    if (c_ > n_) throw InvalidArgument("compromised count exceeds n");
    std::vector<RelayId> relays(n_);
    for (std::size_t i = 0; i < n_; ++i) relays[i] = RelayId{static_cast<std::uint32_t>(i + 1)};
    Rng rng(derive_seed(ctx.seed, 0));
    std::vector<RelayId> pool = relays;
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
    std::vector<RelayId> compromised(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(c_));

    const int r = r_ ? *r_ : required_repetitions(f_, static_cast<double>(exact_probe_bound(n_, cfg_.k)), epsilon_);
    cfg_.memoize = f_ == 0.0;
    cfg_.seed = derive_seed(ctx.seed, 1);
    SimulatedOracle base(compromised, p_kill_, p_permit_, f_, derive_seed(ctx.seed, 2));
    RetryingOracle oracle(base, r);
    const ExactReport report = detect_exact(oracle, relays, cfg_);

    write_file_atomically(ctx.output("exact", ".json"), [&](std::ostream& out) { write_exact_report(out, report); });
    std::sort(compromised.begin(), compromised.end());
    std::size_t wrong = 0;
    for (const auto& [id, v] : report.classification)
      wrong += (v == Verdict::Compromised) != std::binary_search(compromised.begin(), compromised.end(), id);
    ctx.info("r=" + std::to_string(r) + ", " + std::to_string(report.probes_used) + " probes, " +
             std::to_string(base.probe_count()) + " attempts, " + std::to_string(wrong) + " misclassified");
  }

 private:
  std::size_t n_ = 100, c_ = 2;
  double p_kill_ = 1.0, p_permit_ = 1.0, f_ = 0.0, epsilon_ = 0.0004;
  std::optional<int> r_;
  ExactConfig cfg_;
};

class DetectProb : public WithAttacker {
 public:
  explicit DetectProb(CLI::App& app)
      : WithAttacker(app, "detect-prob", "Probabilistic suspect and guilt detection over traces", 0.05,
                     "reliable") {
    opt("--scr", cfg_.scr, "Suspect cutoff rate");
    opt("--gcr", cfg_.gcr, "Guilty cutoff rate");
    opt("--l", cfg_.l, "Suspect-phase trials")->check(CLI::PositiveNumber);
    opt("--l-prime", cfg_.l_prime, "Guilt-phase trials")->check(CLI::PositiveNumber);
    opt("--pair-sample", cfg_.pair_sample, "Complementary suspects per suspect; all when omitted");
    flag("--frozen-guilt-index", cfg_.frozen_guilt_index, "Repeat the first guilt trial");
    flag("--all-guards-suspect", cfg_.all_guards_suspect, "Label every guard a suspect");
    opt("--start", start_, "First suspect-phase trial of a single run");
    opt("--repetitions", repetitions_, "Runs from random start trials; 0 for a single run");
  }

 protected:
  void run(Context& ctx) override {
    cfg_.validate();
    const Loaded d = load(ctx);
    auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
    if (repetitions_ == 0) {
      const ProbReport rep = detect_prob(d.table, d.traces, d.spec, cfg_, start_, ctx.seed);
      ctx.table("report", prob_report_table(d.table, rep));
      ctx.info("suspects " + std::to_string(rep.suspects.suspects_guard.size() + rep.suspects.suspects_exit.size()) +
               ", guilty " + std::to_string(rep.guilt.guilty.size()) + ", fp_guilty " + cell(rep.fp_guilty) +
               ", fn_guilty " + cell(rep.fn_guilty) + ", probes " + std::to_string(rep.probes_used));
    } else {
      const DetectionSummary s = run_detection_experiment(d.table, d.traces, d.spec, cfg_, repetitions_, ctx.seed);
      ctx.table("summary", detection_summary_table(s));
      ctx.info("median fp_guilty " + cell(s.metrics.at("fp_guilty").median) + ", fn_guilty " +
               cell(s.metrics.at("fn_guilty").median));
    }
  }

 private:
  DetectionConfig cfg_;
  std::size_t start_ = 0, repetitions_ = 0;
};

json manifest_json(const Command& cmd, const std::vector<std::string>& args, const Context& ctx, double seconds) {
  json params = json::object();
  json inputs = json::array();
  for (const Param& p : cmd.params()) {
    const auto v = p.value();
    const std::string key = p.name.substr(2);
    if (!v) {
      params[key] = nullptr;
      continue;
    }
    if (p.flag)
      params[key] = true;
    else
      params[key] = *v;
    if (p.input) inputs.push_back(*v);
  }
  json j;
  j["subcommand"] = cmd.name();
  j["args"] = args;
  j["parameters"] = params;
  j["seed"] = cmd.seed();
  j["inputs"] = inputs;
  j["outputs"] = ctx.outputs;
  j["tool_version"] = ONIONDOS_VERSION;
  j["duration_seconds"] = seconds;
  return j;
}

// The resolved argument list; replaying it reproduces the run.
std::vector<std::string> resolved_args(const Command& cmd) {
  std::vector<std::string> args;
  for (const Param& p : cmd.params()) {
    const auto v = p.value();
    if (!v) continue;
    args.push_back(p.name);
    if (!p.flag) args.push_back(*v);
  }
  return args;
}

int from_manifest(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.size() != 2 && !(args.size() == 4 && args[2] == "--out")) {
    err << "usage: oniondos --from-manifest FILE [--out DIR]\n";
    return 1;
  }
  json j;
  try {
    std::ifstream in(args[1]);
    if (!in) throw Error("cannot open manifest: " + args[1]);
    j = json::parse(in);
  } catch (const std::exception& e) {
    err << "oniondos: " << e.what() << '\n';
    return 2;
  }
  std::vector<std::string> replay{j.at("subcommand").get<std::string>()};
  const auto stored = j.at("args").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < stored.size(); ++i) {
    if (args.size() == 4 && stored[i] == "--out" && i + 1 < stored.size()) {
      replay.push_back("--out");
      replay.push_back(args[3]);
      ++i;
      continue;
    }
    replay.push_back(stored[i]);
  }
  return dispatch(replay, out, err);
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (!args.empty() && args[0] == "--from-manifest") return from_manifest(args, out, err);

  CLI::App app("Selective denial-of-service attacks on onion routing: analysis, replay and detection", "oniondos");
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;
  commands.push_back(std::make_unique<GenNetwork>(app));
  commands.push_back(std::make_unique<GenTraces>(app));
  commands.push_back(std::make_unique<Stats>(app));
  commands.push_back(std::make_unique<Analytic>(app));
  commands.push_back(std::make_unique<Sweep>(app));
  commands.push_back(std::make_unique<Simulate>(app));
  commands.push_back(std::make_unique<Compare>(app));
  commands.push_back(std::make_unique<FailureRate>(app));
  commands.push_back(std::make_unique<DetectExact>(app));
  commands.push_back(std::make_unique<DetectProb>(app));

  if (args.empty()) {
    err << app.help();
    return 1;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  Command* cmd = nullptr;
  for (auto& c : commands)
    if (c->app()->parsed()) cmd = c.get();
  if (!cmd) {
    err << app.help();
    return 1;
  }

  Context ctx;
  ctx.level = log_level_from_env();
  ctx.err = &err;
  const auto start = std::chrono::steady_clock::now();
  try {
    cmd->execute(ctx);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const json manifest = manifest_json(*cmd, resolved_args(*cmd), ctx, seconds);
    write_file_atomically(ctx.out_dir / "manifest.json", [&](std::ostream& o) { o << manifest.dump(2) << '\n'; });
  } catch (const std::exception& e) {
    err << "oniondos: " << cmd->name() << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace oniondos
