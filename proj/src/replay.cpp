#include "oniondos/replay.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

#include "oniondos/error.hpp"

namespace oniondos {

ReplayContext::ReplayContext(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec)
    : table_(&table), traces_(&traces), spec_(spec) {
  if (traces.relay_count() != table.size()) throw InvalidArgument("trace set does not match relay table");
  compromised_ = spec.compromised_mask(table);
  trial0_ = traces.in_consensus(0);
  samplers_.reserve(traces.trial_count());
  for (std::size_t t = 0; t < traces.trial_count(); ++t) {
    const std::vector<bool> mask = traces.in_consensus(t);
    samplers_.emplace_back(table, &mask);
  }
}

BuildOutcome simulate_circuit_build(const ReplayContext& ctx, const GuardList& guards, int K, Rng& rng,
                                    std::optional<std::size_t> trial) {
  if (K < 1) throw InvalidArgument("K must be at least 1");
  const TraceSet& traces = ctx.traces();
  BuildOutcome out;
  out.trial = trial ? *trial : rng.index(traces.trial_count());
  if (out.trial >= traces.trial_count()) throw InvalidArgument("trial index out of range");
  const auto status = traces.trial(out.trial);
  const PathSampler& sampler = ctx.sampler(out.trial);
  const auto& bad = ctx.compromised();

  for (int attempt = 1; attempt <= K; ++attempt) {
    out.attempts_used = attempt;
    Path path;
    try {
      path = build_path(sampler, guards, rng);
    } catch (const NoEligibleRelay&) {
      continue;
    }
    if (status[path.entry] != Status::Succeeded || status[path.middle] != Status::Succeeded ||
        status[path.exit] != Status::Succeeded)
      continue;
    const PositionInfo pos{bad[path.entry], bad[path.middle], bad[path.exit]};
    if (decide(pos.status(), ctx.spec(), pos, std::nullopt, rng) == Decision::Kill) continue;
    out.result = pos.status() == CircuitStatus::Controlled ? BuildResult::SuccessControlled
                                                            : BuildResult::SuccessUncontrolled;
    out.path = path;
    return out;
  }
  out.result = BuildResult::GaveUp;
  return out;
}

BuildOutcome simulate_circuit_build(const TraceSet& traces, const RelayTable& table, const GuardList& guards,
                                    const AttackerSpec& spec, int K, Rng& rng) {
  const ReplayContext ctx(table, traces, spec);
  return simulate_circuit_build(ctx, guards, K, rng);
}

std::vector<BuildOutcome> run_attack_experiment(const ReplayContext& ctx, std::size_t n_clients, int K,
                                                std::uint64_t seed, unsigned jobs) {
  std::vector<BuildOutcome> out(n_clients);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(derive_seed(seed, i));
      const GuardList guards = choose_guard_list(ctx.table(), rng, &ctx.trial0());
      out[i] = simulate_circuit_build(ctx, guards, K, rng);
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, n_clients))));
  if (jobs == 1) {
    work(0, n_clients);
    return out;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    threads.emplace_back([&, w] {
      try {
        work(n_clients * w / jobs, n_clients * (w + 1) / jobs);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double controlled_fraction(const std::vector<BuildOutcome>& outcomes, ControlDenominator denominator) {
  std::size_t controlled = 0, built = 0;
  for (const auto& o : outcomes) {
    if (o.result == BuildResult::SuccessControlled) ++controlled;
    if (o.result != BuildResult::GaveUp) ++built;
  }
  const std::size_t den = denominator == ControlDenominator::Successful ? built : outcomes.size();
  return den ? static_cast<double>(controlled) / static_cast<double>(den) : 0.0;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of empty data");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ControlStats bootstrap_stats(const std::vector<BuildOutcome>& outcomes, std::size_t n_boot, std::size_t resample_size,
                             std::uint64_t seed, ControlDenominator denominator) {
  if (outcomes.empty()) throw InvalidArgument("bootstrap needs at least one outcome");
  if (n_boot < 1) throw InvalidArgument("n_boot must be at least 1");
  if (resample_size == 0) resample_size = outcomes.size();
  ControlStats s;
  for (const auto& o : outcomes)
    if (o.result != BuildResult::GaveUp) ++s.circuits_built;
  s.controlled_fraction = controlled_fraction(outcomes, denominator);

  Rng rng(seed);
  std::vector<double> fractions(n_boot);
  for (double& f : fractions) {
    std::size_t controlled = 0, built = 0;
    for (std::size_t k = 0; k < resample_size; ++k) {
      const BuildResult r = outcomes[rng.index(outcomes.size())].result;
      controlled += r == BuildResult::SuccessControlled;
      built += r != BuildResult::GaveUp;
    }
    const std::size_t den = denominator == ControlDenominator::Successful ? built : resample_size;
    f = den ? static_cast<double>(controlled) / static_cast<double>(den) : 0.0;
  }
  s.bootstrap_median = quantile(fractions, 0.5);
  s.bootstrap_q1 = quantile(fractions, 0.25);
  s.bootstrap_q3 = quantile(fractions, 0.75);
  return s;
}

std::vector<double> circuit_failure_rate(const TraceSet& traces, const RelayTable& table, std::size_t n_per_trial,
                                         std::uint64_t seed, std::size_t resample_size, std::size_t repetitions) {
  if (traces.relay_count() != table.size()) throw InvalidArgument("trace set does not match relay table");
  if (n_per_trial < 1 || resample_size < 1 || repetitions < 1)
    throw InvalidArgument("circuit, resample and repetition counts must be positive");
  std::vector<double> rates(traces.trial_count());
  for (std::size_t t = 0; t < traces.trial_count(); ++t) {
    Rng rng(derive_seed(seed, t));
    const auto status = traces.trial(t);
    std::vector<std::size_t> guards, exits, all;
    for (std::size_t i = 0; i < table.size(); ++i) {
      if (status[i] == Status::Absent) continue;
      all.push_back(i);
      if (table[i].guard) guards.push_back(i);
      if (table[i].exit) exits.push_back(i);
    }
    std::vector<bool> failed(n_per_trial, true);
    for (std::size_t c = 0; c < n_per_trial; ++c) {
      // Uniform without replacement via rejection; give up on tiny consensuses.
      bool built = false;
      for (int tries = 0; tries < 1000 && !built && !guards.empty() && !exits.empty() && all.size() >= 3; ++tries) {
        const std::size_t g = guards[rng.index(guards.size())];
        const std::size_t m = all[rng.index(all.size())];
        const std::size_t x = exits[rng.index(exits.size())];
        if (g == m || g == x || m == x) continue;
        built = true;
        failed[c] = status[g] == Status::Failed || status[m] == Status::Failed || status[x] == Status::Failed;
      }
    }
    std::vector<double> samples(repetitions);
    for (double& s : samples) {
      std::size_t bad = 0;
      for (std::size_t k = 0; k < resample_size; ++k) bad += failed[rng.index(n_per_trial)];
      s = static_cast<double>(bad) / static_cast<double>(resample_size);
    }
    rates[t] = quantile(samples, 0.5);
  }
  return rates;
}

std::vector<CompareRow> compare_analytic_replay(const RelayTable& table, const TraceSet& traces,
                                                const CompareConfig& config, std::uint64_t seed) {
  const std::vector<bool> trial0 = traces.in_consensus(0);
  const BandwidthSummary stats = network_stats(table, trial0);
  std::vector<CompareRow> rows;
  for (std::size_t k = 0; k < config.grid.size(); ++k) {
    const double r = config.grid[k];
    AttackerSpec spec;
    spec.target_g = spec.target_e = r;
    spec.p_kill = config.p_kill;
    spec.p_permit = config.p_permit;
    spec.strategy = config.strategy;
    spec.compromised = compromise_relays(table, r, r, config.strategy, &trial0, &traces);

    CompareRow row;
    row.r = r;
    row.achieved = compromised_fractions(table, spec.compromised, &trial0);
    AnalyticInputs in;
    in.gamma = stats.gamma;
    in.eta = stats.eta;
    in.zeta = stats.zeta;
    in.g = row.achieved.g;
    in.e = row.achieved.e;
    in.z = row.achieved.z;
    in.p_kill = config.p_kill;
    in.p_permit = config.p_permit;
    in.K = config.K;
    row.analytic = eventual_control_prob(in);

    const ReplayContext ctx(table, traces, spec);
    const auto outcomes = run_attack_experiment(ctx, config.clients, config.K, derive_seed(seed, 2 * k), config.jobs);
    row.sim = bootstrap_stats(outcomes, config.n_boot, 0, derive_seed(seed, 2 * k + 1));
    rows.push_back(row);
  }
  return rows;
}

const char* to_string(BuildResult result) {
  switch (result) {
    case BuildResult::SuccessControlled: return "controlled";
    case BuildResult::SuccessUncontrolled: return "uncontrolled";
    case BuildResult::GaveUp: return "gave-up";
  }
  return "?";
}

ResultTable outcomes_table(const std::vector<BuildOutcome>& outcomes) {
  ResultTable t{{"client", "trial", "result", "attempts"}, {}};
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    t.add_row({std::to_string(i), std::to_string(outcomes[i].trial), to_string(outcomes[i].result),
               std::to_string(outcomes[i].attempts_used)});
  return t;
}

void write_outcomes(std::ostream& out, const std::vector<BuildOutcome>& outcomes) {
  write_report(out, outcomes_table(outcomes), ReportFormat::Csv);
}

}  // namespace oniondos
