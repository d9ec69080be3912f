#include "oniondos/detect_prob.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include "oniondos/error.hpp"
#include "oniondos/replay.hpp"
#include "oniondos/report.hpp"

namespace oniondos {

namespace {
constexpr double kRateSlack = 1e-9;

bool killed(const AttackerSpec& spec, const PositionInfo& pos, Rng& rng) {
  return decide(pos.status(), spec, pos, std::nullopt, rng) == Decision::Kill;
}
}  // namespace

void DetectionConfig::validate() const {
  if (!(scr >= 0.0 && scr <= 1.0) || !(gcr >= 0.0 && gcr <= 1.0)) throw InvalidArgument("scr and gcr must lie in [0,1]");
  if (l < 1 || l_prime < 1) throw InvalidArgument("l and l' must be at least 1");
}

SuspectResult suspect_phase(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec,
                            const DetectionConfig& config, std::size_t t_s0, Rng& rng) {
  config.validate();
  if (traces.relay_count() != table.size()) throw InvalidArgument("trace set does not match relay table");
  if (t_s0 + config.l > traces.trial_count()) throw InvalidArgument("suspect window runs past the last trial");
  const std::vector<bool> bad = spec.compromised_mask(table);

  SuspectResult out;
  out.suspect.assign(table.size(), false);
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Relay& r = table[i];
    if (!r.guard && !r.exit) continue;
    std::size_t present = 0, ok = 0;
    for (std::size_t t = t_s0; t < t_s0 + config.l; ++t) {
      const Status s = traces.status(i, t);
      if (s == Status::Absent) continue;
      ++present;
      if (s != Status::Succeeded) continue;
      // Exit-flagged relays exit after our trusted guard; guard-only
      // relays enter before our trusted exit.
      const PositionInfo pos = r.exit ? PositionInfo{false, false, bad[i]} : PositionInfo{bad[i], false, false};
      if (!killed(spec, pos, rng)) ++ok;
    }
    if (present == 0) continue;
    out.probes += present;
    const double rate = 1.0 - static_cast<double>(ok) / static_cast<double>(present);
    out.eligible.push_back(i);
    out.failure_rate.push_back(rate);
    out.suspect[i] = rate >= config.scr - kRateSlack || (config.all_guards_suspect && r.guard);
    if (out.suspect[i]) {
      if (r.guard) out.suspects_guard.push_back(r.id);
      if (r.exit) out.suspects_exit.push_back(r.id);
    }
  }
  return out;
}

GuiltResult guilt_phase(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec,
                        const SuspectResult& suspects, const DetectionConfig& config, std::size_t t_g0, Rng& rng) {
  config.validate();
  const std::size_t rounds = config.l_prime;
  if (t_g0 + (config.frozen_guilt_index ? 1 : rounds) > traces.trial_count())
    throw InvalidArgument("guilt window runs past the last trial");
  const std::vector<bool> bad = spec.compromised_mask(table);

  std::vector<std::size_t> sg, sx;
  for (RelayId id : suspects.suspects_guard) sg.push_back(table.require_index(id));
  for (RelayId id : suspects.suspects_exit) sx.push_back(table.require_index(id));

  std::set<std::pair<std::size_t, std::size_t>> pairs;
  if (!config.pair_sample || config.all_guards_suspect) {
    for (std::size_t g : sg)
      for (std::size_t x : sx)
        if (g != x) pairs.emplace(g, x);
  } else {
    const std::size_t k = *config.pair_sample;
    auto sample = [&](const std::vector<std::size_t>& pool, std::size_t self) {
      std::vector<std::size_t> c;
      for (std::size_t p : pool)
        if (p != self) c.push_back(p);
      const std::size_t take = std::min(k, c.size());
      for (std::size_t i = 0; i < take; ++i) std::swap(c[i], c[i + rng.index(c.size() - i)]);
      c.resize(take);
      return c;
    };
    for (std::size_t i : suspects.eligible) {
      if (!suspects.suspect[i]) continue;
      if (table[i].guard)
        for (std::size_t x : sample(sx, i)) pairs.emplace(i, x);
      if (table[i].exit)
        for (std::size_t g : sample(sg, i)) pairs.emplace(g, i);
    }
  }

  GuiltResult out;
  std::vector<bool> guilty(table.size(), false);
  for (const auto& [g, x] : pairs) {
    PairRate pr{table[g].id, table[x].id, 0, 1.0};
    std::size_t ok = 0;
    for (std::size_t i = 0; i < rounds; ++i) {
      const std::size_t t = config.frozen_guilt_index ? t_g0 : t_g0 + i;
      const Status a = traces.status(g, t), b = traces.status(x, t);
      if (a == Status::Absent || b == Status::Absent) continue;
      ++pr.co_present;
      if (a != Status::Succeeded || b != Status::Succeeded) continue;
      // The middle is ours: always up, never attacking.
      if (!killed(spec, PositionInfo{bad[g], false, bad[x]}, rng)) ++ok;
    }
    if (pr.co_present == 0) continue;
    out.probes += pr.co_present;
    pr.failure_rate = 1.0 - static_cast<double>(ok) / static_cast<double>(pr.co_present);
    if (pr.failure_rate <= config.gcr + kRateSlack) guilty[g] = guilty[x] = true;
    out.pairs.push_back(pr);
  }
  for (std::size_t i = 0; i < table.size(); ++i)
    if (guilty[i]) out.guilty.push_back(table[i].id);
  return out;
}

PhaseRates evaluate_labels(const std::vector<std::size_t>& eligible, const std::vector<bool>& labeled,
                           const std::vector<bool>& compromised) {
  std::size_t honest = 0, bad = 0, fp = 0, fn = 0;
  for (std::size_t i : eligible) {
    if (compromised[i]) {
      ++bad;
      fn += !labeled[i];
    } else {
      ++honest;
      fp += labeled[i];
    }
  }
  PhaseRates r;
  if (honest) r.fp = static_cast<double>(fp) / static_cast<double>(honest);
  if (bad) r.fn = static_cast<double>(fn) / static_cast<double>(bad);
  return r;
}

ProbReport detect_prob(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec,
                       const DetectionConfig& config, std::size_t t_s0, std::uint64_t seed) {
  Rng rng(seed);
  ProbReport report;
  report.t_s0 = t_s0;
  report.suspects = suspect_phase(table, traces, spec, config, t_s0, rng);
  report.guilt = guilt_phase(table, traces, spec, report.suspects, config, t_s0 + config.l, rng);
  report.probes_used = report.suspects.probes + report.guilt.probes;

  const std::vector<bool> bad = spec.compromised_mask(table);
  const PhaseRates s = evaluate_labels(report.suspects.eligible, report.suspects.suspect, bad);
  std::vector<bool> guilty(table.size(), false);
  for (RelayId id : report.guilt.guilty) guilty[table.require_index(id)] = true;
  const PhaseRates g = evaluate_labels(report.suspects.eligible, guilty, bad);
  report.fp_suspect = s.fp;
  report.fn_suspect = s.fn;
  report.fp_guilty = g.fp;
  report.fn_guilty = g.fn;
  return report;
}

DetectionSummary run_detection_experiment(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec,
                                          const DetectionConfig& config, std::size_t repetitions, std::uint64_t seed) {
  config.validate();
  if (repetitions < 1) throw InvalidArgument("repetitions must be at least 1");
  if (config.l + config.l_prime > traces.trial_count())
    throw InvalidArgument("l + l' = " + std::to_string(config.l + config.l_prime) + " exceeds the " +
                          std::to_string(traces.trial_count()) + " available trials");
  DetectionSummary summary;
  const std::size_t starts = traces.trial_count() - config.l - config.l_prime + 1;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    Rng rng(derive_seed(seed, 2 * rep));
    const std::size_t t_s0 = rng.index(starts);
    summary.runs.push_back(detect_prob(table, traces, spec, config, t_s0, derive_seed(seed, 2 * rep + 1)));
  }
  auto summarize = [&](auto member) {
    std::vector<double> v;
    for (const auto& r : summary.runs)
      if (r.*member) v.push_back(*(r.*member));
    RateSummary s;
    s.defined = v.size();
    if (!v.empty()) {
      s.median = quantile(v, 0.5);
      s.q1 = quantile(v, 0.25);
      s.q3 = quantile(v, 0.75);
    }
    return s;
  };
  summary.metrics["fp_suspect"] = summarize(&ProbReport::fp_suspect);
  summary.metrics["fn_suspect"] = summarize(&ProbReport::fn_suspect);
  summary.metrics["fp_guilty"] = summarize(&ProbReport::fp_guilty);
  summary.metrics["fn_guilty"] = summarize(&ProbReport::fn_guilty);
  return summary;
}

ResultTable prob_report_table(const RelayTable& table, const ProbReport& report) {
  ResultTable t{{"phase", "relay_id", "verdict", "failure_rate"}, {}};
  const SuspectResult& s = report.suspects;
  for (std::size_t k = 0; k < s.eligible.size(); ++k) {
    const std::size_t i = s.eligible[k];
    t.add_row({"suspect", std::to_string(table[i].id.value), s.suspect[i] ? "suspect" : "cleared",
               format_number(s.failure_rate[k])});
  }
  // A relay's guilt-phase rate is its best pair.
  std::map<RelayId, double> best;
  for (const PairRate& p : report.guilt.pairs)
    for (RelayId id : {p.guard, p.exit}) {
      auto [it, fresh] = best.emplace(id, p.failure_rate);
      if (!fresh) it->second = std::min(it->second, p.failure_rate);
    }
  const std::set<RelayId> guilty(report.guilt.guilty.begin(), report.guilt.guilty.end());
  for (const auto& [id, rate] : best)
    t.add_row({"guilt", std::to_string(id.value), guilty.count(id) ? "guilty" : "cleared", format_number(rate)});
  return t;
}

void write_prob_report(std::ostream& out, const RelayTable& table, const ProbReport& report) {
  write_report(out, prob_report_table(table, report), ReportFormat::Csv);
}

ResultTable detection_summary_table(const DetectionSummary& summary) {
  auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
  ResultTable t{{"metric", "median", "q1", "q3"}, {}};
  for (const char* name : {"fp_suspect", "fn_suspect", "fp_guilty", "fn_guilty"}) {
    const RateSummary& s = summary.metrics.at(name);
    t.add_row({name, cell(s.median), cell(s.q1), cell(s.q3)});
  }
  return t;
}

void write_detection_summary(std::ostream& out, const DetectionSummary& summary) {
  write_report(out, detection_summary_table(summary), ReportFormat::Csv);
}

}  // namespace oniondos
