#include "oniondos/attacker.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "oniondos/error.hpp"
#include "oniondos/report.hpp"

namespace oniondos {

namespace {
bool is_probability(double p) { return p >= 0.0 && p <= 1.0; }
}  // namespace

void AttackerSpec::validate(bool active) const {
  if (!is_probability(target_g) || !is_probability(target_e)) throw InvalidArgument("target_g and target_e must lie in [0,1]");
  if (!is_probability(p_kill) || !is_probability(p_permit) || !is_probability(kill_aware()) ||
      !is_probability(kill_unaware()))
    throw InvalidArgument("kill and permit probabilities must lie in [0,1]");
  if (active && (target_g <= 0.0 || target_e <= 0.0 || p_permit <= 0.0))
    throw InvalidArgument("an active attacker needs g > 0, e > 0 and p_permit > 0");
}

std::vector<bool> AttackerSpec::compromised_mask(const RelayTable& table) const {
  std::vector<bool> mask(table.size(), false);
  for (RelayId id : compromised) {
    const std::size_t i = table.require_index(id);
    if (!table[i].guard && !table[i].exit)
      throw InvalidArgument("compromised relay " + std::to_string(id.value) + " has neither Guard nor Exit flag");
    mask[i] = true;
  }
  return mask;
}

double kill_probability(const AttackerSpec& spec, const PositionInfo& positions, std::optional<bool> context_satisfied) {
  const bool unsatisfied = spec.context_mode != ContextMode::None && context_satisfied == false;
  switch (positions.status()) {
    case CircuitStatus::Uncompromised:
      return 0.0;
    case CircuitStatus::Controlled:
      if (unsatisfied) return spec.controlled_unsatisfied == Decision::Kill ? 1.0 : 0.0;
      return 1.0 - spec.p_permit;
    case CircuitStatus::CompromisedUncontrolled:
      switch (spec.context_mode) {
        case ContextMode::None:
          return spec.p_kill;
        case ContextMode::AllPositions:
          return unsatisfied ? 0.0 : spec.p_kill;
        case ContextMode::ExitOnly:
          // Only the exit can see whether the context holds.
          if (positions.exit) return unsatisfied ? 0.0 : spec.kill_aware();
          return spec.kill_unaware();
      }
  }
  return 0.0;
}

Decision decide(CircuitStatus status, const AttackerSpec& spec, const PositionInfo& positions,
                std::optional<bool> context_satisfied, Rng& rng) {
  if (status != positions.status()) throw InvalidArgument("circuit status does not match compromised positions");
  if (status == CircuitStatus::Uncompromised) return Decision::Permit;
  return rng.bernoulli(kill_probability(spec, positions, context_satisfied)) ? Decision::Kill : Decision::Permit;
}

std::vector<RelayId> compromise_relays(const RelayTable& table, double target_g, double target_e,
                                       CompromiseStrategy strategy, const std::vector<bool>* eligible,
                                       const TraceSet* traces) {
  if (!is_probability(target_g) || !is_probability(target_e))
    throw InvalidArgument("target_g and target_e must lie in [0,1]");
  if (eligible && eligible->size() != table.size()) throw InvalidArgument("eligibility mask size does not match relay table");
  if (target_g == 0.0 && target_e == 0.0) return {};

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < table.size(); ++i)
    if (!eligible || (*eligible)[i]) pool.push_back(i);
  const BandwidthSummary stats = eligible ? network_stats(table, *eligible) : network_stats(table);

  std::vector<bool> candidate(table.size(), false);
  for (std::size_t i : pool) candidate[i] = true;
  if (strategy == CompromiseStrategy::Reliable && !pool.empty()) {
    if (traces && traces->relay_count() != table.size()) throw InvalidArgument("trace set does not match relay table");
    // Top 75% by bandwidth and by presence, simultaneously.
    auto presence_of = [&](std::size_t i) {
      if (!traces) return table[i].presence;
      std::size_t in = 0;
      for (std::size_t t = 0; t < traces->trial_count(); ++t) in += traces->status(i, t) != Status::Absent;
      return static_cast<double>(in);
    };
    std::vector<std::uint64_t> bw;
    std::vector<double> presence, score(table.size(), 0.0);
    for (std::size_t i : pool) {
      bw.push_back(table[i].bandwidth);
      score[i] = presence_of(i);
      presence.push_back(score[i]);
    }
    const std::size_t q = pool.size() / 4;
    std::nth_element(bw.begin(), bw.begin() + q, bw.end());
    std::nth_element(presence.begin(), presence.begin() + q, presence.end());
    for (std::size_t i : pool)
      candidate[i] = table[i].bandwidth >= bw[q] && score[i] >= presence[q];
  }

  // Per flag class: descending bandwidth from the 90th percentile, then the
  // relays above it.
  auto ordered = [&](bool guard, bool exit) {
    std::vector<std::size_t> cls;
    for (std::size_t i : pool)
      if (candidate[i] && table[i].guard == guard && table[i].exit == exit) cls.push_back(i);
    std::sort(cls.begin(), cls.end(), [&](std::size_t a, std::size_t b) {
      if (table[a].bandwidth != table[b].bandwidth) return table[a].bandwidth > table[b].bandwidth;
      return table[a].id < table[b].id;
    });
    const std::size_t start = cls.size() / 10;
    std::vector<std::size_t> order(cls.begin() + static_cast<std::ptrdiff_t>(start), cls.end());
    for (std::size_t k = start; k-- > 0;) order.push_back(cls[k]);
    return order;
  };
  std::vector<std::size_t> gx = ordered(true, true), g0 = ordered(true, false), e0 = ordered(false, true);
  std::size_t next_gx = 0, next_g0 = 0, next_e0 = 0;

  const double need_g = target_g * stats.G * (1.0 - 1e-12);
  const double need_e = target_e * stats.E * (1.0 - 1e-12);
  double have_g = 0.0, have_e = 0.0;
  std::vector<RelayId> chosen;
  auto take = [&](std::size_t i) {
    chosen.push_back(table[i].id);
    if (table[i].guard) have_g += static_cast<double>(table[i].bandwidth);
    if (table[i].exit) have_e += static_cast<double>(table[i].bandwidth);
  };

  while (have_g < need_g && have_e < need_e && next_gx < gx.size()) take(gx[next_gx++]);
  while (have_g < need_g) {
    if (next_g0 < g0.size()) take(g0[next_g0++]);
    else if (next_gx < gx.size()) take(gx[next_gx++]);
    else break;
  }
  while (have_e < need_e) {
    if (next_gx < gx.size()) take(gx[next_gx++]);
    else if (next_e0 < e0.size()) take(e0[next_e0++]);
    else break;
  }
  if (have_g < need_g || have_e < need_e) {
    std::string msg = "compromise targets unreachable with eligible relays:";
    if (have_g < need_g)
      msg += " guard shortfall " + format_number((need_g - have_g) / stats.G) + " (reached g=" +
             format_number(have_g / stats.G) + ")";
    if (have_e < need_e)
      msg += " exit shortfall " + format_number((need_e - have_e) / stats.E) + " (reached e=" +
             format_number(have_e / stats.E) + ")";
    throw InvalidArgument(msg);
  }
  return chosen;
}

CompromisedFractions compromised_fractions(const RelayTable& table, const std::vector<RelayId>& compromised,
                                           const std::vector<bool>* population) {
  const BandwidthSummary s = population ? network_stats(table, *population) : network_stats(table);
  double g = 0, e = 0, z = 0;
  for (RelayId id : compromised) {
    const std::size_t i = table.require_index(id);
    if (population && !(*population)[i]) continue;
    const auto b = static_cast<double>(table[i].bandwidth);
    if (table[i].guard) g += b;
    if (table[i].exit) e += b;
    if (table[i].guard_exit()) z += b;
  }
  CompromisedFractions f;
  f.g = s.G > 0 ? g / s.G : 0.0;
  f.e = s.E > 0 ? e / s.E : 0.0;
  f.z = s.Z > 0 ? z / s.Z : 0.0;
  if (s.T > 0) {
    f.gamma0_c = (g - z) / s.T;
    f.eta0_c = (e - z) / s.T;
    f.zeta_c = z / s.T;
  }
  return f;
}

std::string to_string(ContextMode mode) {
  switch (mode) {
    case ContextMode::None: return "none";
    case ContextMode::AllPositions: return "all-positions";
    case ContextMode::ExitOnly: return "exit-only";
  }
  return "none";
}

std::string to_string(CompromiseStrategy strategy) {
  return strategy == CompromiseStrategy::Reliable ? "reliable" : "top-bandwidth";
}

ContextMode parse_context_mode(const std::string& name) {
  if (name == "none") return ContextMode::None;
  if (name == "all-positions" || name == "AllPositions") return ContextMode::AllPositions;
  if (name == "exit-only" || name == "ExitOnly") return ContextMode::ExitOnly;
  throw InvalidArgument("unknown context mode: " + name);
}

CompromiseStrategy parse_strategy(const std::string& name) {
  if (name == "top-bandwidth" || name == "TopBandwidth") return CompromiseStrategy::TopBandwidth;
  if (name == "reliable" || name == "Reliable") return CompromiseStrategy::Reliable;
  throw InvalidArgument("unknown compromise strategy: " + name);
}

AttackerSpec read_attacker_config(std::istream& in) {
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("attacker config", 0, e.what());
  }
  static const char* known[] = {"target_g", "target_e", "p_kill", "p_permit", "p_kill_aware",
                                "p_kill_unaware", "strategy", "context_mode", "controlled_unsatisfied"};
  AttackerSpec spec;
  try {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known))
        throw InvalidArgument("unknown attacker config key: " + it.key());
    spec.target_g = j.value("target_g", spec.target_g);
    spec.target_e = j.value("target_e", spec.target_e);
    spec.p_kill = j.value("p_kill", spec.p_kill);
    spec.p_permit = j.value("p_permit", spec.p_permit);
    if (j.contains("p_kill_aware")) spec.p_kill_aware = j.at("p_kill_aware").get<double>();
    if (j.contains("p_kill_unaware")) spec.p_kill_unaware = j.at("p_kill_unaware").get<double>();
    if (j.contains("strategy")) spec.strategy = parse_strategy(j.at("strategy").get<std::string>());
    if (j.contains("context_mode")) spec.context_mode = parse_context_mode(j.at("context_mode").get<std::string>());
    if (j.contains("controlled_unsatisfied"))
      spec.controlled_unsatisfied = j.at("controlled_unsatisfied").get<std::string>() == "kill" ? Decision::Kill : Decision::Permit;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("attacker config", 0, e.what());
  }
  spec.validate();
  return spec;
}

void write_attacker_config(std::ostream& out, const AttackerSpec& spec) {
  nlohmann::ordered_json j;
  j["target_g"] = spec.target_g;
  j["target_e"] = spec.target_e;
  j["p_kill"] = spec.p_kill;
  j["p_permit"] = spec.p_permit;
  j["p_kill_aware"] = spec.kill_aware();
  j["p_kill_unaware"] = spec.kill_unaware();
  j["strategy"] = to_string(spec.strategy);
  j["context_mode"] = to_string(spec.context_mode);
  j["controlled_unsatisfied"] = spec.controlled_unsatisfied == Decision::Kill ? "kill" : "permit";
  out << j.dump(2) << '\n';
}

}  // namespace oniondos
