#include "oniondos/detect_exact.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "oniondos/error.hpp"

namespace oniondos {

ProbeResult ProbeOracle::probe(std::span<const RelayId> path) {
  if (path.size() < 2) throw InvalidArgument("a probe path needs at least two relays");
  for (std::size_t i = 0; i < path.size(); ++i)
    for (std::size_t j = i + 1; j < path.size(); ++j)
      if (path[i] == path[j]) throw InvalidArgument("probe path repeats relay " + std::to_string(path[i].value));
  ++count_;
  return do_probe(path);
}

namespace {
PositionInfo positions_of(std::span<const RelayId> path, auto&& is_bad) {
  PositionInfo p{is_bad(path.front()), false, is_bad(path.back())};
  for (std::size_t i = 1; i + 1 < path.size(); ++i) p.middle = p.middle || is_bad(path[i]);
  return p;
}
}  // namespace

SimulatedOracle::SimulatedOracle(std::vector<RelayId> compromised, double p_kill, double p_permit,
                                 double natural_failure, std::uint64_t seed)
    : compromised_(compromised.begin(), compromised.end()), f_(natural_failure), rng_(seed) {
  if (!(natural_failure >= 0.0 && natural_failure <= 1.0)) throw InvalidArgument("natural failure must lie in [0,1]");
  spec_.p_kill = p_kill;
  spec_.p_permit = p_permit;
  spec_.validate();
}

ProbeResult SimulatedOracle::do_probe(std::span<const RelayId> path) {
  if (f_ > 0.0 && rng_.bernoulli(f_)) return ProbeResult::Fail;
  const PositionInfo pos = positions_of(path, [&](RelayId id) { return compromised_.count(id) > 0; });
  return decide(pos.status(), spec_, pos, std::nullopt, rng_) == Decision::Kill ? ProbeResult::Fail
                                                                                : ProbeResult::Succeed;
}

TraceOracle::TraceOracle(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec, std::uint64_t seed)
    : table_(&table), traces_(&traces), spec_(spec), compromised_(spec.compromised_mask(table)), rng_(seed) {
  if (traces.relay_count() != table.size()) throw InvalidArgument("trace set does not match relay table");
}

ProbeResult TraceOracle::do_probe(std::span<const RelayId> path) {
  const std::size_t t = rng_.index(traces_->trial_count());
  std::vector<std::size_t> idx;
  for (RelayId id : path) {
    idx.push_back(table_->require_index(id));
    if (traces_->status(idx.back(), t) != Status::Succeeded) return ProbeResult::Fail;
  }
  PositionInfo pos{compromised_[idx.front()], false, compromised_[idx.back()]};
  for (std::size_t i = 1; i + 1 < idx.size(); ++i) pos.middle = pos.middle || compromised_[idx[i]];
  return decide(pos.status(), spec_, pos, std::nullopt, rng_) == Decision::Kill ? ProbeResult::Fail
                                                                                : ProbeResult::Succeed;
}

ProbeResult probe_with_retries(ProbeOracle& oracle, std::span<const RelayId> path, int r) {
  if (r < 1) throw InvalidArgument("r must be at least 1");
  for (int i = 0; i < r; ++i)
    if (oracle.probe(path) == ProbeResult::Succeed) return ProbeResult::Succeed;
  return ProbeResult::Fail;
}

RetryingOracle::RetryingOracle(ProbeOracle& inner, int r) : inner_(&inner), r_(r) {
  if (r < 1) throw InvalidArgument("r must be at least 1");
}

ProbeResult RetryingOracle::do_probe(std::span<const RelayId> path) { return probe_with_retries(*inner_, path, r_); }

int required_repetitions(double f, double probe_budget, double epsilon) {
  if (f >= 1.0) throw InvalidArgument("failure probability must be below 1");
  if (f < 0.0) throw InvalidArgument("failure probability must be non-negative");
  if (!(probe_budget >= 1.0)) throw InvalidArgument("probe budget must be at least 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must lie in (0,1)");
  if (f == 0.0) return 1;
  const double bound = (std::log(-std::log1p(-epsilon)) - std::log(probe_budget)) / std::log(f);
  return std::max(1, static_cast<int>(std::floor(bound)) + 1);
}

Verdict ExactReport::verdict(RelayId id) const {
  for (const auto& [rid, v] : classification)
    if (rid == id) return v;
  throw InvalidArgument("relay " + std::to_string(id.value) + " not in report");
}

std::size_t exact_probe_bound(std::size_t n, std::size_t k) {
  return ((k - 1) * (k - 2) / 2 + k) * (n - k + 1);
}

namespace {

class Prober {
 public:
  Prober(ProbeOracle& oracle, bool memoize) : oracle_(oracle), memoize_(memoize) {}

  ProbeResult operator()(const std::vector<RelayId>& path) {
    if (!memoize_) return run(path);
    std::vector<std::uint32_t> key;
    for (RelayId id : path) key.push_back(id.value);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const ProbeResult r = run(path);
    memo_.emplace(std::move(key), r);
    return r;
  }
  std::size_t used() const { return used_; }

 private:
  ProbeResult run(const std::vector<RelayId>& path) {
    ++used_;
    return oracle_.probe(path);
  }
  ProbeOracle& oracle_;
  bool memoize_;
  std::size_t used_ = 0;
  std::map<std::vector<std::uint32_t>, ProbeResult> memo_;
};

}  // namespace

ExactReport detect_exact(ProbeOracle& oracle, std::span<const RelayId> relays, const ExactConfig& config) {
  const std::size_t n = relays.size(), k = config.k;
  if (k < 3) throw InvalidArgument("k must be at least 3");
  if (n <= k) throw InvalidArgument("need more relays than the path length");
  {
    std::vector<RelayId> sorted(relays.begin(), relays.end());
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw InvalidArgument("duplicate relay id");
  }

  Rng rng(config.seed);
  std::vector<RelayId> order(relays.begin(), relays.end());
  if (config.random_x)
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  const std::vector<RelayId> X(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1));
  const std::vector<RelayId> Y(order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end());
  Prober probe(oracle, config.memoize);

  std::map<RelayId, Verdict> verdict;
  auto finish = [&](ExactCase branch) {
    ExactReport report;
    report.branch = branch;
    bool all = true;
    for (RelayId id : relays) {
      report.classification.emplace_back(id, verdict.at(id));
      all = all && verdict.at(id) == Verdict::Compromised;
    }
    report.ambiguous_all_or_none = all;
    report.probes_used = probe.used();
    return report;
  };
  auto mark = [](bool bad) { return bad ? Verdict::Compromised : Verdict::Honest; };
  // X without the given members, in index order (optionally shuffled).
  auto rest_of_x = [&](std::initializer_list<RelayId> skip) {
    std::vector<RelayId> rest;
    for (RelayId x : X)
      if (std::find(skip.begin(), skip.end(), x) == skip.end()) rest.push_back(x);
    if (config.shuffle_interior)
      for (std::size_t i = rest.size(); i > 1; --i) std::swap(rest[i - 1], rest[rng.index(i)]);
    return rest;
  };

  // Initial round: (x1, y, x2, ..., x_{k-1}).
  std::vector<ProbeResult> initial;
  for (RelayId y : Y) {
    std::vector<RelayId> path{X.front(), y};
    path.insert(path.end(), X.begin() + 1, X.end());
    initial.push_back(probe(path));
  }
  const auto successes = static_cast<std::size_t>(std::count(initial.begin(), initial.end(), ProbeResult::Succeed));

  if (successes == initial.size()) {
    // x1 and x_{k-1} are compromised; any relay placed last is now tested.
    verdict[X.front()] = verdict[X.back()] = Verdict::Compromised;
    for (RelayId y : Y) {
      std::vector<RelayId> path(X.begin(), X.end());
      path.push_back(y);
      verdict[y] = mark(probe(path) == ProbeResult::Succeed);
    }
    const RelayId filler = Y.front();
    for (std::size_t i = 1; i + 1 < X.size(); ++i) {
      std::vector<RelayId> path(X.begin(), X.end());
      path[i] = filler;
      path.push_back(X[i]);
      verdict[X[i]] = mark(probe(path) == ProbeResult::Succeed);
    }
    return finish(ExactCase::AllSucceed);
  }

  if (successes > 0) {
    for (RelayId x : X) verdict[x] = Verdict::Honest;
    for (std::size_t i = 0; i < Y.size(); ++i) verdict[Y[i]] = mark(initial[i] == ProbeResult::Fail);
    return finish(ExactCase::Mixed);
  }

  // Everything failed. Look for a pair of X that turns every probe into a
  // controlled circuit.
  for (std::size_t i = 0; i < X.size(); ++i) {
    for (std::size_t j = i + 1; j < X.size(); ++j) {
      const std::vector<RelayId> middle = rest_of_x({X[i], X[j]});
      const bool same_as_initial =
          i == 0 && j + 1 == X.size() && std::equal(middle.begin(), middle.end(), X.begin() + 1);
      if (same_as_initial) continue;
      bool all_succeed = true;
      for (RelayId y : Y) {
        std::vector<RelayId> path{X[i], y};
        path.insert(path.end(), middle.begin(), middle.end());
        path.push_back(X[j]);
        if (probe(path) == ProbeResult::Fail) {
          all_succeed = false;
          break;
        }
      }
      if (!all_succeed) continue;

      verdict[X[i]] = verdict[X[j]] = Verdict::Compromised;
      for (RelayId y : Y) {
        std::vector<RelayId> path{X[i]};
        const auto mid = rest_of_x({X[i]});
        path.insert(path.end(), mid.begin(), mid.end());
        path.push_back(y);
        verdict[y] = mark(probe(path) == ProbeResult::Succeed);
      }
      for (RelayId x : X) {
        if (x == X[i] || x == X[j]) continue;
        std::vector<RelayId> path{X[i]};
        const auto mid = rest_of_x({X[i], x});
        path.insert(path.end(), mid.begin(), mid.end());
        path.push_back(Y.front());
        path.push_back(x);
        verdict[x] = mark(probe(path) == ProbeResult::Succeed);
      }
      return finish(ExactCase::PairFound);
    }
  }

  // At most one member of X is compromised. Put each x first, y last.
  for (RelayId x : X) {
    std::vector<ProbeResult> round;
    for (RelayId y : Y) {
      std::vector<RelayId> path{x};
      const auto mid = rest_of_x({x});
      path.insert(path.end(), mid.begin(), mid.end());
      path.push_back(y);
      round.push_back(probe(path));
    }
    if (std::find(round.begin(), round.end(), ProbeResult::Succeed) == round.end()) continue;
    for (RelayId other : X) verdict[other] = mark(other == x);
    for (std::size_t i = 0; i < Y.size(); ++i) verdict[Y[i]] = mark(round[i] == ProbeResult::Succeed);
    return finish(ExactCase::SingleX);
  }
  for (RelayId x : X) verdict[x] = Verdict::Honest;
  for (RelayId y : Y) verdict[y] = Verdict::Compromised;
  return finish(ExactCase::XHonest);
}

void write_exact_report(std::ostream& out, const ExactReport& report) {
  nlohmann::ordered_json j;
  j["classification"] = nlohmann::ordered_json::array();
  for (const auto& [id, v] : report.classification)
    j["classification"].push_back({{"id", id.value}, {"verdict", v == Verdict::Compromised ? "compromised" : "honest"}});
  j["ambiguous_all_or_none"] = report.ambiguous_all_or_none;
  j["probes_used"] = report.probes_used;
  out << j.dump(2) << '\n';
}

}  // namespace oniondos
