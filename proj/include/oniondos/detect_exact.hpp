#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_set>
#include <vector>

#include "oniondos/attacker.hpp"
#include "oniondos/network.hpp"
#include "oniondos/rng.hpp"

namespace oniondos {

enum class ProbeResult { Succeed, Fail };

/// Builds the given circuit and fetches through it. Implementations report
/// transport trouble by throwing TransportError, never as Fail.
class ProbeOracle {
 public:
  virtual ~ProbeOracle() = default;

  /// Throws InvalidArgument if the path repeats a relay or is shorter than 2.
  ProbeResult probe(std::span<const RelayId> path);
  std::size_t probe_count() const noexcept { return count_; }

 protected:
  virtual ProbeResult do_probe(std::span<const RelayId> path) = 0;

 private:
  std::size_t count_ = 0;
};

/// Kill rules of an attacker over a fixed compromised set, plus an
/// independent natural failure with probability f per probe.
class SimulatedOracle : public ProbeOracle {
 public:
  SimulatedOracle(std::vector<RelayId> compromised, double p_kill, double p_permit, double natural_failure,
                  std::uint64_t seed);

 protected:
  ProbeResult do_probe(std::span<const RelayId> path) override;

 private:
  std::unordered_set<RelayId> compromised_;
  AttackerSpec spec_;
  double f_;
  Rng rng_;
};

/// Each probe replays a uniformly drawn trial: a relay that is absent or
/// failed in that trial fails the probe.
class TraceOracle : public ProbeOracle {
 public:
  TraceOracle(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec, std::uint64_t seed);

 protected:
  ProbeResult do_probe(std::span<const RelayId> path) override;

 private:
  const RelayTable* table_;
  const TraceSet* traces_;
  AttackerSpec spec_;
  std::vector<bool> compromised_;
  Rng rng_;
};

/// Fails iff all r attempts fail; stops at the first success.
ProbeResult probe_with_retries(ProbeOracle& oracle, std::span<const RelayId> path, int r);

/// An oracle whose every probe is probe_with_retries on `inner`.
class RetryingOracle : public ProbeOracle {
 public:
  RetryingOracle(ProbeOracle& inner, int r);
  std::size_t attempts() const noexcept { return inner_->probe_count(); }

 protected:
  ProbeResult do_probe(std::span<const RelayId> path) override;

 private:
  ProbeOracle* inner_;
  int r_;
};

/// Smallest integer r > (ln ln(1/(1-eps)) - ln probe_budget) / ln f, at
/// least 1. f = 0 gives 1; f >= 1 throws.
int required_repetitions(double f, double probe_budget, double epsilon);

enum class Verdict { Honest, Compromised };

/// Which branch the run took after the first round of probes.
enum class ExactCase {
  AllSucceed,      // x1 and x_{k-1} compromised
  Mixed,           // X honest
  PairFound,       // all failed; some pair of X compromised
  XHonest,         // all failed; every outside relay compromised
  SingleX,         // all failed; exactly one member of X compromised
};

struct ExactConfig {
  std::size_t k = 3;
  /// Draw X at random instead of taking the first k-1 relays.
  bool random_x = false;
  /// Shuffle the interior order of each rearranged probe.
  bool shuffle_interior = false;
  /// Reuse results of identical probes; only sound without noise.
  bool memoize = true;
  std::uint64_t seed = 0;
};

struct ExactReport {
  std::vector<std::pair<RelayId, Verdict>> classification;  // input order
  bool ambiguous_all_or_none = false;
  std::size_t probes_used = 0;
  ExactCase branch = ExactCase::AllSucceed;

  Verdict verdict(RelayId id) const;
};

/// Probe budget bound (C(k-1,2) + k) (n - k + 1).
std::size_t exact_probe_bound(std::size_t n, std::size_t k);

ExactReport detect_exact(ProbeOracle& oracle, std::span<const RelayId> relays, const ExactConfig& config = {});

/// {classification: [{id, verdict}], ambiguous_all_or_none, probes_used}
void write_exact_report(std::ostream& out, const ExactReport& report);

}  // namespace oniondos
