#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oniondos/attacker.hpp"
#include "oniondos/network.hpp"
#include "oniondos/report.hpp"
#include "oniondos/rng.hpp"

namespace oniondos {

struct DetectionConfig {
  double scr = 1.0;
  double gcr = 0.0;
  std::size_t l = 5;
  std::size_t l_prime = 5;
  /// Complementary suspects paired with each suspect; nullopt pairs all.
  std::optional<std::size_t> pair_sample;
  /// Repeat the first guilt trial instead of advancing one per round.
  bool frozen_guilt_index = false;
  /// Label every eligible guard a suspect (for exit-only context attackers);
  /// forces all pairs.
  bool all_guards_suspect = false;

  void validate() const;
};

struct SuspectResult {
  std::vector<std::size_t> eligible;  // table indices, ascending
  std::vector<double> failure_rate;   // parallel to eligible
  std::vector<bool> suspect;          // over table indices
  std::vector<RelayId> suspects_guard;
  std::vector<RelayId> suspects_exit;
  std::size_t probes = 0;
};

struct PairRate {
  RelayId guard;
  RelayId exit;
  std::size_t co_present = 0;
  double failure_rate = 1.0;
};

struct GuiltResult {
  std::vector<PairRate> pairs;  // pairs with co_present > 0
  std::vector<RelayId> guilty;
  std::size_t probes = 0;
};

/// Screens each guard- or exit-flagged relay present in trials
/// [t_s0, t_s0 + l) with a trusted endpoint: exit-flagged relays as the
/// exit after a trusted guard, guard-only relays as the guard before a
/// trusted exit.
SuspectResult suspect_phase(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec,
                            const DetectionConfig& config, std::size_t t_s0, Rng& rng);

/// Probes (guard suspect, trusted middle, exit suspect) over l' trials
/// starting at t_g0.
GuiltResult guilt_phase(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec,
                        const SuspectResult& suspects, const DetectionConfig& config, std::size_t t_g0, Rng& rng);

/// fp = labeled honest / honest eligible, fn = unlabeled compromised /
/// compromised eligible; nullopt when the denominator is empty.
struct PhaseRates {
  std::optional<double> fp;
  std::optional<double> fn;
};
PhaseRates evaluate_labels(const std::vector<std::size_t>& eligible, const std::vector<bool>& labeled,
                           const std::vector<bool>& compromised);

struct ProbReport {
  std::size_t t_s0 = 0;
  SuspectResult suspects;
  GuiltResult guilt;
  std::optional<double> fp_suspect, fn_suspect, fp_guilty, fn_guilty;
  std::size_t probes_used = 0;
};

/// Both phases from t_s0, scored against spec.compromised.
ProbReport detect_prob(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec,
                       const DetectionConfig& config, std::size_t t_s0, std::uint64_t seed);

struct RateSummary {
  std::optional<double> median, q1, q3;
  std::size_t defined = 0;  // runs with a defined rate
};

struct DetectionSummary {
  std::vector<ProbReport> runs;
  std::map<std::string, RateSummary> metrics;  // fp_suspect, fn_suspect, fp_guilty, fn_guilty
};

/// Repeats detect_prob from uniformly drawn start trials with
/// t_s0 + l + l' <= trial_count.
DetectionSummary run_detection_experiment(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec,
                                          const DetectionConfig& config, std::size_t repetitions, std::uint64_t seed);

/// phase,relay_id,verdict,failure_rate
ResultTable prob_report_table(const RelayTable& table, const ProbReport& report);
void write_prob_report(std::ostream& out, const RelayTable& table, const ProbReport& report);
/// metric,median,q1,q3; undefined rates are NA.
ResultTable detection_summary_table(const DetectionSummary& summary);
void write_detection_summary(std::ostream& out, const DetectionSummary& summary);

}  // namespace oniondos
