#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "oniondos/analytic.hpp"
#include "oniondos/attacker.hpp"
#include "oniondos/network.hpp"
#include "oniondos/pathsel.hpp"
#include "oniondos/report.hpp"
#include "oniondos/rng.hpp"

namespace oniondos {

enum class BuildResult { SuccessControlled, SuccessUncontrolled, GaveUp };

struct BuildOutcome {
  BuildResult result = BuildResult::GaveUp;
  int attempts_used = 0;
  std::size_t trial = 0;
  std::optional<Path> path;  // the successful circuit
};

/// Table, traces and attacker with per-trial samplers built once.
class ReplayContext {
 public:
  ReplayContext(const RelayTable& table, const TraceSet& traces, const AttackerSpec& spec);

  const RelayTable& table() const noexcept { return *table_; }
  const TraceSet& traces() const noexcept { return *traces_; }
  const AttackerSpec& spec() const noexcept { return spec_; }
  const std::vector<bool>& compromised() const noexcept { return compromised_; }
  const std::vector<bool>& trial0() const noexcept { return trial0_; }
  const PathSampler& sampler(std::size_t trial) const { return samplers_.at(trial); }

 private:
  const RelayTable* table_;
  const TraceSet* traces_;
  AttackerSpec spec_;
  std::vector<bool> compromised_;
  std::vector<bool> trial0_;
  std::vector<PathSampler> samplers_;
};

/// One client: pick a trial (unless given) and try up to K builds in it.
BuildOutcome simulate_circuit_build(const ReplayContext& ctx, const GuardList& guards, int K, Rng& rng,
                                    std::optional<std::size_t> trial = std::nullopt);
BuildOutcome simulate_circuit_build(const TraceSet& traces, const RelayTable& table, const GuardList& guards,
                                    const AttackerSpec& spec, int K, Rng& rng);

/// Each client gets a fresh trial-0 guard list and one build; client i uses
/// the stream derive_seed(seed, i), so results do not depend on `jobs`.
std::vector<BuildOutcome> run_attack_experiment(const ReplayContext& ctx, std::size_t n_clients, int K,
                                                std::uint64_t seed, unsigned jobs = 1);

struct ControlStats {
  std::size_t circuits_built = 0;
  double controlled_fraction = 0;
  double bootstrap_median = 0;
  double bootstrap_q1 = 0;
  double bootstrap_q3 = 0;
};

/// Successful: controlled / built circuits. AllClients: controlled / clients.
enum class ControlDenominator { Successful, AllClients };

double controlled_fraction(const std::vector<BuildOutcome>& outcomes,
                           ControlDenominator denominator = ControlDenominator::Successful);

/// resample_size 0 means the population size.
ControlStats bootstrap_stats(const std::vector<BuildOutcome>& outcomes, std::size_t n_boot, std::size_t resample_size,
                             std::uint64_t seed, ControlDenominator denominator = ControlDenominator::Successful);

/// Linear-interpolation quantile (R type 7) of unsorted data.
double quantile(std::vector<double> values, double q);

/// Per trial: n circuits over uniformly chosen relays (guard-flagged entry,
/// any middle, exit-flagged exit, all in the consensus and distinct); each
/// of `repetitions` rounds resamples `resample_size` of them with
/// replacement; the trial's value is the median failed fraction.
std::vector<double> circuit_failure_rate(const TraceSet& traces, const RelayTable& table, std::size_t n_per_trial,
                                         std::uint64_t seed, std::size_t resample_size = 100,
                                         std::size_t repetitions = 10);

/// One row of the analytic-versus-replay comparison.
struct CompareRow {
  double r = 0;
  double analytic = 0;
  ControlStats sim;
  CompromisedFractions achieved;
};

struct CompareConfig {
  std::vector<double> grid;
  std::size_t clients = 10000;
  std::size_t n_boot = 1000;
  int K = 120;
  double p_kill = 1.0;
  double p_permit = 1.0;
  CompromiseStrategy strategy = CompromiseStrategy::TopBandwidth;
  unsigned jobs = 1;
};

/// Compromise g = e = r among trial-0 relays, replay, bootstrap, and
/// evaluate the closed form at the achieved g, e, z and trial-0 ratios.
std::vector<CompareRow> compare_analytic_replay(const RelayTable& table, const TraceSet& traces,
                                                const CompareConfig& config, std::uint64_t seed);

const char* to_string(BuildResult result);
/// client,trial,result,attempts
ResultTable outcomes_table(const std::vector<BuildOutcome>& outcomes);
void write_outcomes(std::ostream& out, const std::vector<BuildOutcome>& outcomes);

}  // namespace oniondos
