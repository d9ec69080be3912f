#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oniondos/network.hpp"
#include "oniondos/rng.hpp"

namespace oniondos {

enum class ContextMode { None, AllPositions, ExitOnly };
enum class CompromiseStrategy { TopBandwidth, Reliable };
enum class Decision { Kill, Permit };

struct AttackerSpec {
  double target_g = 0.0;
  double target_e = 0.0;
  double p_kill = 1.0;
  double p_permit = 1.0;
  std::optional<double> p_kill_aware;    // defaults to p_kill
  std::optional<double> p_kill_unaware;  // defaults to p_kill
  CompromiseStrategy strategy = CompromiseStrategy::TopBandwidth;
  ContextMode context_mode = ContextMode::None;
  /// In a context mode, what happens to a controlled circuit whose context is
  /// known not to be satisfied.
  Decision controlled_unsatisfied = Decision::Permit;
  std::vector<RelayId> compromised;

  double kill_aware() const { return p_kill_aware.value_or(p_kill); }
  double kill_unaware() const { return p_kill_unaware.value_or(p_kill); }

  /// Range checks; with `active`, also g, e and p_permit must be positive.
  void validate(bool active = false) const;
  /// compromised as a mask over table indices. Throws on unknown ids.
  std::vector<bool> compromised_mask(const RelayTable& table) const;
};

enum class CircuitStatus { Uncompromised, CompromisedUncontrolled, Controlled };

/// Which circuit positions hold compromised relays.
struct PositionInfo {
  bool entry = false;
  bool middle = false;
  bool exit = false;

  CircuitStatus status() const {
    if (entry && exit) return CircuitStatus::Controlled;
    if (entry || middle || exit) return CircuitStatus::CompromisedUncontrolled;
    return CircuitStatus::Uncompromised;
  }
};

/// Kill probability the attacker applies to a circuit. An unknown context
/// counts as satisfied.
double kill_probability(const AttackerSpec& spec, const PositionInfo& positions,
                        std::optional<bool> context_satisfied = std::nullopt);

Decision decide(CircuitStatus status, const AttackerSpec& spec, const PositionInfo& positions,
                std::optional<bool> context_satisfied, Rng& rng);

/// Relay ids to compromise so that the compromised guard and exit
/// bandwidth fractions reach the targets. Fractions are measured against
/// the relays selected by `eligible` (all relays when null); only those
/// relays are candidates. The Reliable strategy ranks presence by the
/// number of trials in the consensus when traces are given, else by the
/// presence probability. Deterministic.
std::vector<RelayId> compromise_relays(const RelayTable& table, double target_g, double target_e,
                                       CompromiseStrategy strategy, const std::vector<bool>* eligible = nullptr,
                                       const TraceSet* traces = nullptr);

struct CompromisedFractions {
  double g = 0, e = 0, z = 0;
  double gamma0_c = 0, eta0_c = 0, zeta_c = 0;  // compromised shares of T
};

CompromisedFractions compromised_fractions(const RelayTable& table, const std::vector<RelayId>& compromised,
                                           const std::vector<bool>* population = nullptr);

std::string to_string(ContextMode mode);
std::string to_string(CompromiseStrategy strategy);
ContextMode parse_context_mode(const std::string& name);
CompromiseStrategy parse_strategy(const std::string& name);

/// Attacker config JSON: {target_g, target_e, p_kill, p_permit,
/// p_kill_aware, p_kill_unaware, strategy, context_mode}.
AttackerSpec read_attacker_config(std::istream& in);
void write_attacker_config(std::ostream& out, const AttackerSpec& spec);

}  // namespace oniondos
