#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "oniondos/network.hpp"
#include "oniondos/rng.hpp"

namespace oniondos {

enum class Position { Guard, Middle, Exit };

struct WeightSet {
  double w_G0 = 1.0;
  double w_E0 = 1.0;
  double w_Z = 1.0;
};

/// Tor's weights; each factor is clamped to 0 when its ratio is below 1/3.
WeightSet compute_weights(double gamma, double eta);
WeightSet compute_weights(const BandwidthSummary& stats);

double position_weight(bool guard, bool exit, Position position, const WeightSet& w);

/// Selection probabilities indexed like the table. Weights come from the
/// population selected by `available` (all relays when null); excluded and
/// unavailable relays get 0. Throws NoEligibleRelay on empty support.
std::vector<double> selection_distribution(const RelayTable& table, Position position,
                                           std::span<const RelayId> exclude = {},
                                           const std::vector<bool>* available = nullptr);

/// Table indices of the three guards.
struct GuardList {
  std::array<std::size_t, 3> guards{};
};

/// Entry, middle and exit as table indices.
struct Path {
  std::size_t entry = 0;
  std::size_t middle = 0;
  std::size_t exit = 0;
};

/// Position samplers over one consensus. Exclusions renormalize the
/// remaining weight.
class PathSampler {
 public:
  PathSampler(const RelayTable& table, const std::vector<bool>* available = nullptr);

  const WeightSet& weights() const noexcept { return weights_; }
  const BandwidthSummary& stats() const noexcept { return stats_; }
  double weight(std::size_t relay, Position position) const;

  std::size_t sample(Position position, Rng& rng, std::span<const std::size_t> exclude = {}) const;

 private:
  struct Support {
    std::vector<std::size_t> relays;
    std::vector<double> cumulative;
  };
  const Support& support(Position p) const { return supports_[static_cast<int>(p)]; }

  const RelayTable* table_;
  BandwidthSummary stats_;
  WeightSet weights_;
  std::vector<bool> available_;
  std::array<Support, 3> supports_;
};

/// Three distinct guards drawn sequentially from the Guard-position
/// distribution over `available` relays (the trial-0 consensus in replay).
GuardList choose_guard_list(const RelayTable& table, Rng& rng, const std::vector<bool>* available = nullptr);

/// Entry uniform over the guard list; middle then exit from the sampler's
/// consensus, each distinct from the relays already chosen.
Path build_path(const PathSampler& sampler, const GuardList& guards, Rng& rng);
Path build_path(const RelayTable& table, const GuardList& guards, Rng& rng, const std::vector<bool>& available);

}  // namespace oniondos
