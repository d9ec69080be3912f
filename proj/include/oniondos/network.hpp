#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace oniondos {

/// Opaque relay identifier.
struct RelayId {
  std::uint32_t value = 0;

  friend auto operator<=>(const RelayId&, const RelayId&) = default;
};

struct Relay {
  RelayId id;
  std::uint64_t bandwidth = 1;  // bytes per second
  bool guard = false;
  bool exit = false;
  /// Probability that a probe succeeds given the relay is in the consensus.
  double reliability = 1.0;
  /// Probability that the relay is in the consensus in a given trial.
  double presence = 1.0;

  bool guard_only() const noexcept { return guard && !exit; }
  bool exit_only() const noexcept { return exit && !guard; }
  bool guard_exit() const noexcept { return guard && exit; }

  friend bool operator==(const Relay&, const Relay&) = default;
};

/// The simulated consensus. Immutable after construction.
class RelayTable {
 public:
  /// Throws InvalidArgument unless ids are unique, every bandwidth is
  /// positive, probabilities lie in [0,1], and at least one guard and one
  /// exit relay exist.
  explicit RelayTable(std::vector<Relay> relays, std::uint64_t generation_seed = 0);

  std::span<const Relay> relays() const noexcept { return relays_; }
  std::size_t size() const noexcept { return relays_.size(); }
  const Relay& operator[](std::size_t i) const { return relays_[i]; }
  std::uint64_t generation_seed() const noexcept { return generation_seed_; }

  std::optional<std::size_t> index_of(RelayId id) const;
  /// Like index_of but throws InvalidArgument for unknown ids.
  std::size_t require_index(RelayId id) const;

  friend bool operator==(const RelayTable& a, const RelayTable& b) {
    return a.generation_seed_ == b.generation_seed_ && a.relays_ == b.relays_;
  }

 private:
  std::vector<Relay> relays_;
  std::uint64_t generation_seed_;
  std::unordered_map<std::uint32_t, std::size_t> index_;
};

/// Lifecycle status of a relay in one trial.
enum class Status : std::int8_t { Absent = -1, Failed = 0, Succeeded = 1 };

/// Per-relay lifecycle functions over a number of trials. Relay order
/// matches the RelayTable the traces were generated from or read against.
class TraceSet {
 public:
  /// `statuses` is trial-major: statuses[t * relay_count + r].
  TraceSet(std::vector<RelayId> relay_ids, std::size_t trial_count, std::vector<Status> statuses);

  std::size_t trial_count() const noexcept { return trial_count_; }
  std::size_t relay_count() const noexcept { return relay_ids_.size(); }
  std::span<const RelayId> relay_ids() const noexcept { return relay_ids_; }

  Status status(std::size_t relay_index, std::size_t trial) const {
    return statuses_[trial * relay_ids_.size() + relay_index];
  }
  std::span<const Status> trial(std::size_t t) const {
    return std::span<const Status>(statuses_).subspan(t * relay_ids_.size(), relay_ids_.size());
  }
  /// Mask of relays in the consensus (status != Absent) at trial t.
  std::vector<bool> in_consensus(std::size_t t) const;

  friend bool operator==(const TraceSet&, const TraceSet&) = default;

 private:
  std::vector<RelayId> relay_ids_;
  std::size_t trial_count_;
  std::vector<Status> statuses_;
};

/// Aggregate bandwidth of a relay population, split by flags.
struct BandwidthSummary {
  double G = 0, E = 0, T = 0;
  double G0 = 0, E0 = 0, Z = 0;
  double gamma = 0, eta = 0, zeta = 0;
  double gamma0 = 0, eta0 = 0;
};

/// Sums over the whole table, or over the relays selected by `mask`.
BandwidthSummary network_stats(const RelayTable& table);
BandwidthSummary network_stats(const RelayTable& table, const std::vector<bool>& mask);

struct NetworkGenConfig {
  std::size_t n = 2500;
  double gamma = 0.70;
  double eta = 0.40;
  double zeta = 0.30;
  std::size_t trial_count = 100;
  // Log-normal anchors, bytes per second.
  double bw_median_gx = 333e3;
  double bw_median_g0 = 385e3;
  double bw_p90_gx = 5.8e6;
  double bw_p90_g0 = 4.4e6;
  // Means of the healthy relay population.
  double rel_mean = 0.999;
  double presence_mean = 0.95;
  // Share of relays drawn from the flaky and broken health profiles.
  double flaky_fraction = 0.12;
  double broken_fraction = 0.10;
  // Unhealthy relays are drawn only below this bandwidth quantile of their
  // flag class.
  double unhealthy_quantile = 0.5;

  /// Throws InvalidArgument with a diagnostic if the targets are infeasible.
  void validate() const;

  friend bool operator==(const NetworkGenConfig&, const NetworkGenConfig&) = default;
};

RelayTable generate_synthetic_network(const NetworkGenConfig& config, std::uint64_t seed);

/// status = Absent with probability 1 - presence, otherwise Succeeded with
/// probability reliability, else Failed. Trials are independent.
TraceSet generate_lifecycle_traces(const RelayTable& table, std::size_t trial_count, std::uint64_t seed);

// CSV / key=value I/O. Readers throw ParseError with the offending line.
void write_relay_table(std::ostream& out, const RelayTable& table);
RelayTable read_relay_table(std::istream& in, const std::string& source = "<stream>");
void write_traces(std::ostream& out, const TraceSet& traces);
TraceSet read_traces(std::istream& in, const RelayTable& table, const std::string& source = "<stream>");
void write_gen_config(std::ostream& out, const NetworkGenConfig& config);
NetworkGenConfig read_gen_config(std::istream& in, const std::string& source = "<stream>");

void write_relay_table(const std::filesystem::path& path, const RelayTable& table);
RelayTable read_relay_table(const std::filesystem::path& path);
void write_traces(const std::filesystem::path& path, const TraceSet& traces);
TraceSet read_traces(const std::filesystem::path& path, const RelayTable& table);
NetworkGenConfig read_gen_config(const std::filesystem::path& path);

}  // namespace oniondos

template <>
struct std::hash<oniondos::RelayId> {
  std::size_t operator()(const oniondos::RelayId& id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
