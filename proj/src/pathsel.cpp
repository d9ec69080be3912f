#include "oniondos/pathsel.hpp"

#include <algorithm>

#include "oniondos/error.hpp"

namespace oniondos {

namespace {
double tor_weight(double ratio) { return ratio < 1.0 / 3.0 ? 0.0 : 1.0 - 1.0 / (3.0 * ratio); }

const char* position_name(Position p) {
  switch (p) {
    case Position::Guard: return "guard";
    case Position::Middle: return "middle";
    case Position::Exit: return "exit";
  }
  return "?";
}
}  // namespace

WeightSet compute_weights(double gamma, double eta) {
  WeightSet w;
  w.w_G0 = tor_weight(gamma);
  w.w_E0 = tor_weight(eta);
  w.w_Z = w.w_G0 * w.w_E0;
  return w;
}

WeightSet compute_weights(const BandwidthSummary& stats) { return compute_weights(stats.gamma, stats.eta); }

double position_weight(bool guard, bool exit, Position position, const WeightSet& w) {
  switch (position) {
    case Position::Guard:
      if (guard && exit) return w.w_E0;
      return guard ? 1.0 : 0.0;
    case Position::Middle:
      if (guard && exit) return w.w_Z;
      if (guard) return w.w_G0;
      if (exit) return w.w_E0;
      return 1.0;
    case Position::Exit:
      if (guard && exit) return w.w_G0;
      return exit ? 1.0 : 0.0;
  }
  return 0.0;
}

std::vector<double> selection_distribution(const RelayTable& table, Position position,
                                           std::span<const RelayId> exclude, const std::vector<bool>* available) {
  if (available && available->size() != table.size())
    throw InvalidArgument("availability mask size does not match relay table");
  const BandwidthSummary stats = available ? network_stats(table, *available) : network_stats(table);
  const WeightSet w = compute_weights(stats);
  std::vector<double> p(table.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const Relay& r = table[i];
    if (available && !(*available)[i]) continue;
    if (std::find(exclude.begin(), exclude.end(), r.id) != exclude.end()) continue;
    p[i] = static_cast<double>(r.bandwidth) * position_weight(r.guard, r.exit, position, w);
    total += p[i];
  }
  if (!(total > 0.0)) throw NoEligibleRelay(std::string("no eligible relay for the ") + position_name(position) + " position");
  for (double& x : p) x /= total;
  return p;
}

PathSampler::PathSampler(const RelayTable& table, const std::vector<bool>* available) : table_(&table) {
  if (available && available->size() != table.size())
    throw InvalidArgument("availability mask size does not match relay table");
  available_ = available ? *available : std::vector<bool>(table.size(), true);
  stats_ = network_stats(table, available_);
  weights_ = compute_weights(stats_);
  for (int p = 0; p < 3; ++p) {
    Support& s = supports_[p];
    double acc = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const double w = weight(i, static_cast<Position>(p));
      if (w <= 0.0) continue;
      acc += w;
      s.relays.push_back(i);
      s.cumulative.push_back(acc);
    }
  }
}

double PathSampler::weight(std::size_t relay, Position position) const {
  if (!available_[relay]) return 0.0;
  const Relay& r = (*table_)[relay];
  return static_cast<double>(r.bandwidth) * position_weight(r.guard, r.exit, position, weights_);
}

std::size_t PathSampler::sample(Position position, Rng& rng, std::span<const std::size_t> exclude) const {
  const Support& s = support(position);
  auto excluded = [&](std::size_t i) { return std::find(exclude.begin(), exclude.end(), i) != exclude.end(); };

  double excluded_mass = 0.0;
  std::size_t excluded_count = 0;
  for (std::size_t k = 0; k < exclude.size(); ++k) {
    if (std::find(exclude.begin(), exclude.begin() + k, exclude[k]) != exclude.begin() + k) continue;
    const double w = weight(exclude[k], position);
    if (w > 0.0) {
      excluded_mass += w;
      ++excluded_count;
    }
  }
  if (excluded_count >= s.relays.size())
    throw NoEligibleRelay(std::string("no eligible relay for the ") + position_name(position) + " position");

  const double total = s.cumulative.back();
  if (excluded_mass <= 0.5 * total) {
    // Rejection on the full distribution equals sampling the renormalized one.
    for (;;) {
      const double u = rng.uniform() * total;
      const auto k = static_cast<std::size_t>(std::upper_bound(s.cumulative.begin(), s.cumulative.end(), u) -
                                              s.cumulative.begin());
      const std::size_t relay = s.relays[std::min(k, s.relays.size() - 1)];
      if (!excluded(relay)) return relay;
    }
  }
  const double u = rng.uniform() * (total - excluded_mass);
  double acc = 0.0;
  std::size_t last = s.relays.size();
  for (std::size_t k = 0; k < s.relays.size(); ++k) {
    const std::size_t relay = s.relays[k];
    if (excluded(relay)) continue;
    acc += weight(relay, position);
    last = relay;
    if (u < acc) return relay;
  }
  return last;
}

GuardList choose_guard_list(const RelayTable& table, Rng& rng, const std::vector<bool>* available) {
  std::size_t guards = 0;
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table[i].guard && (!available || (*available)[i])) ++guards;
  if (guards < 3) throw NoEligibleRelay("fewer than 3 guard relays available for a guard list");
  const PathSampler sampler(table, available);
  GuardList list;
  for (std::size_t k = 0; k < 3; ++k)
    list.guards[k] = sampler.sample(Position::Guard, rng, std::span<const std::size_t>(list.guards.data(), k));
  return list;
}

Path build_path(const PathSampler& sampler, const GuardList& guards, Rng& rng) {
  Path path;
  path.entry = guards.guards[rng.index(3)];
  std::array<std::size_t, 2> chosen{path.entry, 0};
  path.middle = sampler.sample(Position::Middle, rng, std::span<const std::size_t>(chosen.data(), 1));
  chosen[1] = path.middle;
  path.exit = sampler.sample(Position::Exit, rng, chosen);
  return path;
}

Path build_path(const RelayTable& table, const GuardList& guards, Rng& rng, const std::vector<bool>& available) {
  const PathSampler sampler(table, &available);
  return build_path(sampler, guards, rng);
}

}  // namespace oniondos
