#include "oniondos/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/random/beta_distribution.hpp>

#include "oniondos/error.hpp"
#include "oniondos/report.hpp"
#include "oniondos/rng.hpp"
#include "text_util.hpp"

namespace oniondos {

RelayTable::RelayTable(std::vector<Relay> relays, std::uint64_t generation_seed)
    : relays_(std::move(relays)), generation_seed_(generation_seed) {
  bool any_guard = false;
  bool any_exit = false;
  index_.reserve(relays_.size());
  for (std::size_t i = 0; i < relays_.size(); ++i) {
    const Relay& r = relays_[i];
    if (!index_.emplace(r.id.value, i).second)
      throw InvalidArgument("duplicate relay id " + std::to_string(r.id.value));
    if (r.bandwidth == 0)
      throw InvalidArgument("relay " + std::to_string(r.id.value) + " has zero bandwidth");
    if (!(r.reliability >= 0.0 && r.reliability <= 1.0) || !(r.presence >= 0.0 && r.presence <= 1.0))
      throw InvalidArgument("relay " + std::to_string(r.id.value) + " has a probability outside [0,1]");
    any_guard |= r.guard;
    any_exit |= r.exit;
  }
  if (!any_guard) throw InvalidArgument("relay table has no guard relay");
  if (!any_exit) throw InvalidArgument("relay table has no exit relay");
}

std::optional<std::size_t> RelayTable::index_of(RelayId id) const {
  auto it = index_.find(id.value);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t RelayTable::require_index(RelayId id) const {
  auto idx = index_of(id);
  if (!idx) throw InvalidArgument("unknown relay id " + std::to_string(id.value));
  return *idx;
}

TraceSet::TraceSet(std::vector<RelayId> relay_ids, std::size_t trial_count, std::vector<Status> statuses)
    : relay_ids_(std::move(relay_ids)), trial_count_(trial_count), statuses_(std::move(statuses)) {
  if (trial_count_ == 0) throw InvalidArgument("trace set needs at least one trial");
  if (statuses_.size() != trial_count_ * relay_ids_.size())
    throw InvalidArgument("trace status count does not match relays x trials");
  for (Status s : statuses_) {
    const auto v = static_cast<int>(s);
    if (v < -1 || v > 1) throw InvalidArgument("trace status outside {-1,0,1}");
  }
}

std::vector<bool> TraceSet::in_consensus(std::size_t t) const {
  auto row = trial(t);
  std::vector<bool> mask(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) mask[i] = row[i] != Status::Absent;
  return mask;
}

namespace {

BandwidthSummary summarize(const RelayTable& table, const std::vector<bool>* mask) {
  BandwidthSummary s;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (mask && !(*mask)[i]) continue;
    const Relay& r = table[i];
    const auto b = static_cast<double>(r.bandwidth);
    s.T += b;
    if (r.guard) s.G += b;
    if (r.exit) s.E += b;
    if (r.guard_exit()) s.Z += b;
    else if (r.guard) s.G0 += b;
    else if (r.exit) s.E0 += b;
  }
  if (s.T > 0) {
    s.gamma = s.G / s.T;
    s.eta = s.E / s.T;
    s.zeta = s.Z / s.T;
    s.gamma0 = s.G0 / s.T;
    s.eta0 = s.E0 / s.T;
  }
  return s;
}

// Bandwidth is capped; no deployed relay comes near this rate.
constexpr double kBandwidthCap = 50e6;
// Shapes for the two flag classes without published anchors.
constexpr double kExitOnlyMedian = 250e3, kExitOnlySigma = 1.9;
constexpr double kUnflaggedMedian = 60e3, kUnflaggedSigma = 1.6;

struct BandwidthClass {
  bool guard;
  bool exit;
  double fraction;  // share of total bandwidth
  double mu;
  double sigma;
};

double capped_lognormal_mean(double mu, double sigma) {
  const boost::math::normal standard;
  const double lc = std::log(kBandwidthCap);
  return std::exp(mu + sigma * sigma / 2) * boost::math::cdf(standard, (lc - mu - sigma * sigma) / sigma) +
         kBandwidthCap * boost::math::cdf(boost::math::complement(standard, (lc - mu) / sigma));
}

double sigma_from_p90(double median, double p90) {
  const boost::math::normal standard;
  return std::log(p90 / median) / boost::math::quantile(standard, 0.9);
}

std::vector<std::size_t> class_counts(const std::array<BandwidthClass, 4>& classes, std::size_t n) {
  std::array<double, 4> density{};
  double total = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (classes[c].fraction > 0)
      density[c] = classes[c].fraction / capped_lognormal_mean(classes[c].mu, classes[c].sigma);
    total += density[c];
  }
  std::vector<std::size_t> counts(classes.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const double expected = static_cast<double>(n) * density[c] / total;
    counts[c] = static_cast<std::size_t>(std::floor(expected));
    if (classes[c].fraction > 0 && counts[c] == 0) counts[c] = 1;
    remainders.emplace_back(expected - std::floor(expected), c);
    assigned += counts[c];
  }
  std::sort(remainders.begin(), remainders.end(), std::greater<>());
  for (std::size_t k = 0; assigned < n; k = (k + 1) % remainders.size()) {
    if (classes[remainders[k].second].fraction > 0) {
      ++counts[remainders[k].second];
      ++assigned;
    }
  }
  while (assigned > n) {
    auto largest = std::max_element(counts.begin(), counts.end());
    --*largest;
    --assigned;
  }
  return counts;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

double sample_beta(double mean, double concentration, Rng& rng) {
  if (mean <= 0.0) return 0.0;
  if (mean >= 1.0) return 1.0;
  boost::random::beta_distribution<double> dist(mean * concentration, (1.0 - mean) * concentration);
  return std::clamp(dist(rng), 0.0, 1.0);
}

struct HealthProfile {
  double rel_mean, rel_concentration, presence_mean, presence_concentration;
};

}  // namespace

BandwidthSummary network_stats(const RelayTable& table) { return summarize(table, nullptr); }

BandwidthSummary network_stats(const RelayTable& table, const std::vector<bool>& mask) {
  if (mask.size() != table.size()) throw InvalidArgument("mask size does not match relay table");
  return summarize(table, &mask);
}

void NetworkGenConfig::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (n < 10) throw InvalidArgument("n must be at least 10");
  if (trial_count < 1) throw InvalidArgument("trial_count must be at least 1");
  if (!in_unit(gamma) || !in_unit(eta) || !in_unit(zeta))
    throw InvalidArgument("gamma, eta and zeta must lie in [0,1]");
  if (gamma <= 0.0 || eta <= 0.0) throw InvalidArgument("gamma and eta must be positive");
  if (zeta > std::min(gamma, eta))
    throw InvalidArgument("infeasible targets: zeta (" + format_number(zeta) +
                          ") exceeds min(gamma, eta) (" + format_number(std::min(gamma, eta)) +
                          "); guard-exit bandwidth is part of both guard and exit bandwidth");
  if (gamma + eta - zeta > 1.0 + 1e-12)
    throw InvalidArgument("infeasible targets: gamma + eta - zeta exceeds 1");
  if (!(bw_median_gx > 0 && bw_median_g0 > 0 && bw_p90_gx > bw_median_gx && bw_p90_g0 > bw_median_g0))
    throw InvalidArgument("bandwidth anchors need 0 < median < 90th percentile");
  if (!in_unit(rel_mean) || !in_unit(presence_mean))
    throw InvalidArgument("rel_mean and presence_mean must lie in [0,1]");
  if (!in_unit(flaky_fraction) || !in_unit(broken_fraction) || flaky_fraction + broken_fraction > 1.0)
    throw InvalidArgument("flaky_fraction + broken_fraction must lie in [0,1]");
  if (!(unhealthy_quantile > 0.0 && unhealthy_quantile <= 1.0) ||
      flaky_fraction + broken_fraction > unhealthy_quantile + 1e-12)
    throw InvalidArgument("unhealthy_quantile must lie in (0,1] and cover flaky_fraction + broken_fraction");
}

RelayTable generate_synthetic_network(const NetworkGenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x6e6574));

  const std::array<BandwidthClass, 4> classes{{
      {true, true, config.zeta, std::log(config.bw_median_gx), sigma_from_p90(config.bw_median_gx, config.bw_p90_gx)},
      {true, false, config.gamma - config.zeta, std::log(config.bw_median_g0),
       sigma_from_p90(config.bw_median_g0, config.bw_p90_g0)},
      {false, true, config.eta - config.zeta, std::log(kExitOnlyMedian), kExitOnlySigma},
      {false, false, std::max(0.0, 1.0 - config.gamma - config.eta + config.zeta), std::log(kUnflaggedMedian),
       kUnflaggedSigma},
  }};
  const std::vector<std::size_t> counts = class_counts(classes, config.n);

  // Stratified quantile sampling keeps class totals stable under heavy tails.
  const boost::math::normal standard;
  std::vector<Relay> relays;
  relays.reserve(config.n);
  std::array<double, 4> sums{};
  std::vector<std::size_t> class_of;
  std::vector<double> quantile_of;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::size_t> strata(counts[c]);
    std::iota(strata.begin(), strata.end(), 0);
    shuffle(strata, rng);
    for (std::size_t k : strata) {
      const double u = std::clamp((static_cast<double>(k) + rng.uniform()) / static_cast<double>(counts[c]),
                                  1e-12, 1.0 - 1e-12);
      const double bw =
          std::min(kBandwidthCap, std::exp(classes[c].mu + classes[c].sigma * boost::math::quantile(standard, u)));
      Relay r;
      r.guard = classes[c].guard;
      r.exit = classes[c].exit;
      r.bandwidth = static_cast<std::uint64_t>(bw);
      sums[c] += bw;
      relays.push_back(r);
      class_of.push_back(c);
      quantile_of.push_back(u);
    }
  }

  // Rescale each class so the bandwidth ratios hit their targets.
  const double total = sums[0] + sums[1] + sums[2] + sums[3];
  std::array<double, 4> scale{};
  for (std::size_t c = 0; c < classes.size(); ++c)
    scale[c] = sums[c] > 0 ? classes[c].fraction * total / sums[c] : 0.0;
  for (std::size_t i = 0; i < relays.size(); ++i) {
    const double scaled = static_cast<double>(relays[i].bandwidth) * scale[class_of[i]];
    relays[i].bandwidth = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(scaled)));
  }

  const HealthProfile healthy{config.rel_mean, 1000.0, config.presence_mean, 20.0};
  const HealthProfile flaky{0.15, 6.0, 0.50, 8.0};
  const HealthProfile broken{0.03, 30.0, 0.35, 4.0};
  for (std::size_t i = 0; i < relays.size(); ++i) {
    Relay& r = relays[i];
    // Unhealthy relays come from the low-bandwidth end of their class.
    const double scale = quantile_of[i] < config.unhealthy_quantile ? 1.0 / config.unhealthy_quantile : 0.0;
    const double broken_p = config.broken_fraction * scale, flaky_p = config.flaky_fraction * scale;
    const double u = rng.uniform();
    const HealthProfile& h = u < broken_p ? broken : (u < broken_p + flaky_p ? flaky : healthy);
    r.reliability = sample_beta(h.rel_mean, h.rel_concentration, rng);
    r.presence = sample_beta(h.presence_mean, h.presence_concentration, rng);
  }

  shuffle(relays, rng);
  for (std::size_t i = 0; i < relays.size(); ++i) relays[i].id = RelayId{static_cast<std::uint32_t>(i + 1)};
  return RelayTable(std::move(relays), seed);
}

TraceSet generate_lifecycle_traces(const RelayTable& table, std::size_t trial_count, std::uint64_t seed) {
  if (trial_count < 1) throw InvalidArgument("trial_count must be at least 1");
  const std::size_t n = table.size();
  std::vector<Status> statuses(n * trial_count);
  std::vector<RelayId> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Relay& r = table[i];
    ids[i] = r.id;
    Rng rng(derive_seed(seed, r.id.value));
    for (std::size_t t = 0; t < trial_count; ++t) {
      Status s = Status::Absent;
      if (rng.uniform() < r.presence) s = rng.uniform() < r.reliability ? Status::Succeeded : Status::Failed;
      statuses[t * n + i] = s;
    }
  }
  return TraceSet(std::move(ids), trial_count, std::move(statuses));
}

// ---------------------------------------------------------------------------
// I/O

namespace {
constexpr std::string_view kTableHeader = "id,bandwidth_bps,guard,exit,reliability,presence";
constexpr std::string_view kTraceHeader = "relay_id,trial,status";
constexpr std::string_view kSeedComment = "# generation_seed=";
}  // namespace

void write_relay_table(std::ostream& out, const RelayTable& table) {
  out << kSeedComment << table.generation_seed() << '\n' << kTableHeader << '\n';
  for (const Relay& r : table.relays()) {
    out << r.id.value << ',' << r.bandwidth << ',' << (r.guard ? 1 : 0) << ',' << (r.exit ? 1 : 0) << ','
        << format_exact(r.reliability) << ',' << format_exact(r.presence) << '\n';
  }
}

RelayTable read_relay_table(std::istream& in, const std::string& source) {
  detail::LineReader reader(in, source);
  std::string line;
  std::uint64_t seed = 0;
  bool header_seen = false;
  std::vector<Relay> relays;
  std::set<std::uint32_t> ids;
  while (reader.next(line)) {
    const std::string_view view = detail::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      if (!header_seen && view.starts_with(kSeedComment))
        seed = reader.parse_int<std::uint64_t>(detail::trim(view.substr(kSeedComment.size())), "generation_seed");
      continue;
    }
    if (!header_seen) {
      if (view != kTableHeader) reader.fail("expected header '" + std::string(kTableHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto fields = detail::split(view, ',');
    if (fields.size() != 6) reader.fail("expected 6 fields, found " + std::to_string(fields.size()));
    Relay r;
    r.id = RelayId{reader.parse_int<std::uint32_t>(fields[0], "id")};
    r.bandwidth = reader.parse_int<std::uint64_t>(fields[1], "bandwidth_bps");
    r.guard = reader.parse_bool01(fields[2], "guard");
    r.exit = reader.parse_bool01(fields[3], "exit");
    r.reliability = reader.parse_double(fields[4], "reliability");
    r.presence = reader.parse_double(fields[5], "presence");
    if (r.bandwidth == 0) reader.fail("bandwidth_bps must be positive");
    if (!(r.reliability >= 0 && r.reliability <= 1)) reader.fail("reliability outside [0,1]");
    if (!(r.presence >= 0 && r.presence <= 1)) reader.fail("presence outside [0,1]");
    if (!ids.insert(r.id.value).second) reader.fail("duplicate relay id " + std::to_string(r.id.value));
    relays.push_back(r);
  }
  if (!header_seen) reader.fail("missing header");
  return RelayTable(std::move(relays), seed);
}

void write_traces(std::ostream& out, const TraceSet& traces) {
  std::vector<std::size_t> order(traces.relay_count());
  std::iota(order.begin(), order.end(), 0);
  const auto ids = traces.relay_ids();
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  out << kTraceHeader << '\n';
  for (std::size_t t = 0; t < traces.trial_count(); ++t)
    for (std::size_t i : order)
      out << ids[i].value << ',' << t << ',' << static_cast<int>(traces.status(i, t)) << '\n';
}

TraceSet read_traces(std::istream& in, const RelayTable& table, const std::string& source) {
  detail::LineReader reader(in, source);
  std::string line;
  bool header_seen = false;
  struct Row {
    std::size_t relay;
    std::size_t trial;
    Status status;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::size_t trials = 0;
  while (reader.next(line)) {
    const std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    if (!header_seen) {
      if (view != kTraceHeader) reader.fail("expected header '" + std::string(kTraceHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto fields = detail::split(view, ',');
    if (fields.size() != 3) reader.fail("expected 3 fields, found " + std::to_string(fields.size()));
    const RelayId id{reader.parse_int<std::uint32_t>(fields[0], "relay_id")};
    const auto idx = table.index_of(id);
    if (!idx) reader.fail("unknown relay id " + std::to_string(id.value));
    const auto trial = reader.parse_int<std::size_t>(fields[1], "trial");
    const int status = reader.parse_int<int>(fields[2], "status");
    if (status < -1 || status > 1) reader.fail("status " + std::to_string(status) + " outside {-1,0,1}");
    rows.push_back({*idx, trial, static_cast<Status>(status), reader.line()});
    trials = std::max(trials, trial + 1);
    if (trials > (std::size_t{1} << 24)) reader.fail("trial index too large");
  }
  if (!header_seen) reader.fail("missing header");
  if (rows.empty()) reader.fail("trace file has no rows");

  const std::size_t n = table.size();
  std::vector<Status> statuses(n * trials);
  std::vector<bool> seen(n * trials, false);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t cell = rows[k].trial * n + rows[k].relay;
    if (seen[cell])
      throw ParseError(source, rows[k].line,
                       "duplicate status for relay " + std::to_string(table[rows[k].relay].id.value) + " trial " +
                           std::to_string(rows[k].trial));
    seen[cell] = true;
    statuses[cell] = rows[k].status;
  }
  for (std::size_t cell = 0; cell < seen.size(); ++cell) {
    if (!seen[cell])
      throw ParseError(source, reader.line(),
                       "missing status for relay " + std::to_string(table[cell % n].id.value) + " trial " +
                           std::to_string(cell / n));
  }
  std::vector<RelayId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = table[i].id;
  return TraceSet(std::move(ids), trials, std::move(statuses));
}

void write_gen_config(std::ostream& out, const NetworkGenConfig& c) {
  out << "n=" << c.n << '\n'
      << "gamma=" << format_exact(c.gamma) << '\n'
      << "eta=" << format_exact(c.eta) << '\n'
      << "zeta=" << format_exact(c.zeta) << '\n'
      << "trial_count=" << c.trial_count << '\n'
      << "bw_median_gx=" << format_exact(c.bw_median_gx) << '\n'
      << "bw_median_g0=" << format_exact(c.bw_median_g0) << '\n'
      << "bw_p90_gx=" << format_exact(c.bw_p90_gx) << '\n'
      << "bw_p90_g0=" << format_exact(c.bw_p90_g0) << '\n'
      << "rel_mean=" << format_exact(c.rel_mean) << '\n'
      << "presence_mean=" << format_exact(c.presence_mean) << '\n'
      << "flaky_fraction=" << format_exact(c.flaky_fraction) << '\n'
      << "broken_fraction=" << format_exact(c.broken_fraction) << '\n'
      << "unhealthy_quantile=" << format_exact(c.unhealthy_quantile) << '\n';
}

NetworkGenConfig read_gen_config(std::istream& in, const std::string& source) {
  detail::LineReader reader(in, source);
  NetworkGenConfig c;
  std::set<std::string, std::less<>> seen;
  std::string line;
  while (reader.next(line)) {
    const std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const std::size_t eq = view.find('=');
    if (eq == std::string_view::npos) reader.fail("expected key=value");
    const std::string key(detail::trim(view.substr(0, eq)));
    const std::string_view value = detail::trim(view.substr(eq + 1));
    if (!seen.insert(key).second) reader.fail("duplicate key '" + key + "'");
    if (key == "n") c.n = reader.parse_int<std::size_t>(value, "n");
    else if (key == "trial_count") c.trial_count = reader.parse_int<std::size_t>(value, "trial_count");
    else if (key == "gamma") c.gamma = reader.parse_double(value, "gamma");
    else if (key == "eta") c.eta = reader.parse_double(value, "eta");
    else if (key == "zeta") c.zeta = reader.parse_double(value, "zeta");
    else if (key == "bw_median_gx") c.bw_median_gx = reader.parse_double(value, "bw_median_gx");
    else if (key == "bw_median_g0") c.bw_median_g0 = reader.parse_double(value, "bw_median_g0");
    else if (key == "bw_p90_gx") c.bw_p90_gx = reader.parse_double(value, "bw_p90_gx");
    else if (key == "bw_p90_g0") c.bw_p90_g0 = reader.parse_double(value, "bw_p90_g0");
    else if (key == "rel_mean") c.rel_mean = reader.parse_double(value, "rel_mean");
    else if (key == "presence_mean") c.presence_mean = reader.parse_double(value, "presence_mean");
    else if (key == "flaky_fraction") c.flaky_fraction = reader.parse_double(value, "flaky_fraction");
    else if (key == "broken_fraction") c.broken_fraction = reader.parse_double(value, "broken_fraction");
    else if (key == "unhealthy_quantile") c.unhealthy_quantile = reader.parse_double(value, "unhealthy_quantile");
    else reader.fail("unknown key '" + key + "'");
  }
  return c;
}

namespace {
std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open input file: " + path.string());
  return in;
}
}  // namespace

void write_relay_table(const std::filesystem::path& path, const RelayTable& table) {
  write_file_atomically(path, [&](std::ostream& out) { write_relay_table(out, table); });
}

RelayTable read_relay_table(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_relay_table(in, path.string());
}

void write_traces(const std::filesystem::path& path, const TraceSet& traces) {
  write_file_atomically(path, [&](std::ostream& out) { write_traces(out, traces); });
}

TraceSet read_traces(const std::filesystem::path& path, const RelayTable& table) {
  auto in = open_input(path);
  return read_traces(in, table, path.string());
}

NetworkGenConfig read_gen_config(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_gen_config(in, path.string());
}

}  // namespace oniondos
