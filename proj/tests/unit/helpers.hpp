#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "oniondos/network.hpp"
#include "oniondos/pathsel.hpp"

namespace testing_util {

using oniondos::Position;
using oniondos::Relay;
using oniondos::RelayTable;

inline oniondos::Relay relay(std::uint32_t id, std::uint64_t bw, bool guard, bool exit, double rel = 1.0,
                             double presence = 1.0) {
  oniondos::Relay r;
  r.id = oniondos::RelayId{id};
  r.bandwidth = bw;
  r.guard = guard;
  r.exit = exit;
  r.reliability = rel;
  r.presence = presence;
  return r;
}

/// |observed - n p| within k binomial standard deviations.
inline bool within_binomial(std::size_t observed, std::size_t n, double p, double k = 3.0) {
  const double mean = static_cast<double>(n) * p;
  const double sd = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
  return std::abs(static_cast<double>(observed) - mean) <= k * sd + 1e-9;
}

/// Pearson chi-square p-value of counts against expected probabilities.
/// Cells with negligible expectation are pooled into one.
inline double chi_square_p(const std::vector<std::size_t>& counts, const std::vector<double>& probs) {
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  double stat = 0, pooled_obs = 0, pooled_exp = 0;
  int cells = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double expected = probs[i] * total;
    if (expected < 5.0) {
      pooled_obs += static_cast<double>(counts[i]);
      pooled_exp += expected;
      continue;
    }
    stat += std::pow(static_cast<double>(counts[i]) - expected, 2) / expected;
    ++cells;
  }
  if (pooled_exp > 0) {
    stat += std::pow(pooled_obs - pooled_exp, 2) / pooled_exp;
    ++cells;
  }
  if (cells < 2) return 1.0;
  boost::math::chi_squared dist(cells - 1);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// Weighted bandwidth of a relay for a position, computed from the raw table
// with the Tor weights written out by hand.
struct HandWeights {
  double wg0, we0, wz;

  explicit HandWeights(const RelayTable& t, const std::vector<bool>& avail) {
    double G = 0, E = 0, T = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!avail[i]) continue;
      T += static_cast<double>(t[i].bandwidth);
      if (t[i].guard) G += static_cast<double>(t[i].bandwidth);
      if (t[i].exit) E += static_cast<double>(t[i].bandwidth);
    }
    const double gamma = G / T, eta = E / T;
    wg0 = gamma < 1.0 / 3 ? 0 : 1 - 1 / (3 * gamma);
    we0 = eta < 1.0 / 3 ? 0 : 1 - 1 / (3 * eta);
    wz = wg0 * we0;
  }

  double weighted(const Relay& r, Position p) const {
    const double b = static_cast<double>(r.bandwidth);
    switch (p) {
      case Position::Guard: return r.guard_exit() ? b * we0 : r.guard ? b : 0;
      case Position::Middle: return b * (r.guard_exit() ? wz : r.guard ? wg0 : r.exit ? we0 : 1.0);
      case Position::Exit: return r.guard_exit() ? b * wg0 : r.exit ? b : 0;
    }
    return 0;
  }
};

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("oniondos_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace testing_util
