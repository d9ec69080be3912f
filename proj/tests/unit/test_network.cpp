#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "helpers.hpp"
#include "oniondos/error.hpp"
#include "oniondos/network.hpp"

using namespace oniondos;
using testing_util::relay;

namespace {

double sample_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

TEST(RelayTable, RejectsInvalidRelays) {
  EXPECT_THROW(RelayTable({relay(1, 10, true, true), relay(1, 10, true, false)}), InvalidArgument);
  EXPECT_THROW(RelayTable({relay(1, 0, true, true)}), InvalidArgument);
  EXPECT_THROW(RelayTable({relay(1, 10, true, false)}), InvalidArgument);
  EXPECT_THROW(RelayTable({relay(1, 10, false, true)}), InvalidArgument);
  EXPECT_THROW(RelayTable({relay(1, 10, true, true, 1.5)}), InvalidArgument);
  EXPECT_NO_THROW(RelayTable({relay(1, 10, true, true)}));
}

TEST(NetworkStats, SingleGuardExitRelay) {
  RelayTable t({relay(1, 100, true, true)});
  auto s = network_stats(t);
  EXPECT_EQ(s.G, 100);
  EXPECT_EQ(s.E, 100);
  EXPECT_EQ(s.Z, 100);
  EXPECT_EQ(s.T, 100);
  EXPECT_EQ(s.gamma, 1.0);
  EXPECT_EQ(s.eta, 1.0);
  EXPECT_EQ(s.zeta, 1.0);
}

TEST(NetworkStats, GuardOnlyAndExitOnly) {
  RelayTable t({relay(1, 100, true, false), relay(2, 100, false, true)});
  auto s = network_stats(t);
  EXPECT_DOUBLE_EQ(s.gamma, 0.5);
  EXPECT_DOUBLE_EQ(s.eta, 0.5);
  EXPECT_DOUBLE_EQ(s.zeta, 0.0);
}

TEST(NetworkStats, MaskedSubsetAndIdentities) {
  RelayTable t({relay(1, 100, true, false), relay(2, 300, false, true), relay(3, 50, true, true),
                relay(4, 25, false, false)});
  auto s = network_stats(t, {true, false, true, true});
  EXPECT_DOUBLE_EQ(s.T, 175);
  EXPECT_DOUBLE_EQ(s.G, 150);
  EXPECT_DOUBLE_EQ(s.E, 50);
  EXPECT_DOUBLE_EQ(s.G0 + s.Z, s.G);
  EXPECT_DOUBLE_EQ(s.E0 + s.Z, s.E);
  EXPECT_THROW(network_stats(t, {true}), InvalidArgument);
}

TEST(Generator, HitsTargetRatios) {
  for (std::uint64_t seed : {1, 2, 3}) {
    NetworkGenConfig c;
    auto s = network_stats(generate_synthetic_network(c, seed));
    EXPECT_NEAR(s.gamma, c.gamma, 0.02) << "seed " << seed;
    EXPECT_NEAR(s.eta, c.eta, 0.02) << "seed " << seed;
    EXPECT_NEAR(s.zeta, c.zeta, 0.02) << "seed " << seed;
  }
  NetworkGenConfig other;
  other.gamma = 0.6;
  other.eta = 0.5;
  other.zeta = 0.2;
  auto s = network_stats(generate_synthetic_network(other, 9));
  EXPECT_NEAR(s.gamma, 0.6, 0.02);
  EXPECT_NEAR(s.eta, 0.5, 0.02);
  EXPECT_NEAR(s.zeta, 0.2, 0.02);
}

TEST(Generator, BandwidthAnchorsWithinTwentyPercent) {
  NetworkGenConfig c;
  c.n = 20000;
  auto t = generate_synthetic_network(c, 4);
  std::vector<double> gx, g0;
  for (const Relay& r : t.relays()) {
    if (r.guard_exit()) gx.push_back(static_cast<double>(r.bandwidth));
    else if (r.guard_only()) g0.push_back(static_cast<double>(r.bandwidth));
  }
  auto near = [](double v, double anchor) { return std::abs(v - anchor) <= 0.2 * anchor; };
  EXPECT_TRUE(near(sample_quantile(gx, 0.5), c.bw_median_gx)) << sample_quantile(gx, 0.5);
  EXPECT_TRUE(near(sample_quantile(g0, 0.5), c.bw_median_g0)) << sample_quantile(g0, 0.5);
  EXPECT_TRUE(near(sample_quantile(gx, 0.9), c.bw_p90_gx)) << sample_quantile(gx, 0.9);
  EXPECT_TRUE(near(sample_quantile(g0, 0.9), c.bw_p90_g0)) << sample_quantile(g0, 0.9);
}

TEST(Generator, DeployedScaleWithinFactorTwo) {
  auto s = network_stats(generate_synthetic_network({}, 1));
  const double mb = 1e6;
  for (auto [v, anchor] : {std::pair{s.G0 / mb, 605.0}, {s.E0 / mb, 300.0}, {s.Z / mb, 365.0}}) {
    EXPECT_GT(v, anchor / 2);
    EXPECT_LT(v, anchor * 2);
  }
}

TEST(Generator, DeterministicPerSeed) {
  EXPECT_EQ(generate_synthetic_network({}, 5), generate_synthetic_network({}, 5));
  EXPECT_FALSE(generate_synthetic_network({}, 5) == generate_synthetic_network({}, 6));
}

TEST(Generator, RejectsInfeasibleTargets) {
  NetworkGenConfig c;
  c.n = 10;
  c.zeta = 0.5;
  c.gamma = 0.4;
  try {
    generate_synthetic_network(c, 1);
    FAIL() << "expected InvalidArgument";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible"), std::string::npos);
  }
  NetworkGenConfig sum;
  sum.gamma = 0.9;
  sum.eta = 0.9;
  sum.zeta = 0.3;
  EXPECT_THROW(sum.validate(), InvalidArgument);
}

TEST(Traces, DegenerateProbabilities) {
  RelayTable t({relay(1, 10, true, true, 1.0, 1.0), relay(2, 10, true, false, 1.0, 0.0),
                relay(3, 10, false, true, 0.0, 1.0)});
  auto tr = generate_lifecycle_traces(t, 50, 3);
  for (std::size_t k = 0; k < 50; ++k) {
    EXPECT_EQ(tr.status(0, k), Status::Succeeded);
    EXPECT_EQ(tr.status(1, k), Status::Absent);
    EXPECT_EQ(tr.status(2, k), Status::Failed);
  }
}

TEST(Traces, BinomialFrequencies) {
  const std::vector<std::pair<double, double>> params = {{0.9, 0.95}, {0.5, 0.5}, {0.2, 0.7}, {0.99, 0.1}};
  std::vector<Relay> rs;
  for (std::uint32_t i = 0; i < params.size(); ++i)
    rs.push_back(relay(i + 1, 10, true, true, params[i].second, params[i].first));
  RelayTable t(rs);
  const std::size_t trials = 4000;
  auto tr = generate_lifecycle_traces(t, trials, 11);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::size_t absent = 0, success = 0;
    for (std::size_t k = 0; k < trials; ++k) {
      absent += tr.status(i, k) == Status::Absent;
      success += tr.status(i, k) == Status::Succeeded;
    }
    const auto [p, r] = params[i];
    EXPECT_TRUE(testing_util::within_binomial(absent, trials, 1 - p)) << "relay " << i << " absent " << absent;
    EXPECT_TRUE(testing_util::within_binomial(success, trials, p * r)) << "relay " << i << " success " << success;
  }
}

TEST(Traces, StatusDomainAndDeterminism) {
  auto t = generate_synthetic_network({}, 1);
  auto a = generate_lifecycle_traces(t, 20, 7);
  EXPECT_EQ(a, generate_lifecycle_traces(t, 20, 7));
  EXPECT_FALSE(a == generate_lifecycle_traces(t, 20, 8));
  for (std::size_t k = 0; k < a.trial_count(); ++k)
    for (Status s : a.trial(k)) EXPECT_TRUE(s == Status::Absent || s == Status::Failed || s == Status::Succeeded);
}

TEST(TableIO, RoundTripIsExact) {
  auto t = generate_synthetic_network({}, 3);
  std::stringstream ss;
  write_relay_table(ss, t);
  auto back = read_relay_table(ss);
  EXPECT_EQ(back, t);
  EXPECT_EQ(back.generation_seed(), 3u);

  testing_util::TempDir dir;
  write_relay_table(dir.path() / "relays.csv", t);
  EXPECT_EQ(read_relay_table(dir.path() / "relays.csv"), t);
}

TEST(TableIO, MalformedRowsReportTheLine) {
  std::istringstream bad_bool("id,bandwidth_bps,guard,exit,reliability,presence\n1,10,1,1,1,1\n2,10,yes,1,1,1\n");
  try {
    read_relay_table(bad_bool);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream short_row("id,bandwidth_bps,guard,exit,reliability,presence\n1,10,1\n");
  EXPECT_THROW(read_relay_table(short_row), ParseError);
  std::istringstream dup("id,bandwidth_bps,guard,exit,reliability,presence\n1,10,1,1,1,1\n1,10,1,1,1,1\n");
  EXPECT_THROW(read_relay_table(dup), ParseError);
  std::istringstream no_header("1,10,1,1,1,1\n");
  EXPECT_THROW(read_relay_table(no_header), ParseError);
}

TEST(TraceIO, RoundTrip) {
  auto t = generate_synthetic_network({}, 2);
  auto tr = generate_lifecycle_traces(t, 5, 9);
  std::stringstream ss;
  write_traces(ss, tr);
  EXPECT_EQ(read_traces(ss, t), tr);
}

TEST(TraceIO, HandWrittenFixture) {
  RelayTable t({relay(10, 5, true, false), relay(20, 5, false, true), relay(30, 5, true, true)});
  std::istringstream in(
      "relay_id,trial,status\n"
      "# trial 0\n"
      "10,0,1\n20,0,0\n30,0,-1\n"
      "30,1,1\n10,1,-1\n20,1,1\n");
  auto tr = read_traces(in, t);
  ASSERT_EQ(tr.trial_count(), 2u);
  EXPECT_EQ(tr.status(0, 0), Status::Succeeded);
  EXPECT_EQ(tr.status(1, 0), Status::Failed);
  EXPECT_EQ(tr.status(2, 0), Status::Absent);
  EXPECT_EQ(tr.status(0, 1), Status::Absent);
  EXPECT_EQ(tr.status(1, 1), Status::Succeeded);
  EXPECT_EQ(tr.status(2, 1), Status::Succeeded);
  EXPECT_EQ(tr.in_consensus(0), (std::vector<bool>{true, true, false}));
}

TEST(TraceIO, RejectsBadRows) {
  RelayTable t({relay(10, 5, true, false), relay(20, 5, false, true)});
  auto expect_line = [&](const std::string& text, std::size_t line) {
    std::istringstream in(text);
    try {
      read_traces(in, t);
      FAIL() << "no error for:\n" << text;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), line) << e.what();
    }
  };
  expect_line("relay_id,trial,status\n10,0,1\n20,0,2\n", 3);
  expect_line("relay_id,trial,status\n10,0,1\n99,0,1\n", 3);
  expect_line("relay_id,trial,status\n# c\n10,0,1\n20,0,1\n10,0,0\n", 5);
  std::istringstream missing("relay_id,trial,status\n10,0,1\n20,0,1\n10,1,1\n");
  EXPECT_THROW(read_traces(missing, t), ParseError);
}

TEST(GenConfig, RoundTripAndErrors) {
  NetworkGenConfig c;
  c.n = 123;
  c.gamma = 0.65;
  c.unhealthy_quantile = 0.4;
  std::stringstream ss;
  write_gen_config(ss, c);
  EXPECT_EQ(read_gen_config(ss), c);

  std::istringstream unknown("n=10\nbogus=1\n");
  try {
    read_gen_config(unknown);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream dup("n=10\nn=11\n");
  EXPECT_THROW(read_gen_config(dup), ParseError);
  std::istringstream junk("n=ten\n");
  EXPECT_THROW(read_gen_config(junk), ParseError);
}
