#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "oniondos/detect_exact.hpp"
#include "oniondos/error.hpp"

using namespace oniondos;
using testing_util::relay;

namespace {

class ConstantOracle : public ProbeOracle {
 public:
  explicit ConstantOracle(ProbeResult r) : r_(r) {}

 protected:
  ProbeResult do_probe(std::span<const RelayId>) override { return r_; }

 private:
  ProbeResult r_;
};

class BrokenTransport : public ProbeOracle {
 protected:
  ProbeResult do_probe(std::span<const RelayId>) override { throw TransportError("connection refused"); }
};

std::vector<RelayId> ids(std::size_t n) {
  std::vector<RelayId> v;
  for (std::uint32_t i = 1; i <= n; ++i) v.push_back(RelayId{i * 7});
  return v;
}

// Runs the detector against a naive attacker holding `bad` and checks every
// verdict against the ground truth.
ExactReport run_exact(const std::vector<RelayId>& relays, const std::set<RelayId>& bad, ExactConfig config = {},
                      double f = 0.0, int r = 1, std::uint64_t seed = 1) {
  SimulatedOracle inner(std::vector<RelayId>(bad.begin(), bad.end()), 1.0, 1.0, f, seed);
  RetryingOracle oracle(inner, r);
  return detect_exact(oracle, relays, config);
}

bool exact(const ExactReport& rep, const std::set<RelayId>& bad) {
  for (const auto& [id, v] : rep.classification)
    if ((v == Verdict::Compromised) != (bad.count(id) > 0)) return false;
  return true;
}

}  // namespace

TEST(RequiredRepetitions, Examples) {
  EXPECT_EQ(required_repetitions(0.45, 7500, 0.0004), 21);
  EXPECT_EQ(required_repetitions(0.2, 7500, 0.0004), 11);
  EXPECT_EQ(required_repetitions(0.0, 7500, 0.0004), 1);
  EXPECT_EQ(required_repetitions(1e-300, 7500, 0.0004), 1);
  EXPECT_THROW(required_repetitions(1.0, 7500, 0.0004), InvalidArgument);
  EXPECT_THROW(required_repetitions(0.5, 7500, 0.0), InvalidArgument);
}

TEST(RequiredRepetitions, SmallestSufficientCount) {
  for (double f : {0.05, 0.2, 0.45, 0.7, 0.9})
    for (double m : {10.0, 300.0, 7500.0, 1e6})
      for (double eps : {1e-6, 4e-4, 0.05}) {
        const int r = required_repetitions(f, m, eps);
        EXPECT_GE(std::pow(1 - std::pow(f, r), m), 1 - eps) << f << " " << m << " " << eps;
        const double bound = (std::log(std::log(1 / (1 - eps))) - std::log(m)) / std::log(f);
        EXPECT_GT(r, bound);
        EXPECT_LE(r - 1, std::max(bound, 0.0));
      }
}

TEST(ProbeWithRetries, DeterministicOracles) {
  const auto path = ids(3);
  ConstantOracle ok(ProbeResult::Succeed);
  EXPECT_EQ(probe_with_retries(ok, path, 21), ProbeResult::Succeed);
  EXPECT_EQ(ok.probe_count(), 1u);
  ConstantOracle bad(ProbeResult::Fail);
  EXPECT_EQ(probe_with_retries(bad, path, 21), ProbeResult::Fail);
  EXPECT_EQ(bad.probe_count(), 21u);
  EXPECT_THROW(probe_with_retries(bad, path, 0), InvalidArgument);
}

TEST(ProbeWithRetries, NoisyOracleNeverMisleads) {
  SimulatedOracle noisy({}, 1.0, 1.0, 0.45, 3);
  const auto path = ids(3);
  std::size_t wrong = 0;
  for (int k = 0; k < 1000000; ++k) wrong += probe_with_retries(noisy, path, 21) == ProbeResult::Fail;
  EXPECT_EQ(wrong, 0u);
}

TEST(ProbeOracle, CountsAndValidatesPaths) {
  ConstantOracle o(ProbeResult::Succeed);
  const RelayId repeated[] = {RelayId{1}, RelayId{2}, RelayId{1}};
  const RelayId single[] = {RelayId{1}};
  EXPECT_THROW(o.probe(repeated), InvalidArgument);
  EXPECT_THROW(o.probe(single), InvalidArgument);
  EXPECT_EQ(o.probe_count(), 0u);
  o.probe(ids(3));
  o.probe(ids(4));
  EXPECT_EQ(o.probe_count(), 2u);
}

TEST(ProbeOracle, TransportErrorsSurface) {
  BrokenTransport t;
  const auto relays = ids(10);
  EXPECT_THROW(detect_exact(t, relays), TransportError);
  RetryingOracle retrying(t, 5);
  EXPECT_THROW(retrying.probe(ids(3)), TransportError);
}

TEST(DetectExact, TwoGuardExitRelaysAmongFifty) {
  const auto relays = ids(50);
  const std::set<RelayId> bad{relays[17], relays[33]};
  const auto rep = run_exact(relays, bad);
  EXPECT_TRUE(exact(rep, bad));
  EXPECT_LE(rep.probes_used, 150u);
  EXPECT_FALSE(rep.ambiguous_all_or_none);
}

TEST(DetectExact, NoCompromisedRelaysIsAmbiguous) {
  const auto rep = run_exact(ids(20), {});
  EXPECT_TRUE(rep.ambiguous_all_or_none);
  for (const auto& [id, v] : rep.classification) EXPECT_EQ(v, Verdict::Compromised);
}

TEST(DetectExact, ForcesEveryBranch) {
  const auto r = ids(30);
  struct Case {
    std::size_t k;
    std::set<RelayId> bad;
    ExactCase branch;
  };
  const std::vector<Case> cases = {
      {3, {r[0], r[1], r[9]}, ExactCase::AllSucceed},
      {3, {r[4], r[9], r[20]}, ExactCase::Mixed},
      {3, {r[0], r[5], r[12]}, ExactCase::SingleX},
      {3, {r[1], r[5]}, ExactCase::SingleX},
      {3, std::set<RelayId>(r.begin() + 2, r.end()), ExactCase::XHonest},
      {4, {r[0], r[1], r[10]}, ExactCase::PairFound},
      {4, {r[1], r[2], r[25]}, ExactCase::PairFound},
      {4, {r[0], r[2], r[11]}, ExactCase::AllSucceed},
      {4, {r[1], r[7], r[8]}, ExactCase::SingleX},
      {5, {r[1], r[3], r[7]}, ExactCase::PairFound},
  };
  for (bool memoize : {true, false})
    for (const auto& c : cases) {
      ExactConfig cfg;
      cfg.k = c.k;
      cfg.memoize = memoize;
      const auto rep = run_exact(r, c.bad, cfg);
      EXPECT_EQ(rep.branch, c.branch) << "k=" << c.k;
      EXPECT_TRUE(exact(rep, c.bad)) << "k=" << c.k << " branch " << static_cast<int>(c.branch);
      EXPECT_LE(rep.probes_used, exact_probe_bound(r.size(), c.k));
    }
}

TEST(DetectExact, RandomInstancesKThree) {
  Rng rng(2024);
  for (int run = 0; run < 100; ++run) {
    const std::size_t n = 20 + rng.index(181);
    const std::size_t c = 2 + rng.index(n - 2);
    auto relays = ids(n);
    std::vector<RelayId> shuffled = relays;
    for (std::size_t i = n; i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
    const std::set<RelayId> bad(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(c));
    const auto rep = run_exact(relays, bad, {}, 0.0, 1, run);
    EXPECT_TRUE(exact(rep, bad)) << "n=" << n << " c=" << c;
    EXPECT_LE(rep.probes_used, 3 * n) << "n=" << n << " c=" << c;
  }
}

TEST(DetectExact, RandomInstancesLongerPaths) {
  Rng rng(7);
  for (int run = 0; run < 200; ++run) {
    ExactConfig cfg;
    cfg.k = 4 + rng.index(3);
    cfg.random_x = run % 2 == 0;
    cfg.shuffle_interior = run % 3 != 0;
    cfg.seed = static_cast<std::uint64_t>(run);
    const std::size_t n = cfg.k + 3 + rng.index(60);
    const std::size_t c = 2 + rng.index(n - 2);
    auto relays = ids(n);
    std::vector<RelayId> shuffled = relays;
    for (std::size_t i = n; i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
    const std::set<RelayId> bad(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(c));
    const auto rep = run_exact(relays, bad, cfg, 0.0, 1, run);
    EXPECT_TRUE(exact(rep, bad)) << "k=" << cfg.k << " n=" << n << " c=" << c;
    EXPECT_LE(rep.probes_used, exact_probe_bound(n, cfg.k));
  }
}

TEST(DetectExact, NoisyOracleWithRepetitions) {
  const std::size_t n = 100;
  const int r = 21;
  Rng rng(99);
  int perfect = 0;
  for (int run = 0; run < 200; ++run) {
    const std::size_t c = 2 + rng.index(n - 2);
    auto relays = ids(n);
    std::vector<RelayId> shuffled = relays;
    for (std::size_t i = n; i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
    const std::set<RelayId> bad(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(c));
    ExactConfig cfg;
    cfg.memoize = false;
    SimulatedOracle inner(std::vector<RelayId>(bad.begin(), bad.end()), 1.0, 1.0, 0.45, 1000 + run);
    RetryingOracle oracle(inner, r);
    const auto rep = detect_exact(oracle, relays, cfg);
    perfect += exact(rep, bad);
    EXPECT_LE(oracle.attempts(), static_cast<std::size_t>(3 * r) * n);
  }
  EXPECT_GE(perfect, 199);
}

TEST(DetectExact, TraceOracleFailsOnDeadRelays) {
  RelayTable t({relay(1, 10, true, true), relay(2, 10, true, true), relay(3, 10, true, true)});
  std::vector<Status> s{Status::Succeeded, Status::Failed, Status::Succeeded};
  TraceSet tr({RelayId{1}, RelayId{2}, RelayId{3}}, 1, s);
  TraceOracle o(t, tr, AttackerSpec{}, 1);
  const RelayId dead[] = {RelayId{1}, RelayId{2}, RelayId{3}};
  const RelayId alive[] = {RelayId{1}, RelayId{3}};
  EXPECT_EQ(o.probe(dead), ProbeResult::Fail);
  EXPECT_EQ(o.probe(alive), ProbeResult::Succeed);
}

TEST(DetectExact, RejectsBadInput) {
  ConstantOracle o(ProbeResult::Succeed);
  EXPECT_THROW(detect_exact(o, ids(3)), InvalidArgument);
  std::vector<RelayId> dup = ids(10);
  dup[4] = dup[2];
  EXPECT_THROW(detect_exact(o, dup), InvalidArgument);
  ExactConfig k2;
  k2.k = 2;
  EXPECT_THROW(detect_exact(o, ids(10), k2), InvalidArgument);
}

TEST(DetectExact, ReportJson) {
  const auto relays = ids(10);
  const auto rep = run_exact(relays, {relays[3], relays[6]});
  std::ostringstream out;
  write_exact_report(out, rep);
  const auto j = nlohmann::json::parse(out.str());
  ASSERT_EQ(j["classification"].size(), 10u);
  EXPECT_EQ(j["classification"][3]["id"], relays[3].value);
  EXPECT_EQ(j["classification"][3]["verdict"], "compromised");
  EXPECT_EQ(j["classification"][0]["verdict"], "honest");
  EXPECT_EQ(j["ambiguous_all_or_none"], false);
  EXPECT_EQ(j["probes_used"], rep.probes_used);
}

TEST(ProbeBound, Formula) {
  EXPECT_EQ(exact_probe_bound(100, 3), 4u * 98u);
  EXPECT_EQ(exact_probe_bound(50, 4), (3u + 4u) * 47u);
}
