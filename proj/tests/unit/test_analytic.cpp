#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "oniondos/analytic.hpp"
#include "oniondos/error.hpp"

using namespace oniondos;

namespace {

AnalyticInputs naive(double g, double e, double z) {
  AnalyticInputs in;
  in.g = g;
  in.e = e;
  in.z = z;
  return in;
}

// A population of one million bandwidth units split into many relays per
// flag class and compromise state; probabilities come from summing the
// weighted bandwidth of the compromised relays.
CompromiseProbs enumerate_population(const AnalyticInputs& in) {
  constexpr double units = 1e6;
  const double shares[][2] = {
      {in.gamma0_c(), in.gamma0() - in.gamma0_c()},  // guard-only
      {in.eta0_c(), in.eta0() - in.eta0_c()},        // exit-only
      {in.zeta_c(), in.zeta - in.zeta_c()},          // guard-exit
      {0.0, 1.0 - in.gamma - in.eta + in.zeta},      // unflagged
  };
  const bool flags[][2] = {{true, false}, {false, true}, {true, true}, {false, false}};
  std::vector<Relay> relays;
  std::vector<bool> compromised;
  std::uint32_t id = 1;
  Rng rng(5);
  for (int cls = 0; cls < 4; ++cls)
    for (int c = 0; c < 2; ++c) {
      auto remaining = static_cast<std::uint64_t>(std::llround(shares[cls][c] * units));
      while (remaining > 0) {
        const std::uint64_t b = std::min<std::uint64_t>(remaining, 1 + rng.index(2000));
        relays.push_back(testing_util::relay(id++, b, flags[cls][0], flags[cls][1]));
        compromised.push_back(c == 0);
        remaining -= b;
      }
    }
  RelayTable t(relays);
  auto mass = [&](Position p) {
    const auto dist = selection_distribution(t, p);
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (compromised[i]) s += dist[i];
    return s;
  };
  return {mass(Position::Guard), mass(Position::Middle), mass(Position::Exit)};
}

AttackerSpec spec_of(const AnalyticInputs& in) {
  AttackerSpec s;
  s.p_kill = in.p_kill;
  s.p_permit = in.p_permit;
  s.p_kill_aware = in.p_kill_aware;
  s.p_kill_unaware = in.p_kill_unaware;
  s.context_mode = in.context_mode;
  return s;
}

bool one_attempt_killed(int j, const CompromiseProbs& p, const AttackerSpec& spec, Rng& rng, CircuitStatus* out) {
  PositionInfo pos;
  pos.entry = rng.bernoulli(j / 3.0);
  pos.middle = rng.bernoulli(p.m_star);
  pos.exit = rng.bernoulli(p.e_star);
  *out = pos.status();
  return decide(pos.status(), spec, pos, std::nullopt, rng) == Decision::Kill;
}

// Clients pick three guards, then try up to K circuits; the first one the
// attacker lets through ends the client's run.
double simulate_experiment(const AnalyticInputs& in, std::size_t clients, std::uint64_t seed) {
  const auto p = compromise_probs(in);
  const AttackerSpec spec = spec_of(in);
  Rng rng(seed);
  std::size_t controlled = 0;
  for (std::size_t c = 0; c < clients; ++c) {
    int j = 0;
    for (int k = 0; k < 3; ++k) j += rng.bernoulli(p.g_star);
    for (int attempt = 0; attempt < in.K; ++attempt) {
      CircuitStatus status;
      if (one_attempt_killed(j, p, spec, rng, &status)) continue;
      controlled += status == CircuitStatus::Controlled;
      break;
    }
  }
  return static_cast<double>(controlled) / static_cast<double>(clients);
}

std::vector<double> grid_axis() {
  std::vector<double> v;
  for (int i = 4; i <= 20; ++i) v.push_back(0.1 * i / 20.0);
  return v;
}

}  // namespace

TEST(CompromiseProbs, TrivialCases) {
  auto full = compromise_probs(naive(1, 1, 1));
  EXPECT_NEAR(full.g_star, 1.0, 1e-12);
  EXPECT_NEAR(full.e_star, 1.0, 1e-12);
  // Unflagged relays cannot be compromised but still serve as middles.
  const WeightSet w = compute_weights(0.7, 0.4);
  const double flagged = 0.4 * w.w_G0 + 0.1 * w.w_E0 + 0.3 * w.w_Z;
  EXPECT_NEAR(full.m_star, flagged / (flagged + 0.2), 1e-12);
  AnalyticInputs every_relay_flagged = naive(1, 1, 1);
  every_relay_flagged.eta = 0.6;
  EXPECT_NEAR(compromise_probs(every_relay_flagged).m_star, 1.0, 1e-12);
  auto none = compromise_probs(naive(0, 0, 0));
  EXPECT_EQ(none.g_star, 0.0);
  EXPECT_EQ(none.m_star, 0.0);
  EXPECT_EQ(none.e_star, 0.0);
}

TEST(CompromiseProbs, MatchesDiscretePopulation) {
  for (auto in : {naive(0.10, 0.10, 0.12), naive(0.05, 0.08, 0.04), naive(0.3, 0.2, 0.1), naive(0.02, 0.02, 0.02)}) {
    const auto formula = compromise_probs(in);
    const auto oracle = enumerate_population(in);
    EXPECT_NEAR(formula.g_star, oracle.g_star, 1e-5);
    EXPECT_NEAR(formula.m_star, oracle.m_star, 1e-5);
    EXPECT_NEAR(formula.e_star, oracle.e_star, 1e-5);
  }
}

TEST(CompromiseProbs, AsWrittenExtrapolatesAffinely) {
  // g=e=.10 with z=.15 leaves a negative compromised exit-only share, which
  // no population has; the closed form is affine in z, so extend the oracle
  // linearly from two feasible points.
  const auto a = enumerate_population(naive(0.10, 0.10, 0.11));
  const auto b = enumerate_population(naive(0.10, 0.10, 0.13));
  const auto w = compromise_probs(naive(0.10, 0.10, 0.15), SplitCheck::AsWritten);
  EXPECT_NEAR(w.g_star, b.g_star + (b.g_star - a.g_star), 2e-5);
  EXPECT_NEAR(w.m_star, b.m_star + (b.m_star - a.m_star), 2e-5);
  EXPECT_NEAR(w.e_star, b.e_star + (b.e_star - a.e_star), 2e-5);
  EXPECT_THROW(compromise_probs(naive(0.10, 0.10, 0.15)), InvalidArgument);
}

TEST(CompromiseProbs, ZeroDenominatorThrows) {
  AnalyticInputs in = naive(0.1, 0.1, 0.1);
  in.gamma = in.eta = in.zeta = 0.2;
  EXPECT_THROW(compromise_probs(in), InvalidArgument);
}

TEST(UnsuccessfulProb, Examples) {
  AnalyticInputs passive = naive(0.1, 0.1, 0.1);
  passive.p_kill = 0;
  for (int j = 0; j <= 3; ++j) EXPECT_EQ(unsuccessful_prob(j, passive), 0.0);
  const auto in = naive(0.1, 0.1, 0.1);
  EXPECT_NEAR(unsuccessful_prob(3, in), 1 - compromise_probs(in).e_star, 1e-15);
  EXPECT_THROW(unsuccessful_prob(4, in), InvalidArgument);
}

TEST(UnsuccessfulProb, MatchesSampledCircuits) {
  AnalyticInputs in = naive(0.2, 0.25, 0.2);
  in.p_kill = 0.7;
  in.p_permit = 0.6;
  AnalyticInputs ctx = in;
  ctx.context_mode = ContextMode::ExitOnly;
  ctx.p_kill_aware = 0.9;
  ctx.p_kill_unaware = 0.3;
  const std::size_t n = 100000;
  std::uint64_t seed = 1;
  for (const auto& x : {naive(0.1, 0.1, 0.1), in, ctx}) {
    const auto p = compromise_probs(x);
    const auto spec = spec_of(x);
    for (int j = 0; j <= 3; ++j) {
      Rng rng(seed++);
      std::size_t killed = 0;
      CircuitStatus s;
      for (std::size_t k = 0; k < n; ++k) killed += one_attempt_killed(j, p, spec, rng, &s);
      const double u = unsuccessful_prob(j, x, p);
      EXPECT_TRUE(testing_util::within_binomial(killed, n, u)) << "j=" << j << " u=" << u << " got " << killed;
    }
  }
}

TEST(UnsuccessfulProb, ContextReductionIsExact) {
  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    AnalyticInputs in = naive(0.02 + 0.2 * rng.uniform(), 0.02 + 0.2 * rng.uniform(), 0);
    in.z = ZRule::max_feasible().apply(in) * rng.uniform();
    in.p_kill = rng.uniform();
    in.p_permit = 0.05 + 0.95 * rng.uniform();
    AnalyticInputs ctx = in;
    ctx.context_mode = ContextMode::ExitOnly;
    ctx.p_kill_aware = ctx.p_kill_unaware = in.p_kill;
    for (int j = 0; j <= 3; ++j) EXPECT_NEAR(unsuccessful_prob(j, ctx), unsuccessful_prob(j, in), 1e-15);
    EXPECT_NEAR(eventual_control_prob(ctx), eventual_control_prob(in), 1e-15);
  }
}

TEST(EventualControl, ZeroWithoutCompromisedGuards) {
  EXPECT_EQ(eventual_control_prob(naive(0, 0.1, 0)), 0.0);
}

TEST(EventualControl, MatchesSimulatedExperiment) {
  AnalyticInputs tuned = naive(0.2, 0.25, 0.2);
  tuned.p_kill = 0.5;
  tuned.p_permit = 0.7;
  AnalyticInputs short_k = naive(0.3, 0.3, 0.3);
  short_k.K = 3;
  AnalyticInputs ctx = naive(0.15, 0.15, 0.1);
  ctx.context_mode = ContextMode::ExitOnly;
  ctx.p_kill_unaware = 0.0;
  const std::size_t clients = 1000000;
  std::uint64_t seed = 40;
  for (const auto& in : {naive(0.3, 0.3, 0.3), naive(0.1, 0.1, 0.12), tuned, short_k, ctx}) {
    const double p = eventual_control_prob(in);
    const double sim = simulate_experiment(in, clients, seed++);
    const double sd = std::sqrt(p * (1 - p) / clients);
    EXPECT_LE(std::abs(sim - p), 3 * sd) << "analytic " << p << " simulated " << sim;
  }
}

TEST(EventualControl, GeometricLimitAtUnitFailure) {
  // With p_permit = 0 every controlled attempt dies; u_3 = 1 exactly and the
  // factor falls back to K, but the permit factor zeroes the sum.
  AnalyticInputs in = naive(1, 1, 1);
  in.p_permit = 0.0;
  EXPECT_EQ(unsuccessful_prob(3, in), 1.0);
  EXPECT_EQ(eventual_control_prob(in), 0.0);
  AnalyticInputs near = naive(1, 1, 1);
  near.p_permit = 1e-14;
  EXPECT_NEAR(eventual_control_prob(near), 120 * 1e-14, 1e-20);
}

TEST(EventualControl, OutputInUnitInterval) {
  Rng rng(8);
  for (int k = 0; k < 2000; ++k) {
    AnalyticInputs in = naive(rng.uniform(), rng.uniform(), 0);
    in.z = ZRule::max_feasible().apply(in) * rng.uniform();
    in.p_kill = rng.uniform();
    in.p_permit = rng.uniform();
    in.K = 1 + static_cast<int>(rng.index(200));
    const double p = eventual_control_prob(in);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(EventualControl, MonotoneInKillAndPermit) {
  Rng rng(12);
  for (int base = 0; base < 10; ++base) {
    AnalyticInputs in = naive(0.01 + 0.3 * rng.uniform(), 0.01 + 0.3 * rng.uniform(), 0);
    in.z = ZRule::capped_ratio(1.5).apply(in);
    std::vector<double> grid(10);
    for (double& v : grid) v = rng.uniform();
    std::sort(grid.begin(), grid.end());
    for (double other : grid) {
      double prev_kill = -1, prev_permit = -1;
      for (double v : grid) {
        AnalyticInputs a = in, b = in;
        a.p_permit = other;
        a.p_kill = v;
        b.p_kill = other;
        b.p_permit = v;
        const double pa = eventual_control_prob(a), pb = eventual_control_prob(b);
        EXPECT_GE(pa, prev_kill - 1e-15);
        EXPECT_GE(pb, prev_permit - 1e-15);
        prev_kill = pa;
        prev_permit = pb;
      }
    }
  }
}

TEST(EventualControl, InsensitiveToAttemptCapOnStandardGrid) {
  std::size_t violations = 0;
  double worst = 0;
  for (double g : grid_axis())
    for (double e : grid_axis()) {
      AnalyticInputs in = naive(g, e, 0);
      in.z = ZRule::capped_ratio(1.5).apply(in);
      in.K = 15;
      const double short_cap = eventual_control_prob(in);
      in.K = 120;
      const double long_cap = eventual_control_prob(in);
      const double rel = std::abs(long_cap - short_cap) / long_cap;
      worst = std::max(worst, rel);
      violations += rel >= 0.10;
    }
  EXPECT_EQ(violations, 0u) << "worst relative difference " << worst;
}

TEST(Sweep, NaiveAboutTwicePassiveOnStandardGrid) {
  SweepAxis g{"g", grid_axis()}, e{"e", grid_axis()};
  AnalyticInputs passive;
  passive.p_kill = 0.0;
  const auto n = sweep(g, e, AnalyticInputs{}, ZRule::capped_ratio(1.5));
  const auto p = sweep(g, e, passive, ZRule::capped_ratio(1.5));
  std::size_t outside = 0;
  double lo = 1e9, hi = 0;
  for (std::size_t i = 0; i < g.values.size(); ++i)
    for (std::size_t k = 0; k < e.values.size(); ++k) {
      const double r = n.values[i][k] / p.values[i][k];
      lo = std::min(lo, r);
      hi = std::max(hi, r);
      outside += r < 1.5 || r > 2.5;
    }
  EXPECT_EQ(outside, 0u) << "ratio range [" << lo << ", " << hi << "]";
}

TEST(Sweep, ExitOnlyContextHalvesControl) {
  AnalyticInputs base = naive(0.10, 0.10, 0);
  base.z = ZRule::capped_ratio(1.5).apply(base);
  AnalyticInputs ctx = base;
  ctx.context_mode = ContextMode::ExitOnly;
  ctx.p_kill_unaware = 0.0;
  const double ratio = eventual_control_prob(ctx) / eventual_control_prob(base);
  EXPECT_GE(ratio, 0.35);
  EXPECT_LE(ratio, 0.65);
}

TEST(Sweep, SinglePointEqualsScalar) {
  AnalyticInputs in;
  in.p_kill = 0.4;
  auto r = sweep(SweepAxis::parse("g:0.07:0.07:1"), SweepAxis::parse("p_permit:0.9:0.9:1"), in, ZRule::ratio(1.0));
  ASSERT_EQ(r.values.size(), 1u);
  ASSERT_EQ(r.values[0].size(), 1u);
  AnalyticInputs direct = in;
  direct.g = 0.07;
  direct.p_permit = 0.9;
  direct.z = 0.0;
  EXPECT_EQ(r.values[0][0], eventual_control_prob(direct));
}

TEST(Sweep, OutputLayouts) {
  AnalyticInputs in;
  in.e = 0.1;
  auto r = sweep(SweepAxis::parse("g:0.02:0.04:3"), SweepAxis::parse("p_kill:0:1:2"), in, ZRule::fixed(0.01));
  std::ostringstream matrix, long_form;
  write_sweep_matrix(matrix, r);
  write_sweep_long(long_form, r);
  std::istringstream m(matrix.str());
  std::string line;
  std::getline(m, line);
  EXPECT_EQ(line, "g\\p_kill,0,1");
  std::getline(m, line);
  EXPECT_EQ(line.substr(0, 5), "0.02,");
  std::istringstream l(long_form.str());
  std::getline(l, line);
  EXPECT_EQ(line, "g,p_kill,value");
  std::size_t rows = 0;
  while (std::getline(l, line)) ++rows;
  EXPECT_EQ(rows, 6u);
}

TEST(Sweep, AxisParsing) {
  auto a = SweepAxis::parse("e:0:0.1:21");
  EXPECT_EQ(a.name, "e");
  ASSERT_EQ(a.values.size(), 21u);
  EXPECT_NEAR(a.values[4], 0.02, 1e-15);
  EXPECT_THROW(SweepAxis::parse("zeta:0:1:3"), InvalidArgument);
  EXPECT_THROW(SweepAxis::parse("g:0:1"), InvalidArgument);
  EXPECT_THROW(SweepAxis::parse("g:0.5:0.1:3"), InvalidArgument);
  EXPECT_THROW(SweepAxis::parse("g:0:1:0"), InvalidArgument);
  EXPECT_THROW(sweep(a, a, AnalyticInputs{}, ZRule::fixed(0)), InvalidArgument);
}

TEST(ZRule, CappedRatioStaysFeasible) {
  for (double g : grid_axis())
    for (double e : grid_axis()) {
      AnalyticInputs in = naive(g, e, 0);
      in.z = ZRule::capped_ratio(1.5).apply(in);
      EXPECT_NO_THROW(validate(in));
      EXPECT_LE(in.z, 1.5 * std::min(g, e) + 1e-15);
    }
}
