#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "oniondos/attacker.hpp"
#include "oniondos/pathsel.hpp"
#include "oniondos/report.hpp"

namespace oniondos {

struct AnalyticInputs {
  double gamma = 0.70;
  double eta = 0.40;
  double zeta = 0.30;
  double g = 0.0;
  double e = 0.0;
  double z = 0.0;
  double p_kill = 1.0;
  double p_permit = 1.0;
  std::optional<double> p_kill_aware;
  std::optional<double> p_kill_unaware;
  ContextMode context_mode = ContextMode::None;
  int K = 120;

  double gamma0() const { return gamma - zeta; }
  double eta0() const { return eta - zeta; }
  /// Compromised guard-only, exit-only and guard-exit shares of T.
  double gamma0_c() const { return g * gamma - z * zeta; }
  double eta0_c() const { return e * eta - z * zeta; }
  double zeta_c() const { return z * zeta; }
};

/// Strict rejects inputs whose compromised guard-only or exit-only share
/// would be negative; AsWritten evaluates the closed forms regardless.
enum class SplitCheck { Strict, AsWritten };

void validate(const AnalyticInputs& in, SplitCheck check = SplitCheck::Strict);

struct CompromiseProbs {
  double g_star = 0;
  double m_star = 0;
  double e_star = 0;
};

CompromiseProbs compromise_probs(const AnalyticInputs& in, SplitCheck check = SplitCheck::Strict);

/// u_j: probability that one build attempt is unsuccessful with j
/// compromised guards in the guard list.
double unsuccessful_prob(int j, const AnalyticInputs& in, const CompromiseProbs& probs);
double unsuccessful_prob(int j, const AnalyticInputs& in, SplitCheck check = SplitCheck::Strict);

double eventual_control_prob(const AnalyticInputs& in, SplitCheck check = SplitCheck::Strict);

/// How z follows (g, e) across a sweep.
struct ZRule {
  enum class Kind { Fixed, Ratio, MaxFeasible, CappedRatio };
  Kind kind = Kind::Fixed;
  double value = 0.0;

  double apply(const AnalyticInputs& in) const;
  static ZRule fixed(double z) { return {Kind::Fixed, z}; }
  static ZRule ratio(double r) { return {Kind::Ratio, r}; }
  static ZRule max_feasible() { return {Kind::MaxFeasible, 0.0}; }
  /// ratio * min(g, e), lowered where needed to keep the split feasible.
  static ZRule capped_ratio(double r) { return {Kind::CappedRatio, r}; }
};

/// "name:lo:hi:count" with name in {g, e, p_kill, p_permit}; count points
/// spaced evenly over [lo, hi].
struct SweepAxis {
  std::string name;
  std::vector<double> values;

  static SweepAxis parse(const std::string& text);
};

struct SweepResult {
  SweepAxis axis1;  // rows
  SweepAxis axis2;  // columns
  std::vector<std::vector<double>> values;
};

SweepResult sweep(const SweepAxis& axis1, const SweepAxis& axis2, const AnalyticInputs& fixed, const ZRule& z_rule,
                  SplitCheck check = SplitCheck::Strict);

/// Matrix CSV: the header row holds the axis2 values after an
/// "axis1\axis2" corner cell; each row starts with its axis1 value.
void write_sweep_matrix(std::ostream& out, const SweepResult& result);
/// Long-format CSV: axis1,axis2,value.
ResultTable sweep_long_table(const SweepResult& result);
void write_sweep_long(std::ostream& out, const SweepResult& result);

}  // namespace oniondos
