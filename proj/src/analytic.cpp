#include "oniondos/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "oniondos/error.hpp"
#include "oniondos/report.hpp"
#include "text_util.hpp"

namespace oniondos {

namespace {
bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }
constexpr double kSlack = 1e-12;
}  // namespace

void validate(const AnalyticInputs& in, SplitCheck check) {
  if (!in_unit(in.gamma) || !in_unit(in.eta) || !in_unit(in.zeta)) throw InvalidArgument("gamma, eta, zeta must lie in [0,1]");
  if (in.zeta > std::min(in.gamma, in.eta) + kSlack) throw InvalidArgument("zeta cannot exceed min(gamma, eta)");
  if (!in_unit(in.g) || !in_unit(in.e) || !in_unit(in.z)) throw InvalidArgument("g, e, z must lie in [0,1]");
  if (!in_unit(in.p_kill) || !in_unit(in.p_permit) || !in_unit(in.p_kill_aware.value_or(in.p_kill)) ||
      !in_unit(in.p_kill_unaware.value_or(in.p_kill)))
    throw InvalidArgument("kill and permit probabilities must lie in [0,1]");
  if (in.K < 1) throw InvalidArgument("K must be at least 1");
  if (check == SplitCheck::Strict) {
    if (in.gamma0_c() < -kSlack)
      throw InvalidArgument("infeasible split: g*gamma - z*zeta = " + format_number(in.gamma0_c()) + " < 0");
    if (in.eta0_c() < -kSlack)
      throw InvalidArgument("infeasible split: e*eta - z*zeta = " + format_number(in.eta0_c()) + " < 0");
  }
}

CompromiseProbs compromise_probs(const AnalyticInputs& in, SplitCheck check) {
  validate(in, check);
  const WeightSet w = compute_weights(in.gamma, in.eta);
  const double gamma0 = in.gamma0(), eta0 = in.eta0();
  const double den_g = gamma0 + in.zeta * w.w_E0;
  const double den_e = eta0 + in.zeta * w.w_G0;
  const double den_m = 1.0 - (gamma0 * (1.0 - w.w_G0) + eta0 * (1.0 - w.w_E0) + in.zeta * (1.0 - w.w_Z));
  if (!(den_g > 0.0)) throw InvalidArgument("no weighted guard bandwidth (zero denominator for g*)");
  if (!(den_e > 0.0)) throw InvalidArgument("no weighted exit bandwidth (zero denominator for e*)");
  if (!(den_m > 0.0)) throw InvalidArgument("no weighted middle bandwidth (zero denominator for m)");

  CompromiseProbs p;
  p.g_star = (in.gamma0_c() + in.zeta_c() * w.w_E0) / den_g;
  p.e_star = (in.eta0_c() + in.zeta_c() * w.w_G0) / den_e;
  p.m_star = (in.gamma0_c() * w.w_G0 + in.eta0_c() * w.w_E0 + in.zeta_c() * w.w_Z) / den_m;
  if (check == SplitCheck::Strict) {
    p.g_star = std::clamp(p.g_star, 0.0, 1.0);
    p.e_star = std::clamp(p.e_star, 0.0, 1.0);
    p.m_star = std::clamp(p.m_star, 0.0, 1.0);
  }
  return p;
}

double unsuccessful_prob(int j, const AnalyticInputs& in, const CompromiseProbs& p) {
  if (j < 0 || j > 3) throw InvalidArgument("j must lie in {0,1,2,3}");
  const double f = j / 3.0;
  const double e = p.e_star, m = p.m_star;
  const double controlled = (1.0 - in.p_permit) * f * e;
  if (in.context_mode == ContextMode::ExitOnly) {
    const double aware = in.p_kill_aware.value_or(in.p_kill);
    const double unaware = in.p_kill_unaware.value_or(in.p_kill);
    return controlled + aware * (1.0 - f) * e + unaware * (f * (1.0 - e) + (1.0 - f) * (1.0 - e) * m);
  }
  return controlled + in.p_kill * (f * (1.0 - e) + (1.0 - f) * e + (1.0 - f) * (1.0 - e) * m);
}

double unsuccessful_prob(int j, const AnalyticInputs& in, SplitCheck check) {
  return unsuccessful_prob(j, in, compromise_probs(in, check));
}

double eventual_control_prob(const AnalyticInputs& in, SplitCheck check) {
  const CompromiseProbs p = compromise_probs(in, check);
  const long double g = p.g_star;
  long double total = 0.0L;
  static constexpr int binom[] = {1, 3, 3, 1};
  for (int j = 1; j <= 3; ++j) {
    const long double u = unsuccessful_prob(j, in, p);
    const long double geometric =
        std::fabs(u - 1.0L) < 1e-12L ? static_cast<long double>(in.K) : (std::pow(u, in.K) - 1.0L) / (u - 1.0L);
    const long double guards = binom[j] * std::pow(1.0L - g, 3 - j) * std::pow(g, j);
    total += guards * (in.p_permit * (j / 3.0L) * p.e_star) * geometric;
  }
  const auto result = static_cast<double>(total);
  return check == SplitCheck::Strict ? std::clamp(result, 0.0, 1.0) : result;
}

double ZRule::apply(const AnalyticInputs& in) const {
  const double feasible = in.zeta > 0 ? std::min({in.g * in.gamma, in.e * in.eta, in.zeta}) / in.zeta : 0.0;
  switch (kind) {
    case Kind::Fixed: return value;
    case Kind::Ratio: return value * std::min(in.g, in.e);
    case Kind::MaxFeasible: return feasible;
    case Kind::CappedRatio: return std::min(value * std::min(in.g, in.e), feasible);
  }
  return value;
}

SweepAxis SweepAxis::parse(const std::string& text) {
  const auto parts = detail::split(text, ':');
  if (parts.size() != 4) throw InvalidArgument("axis must be name:lo:hi:count, got '" + text + "'");
  SweepAxis axis;
  axis.name = std::string(parts[0]);
  if (axis.name != "g" && axis.name != "e" && axis.name != "p_kill" && axis.name != "p_permit")
    throw InvalidArgument("axis name must be one of g, e, p_kill, p_permit");
  double lo = 0, hi = 0;
  long count = 0;
  try {
    lo = std::stod(std::string(parts[1]));
    hi = std::stod(std::string(parts[2]));
    count = std::stol(std::string(parts[3]));
  } catch (const std::exception&) {
    throw InvalidArgument("axis must be name:lo:hi:count, got '" + text + "'");
  }
  if (count < 1) throw InvalidArgument("axis count must be positive");
  if (!in_unit(lo) || !in_unit(hi) || lo > hi) throw InvalidArgument("axis bounds must satisfy 0 <= lo <= hi <= 1");
  for (long i = 0; i < count; ++i)
    axis.values.push_back(count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
  return axis;
}

namespace {
void set_axis(AnalyticInputs& in, const std::string& name, double v) {
  if (name == "g") in.g = v;
  else if (name == "e") in.e = v;
  else if (name == "p_kill") in.p_kill = v;
  else if (name == "p_permit") in.p_permit = v;
  else throw InvalidArgument("unknown sweep axis " + name);
}
}  // namespace

SweepResult sweep(const SweepAxis& axis1, const SweepAxis& axis2, const AnalyticInputs& fixed, const ZRule& z_rule,
                  SplitCheck check) {
  if (axis1.name == axis2.name) throw InvalidArgument("sweep axes must differ");
  SweepResult r{axis1, axis2, {}};
  for (double a : axis1.values) {
    std::vector<double> row;
    for (double b : axis2.values) {
      AnalyticInputs in = fixed;
      set_axis(in, axis1.name, a);
      set_axis(in, axis2.name, b);
      in.z = z_rule.apply(in);
      row.push_back(eventual_control_prob(in, check));
    }
    r.values.push_back(std::move(row));
  }
  return r;
}

void write_sweep_matrix(std::ostream& out, const SweepResult& r) {
  out << r.axis1.name << '\\' << r.axis2.name;
  for (double b : r.axis2.values) out << ',' << format_number(b);
  out << '\n';
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    out << format_number(r.axis1.values[i]);
    for (double v : r.values[i]) out << ',' << format_number(v);
    out << '\n';
  }
}

ResultTable sweep_long_table(const SweepResult& r) {
  ResultTable t{{r.axis1.name, r.axis2.name, "value"}, {}};
  for (std::size_t i = 0; i < r.values.size(); ++i)
    for (std::size_t k = 0; k < r.values[i].size(); ++k)
      t.add_row({format_number(r.axis1.values[i]), format_number(r.axis2.values[k]), format_number(r.values[i][k])});
  return t;
}

void write_sweep_long(std::ostream& out, const SweepResult& r) {
  write_report(out, sweep_long_table(r), ReportFormat::Csv);
}

}  // namespace oniondos
