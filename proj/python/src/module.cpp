#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <oniondos/analytic.hpp>
#include <oniondos/attacker.hpp>
#include <oniondos/detect_exact.hpp>
#include <oniondos/error.hpp>
#include <oniondos/network.hpp>
#include <oniondos/pathsel.hpp>
#include <oniondos/replay.hpp>

namespace py = pybind11;
using namespace oniondos;

namespace {

std::vector<std::uint32_t> ids_of(const std::vector<RelayId>& ids) {
  std::vector<std::uint32_t> out;
  out.reserve(ids.size());
  for (RelayId id : ids) out.push_back(id.value);
  return out;
}

std::vector<RelayId> to_ids(const std::vector<std::uint32_t>& raw) {
  std::vector<RelayId> out;
  out.reserve(raw.size());
  for (auto v : raw) out.push_back(RelayId{v});
  return out;
}

// Runs the exact detector against a simulated attacker; returns the ids
// classified as compromised plus bookkeeping.
py::dict detect_exact_simulated(const std::vector<std::uint32_t>& relays, const std::vector<std::uint32_t>& compromised,
                                double p_kill, double p_permit, double natural_failure, int repetitions,
                                std::size_t k, std::uint64_t seed) {
  SimulatedOracle base(to_ids(compromised), p_kill, p_permit, natural_failure, seed);
  RetryingOracle oracle(base, repetitions);
  ExactConfig cfg;
  cfg.k = k;
  cfg.memoize = natural_failure == 0.0;
  cfg.seed = seed;
  const std::vector<RelayId> ids = to_ids(relays);
  const ExactReport r = detect_exact(oracle, ids, cfg);
  std::vector<std::uint32_t> bad;
  for (const auto& [id, v] : r.classification)
    if (v == Verdict::Compromised) bad.push_back(id.value);
  py::dict d;
  d["compromised"] = bad;
  d["probes_used"] = r.probes_used;
  d["attempts"] = base.probe_count();
  d["ambiguous_all_or_none"] = r.ambiguous_all_or_none;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Selective denial-of-service attacks on onion routing";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  py::class_<Relay>(m, "Relay")
      .def_property_readonly("id", [](const Relay& r) { return r.id.value; })
      .def_readonly("bandwidth", &Relay::bandwidth)
      .def_readonly("guard", &Relay::guard)
      .def_readonly("exit", &Relay::exit)
      .def_readonly("reliability", &Relay::reliability)
      .def_readonly("presence", &Relay::presence);

  py::class_<RelayTable>(m, "RelayTable")
      .def("__len__", &RelayTable::size)
      .def("__getitem__", [](const RelayTable& t, std::size_t i) {
        if (i >= t.size()) throw py::index_error();
        return t[i];
      })
      .def_property_readonly("generation_seed", &RelayTable::generation_seed);

  py::class_<TraceSet>(m, "TraceSet")
      .def_property_readonly("trial_count", &TraceSet::trial_count)
      .def_property_readonly("relay_count", &TraceSet::relay_count)
      .def("status", [](const TraceSet& t, std::size_t relay, std::size_t trial) {
        if (relay >= t.relay_count() || trial >= t.trial_count()) throw py::index_error();
        return static_cast<int>(t.status(relay, trial));
      });

  py::class_<BandwidthSummary>(m, "BandwidthSummary")
      .def_readonly("G", &BandwidthSummary::G)
      .def_readonly("E", &BandwidthSummary::E)
      .def_readonly("T", &BandwidthSummary::T)
      .def_readonly("gamma", &BandwidthSummary::gamma)
      .def_readonly("eta", &BandwidthSummary::eta)
      .def_readonly("zeta", &BandwidthSummary::zeta);

  py::class_<NetworkGenConfig>(m, "NetworkGenConfig")
      .def(py::init<>())
      .def_readwrite("n", &NetworkGenConfig::n)
      .def_readwrite("gamma", &NetworkGenConfig::gamma)
      .def_readwrite("eta", &NetworkGenConfig::eta)
      .def_readwrite("zeta", &NetworkGenConfig::zeta)
      .def_readwrite("flaky_fraction", &NetworkGenConfig::flaky_fraction)
      .def_readwrite("broken_fraction", &NetworkGenConfig::broken_fraction);

  m.def("generate_synthetic_network", &generate_synthetic_network, py::arg("config"), py::arg("seed"));
  m.def("generate_lifecycle_traces", &generate_lifecycle_traces, py::arg("table"), py::arg("trial_count"),
        py::arg("seed"));
  m.def("network_stats", py::overload_cast<const RelayTable&>(&network_stats));
  m.def("circuit_failure_rate", &circuit_failure_rate, py::arg("traces"), py::arg("table"),
        py::arg("n_per_trial") = 100, py::arg("seed") = 0, py::arg("resample_size") = 100,
        py::arg("repetitions") = 10);

  py::class_<WeightSet>(m, "WeightSet")
      .def_readonly("w_G0", &WeightSet::w_G0)
      .def_readonly("w_E0", &WeightSet::w_E0)
      .def_readonly("w_Z", &WeightSet::w_Z);
  m.def("compute_weights", py::overload_cast<double, double>(&compute_weights), py::arg("gamma"), py::arg("eta"));

  py::enum_<ContextMode>(m, "ContextMode")
      .value("None_", ContextMode::None)
      .value("AllPositions", ContextMode::AllPositions)
      .value("ExitOnly", ContextMode::ExitOnly);
  py::enum_<SplitCheck>(m, "SplitCheck").value("Strict", SplitCheck::Strict).value("AsWritten", SplitCheck::AsWritten);

  py::class_<AnalyticInputs>(m, "AnalyticInputs")
      .def(py::init<>())
      .def_readwrite("gamma", &AnalyticInputs::gamma)
      .def_readwrite("eta", &AnalyticInputs::eta)
      .def_readwrite("zeta", &AnalyticInputs::zeta)
      .def_readwrite("g", &AnalyticInputs::g)
      .def_readwrite("e", &AnalyticInputs::e)
      .def_readwrite("z", &AnalyticInputs::z)
      .def_readwrite("p_kill", &AnalyticInputs::p_kill)
      .def_readwrite("p_permit", &AnalyticInputs::p_permit)
      .def_readwrite("p_kill_aware", &AnalyticInputs::p_kill_aware)
      .def_readwrite("p_kill_unaware", &AnalyticInputs::p_kill_unaware)
      .def_readwrite("context_mode", &AnalyticInputs::context_mode)
      .def_readwrite("K", &AnalyticInputs::K);

  py::class_<CompromiseProbs>(m, "CompromiseProbs")
      .def_readonly("g_star", &CompromiseProbs::g_star)
      .def_readonly("m_star", &CompromiseProbs::m_star)
      .def_readonly("e_star", &CompromiseProbs::e_star);

  m.def("compromise_probs", &compromise_probs, py::arg("inputs"), py::arg("check") = SplitCheck::Strict);
  m.def("unsuccessful_prob", py::overload_cast<int, const AnalyticInputs&, SplitCheck>(&unsuccessful_prob),
        py::arg("j"), py::arg("inputs"), py::arg("check") = SplitCheck::Strict);
  m.def("eventual_control_prob", &eventual_control_prob, py::arg("inputs"), py::arg("check") = SplitCheck::Strict);

  m.def("required_repetitions", &required_repetitions, py::arg("f"), py::arg("probe_budget"), py::arg("epsilon"));
  m.def("exact_probe_bound", &exact_probe_bound, py::arg("n"), py::arg("k") = 3);
  m.def("detect_exact_simulated", &detect_exact_simulated, py::arg("relays"), py::arg("compromised"),
        py::arg("p_kill") = 1.0, py::arg("p_permit") = 1.0, py::arg("natural_failure") = 0.0,
        py::arg("repetitions") = 1, py::arg("k") = 3, py::arg("seed") = 0);
  m.def("compromise_relays",
        [](const RelayTable& t, double g, double e, const std::string& strategy) {
          return ids_of(compromise_relays(t, g, e, parse_strategy(strategy)));
        },
        py::arg("table"), py::arg("g"), py::arg("e"), py::arg("strategy") = "top-bandwidth");
}
