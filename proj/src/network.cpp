#include "cvrsim/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "cvrsim/error.hpp"

namespace cvrsim {

std::optional<Phase> phase_from_char(char c) noexcept {
  switch (c) {
    case 'A': case 'a': return Phase::A;
    case 'B': case 'b': return Phase::B;
    case 'C': case 'c': return Phase::C;
    default: return std::nullopt;
  }
}

std::optional<PhaseSet> PhaseSet::parse(std::string_view text) {
  PhaseSet set;
  for (char c : text) {
    auto p = phase_from_char(c);
    if (!p || set.contains(*p)) return std::nullopt;
    set.insert(*p);
  }
  if (set.empty()) return std::nullopt;
  return set;
}

std::string PhaseSet::to_string() const {
  std::string out;
  for (Phase p : kAllPhases)
    if (contains(p)) out.push_back(to_char(p));
  return out;
}

int FeederNetwork::find_bus(const std::string& id) const {
  for (std::size_t i = 0; i < buses.size(); ++i)
    if (buses[i].id == id) return static_cast<int>(i);
  return -1;
}

bool ValidationReport::has(ValidationIssue::Kind kind) const {
  return std::any_of(issues.begin(), issues.end(), [&](const auto& i) { return i.kind == kind; });
}

bool ValidationReport::mentions(const std::string& subject) const {
  return std::any_of(issues.begin(), issues.end(), [&](const auto& i) { return i.subject == subject; });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (std::size_t k = 0; k < issues.size(); ++k) {
    if (k) os << "; ";
    os << issues[k].subject << ": " << issues[k].message;
  }
  return os.str();
}

ImpedanceMatrix uniform_impedance(std::complex<double> self, std::complex<double> mutual) {
  ImpedanceMatrix z{};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) z[r][c] = (r == c) ? self : mutual;
  return z;
}

namespace {

using Kind = ValidationIssue::Kind;

struct TreeScan {
  std::vector<int> line_from, line_to;
  std::vector<int> parent_line;
  std::vector<int> depth;
  int root = -1;
};

void check_impedance(const LineSegment& line, PhaseSet phases, ValidationReport& report) {
  const auto& z = line.impedance;
  for (Phase r : kAllPhases) {
    for (Phase c : kAllPhases) {
      const auto v = z[index(r)][index(c)];
      const bool present = phases.contains(r) && phases.contains(c);
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
        report.issues.push_back({Kind::Impedance, line.id, "impedance entry is not finite"});
        return;
      }
      if (!present && v != std::complex<double>{}) {
        report.issues.push_back({Kind::Impedance, line.id, "impedance entry for absent phase is nonzero"});
        return;
      }
      if (present && v != z[index(c)][index(r)]) {
        report.issues.push_back({Kind::Impedance, line.id, "impedance matrix is not symmetric"});
        return;
      }
    }
    if (phases.contains(r)) {
      const auto d = z[index(r)][index(r)];
      if (d.real() < 0.0) {
        report.issues.push_back({Kind::Impedance, line.id, "negative resistance on the diagonal"});
        return;
      }
      if (d == std::complex<double>{}) {
        report.issues.push_back({Kind::Impedance, line.id, "zero self impedance on a present phase"});
        return;
      }
    }
  }
}

TreeScan scan(const FeederNetwork& net, ValidationReport& report) {
  TreeScan t;
  std::unordered_map<std::string, int> bus_index;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    if (!bus_index.emplace(b.id, static_cast<int>(i)).second)
      report.issues.push_back({Kind::DuplicateBus, b.id, "duplicate bus id"});
    if (!(b.base_voltage > 0.0))
      report.issues.push_back({Kind::BusParameter, b.id, "base voltage must be positive"});
    if (b.phases.empty()) report.issues.push_back({Kind::BusParameter, b.id, "bus has no phases"});
  }

  std::unordered_set<std::string> line_ids;
  t.line_from.assign(net.lines.size(), -1);
  t.line_to.assign(net.lines.size(), -1);
  for (std::size_t k = 0; k < net.lines.size(); ++k) {
    const LineSegment& l = net.lines[k];
    if (!line_ids.insert(l.id).second)
      report.issues.push_back({Kind::DuplicateLine, l.id, "duplicate line id"});
    auto f = bus_index.find(l.from_bus);
    auto to = bus_index.find(l.to_bus);
    if (f == bus_index.end())
      report.issues.push_back({Kind::UnknownBus, l.id, "unknown from bus '" + l.from_bus + "'"});
    if (to == bus_index.end())
      report.issues.push_back({Kind::UnknownBus, l.id, "unknown to bus '" + l.to_bus + "'"});
    if (f == bus_index.end() || to == bus_index.end()) continue;
    t.line_from[k] = f->second;
    t.line_to[k] = to->second;
    if (f->second == to->second) report.issues.push_back({Kind::Cycle, l.id, "self loop"});
    if (!(l.length > 0.0)) report.issues.push_back({Kind::BusParameter, l.id, "line length must be positive"});
    const PhaseSet to_phases = net.buses[to->second].phases;
    if (!to_phases.is_subset_of(net.buses[f->second].phases))
      report.issues.push_back({Kind::PhaseMismatch, l.id, "to-bus phases are not a subset of from-bus phases"});
    check_impedance(l, to_phases, report);
  }

  if (net.lines.size() + 1 != net.buses.size()) {
    report.issues.push_back({Kind::EdgeCount, net.source_bus,
                             "radial network needs |lines| = |buses| - 1 (have " +
                                 std::to_string(net.lines.size()) + " lines, " +
                                 std::to_string(net.buses.size()) + " buses)"});
  }

  auto root_it = bus_index.find(net.source_bus);
  if (root_it == bus_index.end()) {
    report.issues.push_back({Kind::UnknownBus, net.source_bus, "source bus does not exist"});
    return t;
  }
  t.root = root_it->second;

  // BFS over the undirected graph; ties visit lines in ascending position.
  std::vector<std::vector<int>> adjacency(net.buses.size());
  for (std::size_t k = 0; k < net.lines.size(); ++k) {
    if (t.line_from[k] < 0 || t.line_to[k] < 0 || t.line_from[k] == t.line_to[k]) continue;
    adjacency[t.line_from[k]].push_back(static_cast<int>(k));
    adjacency[t.line_to[k]].push_back(static_cast<int>(k));
  }
  t.parent_line.assign(net.buses.size(), -1);
  t.depth.assign(net.buses.size(), -1);
  std::vector<char> line_used(net.lines.size(), 0);
  std::queue<int> frontier;
  frontier.push(t.root);
  t.depth[t.root] = 0;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int k : adjacency[u]) {
      if (line_used[k]) continue;
      line_used[k] = 1;
      const int v = t.line_from[k] == u ? t.line_to[k] : t.line_from[k];
      if (t.depth[v] >= 0) {
        report.issues.push_back({Kind::Cycle, net.lines[k].id,
                                 "line closes a cycle between '" + net.buses[u].id + "' and '" +
                                     net.buses[v].id + "'"});
        continue;
      }
      t.depth[v] = t.depth[u] + 1;
      t.parent_line[v] = k;
      if (t.line_from[k] != u)
        report.issues.push_back({Kind::Orientation, net.lines[k].id,
                                 "from bus must be on the substation side of the line"});
      frontier.push(v);
    }
  }
  for (std::size_t i = 0; i < net.buses.size(); ++i)
    if (t.depth[i] < 0)
      report.issues.push_back({Kind::Unreachable, net.buses[i].id, "bus is not reachable from the source"});
  return t;
}

void check_attachments(const FeederNetwork& net, ValidationReport& report) {
  auto phases_of = [&](const std::string& id) -> std::optional<PhaseSet> {
    const int i = net.find_bus(id);
    if (i < 0) return std::nullopt;
    return net.buses[i].phases;
  };
  for (std::size_t k = 0; k < net.loads.size(); ++k) {
    const ZipLoad& load = net.loads[k];
    const std::string subject = "load@" + load.bus + "." + to_char(load.phase);
    auto phases = phases_of(load.bus);
    if (!phases) {
      report.issues.push_back({Kind::UnknownBus, subject, "load on unknown bus"});
    } else if (!phases->contains(load.phase)) {
      report.issues.push_back({Kind::PhaseMismatch, subject, "load phase not present at bus"});
    }
    if (auto msg = check_zip_load(load); !msg.empty())
      report.issues.push_back({Kind::LoadParameter, subject, msg});
  }
  std::unordered_set<std::string> pv_ids;
  for (const PvUnit& pv : net.pv_units) {
    if (!pv_ids.insert(pv.id).second) report.issues.push_back({Kind::PvParameter, pv.id, "duplicate PV id"});
    auto phases = phases_of(pv.bus);
    if (!phases) {
      report.issues.push_back({Kind::UnknownBus, pv.id, "PV unit on unknown bus"});
    } else if (!pv.phases.is_subset_of(*phases)) {
      report.issues.push_back({Kind::PhaseMismatch, pv.id, "PV phases not present at bus"});
    }
    if (auto msg = check_pv_unit(pv); !msg.empty()) report.issues.push_back({Kind::PvParameter, pv.id, msg});
  }
  for (Phase p : kAllPhases) {
    const int tap = net.transformer.tap_positions[index(p)];
    if (tap < kMinTap || tap > kMaxTap)
      report.issues.push_back({Kind::TapRange, std::string("tap.") + to_char(p), "tap position out of range"});
  }
  if (!(net.system_mva_base > 0.0))
    report.issues.push_back({Kind::BusParameter, "system", "system MVA base must be positive"});
}

std::vector<int> backward_order(const FeederNetwork& net, const TreeScan& t) {
  // Kahn's algorithm on "all child lines placed", smallest id first.
  const std::size_t n_lines = net.lines.size();
  std::vector<int> pending_children(net.buses.size(), 0);
  for (std::size_t k = 0; k < n_lines; ++k) ++pending_children[t.line_from[k]];
  auto by_id = [&](int a, int b) { return net.lines[a].id > net.lines[b].id; };
  std::priority_queue<int, std::vector<int>, decltype(by_id)> ready(by_id);
  for (std::size_t k = 0; k < n_lines; ++k)
    if (pending_children[t.line_to[k]] == 0) ready.push(static_cast<int>(k));
  std::vector<int> order;
  order.reserve(n_lines);
  while (!ready.empty()) {
    const int k = ready.top();
    ready.pop();
    order.push_back(k);
    const int parent = t.line_from[k];
    if (--pending_children[parent] == 0 && t.parent_line[parent] >= 0) ready.push(t.parent_line[parent]);
  }
  return order;
}

}  // namespace

ValidationReport validate_radial(const FeederNetwork& network) {
  ValidationReport report;
  scan(network, report);
  check_attachments(network, report);
  return report;
}

RadialTree build_radial_tree(const FeederNetwork& network) {
  ValidationReport report;
  TreeScan t = scan(network, report);
  check_attachments(network, report);
  if (!report.ok()) throw Error("network is not a valid radial feeder: " + report.summary());
  RadialTree tree;
  tree.root = t.root;
  tree.backward_order = backward_order(network, t);
  tree.line_from = std::move(t.line_from);
  tree.line_to = std::move(t.line_to);
  tree.parent_line = std::move(t.parent_line);
  return tree;
}

std::vector<std::string> sweep_order(const FeederNetwork& network) {
  const RadialTree tree = build_radial_tree(network);
  std::vector<std::string> ids;
  ids.reserve(tree.backward_order.size());
  for (int k : tree.backward_order) ids.push_back(network.lines[k].id);
  return ids;
}

}  // namespace cvrsim
