#pragma once

#include <complex>
#include <string>
#include <vector>

#include "cvrsim/phase.hpp"
#include "cvrsim/pv_inverter.hpp"
#include "cvrsim/zip_load.hpp"

namespace cvrsim {

using ImpedanceMatrix = std::array<std::array<std::complex<double>, 3>, 3>;

struct Bus {
  std::string id;
  PhaseSet phases = PhaseSet::all();
  double base_voltage = 0.0;  // volts, line-to-neutral
  int feeder_id = 0;
  double distance_from_substation = 0.0;  // miles

  friend bool operator==(const Bus&, const Bus&) = default;
};

struct LineSegment {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  double length = 0.0;        // miles
  ImpedanceMatrix impedance{};  // ohms per mile; absent phases are zero

  friend bool operator==(const LineSegment&, const LineSegment&) = default;
};

struct SubstationTransformer {
  double rating_kva = 20000.0;
  double primary_kv = 69.0;
  double secondary_kv = 13.8;
  PhaseTaps tap_positions{0, 0, 0};

  friend bool operator==(const SubstationTransformer&, const SubstationTransformer&) = default;
};

inline constexpr int kMinTap = -16;
inline constexpr int kMaxTap = 16;

struct FeederNetwork {
  std::vector<Bus> buses;
  std::vector<LineSegment> lines;
  SubstationTransformer transformer;
  std::string source_bus;
  std::vector<ZipLoad> loads;
  std::vector<PvUnit> pv_units;
  double system_mva_base = 10.0;

  // Index of the bus with the given id, or -1.
  int find_bus(const std::string& id) const;

  friend bool operator==(const FeederNetwork&, const FeederNetwork&) = default;
};

struct ValidationIssue {
  enum class Kind {
    DuplicateBus,
    DuplicateLine,
    UnknownBus,
    Cycle,
    Unreachable,
    EdgeCount,
    Orientation,
    PhaseMismatch,
    Impedance,
    BusParameter,
    LoadParameter,
    PvParameter,
    TapRange,
  };
  Kind kind;
  std::string subject;  // offending bus, line, load or PV id
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const noexcept { return issues.empty(); }
  bool has(ValidationIssue::Kind kind) const;
  bool mentions(const std::string& subject) const;
  std::string summary() const;
};

// Checks the tree invariant and per-record invariants; never throws.
ValidationReport validate_radial(const FeederNetwork& network);

// Backward-sweep order: every line appears after all lines of its downstream
// subtree, ties broken by ascending line id. Throws Error if not radial.
std::vector<std::string> sweep_order(const FeederNetwork& network);

// Impedance with one complex value on the diagonal and optional mutual term.
ImpedanceMatrix uniform_impedance(std::complex<double> self, std::complex<double> mutual = {});

}  // namespace cvrsim

namespace cvrsim {

// Index form of a validated radial network.
struct RadialTree {
  int root = -1;
  std::vector<int> line_from;       // bus index per line
  std::vector<int> line_to;         // bus index per line
  std::vector<int> parent_line;     // per bus; -1 at the root
  std::vector<int> backward_order;  // line indices, leaves first
};

// Throws Error with the validation summary if the network is not radial.
RadialTree build_radial_tree(const FeederNetwork& network);

}  // namespace cvrsim
