#include "cvrsim/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace cvrsim {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string format_exact(double value) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw Error("cannot format number");
  return std::string(buf, end);
}

std::string format_12g(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error("read failure on '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) throw Error("write failure on '" + path.string() + "'");
}

namespace {

struct Line {
  int number;
  std::string_view text;
};

// Non-empty lines with comments and surrounding whitespace removed.
std::vector<Line> content_lines(std::string_view text, bool strip_comments) {
  std::vector<Line> out;
  int number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++number;
    if (strip_comments) {
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    }
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.remove_suffix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
    if (!line.empty()) out.push_back({number, line});
    pos = end + 1;
  }
  return out;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t end = s.find(sep, pos);
    out.push_back(s.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::optional<double> to_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> to_int(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  Int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// One `kind key=value ...` record with typed accessors that raise
// ParseError naming the field.
class Record {
 public:
  Record(const std::string& file, const Line& line) : file_(file), line_(line.number) {
    const auto tokens = split_ws(line.text);
    kind_ = std::string(tokens.front());
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string_view::npos || eq == 0)
        throw ParseError(file_, line_, std::string(tokens[i]), "expected key=value");
      std::string key(tokens[i].substr(0, eq));
      if (!fields_.emplace(key, std::string(tokens[i].substr(eq + 1))).second)
        throw ParseError(file_, line_, key, "given more than once");
    }
  }

  const std::string& kind() const { return kind_; }
  int line() const { return line_; }

  bool has(const std::string& key) const { return fields_.count(key) != 0; }

  std::string text(const std::string& key) {
    const auto it = fields_.find(key);
    if (it == fields_.end()) throw ParseError(file_, line_, key, "missing in " + kind_ + " record");
    used_.insert(key);
    return it->second;
  }

  std::string text(const std::string& key, const std::string& fallback) { return has(key) ? text(key) : fallback; }

  double number(const std::string& key) {
    const std::string s = text(key);
    const auto v = to_double(s);
    if (!v || !std::isfinite(*v)) throw ParseError(file_, line_, key, "not a finite number: '" + s + "'");
    return *v;
  }

  double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const std::string s = text(key);
    const auto v = to_int<int>(s);
    if (!v) throw ParseError(file_, line_, key, "not an integer: '" + s + "'");
    return *v;
  }

  std::vector<double> numbers(const std::string& key) {
    const std::string s = text(key);
    std::vector<double> out;
    for (auto part : split(s, ',')) {
      const auto v = to_double(part);
      if (!v || !std::isfinite(*v)) throw ParseError(file_, line_, key, "not a finite number: '" + std::string(part) + "'");
      out.push_back(*v);
    }
    return out;
  }

  PhaseSet phases(const std::string& key, PhaseSet fallback) {
    if (!has(key)) return fallback;
    const std::string s = text(key);
    const auto p = PhaseSet::parse(s);
    if (!p) throw ParseError(file_, line_, key, "invalid phase set '" + s + "'");
    return *p;
  }

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw ParseError(file_, line_, field, what);
  }

  // Rejects keys no accessor asked for.
  void finish() const {
    for (const auto& [key, value] : fields_)
      if (!used_.count(key)) throw ParseError(file_, line_, key, "unknown field in " + kind_ + " record");
  }

 private:
  std::string file_;
  int line_;
  std::string kind_;
  std::map<std::string, std::string> fields_;
  std::set<std::string> used_;
};

std::string join_numbers(std::initializer_list<double> values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += ',';
    out += format_exact(v);
  }
  return out;
}

bool symmetric(const ImpedanceMatrix& z) {
  return z[0][1] == z[1][0] && z[0][2] == z[2][0] && z[1][2] == z[2][1];
}

}  // namespace

std::string feeder_to_text(const FeederNetwork& net) {
  std::string out = std::string(kFeederFormat) + "\n";
  out += "network source=" + net.source_bus + " mva_base=" + format_exact(net.system_mva_base) + "\n";
  const auto& t = net.transformer;
  out += "transformer kva=" + format_exact(t.rating_kva) + " primary_kv=" + format_exact(t.primary_kv) +
         " secondary_kv=" + format_exact(t.secondary_kv) + " taps=" + std::to_string(t.tap_positions[0]) + "," +
         std::to_string(t.tap_positions[1]) + "," + std::to_string(t.tap_positions[2]) + "\n";
  for (const Bus& b : net.buses) {
    out += "bus id=" + b.id + " phases=" + b.phases.to_string() + " base_v=" + format_exact(b.base_voltage) +
           " feeder=" + std::to_string(b.feeder_id) + " distance=" + format_exact(b.distance_from_substation) + "\n";
  }
  for (const LineSegment& l : net.lines) {
    out += "line id=" + l.id + " from=" + l.from_bus + " to=" + l.to_bus + " length=" + format_exact(l.length) + " z=";
    std::string z;
    const auto add = [&](std::complex<double> c) {
      if (!z.empty()) z += ',';
      z += format_exact(c.real()) + "," + format_exact(c.imag());
    };
    if (symmetric(l.impedance)) {
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) add(l.impedance[i][j]);
    } else {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) add(l.impedance[i][j]);
    }
    out += z + "\n";
  }
  for (const ZipLoad& d : net.loads) {
    out += "load bus=" + d.bus + " phase=" + std::string(1, to_char(d.phase)) + " p0=" + format_exact(d.p0) +
           " q0=" + format_exact(d.q0) + " zip_p=" + join_numbers({d.p_coef.z, d.p_coef.i, d.p_coef.p}) +
           " zip_q=" + join_numbers({d.q_coef.z, d.q_coef.i, d.q_coef.p}) + " v0=" + format_exact(d.v0) + "\n";
  }
  for (const PvUnit& u : net.pv_units) {
    const auto& lim = u.limits;
    out += "pv id=" + u.id + " bus=" + u.bus + " phases=" + u.phases.to_string() + " peak_kw=" +
           format_exact(u.peak_kw) + " kva=" + format_exact(lim.kva) + " kvar_max=" + format_exact(lim.kvar_max) +
           " kvar_max_abs=" + format_exact(lim.kvar_max_abs) + " cut_in=" + format_exact(lim.cut_in_pct) +
           " cut_out=" + format_exact(lim.cut_out_pct) + " pmin_no_vars=" + format_exact(lim.pmin_no_vars_pct) +
           " pmin_kvar_max=" + format_exact(lim.pmin_kvar_max_pct);
    if (const auto* pf = std::get_if<ConstantPowerFactor>(&u.mode)) {
      out += " mode=pf pf=" + format_exact(pf->pf);
    } else {
      const VoltVarCurve& c = std::get<VoltVar>(u.mode).curve;
      std::string pts;
      for (const auto& p : c.points) {
        if (!pts.empty()) pts += ',';
        pts += format_exact(p.v) + "," + format_exact(p.q);
      }
      out += " mode=voltvar curve=" + pts + " v_ref=" + format_exact(c.v_ref) + " v_l=" + format_exact(c.v_l) +
             " v_h=" + format_exact(c.v_h);
    }
    out += "\n";
  }
  return out;
}

namespace {

ImpedanceMatrix parse_impedance(Record& r) {
  const auto v = r.numbers("z");
  ImpedanceMatrix z{};
  if (v.size() == 12) {
    std::size_t k = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j, k += 2) z[i][j] = z[j][i] = {v[k], v[k + 1]};
  } else if (v.size() == 18) {
    std::size_t k = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j, k += 2) z[i][j] = {v[k], v[k + 1]};
  } else {
    r.fail("z", "expected 12 (upper triangle) or 18 (full) numbers, got " + std::to_string(v.size()));
  }
  return z;
}

ZipCoefficients parse_zip(Record& r, const std::string& key) {
  if (!r.has(key)) return {};
  const auto v = r.numbers(key);
  if (v.size() != 3) r.fail(key, "expected three coefficients z,i,p");
  return {v[0], v[1], v[2]};
}

PvUnit parse_pv(Record& r) {
  PvUnit u;
  u.id = r.text("id");
  u.bus = r.text("bus");
  u.phases = r.phases("phases", PhaseSet::all());
  u.peak_kw = r.number("peak_kw");
  u.limits = InverterLimits::for_rating(r.number("kva"));
  u.limits.kvar_max = r.number("kvar_max", u.limits.kvar_max);
  u.limits.kvar_max_abs = r.number("kvar_max_abs", u.limits.kvar_max_abs);
  u.limits.cut_in_pct = r.number("cut_in", u.limits.cut_in_pct);
  u.limits.cut_out_pct = r.number("cut_out", u.limits.cut_out_pct);
  u.limits.pmin_no_vars_pct = r.number("pmin_no_vars", u.limits.pmin_no_vars_pct);
  u.limits.pmin_kvar_max_pct = r.number("pmin_kvar_max", u.limits.pmin_kvar_max_pct);
  const std::string mode = r.text("mode", "pf");
  if (mode == "pf") {
    u.mode = ConstantPowerFactor{r.number("pf", 1.0)};
  } else if (mode == "voltvar") {
    VoltVar vv;
    if (r.has("curve")) {
      const auto pts = r.numbers("curve");
      if (pts.size() != 8) r.fail("curve", "expected four v,q pairs");
      for (std::size_t i = 0; i < 4; ++i) vv.curve.points[i] = {pts[2 * i], pts[2 * i + 1]};
    }
    vv.curve.v_ref = r.number("v_ref", vv.curve.v_ref);
    vv.curve.v_l = r.number("v_l", vv.curve.v_l);
    vv.curve.v_h = r.number("v_h", vv.curve.v_h);
    u.mode = vv;
  } else {
    r.fail("mode", "expected 'pf' or 'voltvar', got '" + mode + "'");
  }
  return u;
}

}  // namespace

FeederNetwork feeder_from_text(std::string_view text, const std::string& source_name) {
  const auto lines = content_lines(text, true);
  if (lines.empty() || lines.front().text != kFeederFormat)
    throw ParseError(source_name, lines.empty() ? 1 : lines.front().number, "header",
                     std::string("expected '") + kFeederFormat + "'");
  FeederNetwork net;
  bool seen_network = false, seen_transformer = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    Record r(source_name, lines[i]);
    const std::string& kind = r.kind();
    if (kind == "network") {
      if (seen_network) r.fail("network", "record given more than once");
      seen_network = true;
      net.source_bus = r.text("source");
      net.system_mva_base = r.number("mva_base", net.system_mva_base);
    } else if (kind == "transformer") {
      if (seen_transformer) r.fail("transformer", "record given more than once");
      seen_transformer = true;
      auto& t = net.transformer;
      t.rating_kva = r.number("kva", t.rating_kva);
      t.primary_kv = r.number("primary_kv", t.primary_kv);
      t.secondary_kv = r.number("secondary_kv", t.secondary_kv);
      if (r.has("taps")) {
        const auto parts = split(r.text("taps"), ',');
        if (parts.size() != 3) r.fail("taps", "expected three integers");
        for (int p = 0; p < 3; ++p) {
          const auto v = to_int<int>(parts[p]);
          if (!v) r.fail("taps", "not an integer: '" + std::string(parts[p]) + "'");
          t.tap_positions[p] = *v;
        }
      }
    } else if (kind == "bus") {
      Bus b;
      b.id = r.text("id");
      b.phases = r.phases("phases", PhaseSet::all());
      b.base_voltage = r.number("base_v");
      b.feeder_id = r.integer("feeder", 0);
      b.distance_from_substation = r.number("distance", 0.0);
      net.buses.push_back(std::move(b));
    } else if (kind == "line") {
      LineSegment l;
      l.id = r.text("id");
      l.from_bus = r.text("from");
      l.to_bus = r.text("to");
      l.length = r.number("length");
      l.impedance = parse_impedance(r);
      net.lines.push_back(std::move(l));
    } else if (kind == "load") {
      ZipLoad d;
      d.bus = r.text("bus");
      const std::string ph = r.text("phase");
      const auto p = ph.size() == 1 ? phase_from_char(ph[0]) : std::nullopt;
      if (!p) r.fail("phase", "expected A, B or C, got '" + ph + "'");
      d.phase = *p;
      d.p0 = r.number("p0");
      d.q0 = r.number("q0", 0.0);
      d.p_coef = parse_zip(r, "zip_p");
      d.q_coef = parse_zip(r, "zip_q");
      d.v0 = r.number("v0", 1.0);
      if (auto msg = check_zip_load(d); !msg.empty())
        r.fail("load", "load record at bus " + d.bus + " phase " + ph + ": " + msg);
      net.loads.push_back(std::move(d));
    } else if (kind == "pv") {
      PvUnit u = parse_pv(r);
      if (auto msg = check_pv_unit(u); !msg.empty()) r.fail("pv", "pv record " + u.id + ": " + msg);
      net.pv_units.push_back(std::move(u));
    } else {
      r.fail("kind", "unknown record kind '" + kind + "'");
    }
    r.finish();
  }
  if (!seen_network) throw ParseError(source_name, lines.front().number, "network", "missing network record");
  if (const auto report = validate_radial(net); !report.ok())
    throw Error(source_name + ": invalid feeder: " + report.summary());
  return net;
}

FeederNetwork load_feeder(const fs::path& path) { return feeder_from_text(read_text_file(path), path.string()); }

void save_feeder(const FeederNetwork& network, const fs::path& path) {
  write_text_file(path, feeder_to_text(network));
}

namespace {

constexpr std::string_view kProfilesHeader = "hour,load_multiplier,pv_multiplier";

}  // namespace

Profiles profiles_from_text(std::string_view text, const std::string& source_name) {
  const auto lines = content_lines(text, false);
  std::size_t i = 0;
  if (i < lines.size() && lines[i].text.front() == '#') {
    if (lines[i].text != std::string("# ") + kProfilesFormat)
      throw ParseError(source_name, lines[i].number, "header",
                       std::string("expected '# ") + kProfilesFormat + "'");
    ++i;
  }
  if (i >= lines.size() || lines[i].text != kProfilesHeader)
    throw ParseError(source_name, i < lines.size() ? lines[i].number : 1, "header",
                     "expected column header '" + std::string(kProfilesHeader) + "'");
  ++i;
  const std::size_t rows = lines.size() - i;
  if (rows != kHoursPerDay)
    throw ParseError(source_name, lines.empty() ? 1 : lines.back().number, "rows",
                     "expected 24 hourly rows, found " + std::to_string(rows));
  Profiles out;
  for (int h = 0; h < kHoursPerDay; ++h, ++i) {
    const Line& line = lines[i];
    const auto cells = split(line.text, ',');
    if (cells.size() != 3)
      throw ParseError(source_name, line.number, "row", "expected 3 columns, found " + std::to_string(cells.size()));
    const auto hour = to_int<int>(cells[0]);
    if (!hour || *hour != h)
      throw ParseError(source_name, line.number, "hour", "expected " + std::to_string(h) + ", got '" +
                                                            std::string(cells[0]) + "'");
    const auto load = to_double(cells[1]);
    if (!load || !std::isfinite(*load) || *load < 0.0)
      throw ParseError(source_name, line.number, "load_multiplier",
                       "expected a finite non-negative number, got '" + std::string(cells[1]) + "'");
    const auto pv = to_double(cells[2]);
    if (!pv || !(*pv >= 0.0 && *pv <= 1.0))
      throw ParseError(source_name, line.number, "pv_multiplier",
                       "expected a number in [0, 1], got '" + std::string(cells[2]) + "'");
    out.load[h] = *load;
    out.pv[h] = *pv;
  }
  return out;
}

Profiles load_profiles(const fs::path& path) { return profiles_from_text(read_text_file(path), path.string()); }

std::string profiles_to_text(const Profiles& profiles) {
  std::string out = std::string("# ") + kProfilesFormat + "\n" + std::string(kProfilesHeader) + "\n";
  for (int h = 0; h < kHoursPerDay; ++h)
    out += std::to_string(h) + "," + format_exact(profiles.load[h]) + "," + format_exact(profiles.pv[h]) + "\n";
  return out;
}

namespace {

int line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of the first occurrence of "key" in the text; 1 when not found.
int line_of_key(std::string_view text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  return pos == std::string_view::npos ? 1 : line_of_offset(text, pos);
}

// Typed reader over one JSON object that reports the key path on errors.
class JsonReader {
 public:
  JsonReader(std::string_view text, std::string file, const json& object, std::string prefix)
      : text_(text), file_(std::move(file)), object_(object), prefix_(std::move(prefix)) {
    if (!object_.is_object()) fail(prefix_.empty() ? "(root)" : prefix_, prefix_, "expected an object");
  }

  template <class T>
  void read(const std::string& key, T& target) {
    const auto it = object_.find(key);
    if (it == object_.end()) return;
    seen_.insert(key);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw std::runtime_error("expected a number");
        target = it->template get<double>();
        if (!std::isfinite(target)) throw std::runtime_error("expected a finite number");
      } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, std::uint64_t>) {
        if (!it->is_number_integer()) throw std::runtime_error("expected an integer");
        if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (it->is_number_unsigned() || it->template get<std::int64_t>() >= 0)
            target = it->template get<std::uint64_t>();
          else
            throw std::runtime_error("expected a non-negative integer");
        } else {
          target = it->template get<int>();
        }
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::runtime_error("expected true or false");
        target = it->template get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw std::runtime_error("expected a string");
        target = it->template get<std::string>();
      } else {
        target = it->template get<T>();
      }
    } catch (const std::exception& e) {
      fail(key, path(key), e.what());
    }
  }

  const json* child(const std::string& key) {
    const auto it = object_.find(key);
    if (it == object_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& field, const std::string& what) const {
    throw ParseError(file_, line_of_key(text_, key), field, what);
  }

  void finish() const {
    for (const auto& [key, value] : object_.items())
      if (!seen_.count(key)) fail(key, path(key), "unknown field");
  }

 private:
  std::string_view text_;
  std::string file_;
  const json& object_;
  std::string prefix_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

}  // namespace

RunConfig run_config_from_json(std::string_view text, const std::string& source_name, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(source_name, line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), "(syntax)", e.what());
  }
  RunConfig rc;
  ScenarioConfig& c = rc.scenario;
  JsonReader r(text, source_name, root, "");

  std::string format;
  r.read("format", format);
  if (format != kScenarioFormat) r.fail("format", "format", std::string("expected '") + kScenarioFormat + "'");
  r.read("name", c.name);

  if (const json* s = r.child("synthesis")) {
    JsonReader sr(text, source_name, *s, "synthesis");
    SynthesisParams& p = c.synthesis;
    std::vector<int> buses(p.buses_per_feeder.begin(), p.buses_per_feeder.end());
    std::vector<double> shares(p.load_shares.begin(), p.load_shares.end());
    sr.read("buses_per_feeder", buses);
    sr.read("load_shares", shares);
    if (buses.size() != 3) sr.fail("buses_per_feeder", "synthesis.buses_per_feeder", "expected three entries");
    if (shares.size() != 3) sr.fail("load_shares", "synthesis.load_shares", "expected three entries");
    std::copy(buses.begin(), buses.end(), p.buses_per_feeder.begin());
    std::copy(shares.begin(), shares.end(), p.load_shares.begin());
    sr.read("total_length_miles", p.total_length_miles);
    sr.read("total_load_kw", p.total_load_kw);
    sr.read("load_power_factor", p.load_power_factor);
    sr.read("mainline_fraction", p.mainline_fraction);
    sr.read("max_lateral_buses", p.max_lateral_buses);
    sr.read("tail_buses", p.tail_buses);
    sr.read("tail_attach_fraction", p.tail_attach_fraction);
    sr.read("tail_length_weight", p.tail_length_weight);
    sr.read("tail_load_weight", p.tail_load_weight);
    sr.read("system_mva_base", p.system_mva_base);
    sr.read("primary_kv", p.primary_kv);
    sr.read("secondary_kv", p.secondary_kv);
    sr.read("transformer_kva", p.transformer_kva);
    sr.finish();
  }

  std::string feeder_path;
  r.read("feeder", feeder_path);
  if (!feeder_path.empty()) {
    const fs::path p = resolve(base_dir, feeder_path);
    c.feeder = std::make_shared<const FeederNetwork>(load_feeder(p));
    c.feeder_label = feeder_path;
  }

  std::string profiles_path;
  r.read("profiles", profiles_path);
  if (!profiles_path.empty()) {
    const Profiles prof = load_profiles(resolve(base_dir, profiles_path));
    c.load_profile = prof.load;
    c.pv_profile = prof.pv;
  }

  std::string allocation = to_string(c.allocation), mode = to_string(c.mode);
  r.read("allocation", allocation);
  r.read("mode", mode);
  const auto a = parse_allocation(allocation);
  if (!a) r.fail("allocation", "allocation", "expected head, dispersed or end, got '" + allocation + "'");
  c.allocation = *a;
  const auto m = parse_control_mode(mode);
  if (!m) r.fail("mode", "mode", "expected pf or voltvar, got '" + mode + "'");
  c.mode = *m;

  r.read("penetration_pct", c.penetration_pct);
  if (c.penetration_pct < 0.0) r.fail("penetration_pct", "penetration_pct", "must be non-negative");
  r.read("penetrations", rc.penetrations);
  if (rc.penetrations.empty()) r.fail("penetrations", "penetrations", "expected at least one level");
  for (double pen : rc.penetrations)
    if (!(pen >= 0.0) || !std::isfinite(pen)) r.fail("penetrations", "penetrations", "levels must be non-negative");
  r.read("cvr", c.cvr_enabled);
  r.read("units_per_feeder", c.units_per_feeder);
  if (c.units_per_feeder < 1) r.fail("units_per_feeder", "units_per_feeder", "must be at least 1");
  r.read("snapshot_hour", c.snapshot_hour);
  if (c.snapshot_hour < 0 || c.snapshot_hour >= kHoursPerDay)
    r.fail("snapshot_hour", "snapshot_hour", "must lie in [0, 24)");
  r.read("seed", c.seed);

  if (const json* o = r.child("oltc")) {
    JsonReader sr(text, source_name, *o, "oltc");
    sr.read("min_tap", c.oltc.min_tap);
    sr.read("max_tap", c.oltc.max_tap);
    sr.read("v_at_min", c.oltc.v_at_min);
    sr.read("v_at_max", c.oltc.v_at_max);
    sr.read("per_phase", c.oltc.per_phase);
    sr.finish();
    if (auto msg = check_oltc_config(c.oltc); !msg.empty()) r.fail("oltc", "oltc", msg);
  }
  if (const json* o = r.child("constraints")) {
    JsonReader sr(text, source_name, *o, "constraints");
    sr.read("v_min", c.constraints.v_min);
    sr.read("v_max", c.constraints.v_max);
    sr.finish();
    if (auto msg = check_cvr_constraints(c.constraints); !msg.empty()) r.fail("constraints", "constraints", msg);
  }
  if (const json* o = r.child("solve")) {
    JsonReader sr(text, source_name, *o, "solve");
    sr.read("tolerance", c.solve.tolerance);
    sr.read("max_sweeps", c.solve.max_sweeps);
    sr.read("max_control_iterations", c.solve.max_control_iterations);
    sr.read("control_damping", c.solve.control_damping);
    sr.finish();
    if (auto msg = check_solve_options(c.solve); !msg.empty()) r.fail("solve", "solve", msg);
  }
  r.finish();

  if (auto msg = check_scenario_config(c); !msg.empty()) throw Error(source_name + ": " + msg);
  return rc;
}

RunConfig load_run_config(const fs::path& path) {
  RunConfig rc = run_config_from_json(read_text_file(path), path.string(), path.parent_path());
  rc.path = path;
  return rc;
}

namespace {

json scenario_json(const ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  if (c.feeder) {
    j["feeder"] = {{"label", c.feeder_label}, {"fnv1a64", hex64(fnv1a64(feeder_to_text(*c.feeder)))}};
  } else {
    const SynthesisParams& p = c.synthesis;
    json z = json::array();
    for (const auto& row : p.impedance_per_mile)
      for (const auto& v : row) z.push_back({v.real(), v.imag()});
    j["feeder"] = {{"label", c.feeder_label},
                   {"synthesis",
                    {{"buses_per_feeder", p.buses_per_feeder},
                     {"load_shares", p.load_shares},
                     {"total_length_miles", p.total_length_miles},
                     {"total_load_kw", p.total_load_kw},
                     {"load_power_factor", p.load_power_factor},
                     {"mainline_fraction", p.mainline_fraction},
                     {"max_lateral_buses", p.max_lateral_buses},
                     {"tail_buses", p.tail_buses},
                     {"tail_attach_fraction", p.tail_attach_fraction},
                     {"tail_length_weight", p.tail_length_weight},
                     {"tail_load_weight", p.tail_load_weight},
                     {"impedance_per_mile", z},
                     {"system_mva_base", p.system_mva_base},
                     {"primary_kv", p.primary_kv},
                     {"secondary_kv", p.secondary_kv},
                     {"transformer_kva", p.transformer_kva}}}};
  }
  j["allocation"] = to_string(c.allocation);
  j["penetration_pct"] = c.penetration_pct;
  j["mode"] = to_string(c.mode);
  j["cvr"] = c.cvr_enabled;
  j["load_profile"] = c.load_profile;
  j["pv_profile"] = c.pv_profile;
  j["units_per_feeder"] = c.units_per_feeder;
  j["snapshot_hour"] = c.snapshot_hour;
  j["seed"] = c.seed;
  j["oltc"] = {{"min_tap", c.oltc.min_tap},
               {"max_tap", c.oltc.max_tap},
               {"v_at_min", c.oltc.v_at_min},
               {"v_at_max", c.oltc.v_at_max},
               {"per_phase", c.oltc.per_phase}};
  j["constraints"] = {
      {"v_min", c.constraints.v_min}, {"v_max", c.constraints.v_max}, {"slack", c.constraints.slack}};
  j["solve"] = {{"tolerance", c.solve.tolerance},
                {"max_sweeps", c.solve.max_sweeps},
                {"max_control_iterations", c.solve.max_control_iterations},
                {"control_damping", c.solve.control_damping}};
  return j;
}

}  // namespace

std::string canonical_scenario_json(const ScenarioConfig& config) { return scenario_json(config).dump(); }

std::string run_key(const std::vector<ScenarioConfig>& configs) {
  json all = json::array();
  for (const auto& c : configs) all.push_back(scenario_json(c));
  all.push_back({{"tool_version", kToolVersion}});
  return hex64(fnv1a64(all.dump()));
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["format"] = kManifestFormat;
  j["tool_version"] = m.tool_version;
  j["config_path"] = m.config_path;
  j["output_dir"] = m.output_dir;
  j["seed"] = m.seed;
  j["scenarios"] = json::array();
  for (const auto& s : m.scenarios) {
    j["scenarios"].push_back({{"name", s.name},
                              {"allocation", s.allocation},
                              {"mode", s.mode},
                              {"penetration_pct", s.penetration_pct},
                              {"cvr", s.cvr_enabled},
                              {"seed", s.seed},
                              {"feeder", s.feeder},
                              {"snapshot_hour", s.snapshot_hour}});
  }
  j["files"] = json::array();
  for (const auto& f : m.files) j["files"].push_back({{"name", f.name}, {"fnv1a64", f.fnv1a64}});
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(std::string_view text, const std::string& source_name) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(source_name, line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), "(syntax)", e.what());
  }
  RunManifest m;
  JsonReader r(text, source_name, root, "");
  std::string format;
  r.read("format", format);
  if (format != kManifestFormat) r.fail("format", "format", std::string("expected '") + kManifestFormat + "'");
  r.read("tool_version", m.tool_version);
  r.read("config_path", m.config_path);
  r.read("output_dir", m.output_dir);
  r.read("seed", m.seed);
  if (const json* list = r.child("scenarios")) {
    if (!list->is_array()) r.fail("scenarios", "scenarios", "expected an array");
    for (std::size_t i = 0; i < list->size(); ++i) {
      JsonReader sr(text, source_name, (*list)[i], "scenarios[" + std::to_string(i) + "]");
      ManifestScenario s;
      sr.read("name", s.name);
      sr.read("allocation", s.allocation);
      sr.read("mode", s.mode);
      sr.read("penetration_pct", s.penetration_pct);
      sr.read("cvr", s.cvr_enabled);
      sr.read("seed", s.seed);
      sr.read("feeder", s.feeder);
      sr.read("snapshot_hour", s.snapshot_hour);
      sr.finish();
      m.scenarios.push_back(std::move(s));
    }
  }
  if (const json* list = r.child("files")) {
    if (!list->is_array()) r.fail("files", "files", "expected an array");
    for (std::size_t i = 0; i < list->size(); ++i) {
      JsonReader sr(text, source_name, (*list)[i], "files[" + std::to_string(i) + "]");
      ManifestFile f;
      sr.read("name", f.name);
      sr.read("fnv1a64", f.fnv1a64);
      sr.finish();
      m.files.push_back(std::move(f));
    }
  }
  r.finish();
  return m;
}

fs::path prepare_run_directory(const fs::path& root, const std::string& key, bool force) {
  const fs::path dir = root / ("run-" + key);
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!force) throw Error("run directory '" + dir.string() + "' already exists (use --force to overwrite)");
    fs::remove_all(dir, ec);
    if (ec) throw Error("cannot clear '" + dir.string() + "': " + ec.message());
  }
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

std::vector<int> pair_cvr_counterparts(const std::vector<const TimeSeriesResult*>& results) {
  std::vector<int> out(results.size(), -1);
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i]->config.cvr_enabled) continue;
    for (std::size_t j = 0; j < results.size(); ++j) {
      if (!results[j]->config.cvr_enabled && same_scenario_except_cvr(results[i]->config, results[j]->config)) {
        out[i] = static_cast<int>(j);
        break;
      }
    }
  }
  return out;
}

namespace {

constexpr std::string_view kHourlyHeader =
    "hour,load_multiplier,pv_multiplier,tap_a,tap_b,tap_c,v_sub_a,v_sub_b,v_sub_c,"
    "load_kw,load_kvar,pv_kw,pv_kvar,loss_kw,v_min,v_max,feasible";

constexpr std::string_view kSummaryHeader =
    "scenario,allocation,mode,penetration_pct,cvr,customer_energy_kwh,loss_energy_kwh,"
    "v_sub_mean_a,v_sub_mean_b,v_sub_mean_c,v_sub_mean,v_min,v_max,cvr_factor,infeasible_hours";

constexpr std::string_view kSnapshotHeader = "bus,phase,voltage";

bool safe_name(const std::string& name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.';
  }) && name.front() != '.';
}

}  // namespace

std::string hourly_table(const TimeSeriesResult& result) {
  std::string out = std::string("# ") + kHourlyFormat + "\n" + std::string(kHourlyHeader) + "\n";
  for (const HourRecord& h : result.hours) {
    out += std::to_string(h.hour) + "," + format_12g(h.load_multiplier) + "," + format_12g(h.irradiance);
    for (int t : h.taps) out += "," + std::to_string(t);
    for (double v : h.substation_voltage) out += "," + format_12g(v);
    for (double v : {h.load_p, h.load_q, h.pv_p, h.pv_q, h.losses_p, h.min_voltage, h.max_voltage})
      out += "," + format_12g(v);
    out += h.feasible ? ",1\n" : ",0\n";
  }
  return out;
}

std::string summary_table(const std::vector<std::pair<std::string, SummaryMetrics>>& rows,
                          const std::vector<const ScenarioConfig*>& configs) {
  if (rows.size() != configs.size()) throw Error("summary rows and configurations differ in count");
  std::string out = std::string("# ") + kSummaryFormat + "\n" + std::string(kSummaryHeader) + "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& [name, s] = rows[i];
    const ScenarioConfig& c = *configs[i];
    out += name + "," + to_string(c.allocation) + "," + to_string(c.mode) + "," + format_12g(c.penetration_pct) +
           (c.cvr_enabled ? ",1" : ",0");
    for (double v : {s.total_customer_energy, s.total_line_loss_energy, s.mean_substation_voltage_by_phase[0],
                     s.mean_substation_voltage_by_phase[1], s.mean_substation_voltage_by_phase[2],
                     s.mean_substation_voltage, s.min_network_voltage, s.max_network_voltage})
      out += "," + format_12g(v);
    out += "," + (s.cvr_factor ? format_12g(*s.cvr_factor) : std::string("NA")) + ",";
    for (std::size_t k = 0; k < s.infeasible_hours.size(); ++k)
      out += (k ? ";" : "") + std::to_string(s.infeasible_hours[k]);
    out += "\n";
  }
  return out;
}

std::string snapshot_table(const TimeSeriesResult& result, int hour) {
  const VoltageDistribution d = voltage_distribution(result, hour);
  std::string out = std::string("# ") + kSnapshotFormat + " hour=" + std::to_string(hour) + "\n" +
                    std::string(kSnapshotHeader) + "\n";
  for (std::size_t i = 0; i < d.voltage.size(); ++i)
    out += d.bus[i] + "," + to_char(d.phase[i]) + "," + format_12g(d.voltage[i]) + "\n";
  return out;
}

namespace {

ManifestScenario manifest_entry(const ScenarioConfig& c) {
  return {c.name,           to_string(c.allocation), to_string(c.mode), c.penetration_pct, c.cvr_enabled, c.seed,
          c.feeder ? c.feeder_label : std::string("synthetic"), c.snapshot_hour};
}

}  // namespace

RunManifest emit_results(const std::vector<TimeSeriesResult>& results, const fs::path& output_dir,
                         const std::string& config_path, std::uint64_t seed) {
  std::set<std::string> names;
  for (const auto& r : results) {
    if (!safe_name(r.config.name))
      throw Error("scenario name '" + r.config.name + "' is not usable as a file name");
    if (!names.insert(r.config.name).second) throw Error("duplicate scenario name '" + r.config.name + "'");
  }
  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw Error("cannot create '" + output_dir.string() + "': " + ec.message());

  std::vector<const TimeSeriesResult*> ptrs;
  for (const auto& r : results) ptrs.push_back(&r);
  const std::vector<int> base = pair_cvr_counterparts(ptrs);

  RunManifest m;
  m.config_path = config_path;
  m.output_dir = output_dir.string();
  m.seed = seed;
  const auto emit = [&](const std::string& name, const std::string& text) {
    write_text_file(output_dir / name, text);
    m.files.push_back({name, hex64(fnv1a64(text))});
  };
  for (std::size_t i = 0; i < results.size(); ++i) {
    const TimeSeriesResult& r = results[i];
    const SummaryMetrics s = summarize(r, base[i] >= 0 ? ptrs[base[i]] : nullptr);
    emit(r.config.name + "_hourly.csv", hourly_table(r));
    emit(r.config.name + "_summary.csv", summary_table({{r.config.name, s}}, {&r.config}));
    emit(r.config.name + "_voltages.csv", snapshot_table(r, r.config.snapshot_hour));
    m.scenarios.push_back(manifest_entry(r.config));
  }
  write_text_file(output_dir / "manifest.json", manifest_to_json(m));
  return m;
}

std::vector<HourRecord> read_hourly_table(std::string_view text, const std::string& source_name) {
  const auto lines = content_lines(text, false);
  if (lines.size() < 2 || lines[0].text != std::string("# ") + kHourlyFormat)
    throw ParseError(source_name, lines.empty() ? 1 : lines[0].number, "header",
                     std::string("expected '# ") + kHourlyFormat + "'");
  if (lines[1].text != kHourlyHeader) throw ParseError(source_name, lines[1].number, "header", "unexpected columns");
  const auto columns = split(kHourlyHeader, ',');
  std::vector<HourRecord> out;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    const auto cells = split(lines[i].text, ',');
    if (cells.size() != columns.size())
      throw ParseError(source_name, lines[i].number, "row",
                       "expected " + std::to_string(columns.size()) + " columns, found " + std::to_string(cells.size()));
    std::vector<double> v(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto d = to_double(cells[k]);
      if (!d) throw ParseError(source_name, lines[i].number, std::string(columns[k]),
                               "not a number: '" + std::string(cells[k]) + "'");
      v[k] = *d;
    }
    HourRecord h;
    h.hour = static_cast<int>(v[0]);
    h.load_multiplier = v[1];
    h.irradiance = v[2];
    for (int p = 0; p < 3; ++p) {
      h.taps[p] = static_cast<int>(v[3 + p]);
      h.substation_voltage[p] = v[6 + p];
    }
    h.load_p = v[9];
    h.load_q = v[10];
    h.pv_p = v[11];
    h.pv_q = v[12];
    h.losses_p = v[13];
    h.min_voltage = v[14];
    h.max_voltage = v[15];
    h.feasible = v[16] != 0.0;
    out.push_back(h);
  }
  return out;
}

std::string recompute_summaries(const fs::path& run_dir) {
  const fs::path manifest_path = run_dir / "manifest.json";
  const RunManifest m = manifest_from_json(read_text_file(manifest_path), manifest_path.string());
  for (const auto& f : m.files) {
    const std::string text = read_text_file(run_dir / f.name);
    if (hex64(fnv1a64(text)) != f.fnv1a64) throw Error("hash mismatch for '" + (run_dir / f.name).string() + "'");
  }
  std::vector<TimeSeriesResult> results;
  for (const auto& s : m.scenarios) {
    TimeSeriesResult r;
    r.config.name = s.name;
    const auto a = parse_allocation(s.allocation);
    const auto mode = parse_control_mode(s.mode);
    if (!a || !mode) throw Error(manifest_path.string() + ": scenario '" + s.name + "' has unknown allocation or mode");
    r.config.allocation = *a;
    r.config.mode = *mode;
    r.config.penetration_pct = s.penetration_pct;
    r.config.cvr_enabled = s.cvr_enabled;
    r.config.seed = s.seed;
    r.config.feeder_label = s.feeder;
    r.config.snapshot_hour = s.snapshot_hour;
    const fs::path hourly = run_dir / (s.name + "_hourly.csv");
    r.hours = read_hourly_table(read_text_file(hourly), hourly.string());
    results.push_back(std::move(r));
  }
  std::vector<const TimeSeriesResult*> ptrs;
  for (const auto& r : results) ptrs.push_back(&r);
  const std::vector<int> base = pair_cvr_counterparts(ptrs);
  std::vector<std::pair<std::string, SummaryMetrics>> rows;
  std::vector<const ScenarioConfig*> configs;
  for (std::size_t i = 0; i < results.size(); ++i) {
    rows.emplace_back(results[i].config.name, summarize(results[i], base[i] >= 0 ? ptrs[base[i]] : nullptr));
    configs.push_back(&results[i].config);
  }
  return summary_table(rows, configs);
}

}  // namespace cvrsim
