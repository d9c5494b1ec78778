#include "tdcosim/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tdcosim/error.hpp"

namespace tdcosim::io {

namespace {

struct Token {
  std::string_view text;
  int column = 1;
};

struct Record {
  int line = 1;
  std::vector<Token> tokens;
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

// Splits into non-empty records; `#` starts a comment.
std::vector<Record> tokenize(std::string_view text) {
  std::vector<Record> out;
  int line = 1;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view row = text.substr(pos, end - pos);
    if (const auto hash = row.find('#'); hash != std::string_view::npos) row = row.substr(0, hash);
    Record rec;
    rec.line = line;
    std::size_t i = 0;
    while (i < row.size()) {
      while (i < row.size() && is_space(row[i])) ++i;
      const std::size_t start = i;
      while (i < row.size() && !is_space(row[i])) ++i;
      if (i > start) rec.tokens.push_back({row.substr(start, i - start), static_cast<int>(start) + 1});
    }
    if (!rec.tokens.empty()) out.push_back(std::move(rec));
    if (end == text.size()) break;
    pos = end + 1;
    ++line;
  }
  return out;
}

double parse_double(std::string_view s, int line, int col) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty()) {
    throw ParseError(line, col, "expected a number, got '" + std::string(s) + "'");
  }
  if (!std::isfinite(v)) throw ParseError(line, col, "number must be finite, got '" + std::string(s) + "'");
  return v;
}

int parse_int(std::string_view s, int line, int col) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ParseError(line, col, "expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

Complex parse_complex(std::string_view s, int line, int col) {
  const auto comma = s.find(',');
  if (comma == std::string_view::npos) return {parse_double(s, line, col), 0.0};
  return {parse_double(s.substr(0, comma), line, col),
          parse_double(s.substr(comma + 1), line, col + static_cast<int>(comma) + 1)};
}

// key=value pairs of one record; every key must be consumed.
class Fields {
 public:
  Fields(const Record& rec, std::size_t first) : line_(rec.line) {
    for (std::size_t i = first; i < rec.tokens.size(); ++i) {
      const Token& t = rec.tokens[i];
      const auto eq = t.text.find('=');
      if (eq == std::string_view::npos || eq == 0) {
        throw ParseError(line_, t.column, "expected key=value, got '" + std::string(t.text) + "'");
      }
      const std::string key(t.text.substr(0, eq));
      Entry e{t.text.substr(eq + 1), t.column, t.column + static_cast<int>(eq) + 1};
      if (!entries_.emplace(key, e).second) throw ParseError(line_, t.column, "duplicate key '" + key + "'");
    }
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  int key_column(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? 1 : it->second.key_col;
  }

  std::string_view text(const std::string& key, int record_col) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ParseError(line_, record_col, "missing required key '" + key + "'");
    used_.insert(key);
    return it->second.value;
  }

  std::optional<std::string_view> optional_text(const std::string& key) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    used_.insert(key);
    return it->second.value;
  }

  double number(const std::string& key, int record_col) {
    const auto v = text(key, record_col);
    return parse_double(v, line_, entries_.at(key).value_col);
  }
  double number_or(const std::string& key, double fallback) {
    const auto v = optional_text(key);
    return v ? parse_double(*v, line_, entries_.at(key).value_col) : fallback;
  }
  int integer(const std::string& key, int record_col) {
    const auto v = text(key, record_col);
    return parse_int(v, line_, entries_.at(key).value_col);
  }
  std::optional<Complex> complex(const std::string& key) {
    const auto v = optional_text(key);
    if (!v) return std::nullopt;
    return parse_complex(*v, line_, entries_.at(key).value_col);
  }

  void finish() const {
    for (const auto& [key, e] : entries_) {
      if (!used_.count(key)) throw ParseError(line_, e.key_col, "unknown key '" + key + "'");
    }
  }

  int line() const { return line_; }

 private:
  struct Entry {
    std::string_view value;
    int key_col;
    int value_col;
  };
  int line_;
  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
};

// A record with exactly one positional value after its keyword.
std::string_view single_value(const Record& rec) {
  if (rec.tokens.size() != 2) {
    throw ParseError(rec.line, rec.tokens.front().column,
                     "'" + std::string(rec.tokens.front().text) + "' takes exactly one value");
  }
  return rec.tokens[1].text;
}

void expect_header(const std::vector<Record>& recs, std::string_view keyword, std::string_view version) {
  if (recs.empty()) throw ParseError(1, 1, "empty input; expected '" + std::string(keyword) + "' header");
  const Record& h = recs.front();
  if (h.tokens.front().text != keyword) {
    throw ParseError(h.line, h.tokens.front().column, "expected '" + std::string(keyword) + "' header");
  }
  const auto v = single_value(h);
  if (v != version) {
    throw ParseError(h.line, h.tokens[1].column, "unsupported schema version '" + std::string(v) + "'");
  }
}

std::string fmt_complex(Complex z) {
  if (z.imag() == 0.0) return format_number(z.real());
  return format_number(z.real()) + "," + format_number(z.imag());
}

BusKind parse_kind(std::string_view s, int line, int col) {
  if (s == "slack") return BusKind::Slack;
  if (s == "pv") return BusKind::PV;
  if (s == "pq") return BusKind::PQ;
  throw ParseError(line, col, "bus kind must be slack, pv or pq");
}

ZeroSeqPath parse_path(std::string_view s, int line, int col) {
  if (s == "through") return ZeroSeqPath::Through;
  if (s == "grounded") return ZeroSeqPath::Grounded;
  if (s == "open") return ZeroSeqPath::Open;
  throw ParseError(line, col, "zero_seq must be through, grounded or open");
}

constexpr const char* kCouplingKeys[3][3] = {{"", "c01", "c02"}, {"c10", "", "c12"}, {"c20", "c21", ""}};

}  // namespace

std::string format_number(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) return std::to_string(x);
  return std::string(buf, ptr);
}

CaseDocument parse_case(std::string_view text) {
  const auto recs = tokenize(text);
  expect_header(recs, "tdcase", kCaseSchema);
  CaseDocument doc;
  doc.schema_version = std::string(kCaseSchema);
  TransmissionCase& c = doc.transmission;
  c.base_mva = 0.0;
  c.power_unit = PowerUnit::MW;
  c.impedance_unit = ImpedanceUnit::PerUnit;

  // Source line and key column of each bus reference, for dangling checks.
  struct Ref {
    BusId bus;
    int line;
    int col;
    std::string owner;
  };
  std::vector<Ref> refs;
  std::map<BusId, int> bus_lines;
  bool have_base = false;

  for (std::size_t r = 1; r < recs.size(); ++r) {
    const Record& rec = recs[r];
    const std::string_view kw = rec.tokens.front().text;
    const int col = rec.tokens.front().column;
    if (kw == "base_mva") {
      const auto v = single_value(rec);
      c.base_mva = parse_double(v, rec.line, rec.tokens[1].column);
      if (!(c.base_mva > 0.0)) throw ParseError(rec.line, rec.tokens[1].column, "base_mva must be positive");
      have_base = true;
    } else if (kw == "power_units") {
      const auto v = single_value(rec);
      if (v == "mw") {
        c.power_unit = PowerUnit::MW;
      } else if (v == "pu") {
        c.power_unit = PowerUnit::PerUnit;
      } else {
        throw ParseError(rec.line, rec.tokens[1].column, "power_units must be mw or pu");
      }
    } else if (kw == "impedance_units") {
      const auto v = single_value(rec);
      if (v == "ohm") {
        c.impedance_unit = ImpedanceUnit::Ohm;
      } else if (v == "pu") {
        c.impedance_unit = ImpedanceUnit::PerUnit;
      } else {
        throw ParseError(rec.line, rec.tokens[1].column, "impedance_units must be ohm or pu");
      }
    } else if (kw == "bus") {
      Fields f(rec, 1);
      Bus b;
      b.id = f.integer("id", col);
      b.kind = parse_kind(f.text("kind", col), rec.line, f.key_column("kind"));
      b.base_kv = f.number("base_kv", col);
      b.v_setpoint = f.number_or("v", 1.0);
      b.angle_setpoint = f.number_or("angle", 0.0);
      f.finish();
      if (!(b.base_kv > 0.0)) throw ParseError(rec.line, f.key_column("base_kv"), "base_kv must be positive");
      if (!bus_lines.emplace(b.id, rec.line).second) {
        throw ParseError(rec.line, f.key_column("id"),
                         "duplicate bus id " + std::to_string(b.id) + " (first defined on line " +
                             std::to_string(bus_lines[b.id]) + ")");
      }
      c.buses.push_back(b);
    } else if (kw == "branch") {
      Fields f(rec, 1);
      Branch br;
      br.from = f.integer("from", col);
      br.to = f.integer("to", col);
      const auto z1 = f.complex("z1");
      if (!z1) throw ParseError(rec.line, col, "missing required key 'z1'");
      br.z1 = *z1;
      br.z2 = f.complex("z2").value_or(br.z1);
      br.b1_shunt = f.number_or("b1", 0.0);
      br.b0_shunt = f.number_or("b0", 0.0);
      br.tap = f.number_or("tap", 1.0);
      if (const auto p = f.optional_text("zero_seq")) br.zero_seq_path = parse_path(*p, rec.line, f.key_column("zero_seq"));
      const auto z0 = f.complex("z0");
      if (!z0 && br.zero_seq_path != ZeroSeqPath::Open) {
        throw ParseError(rec.line, col, "missing required key 'z0' (needed unless zero_seq=open)");
      }
      br.z0 = z0.value_or(Complex{});
      if (const auto u = f.optional_text("untransposed")) {
        if (*u != "0" && *u != "1") throw ParseError(rec.line, f.key_column("untransposed"), "untransposed must be 0 or 1");
        br.untransposed = *u == "1";
      }
      SequenceCoupling block{};
      bool any = false;
      for (int s = 0; s < 3; ++s) {
        for (int t = 0; t < 3; ++t) {
          if (s == t) continue;
          if (const auto y = f.complex(kCouplingKeys[s][t])) {
            block[s][t] = *y;
            any = true;
          }
        }
      }
      f.finish();
      if (any) {
        if (!br.untransposed) throw ParseError(rec.line, col, "coupling terms require untransposed=1");
        br.coupling = block;
      }
      if (br.from == br.to) throw ParseError(rec.line, f.key_column("to"), "branch connects a bus to itself");
      if (!(std::abs(br.z1) > 0.0)) throw ParseError(rec.line, f.key_column("z1"), "|z1| must be positive");
      if (!(br.tap > 0.0)) throw ParseError(rec.line, f.key_column("tap"), "tap must be positive");
      refs.push_back({br.from, rec.line, f.key_column("from"), "branch"});
      refs.push_back({br.to, rec.line, f.key_column("to"), "branch"});
      c.branches.push_back(br);
    } else if (kw == "gen") {
      Fields f(rec, 1);
      Generator g;
      g.bus = f.integer("bus", col);
      g.p_min = f.number_or("pmin", 0.0);
      g.p_max = f.number("pmax", col);
      g.q_min = f.number_or("qmin", 0.0);
      g.q_max = f.number_or("qmax", 0.0);
      g.cost.a = f.number_or("a", 0.0);
      g.cost.b = f.number_or("b", 0.0);
      g.cost.c = f.number_or("c", 0.0);
      g.p_set = f.number_or("p", g.p_min);
      g.q_set = f.number_or("q", 0.0);
      g.z2 = f.complex("z2");
      g.z0 = f.complex("z0");
      f.finish();
      if (g.p_min > g.p_max) throw ParseError(rec.line, f.key_column("pmax"), "pmax below pmin");
      if (g.cost.a < 0.0) throw ParseError(rec.line, f.key_column("a"), "cost coefficient a must be non-negative");
      refs.push_back({g.bus, rec.line, f.key_column("bus"), "generator"});
      c.generators.push_back(g);
    } else if (kw == "load") {
      Fields f(rec, 1);
      LoadAttachment la;
      la.bus = f.integer("bus", col);
      la.kind = LumpedLoad{f.number("p", col), f.number_or("q", 0.0)};
      if (const auto s = f.optional_text("shape")) la.loadshape_id = std::string(*s);
      f.finish();
      refs.push_back({la.bus, rec.line, f.key_column("bus"), "load"});
      c.loads.push_back(la);
    } else if (kw == "feeder") {
      Fields f(rec, 1);
      FeederBinding fb;
      fb.bus = f.integer("bus", col);
      fb.feeder_id = std::string(f.text("id", col));
      if (const auto s = f.optional_text("shape")) fb.loadshape_id = std::string(*s);
      f.finish();
      for (const auto& other : doc.feeder_attachments) {
        if (other.bus == fb.bus) {
          throw ParseError(rec.line, f.key_column("bus"), "second feeder at bus " + std::to_string(fb.bus));
        }
      }
      refs.push_back({fb.bus, rec.line, f.key_column("bus"), "feeder"});
      LoadAttachment la;
      la.bus = fb.bus;
      la.kind = FeederRef{fb.feeder_id};
      la.loadshape_id = fb.loadshape_id;
      c.loads.push_back(la);
      doc.feeder_attachments.push_back(fb);
    } else if (kw == "tdcase") {
      throw ParseError(rec.line, col, "repeated 'tdcase' header");
    } else {
      throw ParseError(rec.line, col, "unknown record '" + std::string(kw) + "'");
    }
  }
  if (!have_base) throw ParseError(recs.front().line, 1, "missing 'base_mva'");
  for (const auto& ref : refs) {
    if (!bus_lines.count(ref.bus)) {
      throw ParseError(ref.line, ref.col, ref.owner + " references unknown bus " + std::to_string(ref.bus));
    }
  }
  std::size_t slacks = 0;
  for (const auto& b : c.buses) slacks += b.kind == BusKind::Slack;
  if (slacks != 1) {
    throw ParseError(recs.front().line, 1, "expected exactly one slack bus, found " + std::to_string(slacks));
  }
  return doc;
}

std::string serialize_case(const CaseDocument& doc) {
  const TransmissionCase& c = doc.transmission;
  std::ostringstream os;
  os << "tdcase " << kCaseSchema << "\n";
  os << "base_mva " << format_number(c.base_mva) << "\n";
  os << "power_units " << (c.power_unit == PowerUnit::MW ? "mw" : "pu") << "\n";
  os << "impedance_units " << (c.impedance_unit == ImpedanceUnit::Ohm ? "ohm" : "pu") << "\n";
  for (const auto& b : c.buses) {
    os << "bus id=" << b.id << " kind=" << to_string(b.kind) << " base_kv=" << format_number(b.base_kv)
       << " v=" << format_number(b.v_setpoint) << " angle=" << format_number(b.angle_setpoint) << "\n";
  }
  for (const auto& br : c.branches) {
    os << "branch from=" << br.from << " to=" << br.to << " z1=" << fmt_complex(br.z1) << " z2=" << fmt_complex(br.z2);
    if (br.zero_seq_path != ZeroSeqPath::Open || br.z0 != Complex{}) os << " z0=" << fmt_complex(br.z0);
    os << " b1=" << format_number(br.b1_shunt) << " b0=" << format_number(br.b0_shunt)
       << " tap=" << format_number(br.tap) << " zero_seq=" << to_string(br.zero_seq_path);
    if (br.untransposed) os << " untransposed=1";
    if (br.coupling) {
      for (int s = 0; s < 3; ++s) {
        for (int t = 0; t < 3; ++t) {
          if (s != t) os << ' ' << kCouplingKeys[s][t] << '=' << fmt_complex((*br.coupling)[s][t]);
        }
      }
    }
    os << "\n";
  }
  for (const auto& g : c.generators) {
    os << "gen bus=" << g.bus << " pmin=" << format_number(g.p_min) << " pmax=" << format_number(g.p_max)
       << " qmin=" << format_number(g.q_min) << " qmax=" << format_number(g.q_max) << " a=" << format_number(g.cost.a)
       << " b=" << format_number(g.cost.b) << " c=" << format_number(g.cost.c) << " p=" << format_number(g.p_set)
       << " q=" << format_number(g.q_set);
    if (g.z2) os << " z2=" << fmt_complex(*g.z2);
    if (g.z0) os << " z0=" << fmt_complex(*g.z0);
    os << "\n";
  }
  for (const auto& l : c.loads) {
    if (const auto* lumped = std::get_if<LumpedLoad>(&l.kind)) {
      os << "load bus=" << l.bus << " p=" << format_number(lumped->p) << " q=" << format_number(lumped->q);
      if (l.loadshape_id) os << " shape=" << *l.loadshape_id;
      os << "\n";
    } else {
      os << "feeder bus=" << l.bus << " id=" << std::get<FeederRef>(l.kind).feeder_id;
      if (l.loadshape_id) os << " shape=" << *l.loadshape_id;
      os << "\n";
    }
  }
  return os.str();
}

Feeder parse_feeder(std::string_view text) {
  const auto recs = tokenize(text);
  expect_header(recs, "tdfeeder", kFeederSchema);
  Feeder f;
  bool have_kv = false;
  bool have_head = false;
  std::vector<int> node_lines;
  std::vector<int> line_lines;
  std::vector<int> load_lines;
  static constexpr const char* kZKeys[3][3] = {{"zaa", "zab", "zac"}, {"zab", "zbb", "zbc"}, {"zac", "zbc", "zcc"}};

  for (std::size_t r = 1; r < recs.size(); ++r) {
    const Record& rec = recs[r];
    const std::string_view kw = rec.tokens.front().text;
    const int col = rec.tokens.front().column;
    if (kw == "id") {
      f.id = std::string(single_value(rec));
    } else if (kw == "base_kv") {
      f.base_kv = parse_double(single_value(rec), rec.line, rec.tokens[1].column);
      if (!(f.base_kv > 0.0)) throw ParseError(rec.line, rec.tokens[1].column, "base_kv must be positive");
      have_kv = true;
    } else if (kw == "base_mva") {
      f.base_mva = parse_double(single_value(rec), rec.line, rec.tokens[1].column);
      if (!(f.base_mva > 0.0)) throw ParseError(rec.line, rec.tokens[1].column, "base_mva must be positive");
    } else if (kw == "head") {
      f.head = parse_int(single_value(rec), rec.line, rec.tokens[1].column);
      have_head = true;
    } else if (kw == "node") {
      Fields fl(rec, 1);
      FeederNode n;
      n.id = fl.integer("id", col);
      if (const auto p = fl.optional_text("phases")) {
        try {
          n.phases = PhaseSet::parse(std::string(*p));
        } catch (const InputError& e) {
          throw ParseError(rec.line, fl.key_column("phases"), e.what());
        }
      }
      fl.finish();
      f.nodes.push_back(n);
      node_lines.push_back(rec.line);
    } else if (kw == "line") {
      Fields fl(rec, 1);
      FeederLine ln;
      ln.from = fl.integer("from", col);
      ln.to = fl.integer("to", col);
      if (const auto p = fl.optional_text("phases")) {
        try {
          ln.phases = PhaseSet::parse(std::string(*p));
        } catch (const InputError& e) {
          throw ParseError(rec.line, fl.key_column("phases"), e.what());
        }
      }
      const double length = fl.number_or("length", 1.0);
      if (!(length > 0.0)) throw ParseError(rec.line, fl.key_column("length"), "length must be positive");
      for (int p = 0; p < 3; ++p) {
        for (int q = p; q < 3; ++q) {
          const auto z = fl.complex(kZKeys[p][q]);
          if (!z) continue;
          if (!ln.phases.has(p) || !ln.phases.has(q)) {
            throw ParseError(rec.line, fl.key_column(kZKeys[p][q]),
                             std::string("impedance ") + kZKeys[p][q] + " given for an absent phase");
          }
          ln.z_abc[p][q] = ln.z_abc[q][p] = *z * length;
        }
      }
      fl.finish();
      f.lines.push_back(ln);
      line_lines.push_back(rec.line);
    } else if (kw == "load") {
      Fields fl(rec, 1);
      PhaseLoad ld;
      ld.node = fl.integer("node", col);
      static constexpr const char* kPhaseKeys[3] = {"a", "b", "c"};
      bool any = false;
      for (int p = 0; p < 3; ++p) {
        if (const auto s = fl.complex(kPhaseKeys[p])) {
          ld.s[static_cast<std::size_t>(p)] = *s;
          any = true;
        }
      }
      fl.finish();
      if (!any) throw ParseError(rec.line, col, "load needs at least one of a=, b=, c=");
      f.loads.push_back(ld);
      load_lines.push_back(rec.line);
    } else if (kw == "tdfeeder") {
      throw ParseError(rec.line, col, "repeated 'tdfeeder' header");
    } else {
      throw ParseError(rec.line, col, "unknown record '" + std::string(kw) + "'");
    }
  }
  const int hline = recs.front().line;
  if (!have_kv) throw ParseError(hline, 1, "missing 'base_kv'");
  if (!have_head) throw ParseError(hline, 1, "missing 'head'");

  const auto violations = validate_feeder(f);
  if (!violations.empty()) {
    const Violation& v = violations.front();
    int line = hline;
    const auto at = [&v](const std::vector<int>& lines) {
      return v.index >= 0 && v.index < static_cast<int>(lines.size()) ? lines[static_cast<std::size_t>(v.index)] : -1;
    };
    int found = -1;
    switch (v.element) {
      case Element::Node: found = at(node_lines); break;
      case Element::Line: found = at(line_lines); break;
      case Element::Load: found = at(load_lines); break;
      default: break;
    }
    if (found > 0) line = found;
    throw ParseError(line, 1, v.what);
  }
  return f;
}

std::string serialize_feeder(const Feeder& f) {
  static constexpr const char* kZKeys[3][3] = {{"zaa", "zab", "zac"}, {"", "zbb", "zbc"}, {"", "", "zcc"}};
  std::ostringstream os;
  os << "tdfeeder " << kFeederSchema << "\n";
  if (!f.id.empty()) os << "id " << f.id << "\n";
  os << "base_kv " << format_number(f.base_kv) << "\n";
  os << "base_mva " << format_number(f.base_mva) << "\n";
  os << "head " << f.head << "\n";
  for (const auto& n : f.nodes) os << "node id=" << n.id << " phases=" << n.phases.str() << "\n";
  for (const auto& ln : f.lines) {
    os << "line from=" << ln.from << " to=" << ln.to << " phases=" << ln.phases.str();
    for (int p = 0; p < 3; ++p) {
      for (int q = p; q < 3; ++q) {
        if (ln.phases.has(p) && ln.phases.has(q)) os << ' ' << kZKeys[p][q] << '=' << fmt_complex(ln.z_abc[p][q]);
      }
    }
    os << "\n";
  }
  for (const auto& ld : f.loads) {
    os << "load node=" << ld.node;
    for (int p = 0; p < 3; ++p) {
      if (ld.s[static_cast<std::size_t>(p)] != Complex{}) {
        os << ' ' << static_cast<char>('a' + p) << '=' << format_number(ld.s[static_cast<std::size_t>(p)].real()) << ','
           << format_number(ld.s[static_cast<std::size_t>(p)].imag());
      }
    }
    os << "\n";
  }
  return os.str();
}

LoadshapeSeries parse_loadshape(std::string_view csv, std::string id) {
  LoadshapeSeries out;
  out.id = std::move(id);
  int line = 0;
  std::size_t pos = 0;
  bool first_row = true;
  int expected = 0;
  while (pos <= csv.size()) {
    ++line;
    std::size_t end = csv.find('\n', pos);
    if (end == std::string_view::npos) end = csv.size();
    std::string_view row = csv.substr(pos, end - pos);
    pos = end + 1;
    while (!row.empty() && (is_space(row.back()))) row.remove_suffix(1);
    std::size_t lead = 0;
    while (lead < row.size() && is_space(row[lead])) ++lead;
    row.remove_prefix(lead);
    if (row.empty()) {
      if (end == csv.size()) break;
      continue;
    }
    const auto comma = row.find(',');
    if (comma == std::string_view::npos || row.find(',', comma + 1) != std::string_view::npos) {
      throw ParseError(line, static_cast<int>(lead) + 1, "expected two columns: minute,multiplier");
    }
    std::string_view a = row.substr(0, comma);
    std::string_view b = row.substr(comma + 1);
    while (!a.empty() && is_space(a.back())) a.remove_suffix(1);
    std::size_t bl = 0;
    while (bl < b.size() && is_space(b[bl])) ++bl;
    b.remove_prefix(bl);
    const int col_b = static_cast<int>(lead + comma + bl) + 2;
    if (first_row) {
      first_row = false;
      int probe = 0;
      const auto [ptr, ec] = std::from_chars(a.data(), a.data() + a.size(), probe);
      if (ec != std::errc() || ptr != a.data() + a.size()) {
        if (end == csv.size()) break;
        continue;  // header
      }
    }
    const int minute = parse_int(a, line, static_cast<int>(lead) + 1);
    const double m = parse_double(b, line, col_b);
    if (m < 0.0) throw ParseError(line, col_b, "multiplier must be non-negative");
    if (out.samples.empty()) {
      out.first_minute = minute;
    } else if (minute != expected) {
      throw ParseError(line, static_cast<int>(lead) + 1,
                       "minute " + std::to_string(minute) + " does not follow minute " + std::to_string(expected - 1) +
                           " (expected " + std::to_string(expected) + ")");
    }
    out.samples.push_back(m);
    expected = minute + 1;
    if (end == csv.size()) break;
  }
  if (out.samples.empty()) throw ParseError(line > 0 ? line : 1, 1, "loadshape has no samples");
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

template <class F>
auto with_path(const std::filesystem::path& p, F&& f) {
  try {
    return f(read_file(p));
  } catch (const ParseError& e) {
    throw ParseError(p.string(), e.line(), e.column(), e.message());
  }
}

}  // namespace

CaseDocument load_case(const std::filesystem::path& p) {
  return with_path(p, [](const std::string& t) { return parse_case(t); });
}

Feeder load_feeder(const std::filesystem::path& p) {
  return with_path(p, [&p](const std::string& t) {
    Feeder f = parse_feeder(t);
    if (f.id.empty()) f.id = p.stem().string();
    return f;
  });
}

LoadshapeSeries load_loadshape(const std::filesystem::path& p) {
  return with_path(p, [&p](const std::string& t) { return parse_loadshape(t, p.stem().string()); });
}

namespace {

class CsvFile {
 public:
  explicit CsvFile(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw InputError("cannot write " + path.string());
  }
  std::ostream& os() { return out_; }
  void close() {
    out_.close();
    if (!out_) throw InputError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

const char kPhase[] = {'a', 'b', 'c'};

// A converged trace lists each PCC up to its own N; a failed one lists every round.
void write_trace_rows(std::ostream& os, int minute, const CouplingTrace& trace) {
  for (const auto& r : trace.rounds) {
    if (trace.converged && r.iteration > trace.iterations_for(r.pcc)) continue;
    os << minute << ',' << r.pcc << ',' << r.iteration << ',' << format_number(r.mismatch) << ','
       << format_number(r.cross);
    for (double v : r.v_transmission) os << ',' << format_number(v);
    for (double v : r.v_distribution) os << ',' << format_number(v);
    os << '\n';
  }
}

void write_voltage_rows(std::ostream& os, int minute, const std::vector<PccSample>& samples) {
  for (const auto& s : samples) {
    for (std::size_t p = 0; p < 3; ++p) {
      os << minute << ',' << s.bus << ',' << kPhase[p] << ',' << format_number(std::abs(s.v_transmission[p])) << ','
         << format_number(std::abs(s.v_distribution[p])) << '\n';
    }
  }
}

void write_dispatch_rows(std::ostream& os, const DispatchRecord& d, const std::vector<Generator>& gens) {
  for (std::size_t i = 0; i < d.result.p_set.size(); ++i) {
    os << d.minute << ',' << format_number(d.demand_mw) << ',' << format_number(d.result.lambda) << ','
       << (i < gens.size() ? gens[i].bus : static_cast<BusId>(i)) << ',' << format_number(d.result.p_set[i]) << '\n';
  }
}

constexpr const char* kTraceHeader = "minute,pcc,iteration,mismatch,cross,vt_a,vt_b,vt_c,vd_a,vd_b,vd_c\n";
constexpr const char* kVoltageHeader = "minute,pcc,phase,v_transmission,v_distribution\n";
constexpr const char* kDispatchHeader = "minute,demand_mw,lambda,gen_bus,p_mw\n";

}  // namespace

std::vector<std::filesystem::path> write_results(const ResultBundle& b, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;

  if (b.snapshot) {
    std::vector<PccSample> samples;
    const auto& st = b.snapshot->state;
    for (std::size_t k = 0; k < b.snapshot->trace.pccs.size() && !st.transmission.bus_ids.empty(); ++k) {
      const BusId bus = b.snapshot->trace.pccs[k];
      samples.push_back({bus, st.transmission.phase_voltages(bus),
                         st.feeders.empty() ? balanced_phase_voltages(1.0) : st.feeders[k].head_voltage,
                         st.pcc_load[k]});
    }
    if (!samples.empty() || b.snapshot->trace.pccs.empty()) {
      CsvFile v(dir / "pcc_voltages.csv");
      v.os() << kVoltageHeader;
      write_voltage_rows(v.os(), b.snapshot_minute, samples);
      v.close();
      written.push_back(dir / "pcc_voltages.csv");
    }
    CsvFile t(dir / "coupling_trace.csv");
    t.os() << kTraceHeader;
    write_trace_rows(t.os(), b.snapshot_minute, b.snapshot->trace);
    t.close();
    written.push_back(dir / "coupling_trace.csv");
    if (b.snapshot_dispatch) {
      CsvFile d(dir / "dispatch.csv");
      d.os() << kDispatchHeader;
      write_dispatch_rows(d.os(), *b.snapshot_dispatch, b.generators);
      d.close();
      written.push_back(dir / "dispatch.csv");
    }
  }

  if (b.result) {
    const std::string prefix = b.result->decoupled ? "decoupled_" : "";
    CsvFile v(dir / (prefix + "pcc_voltages.csv"));
    v.os() << kVoltageHeader;
    for (const auto& s : b.result->steps) write_voltage_rows(v.os(), s.minute, s.pcc);
    v.close();
    written.push_back(dir / (prefix + "pcc_voltages.csv"));
    if (!b.result->decoupled) {
      CsvFile t(dir / "coupling_trace.csv");
      t.os() << kTraceHeader;
      for (const auto& s : b.result->steps) write_trace_rows(t.os(), s.minute, s.trace);
      t.close();
      written.push_back(dir / "coupling_trace.csv");
    }
    CsvFile d(dir / (prefix + "dispatch.csv"));
    d.os() << kDispatchHeader;
    for (const auto& rec : b.result->dispatches) write_dispatch_rows(d.os(), rec, b.generators);
    d.close();
    written.push_back(dir / (prefix + "dispatch.csv"));
  }

  if (b.comparison) {
    CsvFile c(dir / "comparison.csv");
    c.os() << "minute,pcc,phase,v_coupled,v_decoupled\n";
    for (const auto& r : b.comparison->rows) {
      c.os() << r.minute << ',' << r.pcc << ',' << kPhase[r.phase] << ',' << format_number(r.v_coupled) << ','
             << format_number(r.v_decoupled) << '\n';
    }
    c.close();
    written.push_back(dir / "comparison.csv");
  }

  if (b.table) {
    CsvFile c(dir / "convergence_table.csv");
    c.os() << "alpha";
    for (BusId bus : b.table->pccs) c.os() << ",N_bus" << bus;
    c.os() << ",overall\n";
    for (const auto& row : b.table->rows) {
      c.os() << format_number(row.alpha);
      for (int n : row.iterations) c.os() << ',' << n;
      c.os() << ',' << row.overall << '\n';
    }
    c.close();
    written.push_back(dir / "convergence_table.csv");
  }
  return written;
}

}  // namespace tdcosim::io
