#include "wave3/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace wave3 {

namespace {

using C = std::complex<double>;

// ---------------------------------------------------------------------------
// Value atoms. A value is a whitespace-separated run of atoms; lists group
// atoms with commas. linspace(...) is desugared into a plain number list.

struct Atom {
  enum class Kind { Number, Complex, Word, List };
  Kind kind = Kind::Number;
  double num = 0.0;
  C cplx{0.0, 0.0};
  std::string word;
  std::vector<Atom> items;
  int line = 0;
  int col = 0;
};

struct Scanner {
  const std::string& text;
  std::size_t pos;
  std::size_t end;
  int line;
  std::vector<ParseIssue>& issues;
  bool failed = false;

  int col() const { return static_cast<int>(pos) + 1; }

  void fail(int at_col, std::string msg) {
    if (!failed) issues.push_back({line, at_col, std::move(msg)});
    failed = true;
  }

  void skip_ws() {
    while (pos < end && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= end;
  }

  std::optional<double> number() {
    skip_ws();
    const int at = col();
    const char* begin = text.c_str() + pos;
    char* stop = nullptr;
    const double v = std::strtod(begin, &stop);
    if (stop == begin || static_cast<std::size_t>(stop - text.c_str()) > end) {
      fail(at, "expected a number");
      return std::nullopt;
    }
    pos = static_cast<std::size_t>(stop - text.c_str());
    if (!std::isfinite(v)) {
      fail(at, "number out of range");
      return std::nullopt;
    }
    return v;
  }

  bool expect(char c, const char* what) {
    skip_ws();
    if (pos < end && text[pos] == c) {
      ++pos;
      return true;
    }
    fail(col(), std::string("expected '") + c + "' " + what);
    return false;
  }

  std::optional<Atom> complex_literal() {
    Atom a;
    a.kind = Atom::Kind::Complex;
    a.line = line;
    a.col = col();
    ++pos;  // consumes '('
    const auto re = number();
    if (!re || !expect(',', "in complex literal")) return std::nullopt;
    const auto im = number();
    if (!im || !expect(')', "closing complex literal")) return std::nullopt;
    a.cplx = C(*re, *im);
    return a;
  }

  std::optional<Atom> list() {
    Atom a;
    a.kind = Atom::Kind::List;
    a.line = line;
    a.col = col();
    ++pos;  // consumes '['
    skip_ws();
    if (pos < end && text[pos] == ']') {
      ++pos;
      return a;
    }
    while (true) {
      auto item = item_atom();
      if (!item) return std::nullopt;
      a.items.push_back(std::move(*item));
      skip_ws();
      if (pos < end && text[pos] == ',') {
        ++pos;
        continue;
      }
      if (pos < end && text[pos] == ']') {
        ++pos;
        return a;
      }
      fail(col(), "expected ',' or ']' in list");
      return std::nullopt;
    }
  }

  // List items are numbers or complex literals only.
  std::optional<Atom> item_atom() {
    skip_ws();
    if (pos >= end) {
      fail(col(), "expected a list item");
      return std::nullopt;
    }
    if (text[pos] == '(') return complex_literal();
    Atom a;
    a.kind = Atom::Kind::Number;
    a.line = line;
    a.col = col();
    const auto v = number();
    if (!v) return std::nullopt;
    a.num = *v;
    return a;
  }

  std::optional<Atom> word_or_linspace() {
    Atom a;
    a.line = line;
    a.col = col();
    std::size_t start = pos;
    while (pos < end &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    a.word = text.substr(start, pos - start);
    if (a.word != "linspace") {
      a.kind = Atom::Kind::Word;
      return a;
    }
    if (!expect('(', "after linspace")) return std::nullopt;
    const auto lo = number();
    if (!lo || !expect(',', "in linspace")) return std::nullopt;
    const auto hi = number();
    if (!hi || !expect(',', "in linspace")) return std::nullopt;
    const int count_col = (skip_ws(), col());
    const auto n = number();
    if (!n || !expect(')', "closing linspace")) return std::nullopt;
    if (*n < 1.0 || *n > 1e6 || *n != std::floor(*n)) {
      fail(count_col, "linspace count must be an integer in [1, 1000000]");
      return std::nullopt;
    }
    a.kind = Atom::Kind::List;
    a.word.clear();
    const auto count = static_cast<int>(*n);
    for (int k = 0; k < count; ++k) {
      Atom item;
      item.kind = Atom::Kind::Number;
      item.line = line;
      item.col = a.col;
      item.num = count == 1 ? *lo : *lo + (*hi - *lo) * (double(k) / (count - 1));
      a.items.push_back(item);
    }
    return a;
  }

  std::vector<Atom> scan_all() {
    std::vector<Atom> atoms;
    while (!at_end() && !failed) {
      const char c = text[pos];
      std::optional<Atom> a;
      if (c == '(') {
        a = complex_literal();
      } else if (c == '[') {
        a = list();
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        a = word_or_linspace();
      } else {
        Atom num;
        num.kind = Atom::Kind::Number;
        num.line = line;
        num.col = col();
        const auto v = number();
        if (v) {
          num.num = *v;
          a = num;
        }
      }
      if (!a) break;
      atoms.push_back(std::move(*a));
    }
    return atoms;
  }
};

std::vector<Atom> scan_value(const std::string& text, std::size_t begin, std::size_t stop,
                             int line, std::vector<ParseIssue>& issues, bool* ok) {
  Scanner s{text, begin, stop, line, issues};
  auto atoms = s.scan_all();
  if (ok) *ok = !s.failed;
  return atoms;
}

// ---------------------------------------------------------------------------
// Typed readers over atom runs. Each pushes one issue and returns nothing on
// a shape mismatch, so callers can keep collecting problems.

struct KeyRef {
  const char* key;
  int line;
  int col;
};

void bad_shape(const KeyRef& k, const std::string& want, std::vector<ParseIssue>& issues) {
  issues.push_back({k.line, k.col, std::string("'") + k.key + "' expects " + want});
}

std::optional<double> read_number(const std::vector<Atom>& atoms, const KeyRef& k,
                                  std::vector<ParseIssue>& issues) {
  if (atoms.size() == 1 && atoms[0].kind == Atom::Kind::Number) return atoms[0].num;
  bad_shape(k, "a single number", issues);
  return std::nullopt;
}

std::optional<long long> read_integer(const std::vector<Atom>& atoms, const KeyRef& k,
                                      std::vector<ParseIssue>& issues) {
  const auto v = read_number(atoms, k, issues);
  if (!v) return std::nullopt;
  if (*v != std::floor(*v) || std::abs(*v) > 9.0e15) {
    issues.push_back({k.line, k.col, std::string("'") + k.key + "' must be an integer"});
    return std::nullopt;
  }
  return static_cast<long long>(*v);
}

std::optional<std::string> read_word(const std::vector<Atom>& atoms, const KeyRef& k,
                                     std::vector<ParseIssue>& issues) {
  if (atoms.size() == 1 && atoms[0].kind == Atom::Kind::Word) return atoms[0].word;
  bad_shape(k, "a single word", issues);
  return std::nullopt;
}

// Flattens juxtaposed numbers and number lists into one vector.
std::optional<std::vector<double>> read_number_list(const std::vector<Atom>& atoms,
                                                    const KeyRef& k,
                                                    std::vector<ParseIssue>& issues) {
  std::vector<double> out;
  for (const Atom& a : atoms) {
    if (a.kind == Atom::Kind::Number) {
      out.push_back(a.num);
    } else if (a.kind == Atom::Kind::List) {
      for (const Atom& item : a.items) {
        if (item.kind != Atom::Kind::Number) {
          bad_shape(k, "numbers only", issues);
          return std::nullopt;
        }
        out.push_back(item.num);
      }
    } else {
      bad_shape(k, "numbers or a number list", issues);
      return std::nullopt;
    }
  }
  if (atoms.empty()) {
    bad_shape(k, "at least one value", issues);
    return std::nullopt;
  }
  return out;
}

// A velocity: scalar v -> (v, 0), pair (vx, vy), or two juxtaposed numbers.
std::optional<Eigen::Vector2d> read_vec2(const std::vector<Atom>& atoms, const KeyRef& k,
                                         std::vector<ParseIssue>& issues) {
  if (atoms.size() == 1 && atoms[0].kind == Atom::Kind::Number)
    return Eigen::Vector2d{atoms[0].num, 0.0};
  if (atoms.size() == 1 && atoms[0].kind == Atom::Kind::Complex)
    return Eigen::Vector2d{atoms[0].cplx.real(), atoms[0].cplx.imag()};
  if (atoms.size() == 2 && atoms[0].kind == Atom::Kind::Number &&
      atoms[1].kind == Atom::Kind::Number)
    return Eigen::Vector2d{atoms[0].num, atoms[1].num};
  bad_shape(k, "a scalar or an (x, y) pair", issues);
  return std::nullopt;
}

std::optional<Triad> read_triple(const std::vector<Atom>& atoms, const KeyRef& k,
                                 std::vector<ParseIssue>& issues) {
  const std::vector<Atom>* items = &atoms;
  if (atoms.size() == 1 && atoms[0].kind == Atom::Kind::List) items = &atoms[0].items;
  if (items->size() != 3) {
    bad_shape(k, "three complex values", issues);
    return std::nullopt;
  }
  Triad a;
  for (int j = 0; j < 3; ++j) {
    const Atom& it = (*items)[j];
    if (it.kind == Atom::Kind::Complex) {
      a[j] = it.cplx;
    } else if (it.kind == Atom::Kind::Number) {
      a[j] = C(it.num, 0.0);
    } else {
      bad_shape(k, "three complex values", issues);
      return std::nullopt;
    }
  }
  return a;
}

// mode = [m1] (re, im)  or  mode = [m1, m2] (re, im)
std::optional<ModeTerm> read_mode(const std::vector<Atom>& atoms, const KeyRef& k,
                                  std::vector<ParseIssue>& issues) {
  if (atoms.size() != 2 || atoms[0].kind != Atom::Kind::List ||
      atoms[1].kind != Atom::Kind::Complex) {
    bad_shape(k, "'[indices] (re, im)'", issues);
    return std::nullopt;
  }
  const auto& idx = atoms[0].items;
  if (idx.empty() || idx.size() > 2) {
    bad_shape(k, "one or two mode indices", issues);
    return std::nullopt;
  }
  ModeTerm t;
  for (std::size_t d = 0; d < idx.size(); ++d) {
    if (idx[d].kind != Atom::Kind::Number || idx[d].num != std::floor(idx[d].num) ||
        std::abs(idx[d].num) > 1e6) {
      bad_shape(k, "integer mode indices", issues);
      return std::nullopt;
    }
    t.mode[static_cast<int>(d)] = static_cast<int>(idx[d].num);
  }
  t.coeff = atoms[1].cplx;
  return t;
}

// ---------------------------------------------------------------------------
// Builder: raw settings with the positions they came from, assembled and
// cross-checked once the whole document has been read.

template <typename T>
struct Slot {
  std::optional<T> value;
  int line = 0;
  int col = 0;

  bool engaged() const { return value.has_value(); }

  void assign(T v, const KeyRef& k, std::vector<ParseIssue>& issues) {
    if (value) {
      issues.push_back({k.line, k.col, std::string("duplicate key '") + k.key + "'"});
      return;
    }
    value = std::move(v);
    line = k.line;
    col = k.col;
  }
};

enum class Section { None, Run, Coupling, Velocities, Domain, Initial1, Initial2, Initial3, Preset, Sweep };

struct Builder {
  Slot<std::string> kind;
  Slot<Triad> triple;
  Slot<double> tau_end, dt, tol;
  Slot<long long> sample_interval;
  Slot<double> seed;

  Slot<std::vector<double>> gamma;

  Slot<Eigen::Vector2d> c_all, c1, c2, c3;

  Slot<long long> dim;
  Slot<std::vector<double>> half_width, resolution;

  std::array<std::vector<ModeTerm>, 3> modes;
  std::array<int, 3> first_mode_line{0, 0, 0};
  std::array<int, 3> first_mode_col{0, 0, 0};

  Slot<std::string> preset_name;
  std::map<std::string, Slot<double>> preset_params;
  int preset_section_line = 0;

  Slot<std::vector<double>> sw_r1, sw_r2, sw_r3, sw_theta;
  Slot<double> sw_tau_end, sw_tol;
  bool sweep_section_seen = false;
};

struct PresetInfo {
  bool field = false;
  std::map<std::string, double> defaults;
};

const std::map<std::string, PresetInfo>& preset_table() {
  static const std::map<std::string, PresetInfo> table = {
      {"theorem1_bounded", {true, {{"amp", 1.0}, {"modes", 3.0}}}},
      {"theorem3_blowup",
       {true, {{"r_min", 1.0}, {"r_max", 2.0}, {"modes", 3.0}, {"r_floor", 0.5}}}},
      {"ode_case1", {false, {{"r1", 1.0}, {"r3", 2.0}}}},
      {"ode_case2", {false, {{"r1", 0.5}, {"r2", 1.0}, {"r3", 2.0}}}},
      {"ode_case3",
       {false, {{"r1", 1.0}, {"r2", 1.0}, {"r3", 1.0}, {"theta", 0.0}}}},
      {"ode_global_i", {false, {{"z", 3.0}}}},
      {"ode_global_ii", {false, {{"r", 1.0}, {"r3", 2.0}}}},
  };
  return table;
}

// Shared parameter validation, used by the parser (as located issues) and by
// the generators (as thrown errors). Empty string means the preset is valid.
std::string preset_param_error(const PresetSpec& p) {
  const auto pick = [&](const char* key) { return p.param(key); };
  const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (p.name == "theorem1_bounded") {
    if (!positive(pick("amp"))) return "amp must be positive";
    const double m = pick("modes");
    if (m != std::floor(m) || m < 1 || m > 10) return "modes must be an integer in [1, 10]";
  } else if (p.name == "theorem3_blowup") {
    const double floor_v = pick("r_floor"), lo = pick("r_min"), hi = pick("r_max");
    if (!positive(floor_v)) return "r_floor must be positive";
    if (!(std::isfinite(lo) && lo >= floor_v)) return "r_min must be at least r_floor";
    if (!(std::isfinite(hi) && hi >= lo)) return "r_max must be at least r_min";
    const double m = pick("modes");
    if (m != std::floor(m) || m < 1 || m > 10) return "modes must be an integer in [1, 10]";
  } else if (p.name == "ode_case1") {
    if (!positive(pick("r1")) || !positive(pick("r3")))
      return "r1 and r3 must be positive";
  } else if (p.name == "ode_case2") {
    std::array<double, 3> r{pick("r1"), pick("r2"), pick("r3")};
    for (double v : r)
      if (!positive(v)) return "all moduli must be positive";
    std::sort(r.begin(), r.end());
    if (!(r[0] < r[1] - 10.0 * kEpsAmp))
      return "the smallest modulus must be strictly below the other two";
  } else if (p.name == "ode_case3") {
    if (!positive(pick("r1")) || !positive(pick("r2")) || !positive(pick("r3")))
      return "all moduli must be positive";
    if (angle_distance(wrap_angle(pick("theta")), 1.5 * kPi) <= 10.0 * kEpsPhase)
      return "theta must stay away from the decaying total phase 3*pi/2";
  } else if (p.name == "ode_global_i") {
    const double z = pick("z");
    if (!(std::isfinite(z) && z >= 0.0)) return "z must be non-negative";
  } else if (p.name == "ode_global_ii") {
    const double r = pick("r"), r3 = pick("r3");
    if (!positive(r)) return "r must be positive";
    if (!(std::isfinite(r3) && r3 >= r)) return "r3 must be at least r";
  } else {
    return "unknown preset '" + p.name + "'";
  }
  return {};
}

std::string preset_grid_error(const PresetSpec& p, int n1, int n2, int dim) {
  if (!preset_is_field(p.name)) return {};
  const int m = static_cast<int>(p.param("modes"));
  const int n_min = dim == 2 ? std::min(n1, n2) : n1;
  if (3 * m >= n_min)
    return "modes too wide for the grid: the spectral band needs 3*modes < N";
  return {};
}

bool is_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

// ---------------------------------------------------------------------------
// Generators.

double symmetric_unit(double u) { return 2.0 * u - 1.0; }

// Real band-limited noise normalized onto [0, 1]; both endpoints are attained
// exactly at some grid point, so affine remapping hits its bounds exactly.
Eigen::ArrayXXd normalized_band_noise(const TriadField& f, int max_mode,
                                      SeededUniform& rng) {
  const int n1 = f.shape[0], n2 = f.shape[1];
  Eigen::ArrayXXd w = Eigen::ArrayXXd::Zero(n1, n2);
  const double k1 = kPi / f.domain.half_width[0];
  const double k2 = f.domain.dim == 2 ? kPi / f.domain.half_width[1] : 0.0;
  const auto add_wave = [&](int m1, int m2) {
    const double alpha = symmetric_unit(rng.next());
    const double beta = symmetric_unit(rng.next());
    for (int j = 0; j < n2; ++j)
      for (int i = 0; i < n1; ++i) {
        const double ph = k1 * m1 * f.coord(0, i) + k2 * m2 * f.coord(1, j);
        w(i, j) += alpha * std::cos(ph) + beta * std::sin(ph);
      }
  };
  if (f.domain.dim == 1) {
    for (int m = 1; m <= max_mode; ++m) add_wave(m, 0);
  } else {
    for (int m2 = 1; m2 <= max_mode; ++m2) add_wave(0, m2);
    for (int m1 = 1; m1 <= max_mode; ++m1)
      for (int m2 = -max_mode; m2 <= max_mode; ++m2) add_wave(m1, m2);
  }
  const double lo = w.minCoeff();
  const double hi = w.maxCoeff();
  if (hi > lo)
    w = (w - lo) / (hi - lo);
  else
    w.setZero();
  return w;
}

Eigen::ArrayXXcd complex_band_noise(const TriadField& f, int max_mode,
                                    SeededUniform& rng) {
  const int n1 = f.shape[0], n2 = f.shape[1];
  Eigen::ArrayXXcd z = Eigen::ArrayXXcd::Zero(n1, n2);
  const double k1 = kPi / f.domain.half_width[0];
  const double k2 = f.domain.dim == 2 ? kPi / f.domain.half_width[1] : 0.0;
  const auto add_wave = [&](int m1, int m2) {
    const C coeff(symmetric_unit(rng.next()), symmetric_unit(rng.next()));
    for (int j = 0; j < n2; ++j)
      for (int i = 0; i < n1; ++i) {
        const double ph = k1 * m1 * f.coord(0, i) + k2 * m2 * f.coord(1, j);
        z(i, j) += coeff * std::polar(1.0, ph);
      }
  };
  if (f.domain.dim == 1) {
    for (int m = -max_mode; m <= max_mode; ++m) add_wave(m, 0);
  } else {
    for (int m1 = -max_mode; m1 <= max_mode; ++m1)
      for (int m2 = -max_mode; m2 <= max_mode; ++m2) add_wave(m1, m2);
  }
  return z;
}

}  // namespace

double PresetSpec::param(const std::string& key) const {
  const auto it = params.find(key);
  if (it == params.end())
    throw std::logic_error("preset parameter not resolved: " + key);
  return it->second;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, info] : preset_table()) v.push_back(name);
    return v;
  }();
  return names;
}

bool preset_is_field(const std::string& name) {
  const auto it = preset_table().find(name);
  return it != preset_table().end() && it->second.field;
}

std::string format_issues(const std::vector<ParseIssue>& issues) {
  std::vector<ParseIssue> sorted = issues;
  std::stable_sort(sorted.begin(), sorted.end(), [](const ParseIssue& a, const ParseIssue& b) {
    return a.line != b.line ? a.line < b.line : a.column < b.column;
  });
  std::ostringstream out;
  for (const ParseIssue& i : sorted) {
    if (i.line > 0)
      out << "line " << i.line << ", col " << i.column << ": " << i.message << '\n';
    else
      out << "config: " << i.message << '\n';
  }
  return out.str();
}

std::optional<Triad> parse_triple(const std::string& text, std::string* error) {
  std::vector<ParseIssue> issues;
  bool ok = false;
  const auto atoms = scan_value(text, 0, text.size(), 1, issues, &ok);
  std::optional<Triad> triple;
  if (ok) triple = read_triple(atoms, {"triple", 1, 1}, issues);
  if (!issues.empty()) {
    if (error) {
      std::string joined;
      for (const auto& i : issues) {
        if (!joined.empty()) joined += "; ";
        joined += i.message;
      }
      *error = joined;
    }
    return std::nullopt;
  }
  return triple;
}

ParseResult parse_config(const std::string& text) {
  ParseResult result;
  auto& issues = result.issues;
  Builder b;
  Section section = Section::None;
  KeyRef initial_key{"initial", 0, 0};

  std::istringstream stream(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    std::string content = raw;
    if (const auto hash = content.find('#'); hash != std::string::npos)
      content.erase(hash);
    std::size_t first = content.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    std::size_t last = content.find_last_not_of(" \t\r");

    if (content[first] == '[') {
      const std::size_t close = content.find(']', first);
      if (close == std::string::npos || close != last) {
        issues.push_back({line_no, static_cast<int>(first) + 1, "malformed section header"});
        section = Section::None;
        continue;
      }
      const std::string name = content.substr(first + 1, close - first - 1);
      if (name == "run") section = Section::Run;
      else if (name == "coupling") section = Section::Coupling;
      else if (name == "velocities") section = Section::Velocities;
      else if (name == "domain") section = Section::Domain;
      else if (name == "initial.A1") section = Section::Initial1;
      else if (name == "initial.A2") section = Section::Initial2;
      else if (name == "initial.A3") section = Section::Initial3;
      else if (name == "preset") { section = Section::Preset; b.preset_section_line = line_no; }
      else if (name == "sweep") { section = Section::Sweep; b.sweep_section_seen = true; }
      else {
        issues.push_back({line_no, static_cast<int>(first) + 1,
                          "unknown section '[" + name + "]'"});
        section = Section::None;
      }
      continue;
    }

    const std::size_t eq = content.find('=', first);
    if (eq == std::string::npos) {
      issues.push_back({line_no, static_cast<int>(first) + 1, "expected 'key = value'"});
      continue;
    }
    std::string key = content.substr(first, eq - first);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    if (!is_identifier(key)) {
      issues.push_back({line_no, static_cast<int>(first) + 1, "malformed key"});
      continue;
    }
    if (section == Section::None) {
      issues.push_back({line_no, static_cast<int>(first) + 1,
                        "key '" + key + "' outside any section"});
      continue;
    }

    bool scan_ok = false;
    const auto atoms = scan_value(content, eq + 1, last + 1, line_no, issues, &scan_ok);
    if (!scan_ok) continue;
    const KeyRef at{key.c_str(), line_no, static_cast<int>(first) + 1};

    const auto unknown_key = [&](const char* where) {
      issues.push_back({at.line, at.col, "unknown key '" + key + "' in [" + where + "]"});
    };

    switch (section) {
      case Section::Run:
        if (key == "kind") { if (auto v = read_word(atoms, at, issues)) b.kind.assign(*v, at, issues); }
        else if (key == "tau_end") { if (auto v = read_number(atoms, at, issues)) b.tau_end.assign(*v, at, issues); }
        else if (key == "dt") { if (auto v = read_number(atoms, at, issues)) b.dt.assign(*v, at, issues); }
        else if (key == "tol") { if (auto v = read_number(atoms, at, issues)) b.tol.assign(*v, at, issues); }
        else if (key == "sample_interval") { if (auto v = read_integer(atoms, at, issues)) b.sample_interval.assign(*v, at, issues); }
        else if (key == "seed") { if (auto v = read_number(atoms, at, issues)) b.seed.assign(*v, at, issues); }
        else if (key == "initial") {
          if (auto v = read_triple(atoms, at, issues)) {
            b.triple.assign(*v, at, issues);
            initial_key = at;
          }
        }
        else unknown_key("run");
        break;
      case Section::Coupling:
        if (key == "gamma") { if (auto v = read_number_list(atoms, at, issues)) b.gamma.assign(*v, at, issues); }
        else unknown_key("coupling");
        break;
      case Section::Velocities:
        if (key == "c") { if (auto v = read_vec2(atoms, at, issues)) b.c_all.assign(*v, at, issues); }
        else if (key == "c1") { if (auto v = read_vec2(atoms, at, issues)) b.c1.assign(*v, at, issues); }
        else if (key == "c2") { if (auto v = read_vec2(atoms, at, issues)) b.c2.assign(*v, at, issues); }
        else if (key == "c3") { if (auto v = read_vec2(atoms, at, issues)) b.c3.assign(*v, at, issues); }
        else unknown_key("velocities");
        break;
      case Section::Domain:
        if (key == "dim") { if (auto v = read_integer(atoms, at, issues)) b.dim.assign(*v, at, issues); }
        else if (key == "half_width") { if (auto v = read_number_list(atoms, at, issues)) b.half_width.assign(*v, at, issues); }
        else if (key == "resolution") { if (auto v = read_number_list(atoms, at, issues)) b.resolution.assign(*v, at, issues); }
        else unknown_key("domain");
        break;
      case Section::Initial1:
      case Section::Initial2:
      case Section::Initial3: {
        const int j = section == Section::Initial1 ? 0 : section == Section::Initial2 ? 1 : 2;
        if (key == "mode") {
          if (auto v = read_mode(atoms, at, issues)) {
            if (b.modes[j].empty()) {
              b.first_mode_line[j] = at.line;
              b.first_mode_col[j] = at.col;
            }
            for (const ModeTerm& earlier : b.modes[j])
              if (earlier.mode == v->mode) {
                issues.push_back({at.line, at.col, "repeated mode index"});
                break;
              }
            b.modes[j].push_back(*v);
          }
        } else {
          unknown_key(j == 0 ? "initial.A1" : j == 1 ? "initial.A2" : "initial.A3");
        }
        break;
      }
      case Section::Preset:
        if (key == "name") { if (auto v = read_word(atoms, at, issues)) b.preset_name.assign(*v, at, issues); }
        else if (auto v = read_number(atoms, at, issues)) {
          auto& slot = b.preset_params[key];
          slot.assign(*v, at, issues);
        }
        break;
      case Section::Sweep:
        if (key == "r1") { if (auto v = read_number_list(atoms, at, issues)) b.sw_r1.assign(*v, at, issues); }
        else if (key == "r2") { if (auto v = read_number_list(atoms, at, issues)) b.sw_r2.assign(*v, at, issues); }
        else if (key == "r3") { if (auto v = read_number_list(atoms, at, issues)) b.sw_r3.assign(*v, at, issues); }
        else if (key == "theta") { if (auto v = read_number_list(atoms, at, issues)) b.sw_theta.assign(*v, at, issues); }
        else if (key == "tau_end") { if (auto v = read_number(atoms, at, issues)) b.sw_tau_end.assign(*v, at, issues); }
        else if (key == "tol") { if (auto v = read_number(atoms, at, issues)) b.sw_tol.assign(*v, at, issues); }
        else unknown_key("sweep");
        break;
      case Section::None:
        break;
    }
  }

  // -------------------------------------------------------------------------
  // Cross-validation and assembly.

  ScenarioConfig cfg;
  const auto file_issue = [&](std::string msg) { issues.push_back({0, 0, std::move(msg)}); };
  const auto at_issue = [&](int line, int col, std::string msg) {
    issues.push_back({line, col, std::move(msg)});
  };

  bool kind_known = false;
  if (!b.kind.engaged()) {
    file_issue("missing required key 'kind' in [run]");
  } else if (*b.kind.value == "ode") {
    cfg.kind = ScenarioKind::Ode;
    kind_known = true;
  } else if (*b.kind.value == "pde") {
    cfg.kind = ScenarioKind::Pde;
    kind_known = true;
  } else {
    at_issue(b.kind.line, b.kind.col, "kind must be 'ode' or 'pde'");
  }

  if (b.tau_end.engaged()) {
    if (std::isfinite(*b.tau_end.value) && *b.tau_end.value > 0.0)
      cfg.tau_end = *b.tau_end.value;
    else
      at_issue(b.tau_end.line, b.tau_end.col, "tau_end must be positive");
  }
  if (b.tol.engaged()) {
    if (*b.tol.value >= 1e-14 && *b.tol.value <= 1e-3)
      cfg.tol = *b.tol.value;
    else
      at_issue(b.tol.line, b.tol.col, "tol must lie in [1e-14, 1e-3]");
  }
  if (b.dt.engaged()) {
    if (std::isfinite(*b.dt.value) && *b.dt.value > 0.0) {
      cfg.dt = *b.dt.value;
      cfg.dt_explicit = true;
    } else {
      at_issue(b.dt.line, b.dt.col, "dt must be positive");
    }
  }
  if (b.sample_interval.engaged()) {
    if (*b.sample_interval.value >= 1)
      cfg.sample_interval = static_cast<int>(*b.sample_interval.value);
    else
      at_issue(b.sample_interval.line, b.sample_interval.col,
               "sample_interval must be at least 1");
  }
  if (b.seed.engaged()) {
    const double s = *b.seed.value;
    if (s >= 0.0 && s == std::floor(s) && s <= 9.0e15)
      cfg.seed = static_cast<std::uint64_t>(s);
    else
      at_issue(b.seed.line, b.seed.col, "seed must be a non-negative integer");
  }

  bool gamma_explicit = false;
  if (b.gamma.engaged()) {
    const auto& g = *b.gamma.value;
    bool fine = g.size() == 3;
    for (double v : g) fine = fine && (v == 1.0 || v == -1.0);
    if (fine) {
      cfg.gamma = Coupling(static_cast<int>(g[0]), static_cast<int>(g[1]),
                           static_cast<int>(g[2]));
      gamma_explicit = true;
    } else {
      at_issue(b.gamma.line, b.gamma.col, "gamma must be three signs, each +1 or -1");
    }
  }

  // Geometry.
  if (b.dim.engaged()) {
    if (*b.dim.value == 1 || *b.dim.value == 2)
      cfg.dim = static_cast<int>(*b.dim.value);
    else
      at_issue(b.dim.line, b.dim.col, "dim must be 1 or 2");
  }
  if (b.half_width.engaged()) {
    const auto& hw = *b.half_width.value;
    if (hw.size() != static_cast<std::size_t>(cfg.dim)) {
      at_issue(b.half_width.line, b.half_width.col,
               "half_width needs one entry per axis");
    } else {
      bool fine = true;
      for (double v : hw) fine = fine && std::isfinite(v) && v > 0.0;
      if (!fine) {
        at_issue(b.half_width.line, b.half_width.col, "half_width entries must be positive");
      } else {
        cfg.half_width[0] = hw[0];
        if (hw.size() == 2) cfg.half_width[1] = hw[1];
      }
    }
  }
  if (b.resolution.engaged()) {
    const auto& res = *b.resolution.value;
    if (res.size() != static_cast<std::size_t>(cfg.dim)) {
      at_issue(b.resolution.line, b.resolution.col,
               "resolution needs one entry per axis");
    } else {
      bool fine = true;
      for (double v : res) {
        const bool integral = v == std::floor(v) && v >= 2 && v <= (1 << 20);
        const auto n = static_cast<int>(v);
        fine = fine && integral && (n & (n - 1)) == 0;
      }
      if (!fine) {
        at_issue(b.resolution.line, b.resolution.col,
                 "resolution entries must be powers of two");
      } else {
        cfg.resolution[0] = static_cast<int>(res[0]);
        cfg.resolution[1] = res.size() == 2 ? static_cast<int>(res[1]) : 1;
      }
    }
  }
  if (cfg.dim == 2 && b.resolution.engaged() && b.resolution.value->size() == 2 &&
      cfg.resolution[1] == 1)
    at_issue(b.resolution.line, b.resolution.col, "2-d runs need at least 2 points per axis");

  // Velocities.
  bool velocity_explicit = false;
  {
    const bool any_per_wave = b.c1.engaged() || b.c2.engaged() || b.c3.engaged();
    if (b.c_all.engaged() && any_per_wave)
      at_issue(b.c_all.line, b.c_all.col, "'c' conflicts with per-wave velocities");
    const auto check_dim = [&](const Slot<Eigen::Vector2d>& s, const char* key) {
      if (s.engaged() && cfg.dim == 1 && (*s.value)[1] != 0.0)
        at_issue(s.line, s.col,
                 std::string("'") + key + "' has a second component on a 1-d domain");
    };
    check_dim(b.c_all, "c");
    check_dim(b.c1, "c1");
    check_dim(b.c2, "c2");
    check_dim(b.c3, "c3");
    if (b.c_all.engaged()) {
      cfg.velocities = uniform_velocity(*b.c_all.value);
      velocity_explicit = true;
    } else if (any_per_wave) {
      if (b.c1.engaged() && b.c2.engaged() && b.c3.engaged()) {
        cfg.velocities.c = {*b.c1.value, *b.c2.value, *b.c3.value};
        velocity_explicit = true;
      } else {
        file_issue("velocities need either 'c' or all of c1, c2, c3");
      }
    }
  }

  // Modes.
  for (int j = 0; j < 3; ++j) cfg.modes[j] = b.modes[j];
  const bool any_modes = cfg.has_modes();
  if (any_modes) {
    for (int j = 0; j < 3; ++j)
      for (const ModeTerm& t : cfg.modes[j]) {
        if (std::abs(t.mode[0]) >= cfg.resolution[0] / 2 ||
            (cfg.dim == 2 && std::abs(t.mode[1]) >= cfg.resolution[1] / 2))
          at_issue(b.first_mode_line[j], b.first_mode_col[j],
                   "mode index outside the representable band");
        if (cfg.dim == 1 && t.mode[1] != 0)
          at_issue(b.first_mode_line[j], b.first_mode_col[j],
                   "second mode index on a 1-d domain");
      }
  }

  // Preset resolution.
  bool preset_engaged = false;
  if (b.preset_name.engaged() || !b.preset_params.empty() || b.preset_section_line > 0) {
    if (!b.preset_name.engaged()) {
      at_issue(b.preset_section_line, 1, "preset section needs a 'name'");
    } else {
      const auto it = preset_table().find(*b.preset_name.value);
      if (it == preset_table().end()) {
        at_issue(b.preset_name.line, b.preset_name.col,
                 "unknown preset '" + *b.preset_name.value + "'");
      } else {
        PresetSpec spec;
        spec.name = it->first;
        spec.params = it->second.defaults;
        bool params_fine = true;
        for (auto& [key, slot] : b.preset_params) {
          if (spec.params.count(key) == 0) {
            at_issue(slot.line, slot.col,
                     "preset '" + spec.name + "' has no parameter '" + key + "'");
            params_fine = false;
          } else {
            spec.params[key] = *slot.value;
          }
        }
        if (params_fine) {
          if (const std::string err = preset_param_error(spec); !err.empty())
            at_issue(b.preset_name.line, b.preset_name.col, err);
          else {
            cfg.preset = std::move(spec);
            preset_engaged = true;
          }
        }
      }
    }
  }

  // Sweep.
  if (b.sweep_section_seen) {
    SweepSpec sw;
    if (b.sw_r1.engaged()) sw.r1 = *b.sw_r1.value;
    if (b.sw_r2.engaged()) sw.r2 = *b.sw_r2.value;
    if (b.sw_r3.engaged()) sw.r3 = *b.sw_r3.value;
    if (b.sw_theta.engaged()) sw.theta = *b.sw_theta.value;
    if (b.sw_tau_end.engaged()) {
      if (std::isfinite(*b.sw_tau_end.value) && *b.sw_tau_end.value > 0.0)
        sw.tau_end = *b.sw_tau_end.value;
      else
        at_issue(b.sw_tau_end.line, b.sw_tau_end.col, "tau_end must be positive");
    }
    if (b.sw_tol.engaged()) {
      if (*b.sw_tol.value >= 1e-14 && *b.sw_tol.value <= 1e-3)
        sw.tol = *b.sw_tol.value;
      else
        at_issue(b.sw_tol.line, b.sw_tol.col, "tol must lie in [1e-14, 1e-3]");
    }
    for (const auto* axis : {&sw.r1, &sw.r2, &sw.r3})
      for (double v : *axis)
        if (!std::isfinite(v) || v < 0.0) {
          file_issue("sweep moduli must be non-negative");
          goto sweep_done;
        }
  sweep_done:
    cfg.sweep = std::move(sw);
  }

  if (b.triple.engaged()) cfg.triple = *b.triple.value;

  // Kind-specific consistency.
  if (kind_known && cfg.kind == ScenarioKind::Ode) {
    if (any_modes) {
      const int where = std::max({b.first_mode_line[0], b.first_mode_line[1],
                                  b.first_mode_line[2]});
      at_issue(where, 1, "field modes apply to pde runs");
    }
    if (b.dim.engaged() || b.half_width.engaged() || b.resolution.engaged())
      file_issue("[domain] applies to pde runs");
    if (velocity_explicit) file_issue("[velocities] applies to pde runs");
    if (b.dt.engaged()) at_issue(b.dt.line, b.dt.col, "dt applies to pde runs; ode runs take 'tol'");
    if (preset_engaged && preset_is_field(cfg.preset->name))
      at_issue(b.preset_name.line, b.preset_name.col,
               "preset '" + cfg.preset->name + "' builds a field, not a triple");
    if (cfg.triple && preset_engaged)
      at_issue(initial_key.line, initial_key.col,
               "both an explicit initial triple and a preset were given");
    if (!cfg.triple && !preset_engaged && !cfg.sweep)
      file_issue("no initial data: set 'initial' in [run] or a [preset]");
    if (gamma_explicit && preset_engaged && cfg.gamma != Coupling(1, 1, 1))
      at_issue(b.gamma.line, b.gamma.col,
               "ode presets assume same-sign coupling (1, 1, 1)");
    if (!gamma_explicit) cfg.gamma = Coupling(1, 1, 1);
  } else if (kind_known && cfg.kind == ScenarioKind::Pde) {
    if (cfg.triple)
      at_issue(initial_key.line, initial_key.col, "'initial' triples apply to ode runs");
    if (b.tol.engaged())
      at_issue(b.tol.line, b.tol.col, "tol applies to ode runs; pde runs take 'dt'");
    if (cfg.sweep) file_issue("[sweep] applies to ode scenarios");
    if (preset_engaged && !preset_is_field(cfg.preset->name))
      at_issue(b.preset_name.line, b.preset_name.col,
               "preset '" + cfg.preset->name + "' builds a triple, not a field");
    if (any_modes && preset_engaged)
      file_issue("both explicit field modes and a preset were given");
    if (!any_modes && !preset_engaged)
      file_issue("no initial data: add [initial.A*] modes or a [preset]");

    if (preset_engaged && cfg.preset->name == "theorem1_bounded") {
      const Coupling mixed(1, -1, -1);
      if (gamma_explicit && cfg.gamma != mixed)
        at_issue(b.gamma.line, b.gamma.col,
                 "theorem1_bounded requires coupling (1, -1, -1)");
      if (!gamma_explicit) cfg.gamma = mixed;
      if (velocity_explicit && !cfg.velocities.all_equal())
        file_issue("theorem1_bounded requires equal velocities");
      if (!velocity_explicit)
        cfg.velocities = uniform_velocity(
            cfg.dim == 2 ? Eigen::Vector2d{0.5, 0.3} : Eigen::Vector2d{0.5, 0.0});
    } else if (preset_engaged && cfg.preset->name == "theorem3_blowup") {
      const Coupling same(1, 1, 1);
      if (gamma_explicit && cfg.gamma != same)
        at_issue(b.gamma.line, b.gamma.col, "theorem3_blowup requires coupling (1, 1, 1)");
      if (!gamma_explicit) cfg.gamma = same;
      if (!velocity_explicit) {
        if (cfg.dim == 2)
          cfg.velocities.c = {Eigen::Vector2d{0.7, 0.2}, Eigen::Vector2d{-0.4, -0.3},
                              Eigen::Vector2d{0.3, 0.1}};
        else
          cfg.velocities.c = {Eigen::Vector2d{0.7, 0.0}, Eigen::Vector2d{-0.4, 0.0},
                              Eigen::Vector2d{0.3, 0.0}};
      }
    } else if (!gamma_explicit) {
      file_issue("missing required key 'gamma' in [coupling]");
    }

    if (preset_engaged && cfg.preset)
      if (const std::string err =
              preset_grid_error(*cfg.preset, cfg.resolution[0], cfg.resolution[1], cfg.dim);
          !err.empty())
        at_issue(b.preset_name.line, b.preset_name.col, err);
  }

  if (issues.empty()) result.config = std::move(cfg);
  return result;
}

Triad generate_triple(const PresetSpec& preset) {
  const auto it = preset_table().find(preset.name);
  if (it == preset_table().end() || it->second.field)
    throw std::invalid_argument("not an ode preset: " + preset.name);
  PresetSpec full;
  full.name = preset.name;
  full.params = it->second.defaults;
  for (const auto& [k, v] : preset.params) {
    if (full.params.count(k) == 0)
      throw std::invalid_argument("preset '" + preset.name + "' has no parameter '" + k + "'");
    full.params[k] = v;
  }
  if (const std::string err = preset_param_error(full); !err.empty())
    throw std::invalid_argument(err);

  Triad a;
  if (full.name == "ode_case1") {
    a << C(full.param("r1"), 0.0), C(0.0, 0.0), C(full.param("r3"), 0.0);
  } else if (full.name == "ode_case2") {
    a << C(0.0, full.param("r1")), C(0.0, full.param("r2")), C(0.0, full.param("r3"));
  } else if (full.name == "ode_case3") {
    a << C(full.param("r1"), 0.0), C(full.param("r2"), 0.0),
        full.param("r3") * std::polar(1.0, full.param("theta"));
  } else if (full.name == "ode_global_i") {
    a << C(0.0, 0.0), C(0.0, 0.0), C(full.param("z"), 0.0);
  } else {  // ode_global_ii
    a << C(0.0, full.param("r")), C(0.0, full.param("r")), C(0.0, full.param("r3"));
  }
  return a;
}

TriadField generate_field(const PresetSpec& preset, const PeriodicDomain& domain,
                          int n1, int n2, std::uint64_t seed) {
  const auto it = preset_table().find(preset.name);
  if (it == preset_table().end() || !it->second.field)
    throw std::invalid_argument("not a field preset: " + preset.name);
  PresetSpec full;
  full.name = preset.name;
  full.params = it->second.defaults;
  for (const auto& [k, v] : preset.params) {
    if (full.params.count(k) == 0)
      throw std::invalid_argument("preset '" + preset.name + "' has no parameter '" + k + "'");
    full.params[k] = v;
  }
  if (const std::string err = preset_param_error(full); !err.empty())
    throw std::invalid_argument(err);
  if (const std::string err = preset_grid_error(full, n1, n2, domain.dim); !err.empty())
    throw std::invalid_argument(err);

  TriadField f = make_field(domain, n1, n2);
  SeededUniform rng(seed);
  const int max_mode = static_cast<int>(full.param("modes"));

  if (full.name == "theorem1_bounded") {
    const double amp = full.param("amp");
    for (int j = 0; j < 3; ++j) {
      Eigen::ArrayXXcd z = complex_band_noise(f, max_mode, rng);
      const double mx = z.abs().maxCoeff();
      if (mx > 0.0)
        f.comp[j] = z * (amp / mx);
      else
        f.comp[j].setConstant(C(amp, 0.0));
    }
  } else {  // theorem3_blowup
    const double lo = full.param("r_min");
    const double span = full.param("r_max") - lo;
    for (int j = 0; j < 3; ++j) {
      const Eigen::ArrayXXd r = lo + span * normalized_band_noise(f, max_mode, rng);
      if (j < 2)
        f.comp[j] = r.cast<C>();
      else
        f.comp[j] = r.unaryExpr([](double v) { return C(0.0, v); });
    }
  }
  return f;
}

Triad initial_triple(const ScenarioConfig& cfg) {
  if (cfg.kind != ScenarioKind::Ode)
    throw std::invalid_argument("scenario does not describe an ode run");
  if (cfg.triple) return *cfg.triple;
  if (cfg.preset) return generate_triple(*cfg.preset);
  throw std::invalid_argument("scenario carries no initial triple");
}

TriadField initial_field(const ScenarioConfig& cfg) {
  if (cfg.kind != ScenarioKind::Pde)
    throw std::invalid_argument("scenario does not describe a pde run");
  const PeriodicDomain dom = cfg.dim == 2
                                 ? make_domain(cfg.half_width[0], cfg.half_width[1])
                                 : make_domain(cfg.half_width[0]);
  if (cfg.preset)
    return generate_field(*cfg.preset, dom, cfg.resolution[0], cfg.resolution[1], cfg.seed);
  if (!cfg.has_modes()) throw std::invalid_argument("scenario carries no initial field");

  TriadField f = make_field(dom, cfg.resolution[0], cfg.resolution[1]);
  const double k1 = kPi / dom.half_width[0];
  const double k2 = dom.dim == 2 ? kPi / dom.half_width[1] : 0.0;
  for (int j = 0; j < 3; ++j)
    for (const ModeTerm& t : cfg.modes[j])
      for (int jj = 0; jj < f.shape[1]; ++jj)
        for (int ii = 0; ii < f.shape[0]; ++ii) {
          const double ph = k1 * t.mode[0] * f.coord(0, ii) +
                            k2 * t.mode[1] * f.coord(1, jj);
          f.comp[j](ii, jj) += t.coeff * std::polar(1.0, ph);
        }
  return f;
}

}  // namespace wave3
