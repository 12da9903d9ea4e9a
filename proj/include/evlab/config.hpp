#ifndef EVLAB_CONFIG_HPP
#define EVLAB_CONFIG_HPP

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "evlab/eprb.hpp"

namespace evlab {

/// 17 significant digits: doubles survive a write/parse round trip bit-exactly.
inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Flat `dotted.key = value` configuration text. Keys stay sorted, so
/// serialization is deterministic and echo files are diff-friendly.
class FlatConfig {
 public:
  static FlatConfig parse(std::istream& in) {
    FlatConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      size_t eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(trimmed.substr(0, eq));
      std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
      if (cfg.values_.count(key))
        throw std::invalid_argument("duplicate config key " + key);
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static FlatConfig parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static FlatConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path);
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void set(const std::string& key, double value) { values_[key] = format_number(value); }
  void set(const std::string& key, int value) { values_[key] = std::to_string(value); }

  std::string get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("missing config key " + key);
    consumed_.insert(key);
    return it->second;
  }

  double get_double(const std::string& key) const {
    const std::string s = get_string(key);
    size_t pos = 0;
    double v;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": not a number: " + s);
    }
    if (pos != s.size()) throw std::invalid_argument("config key " + key + ": not a number: " + s);
    return v;
  }

  int get_int(const std::string& key) const {
    double v = get_double(key);
    int i = static_cast<int>(v);
    if (i != v) throw std::invalid_argument("config key " + key + ": not an integer");
    return i;
  }

  double get_double_or(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }
  int get_int_or(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
  }
  std::string get_string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
  }

  /// After a reader consumed its schema, anything left is a typo; name it.
  void reject_unconsumed() const {
    for (const auto& [key, value] : values_)
      if (!consumed_.count(key)) throw std::invalid_argument("unknown config key " + key);
  }

  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
    return out.str();
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

inline FlatConfig scenario_to_config(const ScenarioSpec& sc) {
  FlatConfig cfg;
  cfg.set("scenario.kind", sc.kind);
  cfg.set("scenario.backend", backend_name(sc.backend));
  cfg.set("scenario.theta", sc.theta);
  cfg.set("scenario.beta", sc.beta);
  cfg.set("scenario.axes.n1.theta", sc.n1.theta);
  cfg.set("scenario.axes.n1.phi", sc.n1.phi);
  if (sc.kind != "single_observer") {
    cfg.set("scenario.axes.n2.theta", sc.n2.theta);
    cfg.set("scenario.axes.n2.phi", sc.n2.phi);
  }
  cfg.set("scenario.coupling.kappa", sc.coupling.kappa);
  cfg.set("scenario.coupling.kappa_c", sc.coupling.kappa_C);
  cfg.set("scenario.coupling.range_a", sc.coupling.range_a);
  cfg.set("scenario.coupling.range_ac", sc.coupling.range_aC);
  for (int i = 0; i < 5; ++i) cfg.set("scenario.times.t" + std::to_string(i), sc.times[i]);
  cfg.set("scenario.localize_epsilon", sc.localize_epsilon);
  cfg.set("lattice.cells", sc.cells);
  cfg.set("lattice.dx", sc.dx);
  cfg.set("lattice.boundary", sc.boundary == Boundary::open ? "open" : "periodic");
  for (const auto& id : sc.entity_ids()) {
    const auto& w = sc.packets.at(id);
    cfg.set("packet." + id + ".center", w.center[0]);
    cfg.set("packet." + id + ".alpha", w.alpha);
    cfg.set("packet." + id + ".velocity", w.velocity[0]);
    cfg.set("packet." + id + ".mass", w.mass);
  }
  if (sc.kind == "single_observer") {
    cfg.set("scenario.spin.c1.re", sc.spin_coeffs[0].real());
    cfg.set("scenario.spin.c1.im", sc.spin_coeffs[0].imag());
    cfg.set("scenario.spin.c2.re", sc.spin_coeffs[1].real());
    cfg.set("scenario.spin.c2.im", sc.spin_coeffs[1].imag());
  }
  return cfg;
}

inline BackendKind backend_from_name(const std::string& name) {
  if (name == "lattice") return BackendKind::lattice;
  if (name == "analytic") return BackendKind::analytic;
  if (name == "both") return BackendKind::both;
  throw std::invalid_argument("unknown backend " + name + " (expected lattice|analytic|both)");
}

/// Full scenario from config text; every schema key is required, anything
/// outside the schema is rejected by name.
inline ScenarioSpec scenario_from_config(const FlatConfig& cfg) {
  ScenarioSpec sc;
  sc.kind = cfg.get_string("scenario.kind");
  if (sc.kind != "eprb" && sc.kind != "single_observer")
    throw std::invalid_argument("scenario.kind must be eprb or single_observer");
  sc.backend = backend_from_name(cfg.get_string("scenario.backend"));
  sc.theta = cfg.get_double("scenario.theta");
  sc.beta = cfg.get_double("scenario.beta");
  sc.n1 = SpinAxis{cfg.get_double("scenario.axes.n1.theta"), cfg.get_double("scenario.axes.n1.phi")};
  if (sc.kind != "single_observer")
    sc.n2 = SpinAxis{cfg.get_double("scenario.axes.n2.theta"), cfg.get_double("scenario.axes.n2.phi")};
  sc.coupling.kappa = cfg.get_double("scenario.coupling.kappa");
  sc.coupling.kappa_C = cfg.get_double("scenario.coupling.kappa_c");
  sc.coupling.range_a = cfg.get_double("scenario.coupling.range_a");
  sc.coupling.range_aC = cfg.get_double("scenario.coupling.range_ac");
  for (int i = 0; i < 5; ++i) sc.times[i] = cfg.get_double("scenario.times.t" + std::to_string(i));
  sc.localize_epsilon = cfg.get_double("scenario.localize_epsilon");
  sc.cells = cfg.get_int("lattice.cells");
  sc.dx = cfg.get_double("lattice.dx");
  const std::string b = cfg.get_string("lattice.boundary");
  if (b != "open" && b != "periodic")
    throw std::invalid_argument("lattice.boundary must be open or periodic");
  sc.boundary = b == "open" ? Boundary::open : Boundary::periodic;
  for (const auto& id : sc.entity_ids()) {
    WavepacketSpec w;
    w.center = Vec3{{cfg.get_double("packet." + id + ".center"), 0.0, 0.0}};
    w.alpha = cfg.get_double("packet." + id + ".alpha");
    w.velocity = Vec3{{cfg.get_double("packet." + id + ".velocity"), 0.0, 0.0}};
    w.mass = cfg.get_double("packet." + id + ".mass");
    sc.packets[id] = w;
  }
  if (sc.kind == "single_observer") {
    sc.spin_coeffs[0] =
        complex(cfg.get_double("scenario.spin.c1.re"), cfg.get_double("scenario.spin.c1.im"));
    sc.spin_coeffs[1] =
        complex(cfg.get_double("scenario.spin.c2.re"), cfg.get_double("scenario.spin.c2.im"));
  }
  return sc;
}

}  // namespace evlab

#endif
