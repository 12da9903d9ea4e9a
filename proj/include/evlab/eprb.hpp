#ifndef EVLAB_EPRB_HPP
#define EVLAB_EPRB_HPP

#include <cstdlib>
#include <deque>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "evlab/analytic.hpp"

namespace evlab {

/// Worker cap honoring EVERETT_LAB_THREADS (0 or unset: auto).
inline int worker_thread_count() {
  if (const char* env = std::getenv("EVERETT_LAB_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

/// Per-cell expectation of one internal component's number density.
struct DensityField {
  std::string species;
  int label = 0;
  double time = 0.0;
  std::vector<double> values;

  double total() const {
    double t = 0.0;
    for (double v : values) t += v;
    return t;
  }

  void validate() const {
    for (double v : values)
      if (v < -1e-9) throw std::runtime_error("negative density for " + species);
    if (total() > 1.0 + 1e-9) throw std::runtime_error("density exceeds one quantum");
  }
};

inline DensityField density(const SectorState& state, const ModeTable& modes,
                            const std::string& species, int label, double time = 0.0) {
  DensityField f{species, label, time, density_field(state, modes, species, label)};
  f.validate();
  return f;
}

/// One connected superlevel component of a density field: where an observer in
/// that awareness state is located, and with what probability.
struct LocalizedObserver {
  std::string species;
  int label = 0;
  std::vector<int> cells;
  double probability = 0.0;
  double epsilon = 0.0;

  Vec3 centroid(const Lattice& lat, const DensityField& field) const {
    Vec3 x{};
    double mass = 0.0;
    for (int c : cells) {
      x = x + field.values[c] * lat.center(c);
      mass += field.values[c];
    }
    return (1.0 / mass) * x;
  }
};

/// Epsilon-superlevel support split into connected components (the operational
/// reading of the smallest region carrying the awareness density).
inline std::vector<LocalizedObserver> localize(const DensityField& field, const Lattice& lat,
                                               double epsilon = 1e-6) {
  if (epsilon <= 0.0) throw std::invalid_argument("localize needs epsilon > 0");
  std::vector<char> seen(lat.cells(), 0);
  std::vector<LocalizedObserver> out;
  for (int start = 0; start < lat.cells(); ++start) {
    if (seen[start] || field.values[start] < epsilon) continue;
    LocalizedObserver rec{field.species, field.label, {}, 0.0, epsilon};
    std::deque<int> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      int c = queue.front();
      queue.pop_front();
      rec.cells.push_back(c);
      rec.probability += field.values[c];
      auto k = lat.coords(c);
      for (int d = 0; d < lat.dim; ++d) {
        for (int step : {-1, +1}) {
          auto kk = k;
          kk[d] += step;
          if (kk[d] < 0 || kk[d] >= lat.sites) {
            if (lat.boundary == Boundary::open) continue;
            kk[d] = (kk[d] + lat.sites) % lat.sites;
          }
          int nb = lat.cell_of(kk);
          if (!seen[nb] && field.values[nb] >= epsilon) {
            seen[nb] = 1;
            queue.push_back(nb);
          }
        }
      }
    }
    std::sort(rec.cells.begin(), rec.cells.end());
    out.push_back(std::move(rec));
  }
  return out;
}

enum class BackendKind { lattice, analytic, both };

inline std::string backend_name(BackendKind k) {
  switch (k) {
    case BackendKind::lattice: return "lattice";
    case BackendKind::analytic: return "analytic";
    default: return "both";
  }
}

/// Full experiment description shared by both backends. `kind` selects the
/// two-wing singlet run or a one-wing measurement of a prepared spin.
struct ScenarioSpec {
  std::string kind = "eprb";  // eprb | single_observer
  SpinAxis n1{0.0, 0.0};
  SpinAxis n2{0.0, 0.0};
  double theta = M_PI / 2.0;
  double beta = 0.1;
  CouplingSpec coupling{1.0, 1.0, 4.0, 20.0};
  std::array<double, 5> times{0.0, 0.5, 0.5, 1.0, 1.0};
  BackendKind backend = BackendKind::both;
  int cells = 48;
  double dx = 1.0;
  Boundary boundary = Boundary::open;
  std::map<std::string, WavepacketSpec> packets;
  std::array<complex, 2> spin_coeffs{1.0, 0.0};  // single_observer, labels (1,2)
  double localize_epsilon = 1e-6;

  Lattice lattice() const { return Lattice(1, cells, dx, boundary); }

  std::vector<std::string> entity_ids() const {
    if (kind == "single_observer") return {"S", "O"};
    return {"S1", "S2", "O1", "O2", "C"};
  }

  Vec3 position(const std::string& id, double t) const {
    const auto& w = packets.at(id);
    return w.center + (t - times[0]) * w.velocity;
  }
};

/// Desk-scale default: static pre-aligned packets, sudden windows.
inline ScenarioSpec default_eprb_scenario() {
  ScenarioSpec sc;
  sc.n1 = SpinAxis{0.0, 0.0};
  sc.n2 = SpinAxis{2.0, 0.0};
  WavepacketSpec base{Vec3{}, 1.0 / 2.25, Vec3{}, 4.0};  // width 1.5
  auto at = [&](double x) {
    WavepacketSpec w = base;
    w.center = Vec3{{x, 0.0, 0.0}};
    return w;
  };
  sc.packets = {{"S1", at(10.5)}, {"O1", at(10.5)}, {"S2", at(38.5)},
                {"O2", at(38.5)}, {"C", at(24.5)}};
  return sc;
}

/// Same physics on a lattice with half the spacing and half the packet width.
inline ScenarioSpec refined(ScenarioSpec sc) {
  sc.cells *= 2;
  sc.dx *= 0.5;
  for (auto& [id, w] : sc.packets) {
    w.alpha *= 4.0;
    w.mass *= 2.0;
  }
  return sc;
}

/// Scenario audit: one quantum per species with a resolvable packet (S1),
/// wing groups well separated (S2), observers prepared ignorant (S3),
/// disjoint encounter windows with gates aligned when due (S4).
inline void audit_scenario(const ScenarioSpec& sc) {
  const auto ids = sc.entity_ids();
  for (const auto& id : ids)
    if (!sc.packets.count(id))
      throw std::invalid_argument("S1: missing wavepacket for species " + id);
  if (sc.packets.size() != ids.size())
    throw std::invalid_argument("S1: wavepacket list names an unknown species");

  double wmax = 0.0;
  for (const auto& [id, w] : sc.packets) wmax = std::max(wmax, w.width());

  StagePlan plan;
  plan.times = sc.times;
  plan.wings = sc.kind == "single_observer"
                   ? std::vector<WingSetup>{{"S", "O", sc.n1}}
                   : std::vector<WingSetup>{{"S1", "O1", sc.n1}, {"S2", "O2", sc.n2}};
  if (sc.kind != "single_observer") plan.comparator = "C";
  plan.validate();  // throws on a bad time ordering

  auto gap = [&](const std::string& a, const std::string& b, double t) {
    return evlab::norm(sc.position(a, t) - sc.position(b, t));
  };

  if (sc.kind != "single_observer") {
    const double t0 = sc.times[0];
    if (gap("S1", "S2", t0) <= 5.0 * wmax + sc.coupling.range_a ||
        gap("O1", "O2", t0) <= 5.0 * wmax + sc.coupling.range_a)
      throw std::invalid_argument("S2: wing packets start closer than 5 widths + aperture");
    if (gap("O1", "C", t0) <= 5.0 * wmax || gap("O2", "C", t0) <= 5.0 * wmax)
      throw std::invalid_argument("S2: comparator packet overlaps a wing at t0");
    if (gap("S1", "O2", sc.times[1]) <= sc.coupling.range_a ||
        gap("S2", "O1", sc.times[1]) <= sc.coupling.range_a)
      throw std::invalid_argument("S4: cross-wing encounter inside the measurement window");
    if (gap("O1", "C", sc.times[3]) > sc.coupling.range_aC ||
        gap("O2", "C", sc.times[3]) > sc.coupling.range_aC)
      throw std::invalid_argument("S4: comparator gate misses an observer at t3");
  }
  for (const auto& w : plan.wings)
    if (gap(w.system, w.observer, sc.times[1]) > sc.coupling.range_a)
      throw std::invalid_argument("S4: wing gate inactive at t1 for observer " + w.observer);

  if (sc.kind == "single_observer") {
    double n2 = std::norm(sc.spin_coeffs[0]) + std::norm(sc.spin_coeffs[1]);
    if (std::abs(n2 - 1.0) > 1e-9)
      throw std::invalid_argument("S3: prepared spin coefficients are not normalized");
  }
}

/// ---- branch-factorized lattice backend ----------------------------------
///
/// The singlet splits into two internal branches; within a branch each wing
/// stays a (system x observer) two-body tensor because the couplings never
/// cross wings. The comparator window is diagonal in every position, so its
/// output reduces to wing cross-overlaps.

struct BranchScenario {
  Lattice lat;
  int wing_count = 2;
  std::array<std::vector<complex>, 2> system, observer;
  std::array<double, 2> system_mass{1.0, 1.0}, observer_mass{1.0, 1.0};
  std::array<SpinAxis, 2> axes;
  std::vector<complex> comparator;  // empty: no comparator stage
  double comparator_mass = 1.0;
  std::array<double, 5> times{0.0, 0.5, 0.5, 1.0, 1.0};
  double theta = M_PI / 2.0;
  double theta_C = M_PI / 2.0;
  double range_a = 4.0;
  double range_aC = 20.0;
  std::array<complex, 2> spin_coeffs{1.0, 0.0};  // wing_count == 1 only
};

struct BranchResult {
  std::array<double, 2> p_up{0.0, 0.0};
  std::array<std::array<std::vector<double>, 2>, 2> observer_density;  // [wing][label], t3
  double p_c1 = 0.0;
  std::vector<double> comparator_density;  // label 1 at t4
  double norm_residual = 0.0;
};

namespace branch_detail {

/// amp(i*L + x, j*L + y): system internal slot i at cell x, observer slot j at
/// cell y. Slot i corresponds to labels {1,2}, slot j to labels {0,1}.
struct WingTensor {
  int L = 0;
  Eigen::MatrixXcd amp;

  WingTensor(const std::vector<complex>& sys, const std::vector<complex>& obs,
             const std::array<complex, 2>& internal) {
    L = static_cast<int>(sys.size());
    amp = Eigen::MatrixXcd::Zero(2 * L, 2 * L);
    for (int i = 0; i < 2; ++i) {
      if (internal[i] == complex(0.0)) continue;
      for (int x = 0; x < L; ++x)
        for (int y = 0; y < L; ++y) amp(i * L + x, y) = internal[i] * sys[x] * obs[y];
    }
  }

  void propagate(const Eigen::MatrixXcd* sys_prop, const Eigen::MatrixXcd* obs_prop) {
    for (int i = 0; i < 2; ++i) {
      if (sys_prop) amp.middleRows(i * L, L) = *sys_prop * amp.middleRows(i * L, L);
      if (obs_prop) amp.middleCols(i * L, L) = amp.middleCols(i * L, L) * obs_prop->transpose();
    }
  }

  /// Aperture-gated awareness rotation: in the spin frame of `axis`, every
  /// in-range (system cell, observer cell) pair rotates the observer's {0,1}
  /// pair on the spin-up component by `angle`.
  void measure(const Lattice& lat, const SpinAxis& axis, double angle, double range) {
    auto u = rotated_spin_coeffs(axis, 1);
    auto d = rotated_spin_coeffs(axis, 2);
    Eigen::Matrix2cd frame;  // columns: up, down in the fixed {1,2} basis
    frame << u[0], d[0], u[1], d[1];
    Eigen::MatrixXcd rot(2 * L, 2 * L);
    for (int s = 0; s < 2; ++s)
      rot.middleRows(s * L, L) = std::conj(frame(0, s)) * amp.middleRows(0, L) +
                                 std::conj(frame(1, s)) * amp.middleRows(L, L);
    const double c = std::cos(angle), sn = std::sin(angle);
    for (int x = 0; x < L; ++x) {
      for (int y = 0; y < L; ++y) {
        if (lat.distance(x, y) > range) continue;
        complex a0 = rot(x, y), a1 = rot(x, L + y);
        rot(x, y) = a0 * c - a1 * sn;
        rot(x, L + y) = a1 * c + a0 * sn;
      }
    }
    for (int i = 0; i < 2; ++i)
      amp.middleRows(i * L, L) =
          frame(i, 0) * rot.middleRows(0, L) + frame(i, 1) * rot.middleRows(L, L);
  }

  complex overlap(const WingTensor& other) const {
    return (amp.conjugate().cwiseProduct(other.amp)).sum();
  }

  Eigen::VectorXcd observer_component(int slot, int y) const { return amp.col(slot * L + y); }
};

}  // namespace branch_detail

inline BranchResult run_branches(const BranchScenario& sc) {
  using branch_detail::WingTensor;
  const Lattice& lat = sc.lat;
  const int L = lat.cells();
  const int wings = sc.wing_count;
  if (wings != 1 && wings != 2) throw std::invalid_argument("one or two wings");
  const bool with_comparator = !sc.comparator.empty();
  if (with_comparator && wings != 2)
    throw std::invalid_argument("comparator stage needs exactly two wings");

  // Branch coefficients and per-branch internal assignments.
  std::vector<complex> coeff;
  std::vector<std::array<std::array<complex, 2>, 2>> internals;  // [branch][wing]
  if (wings == 2) {
    coeff = {1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)};
    std::array<complex, 2> up{1.0, 0.0}, down{0.0, 1.0};
    internals.push_back({up, down});  // |1>|2>
    internals.push_back({down, up});  // |2>|1>
  } else {
    coeff = {1.0};
    internals.push_back({sc.spin_coeffs, std::array<complex, 2>{0.0, 0.0}});
  }
  const int B = static_cast<int>(coeff.size());

  std::vector<std::array<std::optional<WingTensor>, 2>> W(B);
  for (int b = 0; b < B; ++b)
    for (int p = 0; p < wings; ++p)
      W[b][p].emplace(sc.system[p], sc.observer[p], internals[b][p]);

  auto free_all = [&](double tau, bool move_system, bool move_observer) {
    if (tau <= 0.0) return;
    for (int p = 0; p < wings; ++p) {
      std::optional<Eigen::MatrixXcd> ps, po;
      if (move_system) ps = one_body_propagator(lat, sc.system_mass[p], tau);
      if (move_observer) po = one_body_propagator(lat, sc.observer_mass[p], tau);
      for (int b = 0; b < B; ++b)
        W[b][p]->propagate(ps ? &*ps : nullptr, po ? &*po : nullptr);
    }
  };

  Eigen::VectorXcd cvec = Eigen::VectorXcd::Zero(L);
  for (int x = 0; x < static_cast<int>(sc.comparator.size()); ++x) cvec(x) = sc.comparator[x];
  auto free_comparator = [&](double tau) {
    if (with_comparator && tau > 0.0)
      cvec = one_body_propagator(lat, sc.comparator_mass, tau) * cvec;
  };

  const auto& T = sc.times;
  free_all(T[1] - T[0], true, true);
  free_comparator(T[1] - T[0]);
  for (int b = 0; b < B; ++b)
    for (int p = 0; p < wings; ++p)
      W[b][p]->measure(lat, sc.axes[p], sc.theta, sc.range_a);
  free_comparator(T[2] - T[1]);  // spectator during the measurement window
  free_all(T[3] - T[2], true, true);
  free_comparator(T[3] - T[2]);

  BranchResult res;

  // Observer records at t3. The other wing contributes its full overlap.
  Eigen::Matrix2cd full_overlap[2];
  for (int p = 0; p < wings; ++p)
    for (int b = 0; b < B; ++b)
      for (int bp = 0; bp < B; ++bp) full_overlap[p](b, bp) = W[bp][p]->overlap(*W[b][p]);

  double total = 0.0;
  for (int b = 0; b < B; ++b)
    for (int bp = 0; bp < B; ++bp) {
      complex w = coeff[b] * std::conj(coeff[bp]);
      complex prod = full_overlap[0](b, bp) * (wings == 2 ? full_overlap[1](b, bp) : 1.0);
      total += std::real(w * prod);
    }
  res.norm_residual = std::abs(total - 1.0);

  for (int p = 0; p < wings; ++p) {
    int other = 1 - p;
    for (int j = 0; j < 2; ++j) {
      std::vector<double> rho(L, 0.0);
      for (int y = 0; y < L; ++y) {
        complex v = 0.0;
        for (int b = 0; b < B; ++b)
          for (int bp = 0; bp < B; ++bp) {
            complex env = wings == 2 ? full_overlap[other](b, bp) : complex(1.0);
            v += coeff[b] * std::conj(coeff[bp]) * env *
                 W[bp][p]->observer_component(j, y).dot(W[b][p]->observer_component(j, y));
          }
        rho[y] = std::max(std::real(v), 0.0);
      }
      if (j == 1)
        for (double v : rho) res.p_up[p] += v;
      res.observer_density[p][j] = std::move(rho);
    }
  }

  if (!with_comparator) return res;

  // Comparator window [t3, t4]: observer and comparator positions are frozen,
  // systems keep moving; the controlled rotation is diagonal in positions, so
  // the awareness-1 density reduces to gated wing cross-overlaps.
  free_all(T[4] - T[3], true, false);

  Eigen::MatrixXd gate(L, L);
  for (int x = 0; x < L; ++x)
    for (int y = 0; y < L; ++y) gate(x, y) = lat.distance(x, y) <= sc.range_aC ? 1.0 : 0.0;

  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(L, L);
  for (int b = 0; b < B; ++b)
    for (int bp = 0; bp < B; ++bp) {
      Eigen::MatrixXcd f[2];
      for (int p = 0; p < 2; ++p) {
        Eigen::VectorXcd a(L);
        for (int y = 0; y < L; ++y)
          a(y) = W[bp][p]->observer_component(1, y).dot(W[b][p]->observer_component(1, y));
        f[p] = gate * a.asDiagonal() * gate.transpose();
      }
      m += coeff[b] * std::conj(coeff[bp]) * f[0].cwiseProduct(f[1]);
    }
  const double s2 = std::pow(std::sin(sc.theta_C), 2);
  m = s2 * (cvec * cvec.adjoint()).cwiseProduct(m);

  res.comparator_density.resize(L);
  for (int x = 0; x < L; ++x) {
    res.comparator_density[x] = std::max(std::real(m(x, x)), 0.0);
    res.p_c1 += res.comparator_density[x];
  }
  return res;
}

/// ---- orchestration -------------------------------------------------------

struct BackendResult {
  std::string backend;
  std::map<std::string, double> probabilities;  // "O1_up", "O2_up", "C_1", ...
  std::vector<DensityField> densities;
  std::vector<LocalizedObserver> observers;
  double norm_residual = 0.0;
};

struct ResultRecord {
  ScenarioSpec spec;
  std::vector<BackendResult> results;
  std::map<std::string, double> deviations;  // filled when both backends ran
  double epsilon_used = 1e-6;
};

namespace scenario_detail {

inline BackendResult run_lattice(const ScenarioSpec& sc) {
  const Lattice lat = sc.lattice();
  BranchScenario bs;
  bs.lat = lat;
  bs.times = sc.times;
  bs.theta = sc.theta;
  bs.theta_C = sc.beta;
  bs.range_a = sc.coupling.range_a;
  bs.range_aC = sc.coupling.range_aC;
  bs.axes = {sc.n1, sc.n2};

  const bool single = sc.kind == "single_observer";
  bs.wing_count = single ? 1 : 2;
  auto load = [&](const std::string& id) {
    const auto& w = sc.packets.at(id);
    return std::pair<std::vector<complex>, double>{packet_vector(lat, w), w.mass};
  };
  if (single) {
    std::tie(bs.system[0], bs.system_mass[0]) = load("S");
    std::tie(bs.observer[0], bs.observer_mass[0]) = load("O");
    bs.spin_coeffs = sc.spin_coeffs;
  } else {
    std::tie(bs.system[0], bs.system_mass[0]) = load("S1");
    std::tie(bs.system[1], bs.system_mass[1]) = load("S2");
    std::tie(bs.observer[0], bs.observer_mass[0]) = load("O1");
    std::tie(bs.observer[1], bs.observer_mass[1]) = load("O2");
    std::tie(bs.comparator, bs.comparator_mass) = load("C");
  }

  BranchResult br = run_branches(bs);

  BackendResult out;
  out.backend = "lattice";
  out.norm_residual = br.norm_residual;
  const double t_obs = sc.times[3], t_comp = sc.times[4];
  for (int p = 0; p < bs.wing_count; ++p) {
    std::string obs = single ? "O" : "O" + std::to_string(p + 1);
    out.probabilities[obs + "_up"] = br.p_up[p];
    for (int j = 0; j < 2; ++j) {
      DensityField f{obs, j, t_obs, br.observer_density[p][j]};
      f.validate();
      for (auto& rec : localize(f, lat, sc.localize_epsilon)) out.observers.push_back(rec);
      out.densities.push_back(std::move(f));
    }
  }
  if (!single) {
    out.probabilities["C_1"] = br.p_c1;
    DensityField f{"C", 1, t_comp, br.comparator_density};
    f.validate();
    for (auto& rec : localize(f, lat, sc.localize_epsilon)) out.observers.push_back(rec);
    out.densities.push_back(std::move(f));
  }
  return out;
}

inline BackendResult run_analytic(const ScenarioSpec& sc) {
  MNScenario mn;
  mn.times = sc.times;
  mn.theta = sc.theta;
  mn.theta_C = sc.beta;
  mn.coupling = sc.coupling;
  const bool single = sc.kind == "single_observer";
  for (const auto& id : sc.entity_ids()) {
    const auto& w = sc.packets.at(id);
    mn.entities.push_back({id, w.center, w.velocity, 2});
  }
  if (single) {
    mn.wings = {{"S", "O", sc.n1}};
    mn.initial.assign(mn.dimension(), 0.0);
    std::vector<int> digits(mn.entities.size(), 0);
    for (int s = 0; s < 2; ++s) {
      digits[mn.entity_index("S")] = s;
      mn.initial[mn.index(digits)] = sc.spin_coeffs[s];
    }
  } else {
    mn.wings = {{"S1", "O1", sc.n1}, {"S2", "O2", sc.n2}};
    mn.comparator = "C";
    mn.initial = mn_singlet_initial(mn, "S1", "S2");
  }

  MNResult res = mn_run(mn);

  const Lattice lat = sc.lattice();
  BackendResult out;
  out.backend = "analytic";
  auto spike = [&](const std::string& id, int label, double p, double t) {
    DensityField f{id, label, t, std::vector<double>(lat.cells(), 0.0)};
    Vec3 x = sc.position(id, t);
    int best = 0;
    double best_d = 1e300;
    for (int c = 0; c < lat.cells(); ++c) {
      double d = evlab::norm(lat.center(c) - x);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    f.values[best] = p;
    f.validate();
    for (auto& rec : localize(f, lat, sc.localize_epsilon)) out.observers.push_back(rec);
    out.densities.push_back(std::move(f));
  };

  const double t_obs = sc.times[3], t_comp = sc.times[4];
  for (const auto& w : mn.wings) {
    for (int j = 0; j < 2; ++j) spike(w.observer, j, res.probability(w.observer, j), t_obs);
    out.probabilities[w.observer + "_up"] = res.probability(w.observer, 1);
  }
  if (!single) {
    double pc = res.probability("C", 1);
    out.probabilities["C_1"] = pc;
    spike("C", 1, pc, t_comp);
  }
  return out;
}

}  // namespace scenario_detail

inline ResultRecord run_eprb(const ScenarioSpec& sc) {
  audit_scenario(sc);
  ResultRecord rec;
  rec.spec = sc;
  rec.epsilon_used = sc.localize_epsilon;
  if (sc.backend == BackendKind::analytic || sc.backend == BackendKind::both)
    rec.results.push_back(scenario_detail::run_analytic(sc));
  if (sc.backend == BackendKind::lattice || sc.backend == BackendKind::both)
    rec.results.push_back(scenario_detail::run_lattice(sc));
  if (rec.results.size() == 2) {
    for (const auto& [key, v] : rec.results[0].probabilities)
      rec.deviations[key] = std::abs(v - rec.results[1].probabilities.at(key));
  }
  // Completeness of the awareness outcome per observer.
  for (const auto& r : rec.results) {
    for (const auto& [key, v] : r.probabilities) {
      if (v < -1e-9 || v > 1.0 + 1e-9) throw std::runtime_error("probability outside [0,1]: " + key);
      if (key.size() > 3 && key.substr(key.size() - 3) == "_up") {
        std::string obs = key.substr(0, key.size() - 3);
        double down = 0.0, up = 0.0;
        for (const auto& f : r.densities) {
          if (f.species != obs) continue;
          (f.label == 1 ? up : down) += f.total();
        }
        if (std::abs(up + down - 1.0) > 1e-6 + r.norm_residual)
          throw std::runtime_error("awareness outcomes of " + obs + " do not sum to one");
      }
    }
  }
  return rec;
}

struct ScanRow {
  double theta12_rad = 0.0;
  double p_c1 = 0.0;
  // p_c1 over the small-angle reference beta^2/2, with the exact sin^2(beta)
  // excitation correction folded in, so the column traces (1 - cos theta12)/2.
  double p_c1_normalized = 0.0;
  std::string backend;
  double beta = 0.0;
};

inline std::vector<double> default_angle_grid(int points = 13) {
  std::vector<double> g(points);
  for (int i = 0; i < points; ++i) g[i] = M_PI * i / (points - 1);
  return g;
}

/// Relative-angle sweep of the comparator excitation; analyzer 2 is rotated by
/// theta12 away from analyzer 1 in the same azimuthal plane.
inline std::vector<ScanRow> scan_correlation(const ScenarioSpec& base,
                                             const std::vector<double>& grid) {
  const int per_point = base.backend == BackendKind::both ? 2 : 1;
  std::vector<ScanRow> rows(grid.size() * per_point);
  const double norm = std::pow(std::sin(base.beta), 2) / 2.0;

  auto work = [&](size_t i) {
    ScenarioSpec sc = base;
    sc.kind = "eprb";
    sc.n2 = SpinAxis{sc.n1.theta + grid[i], sc.n1.phi};
    ResultRecord rec = run_eprb(sc);
    for (size_t k = 0; k < rec.results.size(); ++k) {
      double p = rec.results[k].probabilities.at("C_1");
      rows[i * per_point + k] = {grid[i], p, p / norm, rec.results[k].backend, base.beta};
    }
  };

  const int threads = std::min<int>(worker_thread_count(), static_cast<int>(grid.size()));
  if (threads <= 1) {
    for (size_t i = 0; i < grid.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (size_t i = t; i < grid.size(); i += threads) work(i);
      });
    for (auto& th : pool) th.join();
  }
  return rows;
}

}  // namespace evlab

#endif
