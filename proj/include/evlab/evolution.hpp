#ifndef EVLAB_EVOLUTION_HPP
#define EVLAB_EVOLUTION_HPP

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "evlab/dense.hpp"
#include "evlab/model.hpp"

namespace evlab {

/// One wing of the experiment: a measured spin, its observer, and the analyzer axis.
struct WingSetup {
  std::string system;
  std::string observer;
  SpinAxis axis;
};

/// The five-window schedule. Windows carry these Hamiltonians:
///   [t0,t1] free (all massive species)
///   [t1,t2] wing measurement couplings + comparator kinetic term
///   [t2,t3] free
///   [t3,t4] comparator coupling + system kinetic terms
///   [t4,..] free
/// Interaction windows are parameterized by their accumulated angles
/// theta = kappa (t2-t1)/hbar and theta_C = kappa_C (t4-t3)/hbar, so the
/// zero-duration sudden limit is the direct representation.
struct StagePlan {
  std::array<double, 5> times{0.0, 1.0, 1.0, 2.0, 2.0};
  double theta = M_PI / 2.0;
  double theta_C = M_PI / 2.0;
  CouplingSpec coupling;
  std::vector<WingSetup> wings;
  std::string comparator;  // empty: stop after the measurement stage

  void validate() const {
    if (!(times[0] < times[1] && times[1] <= times[2] && times[2] < times[3] &&
          times[3] <= times[4]))
      throw std::invalid_argument("schedule requires t0 < t1 <= t2 < t3 <= t4");
    if (wings.empty()) throw std::invalid_argument("schedule needs at least one wing");
    if (!comparator.empty() && wings.size() != 2)
      throw std::invalid_argument("comparator stage needs exactly two wings");
  }
};

/// Classical straight-line tracks x(t) = x0 + v (t - t0) used to audit geometry.
struct TrajectoryEntry {
  std::string species;
  Vec3 x0;
  Vec3 v;
};

struct TrajectoryPlan {
  double t0 = 0.0;
  std::vector<TrajectoryEntry> entries;

  Vec3 position(const std::string& species, double t) const {
    for (const auto& e : entries)
      if (e.species == species) return e.x0 + (t - t0) * e.v;
    throw std::invalid_argument("no trajectory for species " + species);
  }

  double alignment_residual(const std::string& a, const std::string& b, double t) const {
    return evlab::norm(position(a, t) - position(b, t));
  }
};

/// One-body kinetic matrix over cells (the same stencil as the Fock-space
/// kinetic terms, shared by every internal label).
inline Eigen::MatrixXcd one_body_kinetic(const Lattice& lat, double mass) {
  const double c0 = hbar * hbar / (2.0 * mass * lat.dx * lat.dx);
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(lat.cells(), lat.cells());
  for (int cell = 0; cell < lat.cells(); ++cell) {
    h(cell, cell) = 2.0 * lat.dim * c0;
    auto k = lat.coords(cell);
    for (int d = 0; d < lat.dim; ++d) {
      for (int step : {-1, +1}) {
        auto kk = k;
        kk[d] += step;
        if (kk[d] < 0 || kk[d] >= lat.sites) {
          if (lat.boundary == Boundary::open) continue;
          kk[d] = (kk[d] + lat.sites) % lat.sites;
        }
        h(cell, lat.cell_of(kk)) += -c0;
      }
    }
  }
  return h;
}

inline Eigen::MatrixXcd one_body_propagator(const Lattice& lat, double mass, double duration) {
  return (complex(0.0, -duration / hbar) * one_body_kinetic(lat, mass)).exp();
}

/// exp(-i H_F duration / hbar) applied through per-species one-body propagators:
/// each occupied creator is replaced by its propagated smear, preserving the
/// canonical ordering signs. Empty species list means all massive species.
inline SectorState propagate_free(const SectorState& state, const ModeTable& modes,
                                  std::vector<std::string> species, double duration) {
  if (duration < 0.0) throw std::invalid_argument("propagate_free needs duration >= 0");
  if (species.empty())
    for (const auto& sp : modes.species())
      if (!sp.fictitious) species.push_back(sp.id);
  if (duration == 0.0 || state.empty()) return state;

  const Lattice& lat = modes.lattice();
  std::vector<std::optional<Eigen::MatrixXcd>> props(modes.species().size());
  for (const auto& id : species) {
    const auto& sp = modes.spec(id);
    if (sp.fictitious) throw std::invalid_argument("fictitious fields do not propagate");
    props[modes.species_index(id)] = one_body_propagator(lat, sp.mass, duration);
  }

  SectorState out;
  out.prune_threshold = state.prune_threshold;
  std::vector<complex> column(lat.cells());
  for (const auto& [cfg, a] : state.amplitudes()) {
    SectorState acc;
    acc.prune_threshold = state.prune_threshold;
    acc.add(Config{}, a);
    for (auto it = cfg.rbegin(); it != cfg.rend(); ++it) {
      auto dec = modes.decode(static_cast<int>(*it));
      if (props[dec.species_idx]) {
        const auto& g = *props[dec.species_idx];
        for (int c = 0; c < lat.cells(); ++c) column[c] = g(c, dec.cell);
        const auto& sp = modes.species()[dec.species_idx];
        acc = apply_smeared_creator(acc, modes, sp.id, sp.internal_labels[dec.internal_slot],
                                    column);
      } else {
        acc = apply_creation(acc, *it);
      }
    }
    out.add_scaled(acc, 1.0);
  }
  out.prune();
  return out;
}

enum class WindowKind { measurement, comparator };

/// Exact exponential of one interaction window at accumulated angle `angle`,
/// with the window's spectator kinetic terms included at the plan's finite
/// coupling (their weight vanishes in the sudden limit).
inline SectorState propagate_interaction(const SectorState& state, const ModeTable& modes,
                                         const StagePlan& plan, WindowKind kind, double angle) {
  if (angle == 0.0) return state;
  std::vector<OperatorTerm> h;
  auto append = [&h](std::vector<OperatorTerm> t) {
    h.insert(h.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
  };
  double coupling;
  if (kind == WindowKind::measurement) {
    for (const auto& w : plan.wings)
      append(build_measurement_hamiltonian(modes, w.observer, w.system, w.axis,
                                           plan.coupling.kappa, plan.coupling.range_a));
    if (!plan.comparator.empty()) append(build_free_hamiltonian(modes, plan.comparator));
    coupling = plan.coupling.kappa;
  } else {
    if (plan.comparator.empty()) throw std::invalid_argument("no comparator species configured");
    append(build_comparator_hamiltonian(modes, plan.comparator, plan.wings.at(0).observer,
                                        plan.wings.at(1).observer, plan.coupling.kappa_C,
                                        plan.coupling.range_aC));
    for (const auto& w : plan.wings) append(build_free_hamiltonian(modes, w.system));
    coupling = plan.coupling.kappa_C;
  }
  const double duration = hbar * angle / coupling;
  return evolve_exp(state, h, complex(0.0, -duration / hbar));
}

/// Ordered product of window propagators up to t_query; inside a window the
/// elapsed fraction of coupling x time is applied, and zero-width windows fire
/// as soon as t_query reaches them.
inline SectorState run_schedule(const SectorState& initial, const ModeTable& modes,
                                const StagePlan& plan, double t_query) {
  plan.validate();
  const auto& T = plan.times;
  if (t_query < T[0]) throw std::invalid_argument("query time precedes the schedule");

  auto frac = [t_query](double a, double b) {
    if (b <= a) return 1.0;
    return std::clamp((t_query - a) / (b - a), 0.0, 1.0);
  };

  SectorState s = propagate_free(initial, modes, {}, std::min(t_query, T[1]) - T[0]);
  if (t_query < T[1]) return s;
  s = propagate_interaction(s, modes, plan, WindowKind::measurement, plan.theta * frac(T[1], T[2]));
  if (t_query <= T[2]) return s;
  if (plan.comparator.empty()) return propagate_free(s, modes, {}, t_query - T[2]);
  s = propagate_free(s, modes, {}, std::min(t_query, T[3]) - T[2]);
  if (t_query < T[3]) return s;
  s = propagate_interaction(s, modes, plan, WindowKind::comparator,
                            plan.theta_C * frac(T[3], T[4]));
  if (t_query <= T[4]) return s;
  return propagate_free(s, modes, {}, t_query - T[4]);
}

/// Aperture-gated density of the spin-up component along `axis`, summed over
/// cells within `range` of `center_cell`. On a one-quantum state fully inside
/// the aperture it acts as the unit projector driving the awareness rotation.
inline std::vector<OperatorTerm> build_gated_density(const ModeTable& modes,
                                                     const std::string& system,
                                                     const SpinAxis& axis, int center_cell,
                                                     double range) {
  const Lattice& lat = modes.lattice();
  auto up = rotated_spin_coeffs(axis, 1);
  std::vector<OperatorTerm> terms;
  for (int y = 0; y < lat.cells(); ++y) {
    if (lat.distance(center_cell, y) > range) continue;
    std::array<std::uint32_t, 2> phi{std::uint32_t(modes.rank(system, 1, y)),
                                     std::uint32_t(modes.rank(system, 2, y))};
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        terms.push_back({up[j] * std::conj(up[k]), {phi[j]}, {phi[k]}});
  }
  return terms;
}

struct QrReport {
  SectorState q_state;
  SectorState r_state;
  double q_error;  // || Q_N psi - cos(theta) psi ||
  double r_error;  // || R_N psi - sin(theta) psi ||
};

/// Truncated alternating series driven by the gated density D:
///   Q_N = sum_{k=0..N} (-1)^k theta^{2k} D^k / (2k)!
///   R_N = sum_{k=1..N} (-1)^{k-1} theta^{2k-1} D^k / (2k-1)!
/// On aperture-filling spin-up states they resum to cos(theta), sin(theta).
inline QrReport qr_series_check(const SectorState& state,
                                const std::vector<OperatorTerm>& gated_density, double theta,
                                int truncation) {
  if (truncation < 1) throw std::invalid_argument("series truncation must be >= 1");
  QrReport rep;
  rep.q_state = state;
  rep.r_state.prune_threshold = state.prune_threshold;
  SectorState dk = state;
  double fact_even = 1.0, fact_odd = 1.0;  // (2k)!, (2k-1)!
  double sign = -1.0;
  for (int k = 1; k <= truncation; ++k) {
    dk = apply_terms(dk, gated_density);
    dk.prune();
    fact_odd = fact_even * (2.0 * k - 1.0);
    fact_even = fact_odd * (2.0 * k);
    rep.q_state.add_scaled(dk, sign * std::pow(theta, 2 * k) / fact_even);
    rep.r_state.add_scaled(dk, -sign * std::pow(theta, 2 * k - 1) / fact_odd);
    sign = -sign;
  }
  auto deviation = [&state](const SectorState& got, double target) {
    SectorState d = got;
    d.add_scaled(state, -target);
    return std::sqrt(d.norm_sq());
  };
  rep.q_error = deviation(rep.q_state, std::cos(theta));
  rep.r_error = deviation(rep.r_state, std::sin(theta));
  return rep;
}

struct HeisenbergReport {
  complex schroedinger_value;
  complex heisenberg_value;
  double deviation;
};

/// Cross-checks <psi_in| U+ A U |psi_in> (dense matrix algebra) against
/// <psi(t)| A |psi(t)> (sparse evolution). Small lattices only.
inline HeisenbergReport heisenberg_consistency(const SectorState& initial, const ModeTable& modes,
                                               const StagePlan& plan,
                                               const std::vector<OperatorTerm>& observable,
                                               double t_query) {
  const int n = modes.total_modes();
  dense::check_mode_budget(n, 14);
  DenseMatrix u = dense::from_action(
      n, [&](const SectorState& s) { return run_schedule(s, modes, plan, t_query); });
  DenseMatrix a = dense::from_terms(n, observable);
  DenseVector v = dense::to_vector(n, initial);
  HeisenbergReport rep;
  rep.heisenberg_value = v.dot(u.adjoint() * a * u * v);
  SectorState evolved = run_schedule(initial, modes, plan, t_query);
  rep.schroedinger_value = inner(evolved, apply_terms(evolved, observable));
  rep.deviation = std::abs(rep.heisenberg_value - rep.schroedinger_value);
  return rep;
}

}  // namespace evlab

#endif
