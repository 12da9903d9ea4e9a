#ifndef EVLAB_ANALYTIC_HPP
#define EVLAB_ANALYTIC_HPP

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <numeric>
#include <string>
#include <vector>

#include "evlab/evolution.hpp"

namespace evlab {

/// One entity in the massive narrow-wavepacket limit: a classical straight-line
/// track carrying a finite-dimensional internal factor.
struct MNEntity {
  std::string id;
  Vec3 x0;
  Vec3 v;
  int dim = 2;
};

struct GateRecord {
  std::string window;
  bool active;
  double separation;
  double aperture;
};

/// Scenario for the closed-form backend: entities, wings, schedule and the
/// joint internal state over the tensor product of the entity factors.
struct MNScenario {
  std::array<double, 5> times{0.0, 1.0, 1.0, 2.0, 2.0};
  double theta = M_PI / 2.0;
  double theta_C = M_PI / 2.0;
  CouplingSpec coupling;
  std::vector<MNEntity> entities;
  std::vector<WingSetup> wings;
  std::string comparator;
  std::vector<complex> initial;

  int entity_index(const std::string& id) const {
    for (size_t i = 0; i < entities.size(); ++i)
      if (entities[i].id == id) return static_cast<int>(i);
    throw std::invalid_argument("unknown entity " + id);
  }

  int dimension() const {
    int d = 1;
    for (const auto& e : entities) d *= e.dim;
    return d;
  }

  std::vector<int> strides() const {
    std::vector<int> s(entities.size(), 1);
    for (int i = static_cast<int>(entities.size()) - 2; i >= 0; --i)
      s[i] = s[i + 1] * entities[i + 1].dim;
    return s;
  }

  int index(const std::vector<int>& digits) const {
    auto s = strides();
    int idx = 0;
    for (size_t i = 0; i < entities.size(); ++i) idx += digits[i] * s[i];
    return idx;
  }

  Vec3 position(const std::string& id, double t) const {
    const auto& e = entities[entity_index(id)];
    return e.x0 + (t - times[0]) * e.v;
  }
};

/// Spin singlet (|12> - |21>)/sqrt(2) between two system entities, everything
/// else in its 0 state.
inline std::vector<complex> mn_singlet_initial(const MNScenario& sc, const std::string& s1,
                                               const std::string& s2) {
  std::vector<complex> v(sc.dimension(), 0.0);
  std::vector<int> digits(sc.entities.size(), 0);
  digits[sc.entity_index(s1)] = 0;  // internal label 1
  digits[sc.entity_index(s2)] = 1;  // internal label 2
  v[sc.index(digits)] = 1.0 / std::sqrt(2.0);
  digits[sc.entity_index(s1)] = 1;
  digits[sc.entity_index(s2)] = 0;
  v[sc.index(digits)] = -1.0 / std::sqrt(2.0);
  return v;
}

struct MNResult {
  std::vector<complex> state;
  std::vector<GateRecord> gates;
  std::vector<MNEntity> entities;

  double probability(const std::string& id, int value) const {
    int target = -1;
    std::vector<int> dims;
    for (size_t i = 0; i < entities.size(); ++i) {
      dims.push_back(entities[i].dim);
      if (entities[i].id == id) target = static_cast<int>(i);
    }
    if (target < 0) throw std::invalid_argument("unknown entity " + id);
    std::vector<int> strides(dims.size(), 1);
    for (int i = static_cast<int>(dims.size()) - 2; i >= 0; --i)
      strides[i] = strides[i + 1] * dims[i + 1];
    double p = 0.0;
    for (size_t idx = 0; idx < state.size(); ++idx)
      if ((static_cast<int>(idx) / strides[target]) % dims[target] == value)
        p += std::norm(state[idx]);
    return p;
  }

  double total() const {
    double p = 0.0;
    for (const auto& a : state) p += std::norm(a);
    return p;
  }
};

namespace mn_detail {

inline std::pair<complex, complex> rotate2(complex c0, complex c1, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c0 * c - c1 * s, c1 * c + c0 * s};
}

/// Controlled rotation of an observer's {0,1} factor conditioned on the
/// spin-up component of a system factor along `axis`.
inline void wing_rotation(std::vector<complex>& state, int o_stride, int s_stride,
                          const SpinAxis& axis, double angle) {
  auto u = rotated_spin_coeffs(axis, 1);
  auto d = rotated_spin_coeffs(axis, 2);
  const int n = static_cast<int>(state.size());
  for (int base = 0; base < n; ++base) {
    if ((base / o_stride) % 2 != 0 || (base / s_stride) % 2 != 0) continue;
    std::array<std::array<complex, 2>, 2> psi;  // [observer][system]
    for (int oi = 0; oi < 2; ++oi)
      for (int si = 0; si < 2; ++si) psi[oi][si] = state[base + oi * o_stride + si * s_stride];
    std::array<complex, 2> a_up, a_dn;
    for (int oi = 0; oi < 2; ++oi) {
      a_up[oi] = std::conj(u[0]) * psi[oi][0] + std::conj(u[1]) * psi[oi][1];
      a_dn[oi] = std::conj(d[0]) * psi[oi][0] + std::conj(d[1]) * psi[oi][1];
    }
    auto [r0, r1] = rotate2(a_up[0], a_up[1], angle);
    a_up = {r0, r1};
    for (int oi = 0; oi < 2; ++oi)
      for (int si = 0; si < 2; ++si)
        state[base + oi * o_stride + si * s_stride] = a_up[oi] * u[si] + a_dn[oi] * d[si];
  }
}

inline void comparator_rotation(std::vector<complex>& state, int c_stride, int o1_stride,
                                int o2_stride, double angle) {
  const int n = static_cast<int>(state.size());
  for (int idx = 0; idx < n; ++idx) {
    if ((idx / c_stride) % 2 != 0) continue;
    if ((idx / o1_stride) % 2 != 1 || (idx / o2_stride) % 2 != 1) continue;
    auto [r0, r1] = rotate2(state[idx], state[idx + c_stride], angle);
    state[idx] = r0;
    state[idx + c_stride] = r1;
  }
}

}  // namespace mn_detail

/// Closed-form run: gates are evaluated on the classical tracks, active
/// windows apply their controlled rotations in schedule order.
inline MNResult mn_run(const MNScenario& sc) {
  if (static_cast<int>(sc.initial.size()) != sc.dimension())
    throw std::invalid_argument("joint internal state has the wrong dimension");
  double n2 = 0.0;
  for (const auto& a : sc.initial) n2 += std::norm(a);
  if (std::abs(n2 - 1.0) > 1e-12)
    throw std::invalid_argument("joint internal state is not normalized");

  MNResult res{sc.initial, {}, sc.entities};
  auto strides = sc.strides();

  for (const auto& w : sc.wings) {
    double sep = evlab::norm(sc.position(w.system, sc.times[1]) -
                             sc.position(w.observer, sc.times[1]));
    bool active = sep <= sc.coupling.range_a;
    res.gates.push_back({"measurement:" + w.observer, active, sep, sc.coupling.range_a});
    if (!active) continue;
    mn_detail::wing_rotation(res.state, strides[sc.entity_index(w.observer)],
                             strides[sc.entity_index(w.system)], w.axis, sc.theta);
  }

  if (!sc.comparator.empty()) {
    if (sc.wings.size() != 2) throw std::invalid_argument("comparator needs two wings");
    double s1 = evlab::norm(sc.position(sc.wings[0].observer, sc.times[3]) -
                            sc.position(sc.comparator, sc.times[3]));
    double s2 = evlab::norm(sc.position(sc.wings[1].observer, sc.times[3]) -
                            sc.position(sc.comparator, sc.times[3]));
    bool active = s1 <= sc.coupling.range_aC && s2 <= sc.coupling.range_aC;
    res.gates.push_back({"comparator", active, std::max(s1, s2), sc.coupling.range_aC});
    if (active)
      mn_detail::comparator_rotation(res.state, strides[sc.entity_index(sc.comparator)],
                                     strides[sc.entity_index(sc.wings[0].observer)],
                                     strides[sc.entity_index(sc.wings[1].observer)], sc.theta_C);
  }
  return res;
}

/// Freely evolved Gaussian, closed form, product over the first `dim` axes.
inline complex continuum_packet(const WavepacketSpec& w, const Vec3& x, double tau, int dim = 1) {
  const complex lambda(1.0, w.alpha * hbar * tau / w.mass);
  complex out = 1.0;
  for (int a = 0; a < dim; ++a) {
    const double u = x[a] - w.center[a];
    const double k = w.mass * w.velocity[a] / hbar;
    const complex expo =
        complex(-0.5 * w.alpha * u * u, k * u - 0.5 * k * w.velocity[a] * tau) / lambda;
    out *= std::pow(w.alpha / M_PI, 0.25) / std::sqrt(lambda) * std::exp(expo);
  }
  return out;
}

/// Width parameter of |psi|^2 after free spreading for time tau.
inline double alpha_tilde(const WavepacketSpec& w, double tau) {
  const double r = w.alpha * hbar * tau / w.mass;
  return w.alpha / (1.0 + r * r);
}

inline complex green_function_1d(double x, double tau, double mass) {
  const complex pref = std::sqrt(mass / complex(0.0, 2.0 * M_PI * hbar * tau));
  return pref * std::exp(complex(0.0, mass * x * x / (2.0 * hbar * tau)));
}

/// Exterior leg of the detection amplitude: the packet spreads for t01, is cut
/// at the aperture around gate_center, and the remainder propagates for t23.
struct TailIntegralSpec {
  WavepacketSpec packet;
  double t01 = 0.0;
  double t23 = 1.0;
  double aperture = 1.0;
  double gate_center = 0.0;
  double quad_tol = 1e-10;

  double alpha_tilde_at_cut() const { return evlab::alpha_tilde(packet, t01); }
};

/// I~(x) = integral over |y - gate_center| > aperture of
/// conj(G(x - y, t23)) conj(psi_g(y, t01)) dy, adaptive Gauss-Kronrod.
inline complex tail_integral(const TailIntegralSpec& spec, double x) {
  auto f = [&](double y) {
    return std::conj(green_function_1d(x - y, spec.t23, spec.packet.mass) *
                     continuum_packet(spec.packet, Vec3{{y, 0.0, 0.0}}, spec.t01, 1));
  };
  const double mu = spec.packet.center[0] + spec.packet.velocity[0] * spec.t01;
  const double cut = 10.0 / std::sqrt(spec.alpha_tilde_at_cut());
  const double lo_edge = spec.gate_center - spec.aperture;
  const double hi_edge = spec.gate_center + spec.aperture;

  using quad = boost::math::quadrature::gauss_kronrod<double, 31>;
  complex total = 0.0;
  double err_total = 0.0;
  auto piece = [&](double lo, double hi) {
    if (hi <= lo) return;
    double err = 0.0;
    total += quad::integrate(f, lo, hi, 15, spec.quad_tol, &err);
    err_total += err;
  };
  if (spec.aperture <= 0.0) {
    piece(mu - cut, mu + cut);
  } else {
    piece(std::min(mu - cut, lo_edge), lo_edge);
    piece(hi_edge, std::max(mu + cut, hi_edge));
  }
  if (err_total > 1e-8 * (1.0 + std::abs(total)))
    throw std::runtime_error("tail_integral quadrature did not converge, residual estimate " +
                             std::to_string(err_total));
  return total;
}

/// Least-squares slope of log|I~| against alpha_tilde * a^2; the asymptotic
/// decay law predicts -1/2.
struct TailSlopeFit {
  double slope;
  std::vector<double> abscissa;
  std::vector<double> log_magnitude;
};

inline TailSlopeFit tail_slope_fit(TailIntegralSpec spec, double x,
                                   const std::vector<double>& apertures) {
  TailSlopeFit fit{0.0, {}, {}};
  const double at = spec.alpha_tilde_at_cut();
  for (double a : apertures) {
    spec.aperture = a;
    fit.abscissa.push_back(at * a * a);
    fit.log_magnitude.push_back(std::log(std::abs(tail_integral(spec, x))));
  }
  const size_t n = fit.abscissa.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sx += fit.abscissa[i];
    sy += fit.log_magnitude[i];
    sxx += fit.abscissa[i] * fit.abscissa[i];
    sxy += fit.abscissa[i] * fit.log_magnitude[i];
  }
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return fit;
}

/// Backend cross-validation: a single wing, spin prepared at `spin_angle`
/// from the analyzer axis, observer and system packets `separation` apart.
struct MnLatticeResolution {
  int sites;
  double dx;
  double width;
};

struct MnLatticeReport {
  double mn_probability;
  std::vector<double> lattice_probabilities;
  std::vector<double> deviations;
};

inline MnLatticeReport mn_vs_lattice(double spin_angle, double separation,
                                     const std::vector<MnLatticeResolution>& resolutions) {
  if (resolutions.empty()) throw std::invalid_argument("no resolutions given");
  const double extent = resolutions.front().sites * resolutions.front().dx;
  const double aperture = extent / 4.0;
  const double x_obs = extent / 2.0 - separation / 2.0;
  const double x_sys = extent / 2.0 + separation / 2.0;
  const SpinAxis axis{spin_angle, 0.6};

  MNScenario sc;
  sc.coupling.range_a = aperture;
  sc.entities = {{"S", Vec3{{x_sys, 0.0, 0.0}}, Vec3{}, 2},
                 {"O", Vec3{{x_obs, 0.0, 0.0}}, Vec3{}, 2}};
  sc.wings = {{"S", "O", axis}};
  sc.initial = std::vector<complex>(4, 0.0);
  sc.initial[sc.index({0, 0})] = 1.0;  // system in internal label 1, observer unaware
  MnLatticeReport report;
  report.mn_probability = mn_run(sc).probability("O", 1);

  for (const auto& r : resolutions) {
    if (std::abs(r.sites * r.dx - extent) > 1e-12)
      throw std::invalid_argument("resolutions must share the physical extent");
    Lattice lat(1, r.sites, r.dx);
    ModeTable modes(lat, {SpeciesSpec::system("S", 1.0), SpeciesSpec::observer("O", 1.0)});

    std::vector<complex> sys(lat.cells());
    WavepacketSpec w{Vec3{{x_sys, 0.0, 0.0}}, 1.0 / (r.width * r.width), Vec3{}, 1.0};
    double n2 = 0.0;
    for (int c = 0; c < lat.cells(); ++c) {
      sys[c] = packet_amplitude(lat, w, c);
      n2 += std::norm(sys[c]);
    }
    for (auto& z : sys) z /= std::sqrt(n2);
    std::vector<complex> obs(lat.cells(), 0.0);
    obs[std::clamp(int(std::lround(x_obs / r.dx - 0.5)), 0, lat.cells() - 1)] = 1.0;

    SectorState s = apply_smeared_creator(SectorState::vacuum(), modes, "O", 0, obs);
    s = apply_smeared_creator(s, modes, "S", 1, sys);

    StagePlan plan;
    plan.wings = {{"S", "O", axis}};
    plan.coupling.kappa = 50.0;
    plan.coupling.range_a = aperture;
    SectorState out = propagate_interaction(s, modes, plan, WindowKind::measurement, sc.theta);

    auto d = density_field(out, modes, "O", 1);
    double p = std::accumulate(d.begin(), d.end(), 0.0);
    report.lattice_probabilities.push_back(p);
    report.deviations.push_back(std::abs(p - report.mn_probability));
  }
  return report;
}

}  // namespace evlab

#endif
