#ifndef EVLAB_SUITES_HPP
#define EVLAB_SUITES_HPP

#include <chrono>
#include <random>

#include "evlab/deutsch_hayden.hpp"
#include "evlab/eprb.hpp"

namespace evlab {

/// One named pass/fail check: pass iff value <= tolerance.
struct CheckResult {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline CheckResult make_check(std::string name, double value, double tolerance) {
  return {std::move(name), value, tolerance, value <= tolerance};
}

inline bool all_passed(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

/// ---- operator algebra ----------------------------------------------------

namespace suite_detail {

inline SectorState random_state(const ModeTable& modes, std::mt19937& rng, int configs = 12) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  SectorState s;
  for (int k = 0; k < configs; ++k) {
    Config c;
    for (int r = 0; r < modes.total_modes(); ++r)
      if (u(rng) < 0.2) c.push_back(static_cast<std::uint32_t>(r));
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    s.add(c, complex(g(rng), g(rng)));
  }
  double n = std::sqrt(s.norm_sq());
  if (n > 0.0) s.scale(1.0 / n);
  return s;
}

inline double hermiticity_deviation(const ModeTable& modes, const std::vector<OperatorTerm>& h,
                                    std::mt19937& rng, int draws = 4) {
  double dev = 0.0;
  for (int k = 0; k < draws; ++k) {
    SectorState x = random_state(modes, rng);
    SectorState hx = apply_terms(x, h);
    hx.prune();
    // <x|H|x> real and <x|H^2|x> = ||Hx||^2 hold iff H = H+.
    dev = std::max(dev, std::abs(std::imag(inner(x, hx))));
    dev = std::max(dev, std::abs(inner(x, apply_terms(hx, h)) - inner(hx, hx)));
  }
  return dev;
}

/// Annihilation with the fermionic parity signs dropped: the classic
/// sign-convention mistake, used to demonstrate that the algebra check sees it.
inline DenseMatrix signless_annihilation(int n_modes, int mode) {
  const int dim = 1 << n_modes;
  DenseMatrix m = DenseMatrix::Zero(dim, dim);
  for (int b = 0; b < dim; ++b)
    if (b & (1 << mode)) m(b & ~(1 << mode), b) = 1.0;
  return m;
}

}  // namespace suite_detail

/// Canonical anticommutators, Hamiltonian Hermiticity and propagator
/// unitarity. With `inject_sign_bug` the annihilators lose their parity signs,
/// and the report names the first anticommutator pair that notices.
inline std::vector<CheckResult> algebra_suite(bool inject_sign_bug = false) {
  std::vector<CheckResult> out;

  // Exact CAR on a 16-mode table mixing every species kind.
  Lattice lat2(1, 2, 1.0);
  ModeTable car_modes(lat2, {SpeciesSpec::system("S", 1.0), SpeciesSpec::observer("O", 1.0),
                             SpeciesSpec::observer("C", 1.0), SpeciesSpec::fictitious_field("zS"),
                             SpeciesSpec::fictitious_field("zO")});
  if (!inject_sign_bug) {
    auto rep = dense::check_car(car_modes);
    std::string name = "car-anticommutators-16-modes";
    if (!rep.passed())
      name += " first failing pair (" + std::to_string(rep.violations[0].mode_a) + "," +
              std::to_string(rep.violations[0].mode_b) + ") " + rep.violations[0].identity;
    out.push_back(make_check(name, rep.passed() ? 0.0 : 1.0, 0.0));
  } else {
    const int n = 6;
    double worst = 0.0;
    int bad_r = -1, bad_s = -1;
    for (int r = 0; r < n && bad_r < 0; ++r) {
      DenseMatrix ar = suite_detail::signless_annihilation(n, r);
      for (int s = 0; s < n; ++s) {
        DenseMatrix cs = dense::creation(n, s);
        DenseMatrix anti = ar * cs + cs * ar;
        if (r == s) anti -= DenseMatrix::Identity(anti.rows(), anti.cols());
        double dev = anti.cwiseAbs().maxCoeff();
        if (dev > 1e-12) {
          worst = dev;
          bad_r = r;
          bad_s = s;
          break;
        }
      }
    }
    out.push_back(make_check("car-anticommutator pair (" + std::to_string(bad_r) + "," +
                                 std::to_string(bad_s) + ") {a_r, a+_s} = delta_rs",
                             worst, 1e-12));
  }

  // Hermiticity of every window Hamiltonian on the full species set.
  Lattice lat4(1, 4, 1.0);
  ModeTable modes(lat4, {SpeciesSpec::system("S1", 1.0), SpeciesSpec::system("S2", 1.5),
                         SpeciesSpec::observer("O1", 2.0), SpeciesSpec::observer("O2", 2.5),
                         SpeciesSpec::observer("C", 3.0)});
  std::mt19937 rng(7);
  SpinAxis axis{0.7, 0.3};
  out.push_back(make_check(
      "free-hamiltonian-hermitian",
      suite_detail::hermiticity_deviation(modes, build_free_hamiltonian(modes, "S1"), rng), 1e-10));
  out.push_back(make_check(
      "measurement-hamiltonian-hermitian",
      suite_detail::hermiticity_deviation(
          modes, build_measurement_hamiltonian(modes, "O1", "S1", axis, 1.3, 2.0), rng),
      1e-10));
  out.push_back(make_check(
      "comparator-hamiltonian-hermitian",
      suite_detail::hermiticity_deviation(
          modes, build_comparator_hamiltonian(modes, "C", "O1", "O2", 0.8, 2.0), rng),
      1e-10));

  // Unitarity: the one-body propagator and a full interaction window.
  {
    Lattice lat8(1, 8, 0.7);
    Eigen::MatrixXcd u = one_body_propagator(lat8, 1.4, 0.9);
    Eigen::MatrixXcd d = u.adjoint() * u - Eigen::MatrixXcd::Identity(u.rows(), u.cols());
    out.push_back(make_check("one-body-propagator-unitary", d.cwiseAbs().maxCoeff(), 1e-10));
  }
  {
    ModeTable small(lat2, {SpeciesSpec::system("S", 1.0), SpeciesSpec::observer("O", 1.0)});
    StagePlan plan;
    plan.wings = {{"S", "O", axis}};
    plan.coupling.range_a = 1.5;
    DenseMatrix u = dense::from_action(small.total_modes(), [&](const SectorState& s) {
      return propagate_interaction(s, small, plan, WindowKind::measurement, 1.1);
    });
    DenseMatrix d = u.adjoint() * u - DenseMatrix::Identity(u.rows(), u.cols());
    out.push_back(make_check("measurement-window-unitary", d.cwiseAbs().maxCoeff(), 1e-10));
  }
  return out;
}

/// ---- dressed observer scenarios ------------------------------------------

namespace suite_detail {

/// Creator half of a generator (V|0> equals that block applied to the vacuum).
inline SectorState apply_creator_block(const SectorState& state, const DHGenerator& g) {
  std::vector<OperatorTerm> block;
  for (const auto& t : g.terms)
    if (t.annihilators.empty()) block.push_back(t);
  return apply_terms(state, block);
}

inline SectorState dressed_target(const std::vector<DHGenerator>& generators) {
  SectorState s = SectorState::vacuum();
  for (auto it = generators.rbegin(); it != generators.rend(); ++it)
    s = apply_creator_block(s, *it);
  return s;
}

inline double infidelity(const SectorState& a, const SectorState& b) {
  return std::abs(1.0 - std::norm(inner(a, b)));
}

struct SingleObserverSetup {
  ModeTable modes;
  std::vector<DHGenerator> generators;
  SectorState plain;

  SingleObserverSetup(unsigned seed) {
    Lattice lat(1, 2, 1.0);
    modes = ModeTable(lat, {SpeciesSpec::system("S", 1.0), SpeciesSpec::observer("O", 1.0),
                            SpeciesSpec::fictitious_field("zS"),
                            SpeciesSpec::fictitious_field("zO")});
    std::vector<complex> packet_s{0.6, complex(0.0, 0.8)};
    std::vector<complex> packet_o{complex(0.48, -0.36), 0.8};
    FictitiousFieldSpec fs{"zS", "S",
                           fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, seed)};
    FictitiousFieldSpec fo{"zO", "O",
                           fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0,
                                                   seed + 100)};
    std::vector<std::pair<int, complex>> amps{{1, 0.6}, {2, complex(0.0, 0.8)}};
    generators.push_back(build_pair_generator(modes, "S", amps, packet_s, fs));
    generators.push_back(build_pair_generator(modes, "O", {{0, 1.0}}, packet_o, fo));
    plain = apply_smeared_creator(SectorState::vacuum(), modes, "O", 0, packet_o);
    SectorState up = apply_smeared_creator(plain, modes, "S", 1, packet_s);
    SectorState dn = apply_smeared_creator(plain, modes, "S", 2, packet_s);
    up.scale(0.6);
    up.add_scaled(dn, complex(0.0, 0.8));
    up.prune();
    plain = up;
  }
};

}  // namespace suite_detail

/// Single dressed observer: the rotation built from the generators must carry
/// the vacuum exactly onto the dressed two-quantum state and back.
inline std::vector<CheckResult> dh_single_suite(unsigned seed) {
  using namespace suite_detail;
  SingleObserverSetup setup(seed);
  std::vector<CheckResult> out;
  SectorState rotated = dh_apply(SectorState::vacuum(), setup.generators, false);
  out.push_back(make_check("single-observer-vacuum-infidelity",
                           infidelity(rotated, dressed_target(setup.generators)), 1e-9));
  SectorState back = dh_apply(rotated, setup.generators, true);
  back.add_scaled(SectorState::vacuum(), -1.0);
  out.push_back(make_check("single-observer-round-trip", std::sqrt(back.norm_sq()), 1e-9));
  return out;
}

/// Full two-wing scenario with a comparator on a three-cell line: vacuum
/// fidelity of the joint dressing and commutation of its generators.
inline std::vector<CheckResult> dh_eprb_suite(unsigned seed) {
  using namespace suite_detail;
  Lattice lat(1, 3, 1.0);
  std::vector<SpeciesSpec> species{
      SpeciesSpec::system("S1", 1.0),   SpeciesSpec::system("S2", 1.0),
      SpeciesSpec::observer("O1", 2.0), SpeciesSpec::observer("O2", 2.0),
      SpeciesSpec::observer("C", 2.0),  SpeciesSpec::fictitious_field("zS1"),
      SpeciesSpec::fictitious_field("zS2"), SpeciesSpec::fictitious_field("zO1"),
      SpeciesSpec::fictitious_field("zO2"), SpeciesSpec::fictitious_field("zC")};
  ModeTable modes(lat, species);

  auto two_cell = [&](unsigned s) {
    auto v = fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, s);
    v[2] = 0.0;
    double n2 = 0.0;
    for (const auto& z : v) n2 += std::norm(z);
    for (auto& z : v) z /= std::sqrt(n2);
    return v;
  };
  std::vector<complex> p1{0.6, complex(0.0, 0.8), 0.0};
  std::vector<complex> p2{0.0, complex(-0.28, 0.96), 0.0};
  std::vector<complex> po1{1.0, 0.0, 0.0};
  std::vector<complex> po2{0.0, 0.0, 1.0};
  std::vector<complex> pc{0.0, 1.0, 0.0};
  FictitiousFieldSpec fs1{"zS1", "S1", two_cell(seed + 1)};
  FictitiousFieldSpec fs2{"zS2", "S2", two_cell(seed + 2)};
  FictitiousFieldSpec fo1{"zO1", "O1",
                          fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, seed + 3)};
  FictitiousFieldSpec fo2{"zO2", "O2",
                          fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, seed + 4)};
  FictitiousFieldSpec fc{"zC", "C",
                         fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, seed + 5)};

  std::vector<DHGenerator> generators{
      build_singlet_generator(modes, "S1", p1, "S2", p2, fs1, fs2),
      build_pair_generator(modes, "O1", {{0, 1.0}}, po1, fo1),
      build_pair_generator(modes, "O2", {{0, 1.0}}, po2, fo2),
      build_pair_generator(modes, "C", {{0, 1.0}}, pc, fc)};

  std::vector<CheckResult> out;
  SectorState rotated = dh_apply(SectorState::vacuum(), generators, false);
  SectorState target = dressed_target(generators);
  out.push_back(make_check("eprb-vacuum-infidelity", infidelity(rotated, target), 1e-8));

  double comm = 0.0;
  for (size_t i = 0; i < generators.size(); ++i) {
    for (size_t j = i + 1; j < generators.size(); ++j) {
      SectorState ab = evolve_exp(evolve_exp(target, generators[j].terms, complex(M_PI / 2.0)),
                                  generators[i].terms, complex(M_PI / 2.0));
      SectorState ba = evolve_exp(evolve_exp(target, generators[i].terms, complex(M_PI / 2.0)),
                                  generators[j].terms, complex(M_PI / 2.0));
      ab.add_scaled(ba, -1.0);
      comm = std::max(comm, std::sqrt(ab.norm_sq()));
    }
  }
  out.push_back(make_check("eprb-generator-commutation", comm, 1e-12));
  return out;
}

/// Dense Heisenberg picture of one dressing on a 9-mode table: the transformed
/// label-0 field matches its closed form and the other labels stay untouched.
inline std::vector<CheckResult> dh_operator_suite(unsigned seed) {
  Lattice lat(1, 3, 1.0);
  ModeTable modes(lat, {SpeciesSpec::observer("O", 1.0), SpeciesSpec::fictitious_field("zO")});
  const int n = modes.total_modes();
  std::vector<complex> packet{0.6, complex(0.0, 0.64), complex(-0.48, 0.0)};
  FictitiousFieldSpec fict{"zO", "O",
                           fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, seed)};
  std::vector<DHGenerator> gens{build_pair_generator(modes, "O", {{0, 1.0}}, packet, fict)};

  DenseMatrix v = dense::from_action(n, [&](const SectorState& s) { return dh_apply(s, gens, false); });
  DenseMatrix unit = v.adjoint() * v - DenseMatrix::Identity(v.rows(), v.cols());

  std::vector<CheckResult> out;
  out.push_back(make_check("dressing-unitary", unit.cwiseAbs().maxCoeff(), 1e-10));

  double closed_dev = 0.0, other_dev = 0.0;
  for (int cell = 0; cell < lat.cells(); ++cell) {
    for (int label : {0, 1}) {
      std::vector<OperatorTerm> field{
          {1.0, {}, {std::uint32_t(modes.rank("O", label, cell))}}};
      DenseMatrix transformed = v.adjoint() * dense::from_terms(n, field) * v;
      DenseMatrix closed =
          dense::from_terms(n, dh_closed_form_field(modes, "O", fict, packet, label, cell));
      double dev = (transformed - closed).cwiseAbs().maxCoeff();
      if (label == 0)
        closed_dev = std::max(closed_dev, dev);
      else
        other_dev = std::max(other_dev, dev);
    }
  }
  out.push_back(make_check("transformed-field-closed-form", closed_dev, 1e-9));
  out.push_back(make_check("unaware-component-invariant", other_dev, 1e-12));
  return out;
}

/// Physical expectations on the dressed state cannot depend on the fictitious
/// wavefunction draw; three independent draws must agree to 1e-10.
inline std::vector<CheckResult> dh_independence_suite(unsigned seed, int draws = 3) {
  using namespace suite_detail;
  std::vector<SectorState> dressed;
  const SingleObserverSetup base(seed);
  for (int k = 0; k < draws; ++k) {
    SingleObserverSetup setup(seed + 1000 * (k + 1));
    dressed.push_back(dh_apply(SectorState::vacuum(), setup.generators, false));
  }
  std::vector<OperatorTerm> obs_count;
  for (int c = 0; c < 2; ++c) {
    std::uint32_t r = std::uint32_t(base.modes.rank("O", 0, c));
    obs_count.push_back({1.0, {r}, {r}});
  }
  std::vector<OperatorTerm> spin_flip{
      {complex(0.3, 0.4),
       {std::uint32_t(base.modes.rank("S", 1, 0))},
       {std::uint32_t(base.modes.rank("S", 2, 1))}}};
  spin_flip.push_back(adjoint(spin_flip)[0]);

  double dev = 0.0;
  for (const auto* obs : {&obs_count, &spin_flip}) {
    auto rep = expectation_equivalence(base.modes, *obs, base.plain, dressed);
    dev = std::max(dev, rep.max_deviation);
  }
  return {make_check("fictitious-draw-independence", dev, 1e-10)};
}

/// ---- series, composition and tails ---------------------------------------

/// Truncated rotation series at orders 1..max_order on an aperture-filling
/// spin-up packet: errors must stay under twice the first omitted term.
inline std::vector<CheckResult> series_suite(double theta = M_PI / 2.0, int max_order = 8) {
  Lattice lat(1, 2, 1.0);
  ModeTable modes(lat, {SpeciesSpec::system("S", 1.0)});
  SpinAxis axis{0.8, 0.4};
  auto up = rotated_spin_coeffs(axis, 1);
  std::vector<complex> packet{0.6, 0.8};
  SectorState s1 = apply_smeared_creator(SectorState::vacuum(), modes, "S", 1, packet);
  SectorState s2 = apply_smeared_creator(SectorState::vacuum(), modes, "S", 2, packet);
  s1.scale(up[0]);
  s1.add_scaled(s2, up[1]);
  s1.prune();
  auto gated = build_gated_density(modes, "S", axis, 0, 10.0);

  std::vector<CheckResult> out;
  double fact = 1.0;  // (2N+1)!
  for (int order = 1; order <= max_order; ++order) {
    fact *= (2.0 * order) * (2.0 * order + 1.0);
    auto rep = qr_series_check(s1, gated, theta, order);
    double bound = 2.0 * std::pow(theta, 2 * order + 1) / fact;
    out.push_back(make_check("series-order-" + std::to_string(order),
                             std::max(rep.q_error, rep.r_error), bound));
  }
  auto rep = qr_series_check(s1, gated, theta, max_order);
  out.push_back(
      make_check("series-order-8-absolute", std::max(rep.q_error, rep.r_error), 1e-6));
  return out;
}

/// Two-step propagation equals one long step: continuum quadrature through the
/// free kernel, and the exact matrix identity on the lattice.
inline std::vector<CheckResult> composition_suite() {
  std::vector<CheckResult> out;
  WavepacketSpec w{Vec3{{0.3, 0.0, 0.0}}, 1.0, Vec3{{0.4, 0.0, 0.0}}, 1.0};
  const double tau1 = 0.6, tau2 = 0.8;
  double dev = 0.0;
  using quad = boost::math::quadrature::gauss_kronrod<double, 31>;
  for (double x : {-0.5, 0.4, 1.3}) {
    auto re = [&](double y) {
      return std::real(green_function_1d(x - y, tau2, w.mass) *
                       continuum_packet(w, Vec3{{y, 0.0, 0.0}}, tau1, 1));
    };
    auto im = [&](double y) {
      return std::imag(green_function_1d(x - y, tau2, w.mass) *
                       continuum_packet(w, Vec3{{y, 0.0, 0.0}}, tau1, 1));
    };
    const double mu = w.center[0] + w.velocity[0] * tau1;
    const double cut = 12.0 / std::sqrt(alpha_tilde(w, tau1));
    complex composed(quad::integrate(re, mu - cut, mu + cut, 15, 1e-12),
                     quad::integrate(im, mu - cut, mu + cut, 15, 1e-12));
    dev = std::max(dev,
                   std::abs(composed - continuum_packet(w, Vec3{{x, 0.0, 0.0}}, tau1 + tau2, 1)));
  }
  out.push_back(make_check("continuum-kernel-composition", dev, 1e-8));

  Lattice lat(1, 16, 0.8);
  Eigen::MatrixXcd u1 = one_body_propagator(lat, 1.3, tau1);
  Eigen::MatrixXcd u2 = one_body_propagator(lat, 1.3, tau2);
  Eigen::MatrixXcd u12 = one_body_propagator(lat, 1.3, tau1 + tau2);
  out.push_back(
      make_check("lattice-propagator-composition", (u2 * u1 - u12).cwiseAbs().maxCoeff(), 1e-12));
  return out;
}

/// Rows of the gated-tail decay curve plus the fitted log-slope.
struct TailReport {
  std::vector<double> abscissa;       // alpha_tilde * a^2, first row a = 0
  std::vector<double> magnitude;      // |I~|
  double slope = 0.0;
  double a0_deviation = 0.0;          // | |I~(a=0)| - |psi(x, t01+t23)| |
};

inline TailReport tail_report(TailIntegralSpec spec, double x,
                              const std::vector<double>& apertures) {
  TailReport rep;
  spec.aperture = 0.0;
  complex full = tail_integral(spec, x);
  complex direct =
      std::conj(continuum_packet(spec.packet, Vec3{{x, 0.0, 0.0}}, spec.t01 + spec.t23, 1));
  rep.a0_deviation = std::abs(std::abs(full) - std::abs(direct));
  rep.abscissa.push_back(0.0);
  rep.magnitude.push_back(std::abs(full));
  auto fit = tail_slope_fit(spec, x, apertures);
  for (size_t i = 0; i < apertures.size(); ++i) {
    rep.abscissa.push_back(fit.abscissa[i]);
    rep.magnitude.push_back(std::exp(fit.log_magnitude[i]));
  }
  rep.slope = fit.slope;
  return rep;
}

inline TailIntegralSpec default_tail_spec() {
  TailIntegralSpec spec;
  spec.packet = WavepacketSpec{Vec3{}, 1.0, Vec3{}, 1.0};
  spec.t01 = 0.0;
  spec.t23 = 1.0;
  spec.gate_center = 0.0;
  return spec;
}

inline std::vector<double> default_tail_apertures(const TailIntegralSpec& spec) {
  std::vector<double> aps;
  const double at = spec.alpha_tilde_at_cut();
  for (double u = 4.0; u <= 25.0 + 1e-9; u += 1.5) aps.push_back(std::sqrt(u / at));
  return aps;
}

inline std::vector<CheckResult> tail_suite(const TailReport& rep) {
  return {make_check("tail-slope-within-10-percent", std::abs(rep.slope + 0.5), 0.05),
          make_check("tail-zero-aperture-matches-packet", rep.a0_deviation, 1e-8)};
}

/// ---- scan geometry -------------------------------------------------------

/// Default scenario retuned for angle sweeps: slightly narrower packets keep
/// the aperture truncation below the 1e-2 curve tolerance at every angle.
inline ScenarioSpec scan_base_scenario() {
  ScenarioSpec sc = default_eprb_scenario();
  for (auto& [id, w] : sc.packets) w.alpha = 0.64;  // width 1.25
  return sc;
}

}  // namespace evlab

#endif
