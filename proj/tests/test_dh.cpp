#include <catch2/catch_amalgamated.hpp>

#include "evlab/deutsch_hayden.hpp"

using namespace evlab;

namespace {

std::vector<complex> normalized(std::vector<complex> v) {
  double n2 = 0.0;
  for (const auto& z : v) n2 += std::norm(z);
  for (auto& z : v) z /= std::sqrt(n2);
  return v;
}

/// One system quantum measured by one observer, both dressed, on two cells.
struct SingleObserver {
  Lattice lat{1, 2, 1.0};
  ModeTable modes{lat,
                  {SpeciesSpec::system("S", 1.0), SpeciesSpec::observer("O", 1.0),
                   SpeciesSpec::fictitious_field("zS"), SpeciesSpec::fictitious_field("zO")}};
  std::vector<complex> packet_s = normalized({{0.6, 0.0}, {0.0, 0.8}});
  std::vector<complex> packet_o = normalized({{1.0, 0.2}, {-0.5, 0.3}});
  std::vector<std::pair<int, complex>> amplitudes{{1, 0.6}, {2, complex(0.0, 0.8)}};
  FictitiousFieldSpec fict_s, fict_o;

  SingleObserver(unsigned seed_s = 11, unsigned seed_o = 12)
      : fict_s{"zS", "S", fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, seed_s)},
        fict_o{"zO", "O", fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, seed_o)} {}

  std::vector<DHGenerator> generators() const {
    return {build_pair_generator(modes, "S", amplitudes, packet_s, fict_s),
            build_pair_generator(modes, "O", {{0, 1.0}}, packet_o, fict_o)};
  }

  SectorState plain_state() const {
    SectorState s = SectorState::vacuum();
    SectorState sum;
    for (const auto& [label, b] : amplitudes) {
      auto scaled = packet_s;
      for (auto& z : scaled) z *= b;
      sum.add_scaled(apply_smeared_creator(s, modes, "S", label, scaled), 1.0);
    }
    return apply_smeared_creator(sum, modes, "O", 0, packet_o);
  }

  SectorState dressed_state() const {
    SectorState s = apply_smeared_creator(SectorState::vacuum(), modes, fict_s.id, 0,
                                          fict_s.wavefunction);
    SectorState sum;
    for (const auto& [label, b] : amplitudes) {
      auto scaled = packet_s;
      for (auto& z : scaled) z *= b;
      sum.add_scaled(apply_smeared_creator(s, modes, "S", label, scaled), 1.0);
    }
    sum = apply_smeared_creator(sum, modes, fict_o.id, 0, fict_o.wavefunction);
    return apply_smeared_creator(sum, modes, "O", 0, packet_o);
  }
};

double fidelity_with_vacuum(const SectorState& s) {
  return std::norm(inner(SectorState::vacuum(), s));
}

double state_distance(const SectorState& a, const SectorState& b) {
  SectorState d = a;
  d.add_scaled(b, -1.0);
  return std::sqrt(d.norm_sq());
}

}  // namespace

TEST_CASE("dressing generators are skew-Hermitian and mutually commuting") {
  SECTION("pair generator, dense on system plus partner field") {
    Lattice lat(1, 2, 1.0);
    ModeTable modes(lat, {SpeciesSpec::system("S", 1.0), SpeciesSpec::fictitious_field("zS")});
    FictitiousFieldSpec f{"zS", "S",
                          fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, 5)};
    auto g = build_pair_generator(modes, "S", {{1, 0.6}, {2, complex(0.0, 0.8)}},
                                  normalized({{0.6, 0.0}, {0.0, 0.8}}), f);
    DenseMatrix w = dense::from_action(
        modes.total_modes(), [&](const SectorState& s) { return apply_terms(s, g.terms); });
    REQUIRE((w + w.adjoint()).cwiseAbs().maxCoeff() < 1e-15);
  }

  SECTION("singlet and observer generators, dense on a single cell") {
    Lattice lat(1, 1, 1.0);
    ModeTable modes(lat, {SpeciesSpec::system("S1", 1.0), SpeciesSpec::system("S2", 1.0),
                          SpeciesSpec::observer("O1", 1.0), SpeciesSpec::fictitious_field("z1"),
                          SpeciesSpec::fictitious_field("z2"),
                          SpeciesSpec::fictitious_field("zO")});
    std::vector<complex> one{1.0};
    FictitiousFieldSpec f1{"z1", "S1", one}, f2{"z2", "S2", one}, fo{"zO", "O1", one};
    auto g_singlet = build_singlet_generator(modes, "S1", one, "S2", one, f1, f2);
    auto g_obs = build_pair_generator(modes, "O1", {{0, 1.0}}, one, fo);

    auto densify = [&](const DHGenerator& g) {
      return dense::from_action(modes.total_modes(),
                                [&](const SectorState& s) { return apply_terms(s, g.terms); });
    };
    DenseMatrix ws = densify(g_singlet), wo = densify(g_obs);
    REQUIRE((ws + ws.adjoint()).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE((wo + wo.adjoint()).cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE((ws * wo - wo * ws).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("generator acting on the vacuum rebuilds its creator block") {
  SingleObserver sc;
  auto g = build_pair_generator(sc.modes, "S", sc.amplitudes, sc.packet_s, sc.fict_s);

  SectorState expected = apply_smeared_creator(SectorState::vacuum(), sc.modes, "zS", 0,
                                               sc.fict_s.wavefunction);
  SectorState sum;
  for (const auto& [label, b] : sc.amplitudes) {
    auto scaled = sc.packet_s;
    for (auto& z : scaled) z *= b;
    sum.add_scaled(apply_smeared_creator(expected, sc.modes, "S", label, scaled), 1.0);
  }
  REQUIRE(state_distance(apply_terms(SectorState::vacuum(), g.terms), sum) < 1e-14);
  REQUIRE(std::abs(sum.norm_sq() - 1.0) < 1e-14);
}

TEST_CASE("single-observer dressing is undone exactly by the inverse transform") {
  SingleObserver sc;
  auto gens = sc.generators();
  SectorState dressed = sc.dressed_state();
  REQUIRE(std::abs(dressed.norm_sq() - 1.0) < 1e-12);

  SectorState undone = dh_apply(dressed, gens, true);
  REQUIRE(std::abs(fidelity_with_vacuum(undone) - 1.0) < 1e-9);

  SectorState round_trip = dh_apply(undone, gens, false);
  REQUIRE(state_distance(round_trip, dressed) < 1e-10);
}

TEST_CASE("two-wing dressed state with comparator returns to the vacuum") {
  Lattice lat(1, 3, 1.0);
  ModeTable modes(lat, {SpeciesSpec::system("S1", 1.0), SpeciesSpec::system("S2", 1.0),
                        SpeciesSpec::observer("O1", 1.0), SpeciesSpec::observer("O2", 1.0),
                        SpeciesSpec::observer("C", 1.0), SpeciesSpec::fictitious_field("zS1"),
                        SpeciesSpec::fictitious_field("zS2"),
                        SpeciesSpec::fictitious_field("zO1"),
                        SpeciesSpec::fictitious_field("zO2"),
                        SpeciesSpec::fictitious_field("zC")});

  std::vector<complex> p1 = normalized({{0.8, 0.0}, {0.6, 0.0}, {0.0, 0.0}});
  std::vector<complex> p2 = normalized({{0.0, 0.0}, {0.0, 0.6}, {0.8, 0.0}});
  std::vector<complex> po1 = normalized({{1.0, 0.0}, {0.3, -0.4}, {0.0, 0.0}});
  std::vector<complex> po2 = normalized({{0.0, 0.0}, {0.5, 0.1}, {0.9, 0.0}});
  std::vector<complex> pc = normalized({{0.0, 0.0}, {1.0, 0.5}, {0.0, 0.0}});

  // Narrow-support wavefunctions for the system partners keep the sparse
  // evolution small; the observer partners stay fully delocalized.
  auto two_cell = [&](unsigned seed) {
    auto v = fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, seed);
    v[2] = 0.0;
    return normalized(v);
  };
  FictitiousFieldSpec f1{"zS1", "S1", two_cell(21)};
  FictitiousFieldSpec f2{"zS2", "S2", two_cell(22)};
  FictitiousFieldSpec fo1{"zO1", "O1",
                          fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, 23)};
  FictitiousFieldSpec fo2{"zO2", "O2",
                          fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, 24)};
  FictitiousFieldSpec fc{"zC", "C",
                         fictitious_wavefunction(lat, FictitiousShape::gaussian, 1, 0.8, 0)};

  std::vector<DHGenerator> gens = {build_singlet_generator(modes, "S1", p1, "S2", p2, f1, f2),
                                   build_pair_generator(modes, "O2", {{0, 1.0}}, po2, fo2),
                                   build_pair_generator(modes, "O1", {{0, 1.0}}, po1, fo1),
                                   build_pair_generator(modes, "C", {{0, 1.0}}, pc, fc)};

  // The dressed two-wing state, built in the same operator order as the
  // generator product: comparator, observers, then the dressed singlet.
  SectorState s = apply_smeared_creator(SectorState::vacuum(), modes, "zS2", 0, f2.wavefunction);
  s = apply_smeared_creator(s, modes, "zS1", 0, f1.wavefunction);
  SectorState up_down =
      apply_smeared_creator(apply_smeared_creator(s, modes, "S2", 2, p2), modes, "S1", 1, p1);
  SectorState down_up =
      apply_smeared_creator(apply_smeared_creator(s, modes, "S2", 1, p2), modes, "S1", 2, p1);
  up_down.add_scaled(down_up, -1.0);
  up_down.scale(1.0 / std::sqrt(2.0));
  s = std::move(up_down);
  s = apply_smeared_creator(s, modes, "zO2", 0, fo2.wavefunction);
  s = apply_smeared_creator(s, modes, "O2", 0, po2);
  s = apply_smeared_creator(s, modes, "zO1", 0, fo1.wavefunction);
  s = apply_smeared_creator(s, modes, "O1", 0, po1);
  s = apply_smeared_creator(s, modes, "zC", 0, fc.wavefunction);
  s = apply_smeared_creator(s, modes, "C", 0, pc);
  REQUIRE(std::abs(s.norm_sq() - 1.0) < 1e-12);

  SectorState undone = dh_apply(s, gens, true);
  REQUIRE(std::abs(fidelity_with_vacuum(undone) - 1.0) < 1e-8);

  SECTION("generators commute when applied to the dressed state") {
    for (auto [a, b] : {std::pair{0, 1}, {0, 3}, {2, 3}}) {
      SectorState ab = apply_terms(apply_terms(s, gens[a].terms), gens[b].terms);
      SectorState ba = apply_terms(apply_terms(s, gens[b].terms), gens[a].terms);
      REQUIRE(state_distance(ab, ba) < 1e-13);
    }
  }
}

TEST_CASE("physical expectations ignore the fictitious wavefunction draw") {
  SingleObserver base;
  SectorState plain = base.plain_state();
  std::vector<SectorState> draws;
  for (unsigned seed : {101u, 202u, 303u})
    draws.push_back(SingleObserver(seed, seed + 1).dressed_state());

  const auto& m = base.modes;
  std::vector<OperatorTerm> observer_count;
  for (int x = 0; x < 2; ++x)
    observer_count.push_back({1.0, {std::uint32_t(m.rank("O", 0, x))},
                              {std::uint32_t(m.rank("O", 0, x))}});
  std::vector<OperatorTerm> spin_flip{
      {complex(0.3, 0.4), {std::uint32_t(m.rank("S", 1, 0))}, {std::uint32_t(m.rank("S", 2, 1))}},
      {complex(0.3, -0.4), {std::uint32_t(m.rank("S", 2, 1))}, {std::uint32_t(m.rank("S", 1, 0))}}};

  for (const auto& obs : {observer_count, spin_flip}) {
    auto rep = expectation_equivalence(m, obs, plain, draws);
    REQUIRE(rep.max_deviation < 1e-10);
  }

  std::vector<OperatorTerm> forbidden{
      {1.0, {std::uint32_t(m.rank("zS", 0, 0))}, {std::uint32_t(m.rank("zS", 0, 0))}}};
  REQUIRE_THROWS_AS(expectation_equivalence(m, forbidden, plain, draws),
                    std::invalid_argument);
}

TEST_CASE("transformed observer field: closed form, invariants, locality") {
  Lattice lat(1, 3, 1.0);
  ModeTable modes(lat, {SpeciesSpec::observer("O", 1.0), SpeciesSpec::fictitious_field("zO")});
  const int n = modes.total_modes();
  std::vector<complex> packet = normalized({{0.8, 0.0}, {0.0, 0.6}, {0.0, 0.0}});
  FictitiousFieldSpec fict{"zO", "O",
                           fictitious_wavefunction(lat, FictitiousShape::random_shape, 0, 1.0, 7)};
  auto g = build_pair_generator(modes, "O", {{0, 1.0}}, packet, fict);

  DenseMatrix v = dense::from_action(
      n, [&](const SectorState& s) { return dh_apply(s, {g}, false); });
  const int dim = 1 << n;
  REQUIRE((v.adjoint() * v - DenseMatrix::Identity(dim, dim)).norm() < 1e-10);

  auto transformed = [&](int label, int cell) {
    DenseMatrix a = dense::annihilation(n, modes.rank("O", label, cell));
    return DenseMatrix(v.adjoint() * a * v);
  };

  SECTION("record component is untouched, pointer component matches closed form") {
    for (int x = 0; x < 3; ++x) {
      DenseMatrix a1 = dense::annihilation(n, modes.rank("O", 1, x));
      REQUIRE((transformed(1, x) - a1).norm() < 1e-12);
      DenseMatrix closed =
          dense::from_terms(n, dh_closed_form_field(modes, "O", fict, packet, 0, x));
      REQUIRE((transformed(0, x) - closed).norm() < 1e-9);
    }
  }

  SECTION("transformed fields keep canonical anticommutators") {
    DenseMatrix t0 = transformed(0, 0), t1 = transformed(0, 1);
    REQUIRE((t0 * t0.adjoint() + t0.adjoint() * t0 - DenseMatrix::Identity(dim, dim)).norm() <
            1e-10);
    REQUIRE((t0 * t1.adjoint() + t1.adjoint() * t0).norm() < 1e-10);
    REQUIRE((t0 * t1 + t1 * t0).norm() < 1e-10);
  }

  SECTION("footprint stays inside the packet and vanishes far from it") {
    DenseMatrix a0 = dense::annihilation(n, modes.rank("O", 0, 0));
    auto fp = locality_footprint(modes, DenseMatrix(transformed(0, 0) - a0));
    REQUIRE(fp.linear_residual < 1e-10);
    REQUIRE(fp.physical_weights[0] > 0.1);
    REQUIRE(fp.physical_weights[1] > 0.1);
    REQUIRE(fp.physical_weights[2] < 1e-10);
    REQUIRE(fp.support_radius(lat, 0, 1e-6) <= 1.0 + 1e-12);

    DenseMatrix afar = dense::annihilation(n, modes.rank("O", 0, 2));
    auto far = locality_footprint(modes, DenseMatrix(transformed(0, 2) - afar));
    REQUIRE(far.total_physical() < 1e-8);
  }

  SECTION("fictitious choice moves only the fictitious part of the footprint") {
    FictitiousFieldSpec local{"zO", "O", {0.0, 1.0, 0.0}};
    FictitiousFieldSpec uniform{"zO", "O",
                                fictitious_wavefunction(lat, FictitiousShape::uniform)};
    std::vector<LocalityFootprint> fps;
    for (const auto& f : {local, uniform}) {
      auto gf = build_pair_generator(modes, "O", {{0, 1.0}}, packet, f);
      DenseMatrix vf = dense::from_action(
          n, [&](const SectorState& s) { return dh_apply(s, {gf}, false); });
      DenseMatrix a0 = dense::annihilation(n, modes.rank("O", 0, 0));
      fps.push_back(locality_footprint(modes, DenseMatrix(vf.adjoint() * a0 * vf - a0)));
    }
    REQUIRE(fps[0].fictitious_weights[0] < 1e-10);
    REQUIRE(fps[0].fictitious_weights[1] > 0.1);
    REQUIRE(fps[0].fictitious_weights[2] < 1e-10);
    for (double w : fps[1].fictitious_weights) REQUIRE(w > 0.1);
    for (int c = 0; c < 3; ++c)
      REQUIRE(std::abs(fps[0].physical_weights[c] - fps[1].physical_weights[c]) < 1e-9);
  }
}
