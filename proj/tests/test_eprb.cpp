#include <catch2/catch_amalgamated.hpp>

#include "evlab/eprb.hpp"

using namespace evlab;
using Catch::Matchers::ContainsSubstring;

namespace {

std::vector<complex> normalized(std::vector<complex> v) {
  double n2 = 0.0;
  for (const auto& z : v) n2 += std::norm(z);
  for (auto& z : v) z /= std::sqrt(n2);
  return v;
}

const BackendResult& pick(const ResultRecord& rec, const std::string& backend) {
  for (const auto& r : rec.results)
    if (r.backend == backend) return r;
  throw std::runtime_error("backend result missing");
}

const LocalizedObserver& pick_observer(const BackendResult& r, const std::string& species,
                                       int label) {
  const LocalizedObserver* best = nullptr;
  for (const auto& o : r.observers)
    if (o.species == species && o.label == label && (!best || o.probability > best->probability))
      best = &o;
  if (!best) throw std::runtime_error("no localized record for " + species);
  return *best;
}

const DensityField& pick_density(const BackendResult& r, const std::string& species, int label) {
  for (const auto& f : r.densities)
    if (f.species == species && f.label == label) return f;
  throw std::runtime_error("no density for " + species);
}

}  // namespace

TEST_CASE("density of a fresh observer packet sits entirely in label 0") {
  Lattice lat(1, 32, 1.0);
  ModeTable modes(lat, {SpeciesSpec::observer("O", 2.0)});
  auto packet = packet_vector(lat, WavepacketSpec{Vec3{{16.0, 0.0, 0.0}}, 1.0 / 2.25, Vec3{}, 2.0});
  SectorState s = apply_smeared_creator(SectorState::vacuum(), modes, "O", 0, packet);

  auto f0 = density(s, modes, "O", 0);
  auto f1 = density(s, modes, "O", 1);
  REQUIRE(std::abs(f0.total() - 1.0) < 1e-8);
  REQUIRE(f1.total() < 1e-14);
  REQUIRE(density(SectorState::vacuum(), modes, "O", 0).total() == 0.0);
}

TEST_CASE("localize splits the superlevel support into components") {
  Lattice lat(1, 10, 1.0);
  DensityField field{"O", 1, 0.0, std::vector<double>(10, 0.0)};

  SECTION("single spike") {
    field.values[4] = 0.5;
    auto recs = localize(field, lat, 1e-6);
    REQUIRE(recs.size() == 1);
    REQUIRE(recs[0].cells == std::vector<int>{4});
    REQUIRE(std::abs(recs[0].probability - 0.5) < 1e-15);
    REQUIRE(std::abs(recs[0].centroid(lat, field)[0] - 4.5) < 1e-12);
  }

  SECTION("two disjoint bumps keep their masses") {
    field.values[1] = 0.15;
    field.values[2] = 0.15;
    field.values[7] = 0.7;
    auto recs = localize(field, lat, 1e-6);
    REQUIRE(recs.size() == 2);
    REQUIRE(std::abs(recs[0].probability - 0.3) < 1e-15);
    REQUIRE(recs[0].cells == std::vector<int>{1, 2});
    REQUIRE(std::abs(recs[1].probability - 0.7) < 1e-15);
  }

  SECTION("empty field and invalid epsilon") {
    REQUIRE(localize(field, lat, 1e-6).empty());
    REQUIRE_THROWS_AS(localize(field, lat, 0.0), std::invalid_argument);
  }
}

TEST_CASE("scenario audit names the violated condition") {
  ScenarioSpec sc = default_eprb_scenario();

  SECTION("accepted default") { REQUIRE_NOTHROW(audit_scenario(sc)); }

  SECTION("missing packet") {
    sc.packets.erase("C");
    REQUIRE_THROWS_WITH(audit_scenario(sc), ContainsSubstring("S1"));
  }

  SECTION("wings too close") {
    sc.packets["S2"].center = Vec3{{18.0, 0.0, 0.0}};
    sc.packets["O2"].center = Vec3{{18.0, 0.0, 0.0}};
    REQUIRE_THROWS_WITH(audit_scenario(sc), ContainsSubstring("S2"));
  }

  SECTION("comparator gate out of reach") {
    sc.coupling.range_aC = 5.0;
    REQUIRE_THROWS_WITH(audit_scenario(sc), ContainsSubstring("S4"));
  }

  SECTION("wing gate misaligned") {
    sc.packets["O1"].center = Vec3{{16.0, 0.0, 0.0}};
    REQUIRE_THROWS_WITH(audit_scenario(sc), ContainsSubstring("S4"));
  }

  SECTION("unnormalized prepared spin") {
    ScenarioSpec one;
    one.kind = "single_observer";
    one.packets = {{"S", sc.packets["S1"]}, {"O", sc.packets["O1"]}};
    one.spin_coeffs = {1.0, 0.5};
    REQUIRE_THROWS_WITH(audit_scenario(one), ContainsSubstring("S3"));
  }

  SECTION("bad window ordering") {
    sc.times = {0.0, 0.0, 0.0, 1.0, 1.0};
    REQUIRE_THROWS_AS(audit_scenario(sc), std::invalid_argument);
  }
}

TEST_CASE("default scenario: halves, correlation and localization on both backends") {
  ScenarioSpec sc = default_eprb_scenario();
  ResultRecord rec = run_eprb(sc);

  const auto& mn = pick(rec, "analytic");
  const auto& lat_res = pick(rec, "lattice");
  double q = 0.25 * (1.0 - dot(sc.n1.n(), sc.n2.n()));
  double p_exact = std::pow(std::sin(sc.beta), 2) * q;

  REQUIRE(std::abs(mn.probabilities.at("O1_up") - 0.5) < 1e-12);
  REQUIRE(std::abs(mn.probabilities.at("O2_up") - 0.5) < 1e-12);
  REQUIRE(std::abs(mn.probabilities.at("C_1") - p_exact) < 1e-15);

  REQUIRE(rec.deviations.at("O1_up") < 1e-2);
  REQUIRE(rec.deviations.at("O2_up") < 1e-2);
  REQUIRE(rec.deviations.at("C_1") < 2e-4);
  REQUIRE(lat_res.norm_residual < 1e-8);

  SECTION("localized observers sit on the classical positions") {
    for (const auto* r : {&mn, &lat_res}) {
      for (const std::string obs : {"O1", "O2"}) {
        const auto& up = pick_observer(*r, obs, 1);
        REQUIRE(std::abs(up.probability - 0.5) < 1e-2);
        const auto& f = pick_density(*r, obs, 1);
        double x = up.centroid(sc.lattice(), f)[0];
        double expected = sc.position(obs, f.time)[0];
        REQUIRE(std::abs(x - expected) < 0.5 * sc.dx);
      }
    }
  }

  SECTION("refined lattice tightens the deviation") {
    ScenarioSpec fine = refined(sc);
    ResultRecord rec2 = run_eprb(fine);
    REQUIRE(rec2.deviations.at("O1_up") < 2e-3);
    REQUIRE(rec2.deviations.at("O2_up") < 2e-3);
    REQUIRE(rec2.deviations.at("C_1") < 2e-3);
  }
}

TEST_CASE("wing marginal ignores the remote analyzer on both backends") {
  ScenarioSpec sc = default_eprb_scenario();
  auto p1 = [&](double theta2) {
    sc.n2.theta = theta2;
    ResultRecord rec = run_eprb(sc);
    return std::pair{pick(rec, "analytic").probabilities.at("O1_up"),
                     pick(rec, "lattice").probabilities.at("O1_up")};
  };
  auto [a_base, l_base] = p1(2.0);
  for (double t2 : {0.0, 1.1, 3.0}) {
    auto [a, l] = p1(t2);
    REQUIRE(std::abs(a - a_base) < 1e-9);
    REQUIRE(std::abs(l - l_base) < 1e-3);
  }
}

TEST_CASE("correlation scan reproduces the singlet curve") {
  ScenarioSpec sc = default_eprb_scenario();
  for (auto& [id, w] : sc.packets) w.alpha = 0.64;  // width 1.25 sharpens the gating
  sc.n1 = SpinAxis{0.0, 0.0};

  auto grid = default_angle_grid();
  REQUIRE(grid.size() == 13);
  REQUIRE(grid.front() == 0.0);
  REQUIRE(std::abs(grid.back() - M_PI) < 1e-15);

  auto rows = scan_correlation(sc, grid);
  REQUIRE(rows.size() == 26);
  for (const auto& row : rows) {
    double expected = 0.5 * (1.0 - std::cos(row.theta12_rad));
    REQUIRE(row.beta == sc.beta);
    if (row.backend == "analytic") {
      REQUIRE(std::abs(row.p_c1_normalized - expected) < 1e-9);
    } else {
      REQUIRE(row.backend == "lattice");
      REQUIRE(std::abs(row.p_c1_normalized - expected) < 1e-2);
    }
  }

  SECTION("axis-swap symmetry of the comparator probability") {
    sc.n1 = SpinAxis{0.4, 0.2};
    auto run_with = [&](double delta) {
      ScenarioSpec s2 = sc;
      s2.n2 = SpinAxis{sc.n1.theta + delta, sc.n1.phi};
      return run_eprb(s2);
    };
    ResultRecord plus = run_with(0.9), minus = run_with(-0.9);
    for (const std::string b : {"analytic", "lattice"})
      REQUIRE(std::abs(pick(plus, b).probabilities.at("C_1") -
                       pick(minus, b).probabilities.at("C_1")) < 1e-9);
  }

  SECTION("worker threads leave the rows bit-identical") {
    std::vector<double> sub(grid.begin(), grid.begin() + 5);
    setenv("EVERETT_LAB_THREADS", "1", 1);
    auto serial = scan_correlation(sc, sub);
    setenv("EVERETT_LAB_THREADS", "3", 1);
    REQUIRE(worker_thread_count() == 3);
    auto parallel = scan_correlation(sc, sub);
    unsetenv("EVERETT_LAB_THREADS");
    REQUIRE(worker_thread_count() >= 1);
    REQUIRE(serial.size() == parallel.size());
    for (size_t i = 0; i < serial.size(); ++i) {
      REQUIRE(serial[i].p_c1 == parallel[i].p_c1);
      REQUIRE(serial[i].backend == parallel[i].backend);
    }
  }
}

TEST_CASE("branch backend matches sparse evolution: one wing with real motion") {
  Lattice lat(1, 4, 1.0);
  std::vector<complex> sys = normalized({{0.7, 0.0}, {0.5, 0.1}, {0.3, 0.2}, {0.1, 0.0}});
  std::vector<complex> obs = normalized({{0.2, 0.0}, {0.9, -0.1}, {0.4, 0.0}, {0.0, 0.3}});
  SpinAxis axis{1.1, 0.4};
  std::array<complex, 2> spin{0.8, complex(0.0, 0.6)};
  const double theta = 1.2;
  std::array<double, 5> times{0.0, 0.2, 0.5, 0.8, 0.8};

  BranchScenario bs;
  bs.lat = lat;
  bs.wing_count = 1;
  bs.system[0] = sys;
  bs.observer[0] = obs;
  bs.system_mass[0] = 2.0;
  bs.observer_mass[0] = 3.0;
  bs.axes[0] = axis;
  bs.times = times;
  bs.theta = theta;
  bs.range_a = 1.5;
  bs.spin_coeffs = spin;
  BranchResult br = run_branches(bs);

  ModeTable modes(lat, {SpeciesSpec::system("S", 2.0), SpeciesSpec::observer("O", 3.0)});
  SectorState s0 = apply_smeared_creator(SectorState::vacuum(), modes, "O", 0, obs);
  SectorState init;
  for (int i = 0; i < 2; ++i) {
    auto scaled = sys;
    for (auto& z : scaled) z *= spin[i];
    init.add_scaled(apply_smeared_creator(s0, modes, "S", i + 1, scaled), 1.0);
  }

  StagePlan plan;
  plan.times = times;
  plan.theta = theta;
  plan.coupling = CouplingSpec{theta / (times[2] - times[1]), 1.0, 1.5, 1.0};
  plan.wings = {{"S", "O", axis}};
  SectorState evolved = run_schedule(init, modes, plan, times[3]);

  double p_up_sparse = 0.0;
  for (int j = 0; j < 2; ++j) {
    auto rho = density_field(evolved, modes, "O", j);
    for (int y = 0; y < lat.cells(); ++y)
      REQUIRE(std::abs(rho[y] - br.observer_density[0][j][y]) < 1e-9);
    if (j == 1)
      for (double v : rho) p_up_sparse += v;
  }
  REQUIRE(std::abs(p_up_sparse - br.p_up[0]) < 1e-9);
}

TEST_CASE("branch backend matches sparse evolution: full two-wing run") {
  Lattice lat(1, 3, 1.0);
  auto delta = [&](int cell) {
    std::vector<complex> v(3, 0.0);
    v[cell] = 1.0;
    return v;
  };
  const double mass = 1e8;
  SpinAxis n1{0.6, 0.3}, n2{1.9, -0.7};
  std::array<double, 5> times{0.0, 0.1, 0.35, 0.6, 0.9};
  const double theta = 0.9, beta = 0.7;

  BranchScenario bs;
  bs.lat = lat;
  bs.system = {delta(0), delta(2)};
  bs.observer = {delta(0), delta(2)};
  bs.comparator = delta(1);
  bs.system_mass = {mass, mass};
  bs.observer_mass = {mass, mass};
  bs.comparator_mass = mass;
  bs.axes = {n1, n2};
  bs.times = times;
  bs.theta = theta;
  bs.theta_C = beta;
  bs.range_a = 1.2;
  bs.range_aC = 1.0;
  BranchResult br = run_branches(bs);

  ModeTable modes(lat, {SpeciesSpec::system("S1", mass), SpeciesSpec::system("S2", mass),
                        SpeciesSpec::observer("O1", mass), SpeciesSpec::observer("O2", mass),
                        SpeciesSpec::observer("C", mass)});
  SectorState s = apply_smeared_creator(SectorState::vacuum(), modes, "C", 0, delta(1));
  s = apply_smeared_creator(s, modes, "O2", 0, delta(2));
  s = apply_smeared_creator(s, modes, "O1", 0, delta(0));
  SectorState up_down = apply_smeared_creator(
      apply_smeared_creator(s, modes, "S2", 2, delta(2)), modes, "S1", 1, delta(0));
  SectorState down_up = apply_smeared_creator(
      apply_smeared_creator(s, modes, "S2", 1, delta(2)), modes, "S1", 2, delta(0));
  up_down.add_scaled(down_up, -1.0);
  up_down.scale(1.0 / std::sqrt(2.0));
  SectorState init = std::move(up_down);

  StagePlan plan;
  plan.times = times;
  plan.theta = theta;
  plan.theta_C = beta;
  plan.coupling =
      CouplingSpec{theta / (times[2] - times[1]), beta / (times[4] - times[3]), 1.2, 1.0};
  plan.wings = {{"S1", "O1", n1}, {"S2", "O2", n2}};
  plan.comparator = "C";

  SECTION("observer densities at the end of the free window") {
    SectorState evolved = run_schedule(init, modes, plan, times[3]);
    for (int p = 0; p < 2; ++p) {
      std::string obs = "O" + std::to_string(p + 1);
      double p_up = 0.0;
      for (int j = 0; j < 2; ++j) {
        auto rho = density_field(evolved, modes, obs, j);
        for (int y = 0; y < lat.cells(); ++y)
          REQUIRE(std::abs(rho[y] - br.observer_density[p][j][y]) < 1e-8);
        if (j == 1)
          for (double v : rho) p_up += v;
      }
      REQUIRE(std::abs(p_up - br.p_up[p]) < 1e-8);
    }
  }

  SECTION("comparator density after its window") {
    SectorState evolved = run_schedule(init, modes, plan, times[4]);
    auto rho = density_field(evolved, modes, "C", 1);
    double p_c1 = 0.0;
    for (int x = 0; x < lat.cells(); ++x) {
      REQUIRE(std::abs(rho[x] - br.comparator_density[x]) < 1e-8);
      p_c1 += rho[x];
    }
    REQUIRE(std::abs(p_c1 - br.p_c1) < 1e-8);
    double q = 0.25 * (1.0 - dot(n1.n(), n2.n()));
    double expected = std::pow(std::sin(beta), 2) * std::pow(std::sin(theta), 4) * q;
    REQUIRE(std::abs(br.p_c1 - expected) < 1e-6);
  }
}

TEST_CASE("moving single-observer run tracks the classical trajectory") {
  ScenarioSpec sc;
  sc.kind = "single_observer";
  sc.n1 = SpinAxis{0.9, 0.5};
  auto u = rotated_spin_coeffs(sc.n1, 1);
  sc.spin_coeffs = {u[0], u[1]};
  WavepacketSpec w{Vec3{{10.0, 0.0, 0.0}}, 1.0 / 2.25, Vec3{{0.5, 0.0, 0.0}}, 1.5};
  sc.packets = {{"S", w}, {"O", w}};
  sc.times = {0.0, 0.5, 0.5, 1.0, 1.0};
  ResultRecord rec = run_eprb(sc);

  for (const std::string b : {"analytic", "lattice"}) {
    const auto& r = pick(rec, b);
    REQUIRE(std::abs(r.probabilities.at("O_up") - 1.0) < (b == "analytic" ? 1e-12 : 1e-2));
    const auto& up = pick_observer(r, "O", 1);
    const auto& f = pick_density(r, "O", 1);
    double x = up.centroid(sc.lattice(), f)[0];
    REQUIRE(std::abs(x - sc.position("O", f.time)[0]) < 0.5 * sc.dx);
  }
}
