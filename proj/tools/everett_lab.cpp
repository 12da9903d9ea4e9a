// Command line front end: scenario runs, angle scans, dressing checks and the
// operator-algebra / tail-integral self-tests behind one executable.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "evlab/config.hpp"
#include "evlab/csv.hpp"
#include "evlab/suites.hpp"

namespace {

using namespace evlab;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::string backend;
  unsigned seed = 1;
  bool quiet = false;
};

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

/// Prints every check; returns 0 iff all passed, otherwise 1 after naming the
/// first failure with its measured value.
int report_checks(const std::vector<CheckResult>& checks, bool quiet) {
  for (const auto& c : checks) {
    if (!quiet || !c.pass)
      std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << "  value=" << format_number(c.value)
                << " tolerance=" << format_number(c.tolerance) << "\n";
  }
  for (const auto& c : checks) {
    if (!c.pass) {
      std::cerr << "check failed: " << c.name << " value=" << format_number(c.value) << "\n";
      return 1;
    }
  }
  return 0;
}

ScenarioSpec scenario_for_run(const GlobalOpts& g, const ScenarioSpec& fallback) {
  ScenarioSpec sc = fallback;
  if (!g.config_path.empty()) {
    FlatConfig cfg = FlatConfig::load(g.config_path);
    sc = scenario_from_config(cfg);
    cfg.reject_unconsumed();
  }
  if (!g.backend.empty()) sc.backend = backend_from_name(g.backend);
  return sc;
}

int cmd_run_eprb(const GlobalOpts& g) {
  ScenarioSpec sc = scenario_for_run(g, default_eprb_scenario());
  ResultRecord rec = run_eprb(sc);
  const Lattice lat = sc.lattice();

  FlatConfig record = scenario_to_config(rec.spec);
  record.set("result.epsilon_used", rec.epsilon_used);
  for (const auto& r : rec.results) {
    for (const auto& [key, v] : r.probabilities) record.set("result." + r.backend + ".prob." + key, v);
    record.set("result." + r.backend + ".norm_residual", r.norm_residual);
  }
  for (const auto& [key, v] : rec.deviations) record.set("result.deviation." + key, v);

  CsvTable densities({"backend", "species", "label", "time", "cell", "x", "value"});
  CsvTable observers({"backend", "species", "label", "probability", "centroid_x", "cell_lo", "cell_hi"});
  for (const auto& r : rec.results) {
    for (const auto& f : r.densities)
      for (int c = 0; c < lat.cells(); ++c)
        densities.row().add(r.backend).add(f.species).add(f.label).add(f.time).add(c)
            .add(lat.center(c)[0]).add(f.values[c]);
    for (const auto& rec_obs : r.observers) {
      const DensityField* field = nullptr;
      for (const auto& f : r.densities)
        if (f.species == rec_obs.species && f.label == rec_obs.label) field = &f;
      double cx = field ? rec_obs.centroid(lat, *field)[0] : 0.0;
      observers.row().add(r.backend).add(rec_obs.species).add(rec_obs.label)
          .add(rec_obs.probability).add(cx).add(rec_obs.cells.front()).add(rec_obs.cells.back());
    }
  }

  std::filesystem::create_directories(g.out_dir);
  write_file(std::filesystem::path(g.out_dir) / "result.txt", record.serialize());
  write_file(std::filesystem::path(g.out_dir) / "densities.csv", densities.str());
  write_file(std::filesystem::path(g.out_dir) / "observers.csv", observers.str());

  if (!g.quiet) {
    for (const auto& r : rec.results)
      for (const auto& [key, v] : r.probabilities)
        std::cout << r.backend << " " << key << " = " << format_number(v) << "\n";
    for (const auto& [key, v] : rec.deviations)
      std::cout << "deviation " << key << " = " << format_number(v) << "\n";
  }
  return 0;
}

int cmd_scan(const GlobalOpts& g) {
  ScenarioSpec base = scan_base_scenario();
  int points = 13;
  if (!g.config_path.empty()) {
    FlatConfig cfg = FlatConfig::load(g.config_path);
    points = cfg.get_int_or("scan.points", 13);
    base = scenario_from_config(cfg);
    cfg.reject_unconsumed();
  }
  if (points < 2) throw std::invalid_argument("scan.points must be >= 2");
  if (!g.backend.empty()) base.backend = backend_from_name(g.backend);

  auto rows = scan_correlation(base, default_angle_grid(points));
  CsvTable table({"theta12_rad", "p_c1", "p_c1_normalized", "backend", "beta"});
  for (const auto& r : rows)
    table.row().add(r.theta12_rad).add(r.p_c1).add(r.p_c1_normalized).add(r.backend).add(r.beta);

  std::filesystem::create_directories(g.out_dir);
  write_file(std::filesystem::path(g.out_dir) / "scan.csv", table.str());
  if (!g.quiet)
    std::cout << "scan: " << rows.size() << " rows, backend " << backend_name(base.backend) << "\n";
  return 0;
}

int cmd_dh_check(const GlobalOpts& g, const std::string& which) {
  std::vector<CheckResult> checks;
  auto extend = [&checks](std::vector<CheckResult> more) {
    for (auto& c : more) checks.push_back(std::move(c));
  };
  if (which == "single" || which == "both") {
    extend(dh_single_suite(g.seed));
    extend(dh_operator_suite(g.seed));
    extend(dh_independence_suite(g.seed));
  }
  if (which == "eprb" || which == "both") extend(dh_eprb_suite(g.seed));
  return report_checks(checks, g.quiet);
}

int cmd_tail(const GlobalOpts& g) {
  TailIntegralSpec spec = default_tail_spec();
  double x = 0.0;
  if (!g.config_path.empty()) {
    FlatConfig cfg = FlatConfig::load(g.config_path);
    spec.packet.alpha = cfg.get_double_or("tail.alpha", spec.packet.alpha);
    spec.packet.mass = cfg.get_double_or("tail.mass", spec.packet.mass);
    spec.t01 = cfg.get_double_or("tail.t01", spec.t01);
    spec.t23 = cfg.get_double_or("tail.t23", spec.t23);
    spec.gate_center = cfg.get_double_or("tail.gate_center", spec.gate_center);
    x = cfg.get_double_or("tail.x", x);
    cfg.reject_unconsumed();
  }
  TailReport rep = tail_report(spec, x, default_tail_apertures(spec));

  CsvTable table({"alpha_tilde_a2", "abs_tail", "slope"});
  for (size_t i = 0; i < rep.abscissa.size(); ++i)
    table.row().add(rep.abscissa[i]).add(rep.magnitude[i]).add(rep.slope);
  std::filesystem::create_directories(g.out_dir);
  write_file(std::filesystem::path(g.out_dir) / "tail.csv", table.str());
  return report_checks(tail_suite(rep), g.quiet);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collapse-free fermionic measurement model: scenario runs and self-checks"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "flat key = value configuration file");
  app.add_option("--out", g.out_dir, "output directory (default: current)");
  app.add_option("--seed", g.seed, "seed for randomized draws");
  app.add_option("--backend", g.backend, "backend override")
      ->check(CLI::IsMember({"lattice", "analytic", "both"}));
  app.add_flag("--quiet", g.quiet, "only report failures");

  auto* algebra = app.add_subcommand("algebra-check", "anticommutators, Hermiticity, unitarity");
  bool inject = false;
  algebra->add_flag("--inject-sign-bug", inject,
                    "drop the fermionic parity signs to demonstrate detection");
  auto* run = app.add_subcommand("run-eprb", "run one scenario, write result.txt and CSVs");
  auto* scan = app.add_subcommand("scan", "sweep the analyzer relative angle, write scan.csv");
  auto* dh = app.add_subcommand("dh-check", "dressed-observer rotation checks");
  std::string dh_scenario = "both";
  dh->add_option("--scenario", dh_scenario, "which setup to check")
      ->check(CLI::IsMember({"single", "eprb", "both"}));
  auto* tail = app.add_subcommand("tail", "gated tail-integral decay curve, write tail.csv");
  for (CLI::App* s : {algebra, run, scan, dh, tail}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (algebra->parsed()) return report_checks(evlab::algebra_suite(inject), g.quiet);
    if (run->parsed()) return cmd_run_eprb(g);
    if (scan->parsed()) return cmd_scan(g);
    if (dh->parsed()) return cmd_dh_check(g, dh_scenario);
    if (tail->parsed()) return cmd_tail(g);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
