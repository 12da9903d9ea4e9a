#ifndef EVLAB_MODEL_HPP
#define EVLAB_MODEL_HPP

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evlab/fock.hpp"

namespace evlab {

/// Spin quantization axis. The unit vector is the standard spherical one,
/// (sin t cos p, sin t sin p, cos t).
struct SpinAxis {
  double theta = 0.0;
  double phi = 0.0;

  Vec3 n() const {
    return Vec3{{std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)}};
  }
};

/// Gaussian packet (alpha/pi)^(dim/4) exp(-alpha|x-x0|^2/2 + i m v.(x-x0)/hbar).
struct WavepacketSpec {
  Vec3 center;
  double alpha = 1.0;  // width parameter; packet width is alpha^(-1/2)
  Vec3 velocity;
  double mass = 1.0;

  double width() const { return 1.0 / std::sqrt(alpha); }
};

struct CouplingSpec {
  double kappa = 1.0;
  double kappa_C = 1.0;
  double range_a = 4.0;   // observer aperture (shared by both wings by default)
  double range_aC = 4.0;  // comparator aperture
};

/// Coefficients of phi+_{n,i} in the fixed internal basis {label 1, label 2}:
/// up:   ( e^{-i phi/2} cos(t/2),  e^{+i phi/2} sin(t/2) )
/// down: (-e^{-i phi/2} sin(t/2),  e^{+i phi/2} cos(t/2) )
inline std::array<complex, 2> rotated_spin_coeffs(const SpinAxis& axis, int up_or_down) {
  const complex em = std::exp(complex(0.0, -axis.phi / 2.0));
  const complex ep = std::exp(complex(0.0, +axis.phi / 2.0));
  const double c = std::cos(axis.theta / 2.0), s = std::sin(axis.theta / 2.0);
  if (up_or_down == 1) return {em * c, ep * s};
  if (up_or_down == 2) return {-em * s, ep * c};
  throw std::invalid_argument("spin component must be 1 (up) or 2 (down)");
}

/// Two-term creator combination for a spin component along `axis` at `cell`.
inline std::vector<std::pair<complex, std::uint32_t>> rotated_creator(
    const ModeTable& modes, const std::string& species, const SpinAxis& axis, int up_or_down,
    int cell) {
  const auto& sp = modes.spec(species);
  if (sp.internal_labels != std::vector<int>{1, 2})
    throw std::invalid_argument("rotated_creator requires a system species (labels {1,2})");
  auto coeffs = rotated_spin_coeffs(axis, up_or_down);
  return {{coeffs[0], std::uint32_t(modes.rank(species, 1, cell))},
          {coeffs[1], std::uint32_t(modes.rank(species, 2, cell))}};
}

/// Lattice packet amplitude at a cell, in lattice normalization (extra dx^(dim/2)
/// relative to the continuum wavefunction so that sum |psi|^2 = 1).
inline complex packet_amplitude(const Lattice& lat, const WavepacketSpec& w, int cell) {
  Vec3 x = lat.center(cell);
  Vec3 d = x - w.center;
  double phase = w.mass * dot(w.velocity, d) / hbar;
  double gauss = std::exp(-0.5 * w.alpha * dot(d, d));
  double norm_factor = std::pow(w.alpha / M_PI, 0.25 * lat.dim) * std::pow(lat.dx, 0.5 * lat.dim);
  return norm_factor * gauss * std::exp(complex(0.0, phase));
}

/// Per-cell packet vector; validates that the lattice resolves the packet
/// (discretized norm within 1e-6 of 1, boundary tails below 1e-8).
inline std::vector<complex> packet_vector(const Lattice& lat, const WavepacketSpec& w,
                                          bool validate = true) {
  std::vector<complex> v(lat.cells());
  double n2 = 0.0, edge = 0.0;
  for (int c = 0; c < lat.cells(); ++c) {
    v[c] = packet_amplitude(lat, w, c);
    n2 += std::norm(v[c]);
    auto k = lat.coords(c);
    for (int d = 0; d < lat.dim; ++d)
      if (k[d] == 0 || k[d] == lat.sites - 1) edge = std::max(edge, std::abs(v[c]));
  }
  if (validate) {
    if (std::abs(n2 - 1.0) > 1e-6)
      throw std::invalid_argument("wavepacket not resolved: discretized norm deviates by " +
                                  std::to_string(std::abs(n2 - 1.0)));
    if (edge > 1e-8)
      throw std::invalid_argument("wavepacket tail reaches the lattice boundary");
    if (w.mass * evlab::norm(w.velocity) * lat.dx / hbar > M_PI / 4.0 + 1e-12)
      throw std::invalid_argument("packet velocity violates the aliasing bound m|v|dx/hbar <= pi/4");
  }
  return v;
}

/// Discrete-Laplacian kinetic terms for one species, one copy per internal
/// label: coefficient hbar^2/(2 m dx^2), stencil -1 on neighbor hops and
/// +2*dim on the diagonal.
inline std::vector<OperatorTerm> build_free_hamiltonian(const ModeTable& modes,
                                                        const std::string& species) {
  const auto& sp = modes.spec(species);
  if (sp.fictitious)
    throw std::invalid_argument("fictitious fields have no kinetic terms");
  const Lattice& lat = modes.lattice();
  const double c0 = hbar * hbar / (2.0 * sp.mass * lat.dx * lat.dx);
  std::vector<OperatorTerm> terms;
  for (int label : sp.internal_labels) {
    for (int cell = 0; cell < lat.cells(); ++cell) {
      std::uint32_t here = std::uint32_t(modes.rank(species, label, cell));
      terms.push_back({complex(2.0 * lat.dim * c0), {here}, {here}});
      auto k = lat.coords(cell);
      for (int d = 0; d < lat.dim; ++d) {
        for (int step : {-1, +1}) {
          auto kk = k;
          kk[d] += step;
          if (kk[d] < 0 || kk[d] >= lat.sites) {
            if (lat.boundary == Boundary::open) continue;
            kk[d] = (kk[d] + lat.sites) % lat.sites;
          }
          std::uint32_t there = std::uint32_t(modes.rank(species, label, lat.cell_of(kk)));
          terms.push_back({complex(-c0), {here}, {there}});
        }
      }
    }
  }
  return terms;
}

/// Measurement interaction for wing p: i kappa (chi+_1 chi_0 - chi+_0 chi_1)(x)
/// gated by theta(a - |x-y|) times the density of the system spin-up component
/// along `axis` at y. In lattice normalization the pair weight dx^(2 dim)
/// cancels against the two density normalizations, leaving i kappa per pair.
inline std::vector<OperatorTerm> build_measurement_hamiltonian(
    const ModeTable& modes, const std::string& observer_species, const std::string& system_species,
    const SpinAxis& axis, double kappa, double range_a) {
  const Lattice& lat = modes.lattice();
  auto up = rotated_spin_coeffs(axis, 1);
  std::vector<OperatorTerm> terms;
  for (int x = 0; x < lat.cells(); ++x) {
    std::uint32_t chi0 = std::uint32_t(modes.rank(observer_species, 0, x));
    std::uint32_t chi1 = std::uint32_t(modes.rank(observer_species, 1, x));
    for (int y = 0; y < lat.cells(); ++y) {
      if (lat.distance(x, y) > range_a) continue;
      std::array<std::uint32_t, 2> phi{std::uint32_t(modes.rank(system_species, 1, y)),
                                       std::uint32_t(modes.rank(system_species, 2, y))};
      for (int j = 0; j < 2; ++j) {
        for (int k = 0; k < 2; ++k) {
          complex w = up[j] * std::conj(up[k]);
          // i kappa chi+_1 chi_0 phi+_j phi_k  -  i kappa chi+_0 chi_1 phi+_j phi_k
          terms.push_back(normal_order(complex(0.0, kappa) * w,
                                       {{true, chi1}, {false, chi0}, {true, phi[j]}, {false, phi[k]}}));
          terms.push_back(normal_order(complex(0.0, -kappa) * w,
                                       {{true, chi0}, {false, chi1}, {true, phi[j]}, {false, phi[k]}}));
        }
      }
    }
  }
  return terms;
}

/// Comparator interaction: i kappa_C (xi+_1 xi_0 - xi+_0 xi_1)(x) gated to both
/// observers' awareness-1 densities at y and z.
inline std::vector<OperatorTerm> build_comparator_hamiltonian(
    const ModeTable& modes, const std::string& comparator_species, const std::string& observer1,
    const std::string& observer2, double kappa_C, double range_aC) {
  const Lattice& lat = modes.lattice();
  std::vector<OperatorTerm> terms;
  for (int x = 0; x < lat.cells(); ++x) {
    std::uint32_t xi0 = std::uint32_t(modes.rank(comparator_species, 0, x));
    std::uint32_t xi1 = std::uint32_t(modes.rank(comparator_species, 1, x));
    for (int y = 0; y < lat.cells(); ++y) {
      if (lat.distance(x, y) > range_aC) continue;
      std::uint32_t n1 = std::uint32_t(modes.rank(observer1, 1, y));
      for (int z = 0; z < lat.cells(); ++z) {
        if (lat.distance(x, z) > range_aC) continue;
        std::uint32_t n2 = std::uint32_t(modes.rank(observer2, 1, z));
        terms.push_back(normal_order(
            complex(0.0, kappa_C),
            {{true, xi1}, {false, xi0}, {true, n1}, {false, n1}, {true, n2}, {false, n2}}));
        terms.push_back(normal_order(
            complex(0.0, -kappa_C),
            {{true, xi0}, {false, xi1}, {true, n1}, {false, n1}, {true, n2}, {false, n2}}));
      }
    }
  }
  return terms;
}

/// One smeared creator sum_c v[c] a+_{species,label,c} applied to a state.
inline SectorState apply_smeared_creator(const SectorState& state, const ModeTable& modes,
                                         const std::string& species, int label,
                                         const std::vector<complex>& v) {
  SectorState out;
  out.prune_threshold = state.prune_threshold;
  const Lattice& lat = modes.lattice();
  for (int c = 0; c < lat.cells(); ++c) {
    if (std::abs(v[c]) < state.prune_threshold) continue;
    std::uint32_t mode = std::uint32_t(modes.rank(species, label, c));
    for (const auto& [cfg, a] : state.amplitudes()) {
      if (detail::contains(cfg, mode)) continue;
      Config nc = cfg;
      int sign = detail::parity_below(cfg, mode);
      nc.insert(std::lower_bound(nc.begin(), nc.end(), mode), mode);
      out.add(nc, double(sign) * v[c] * a);
    }
  }
  out.prune();
  return out;
}

struct PacketFactor {
  std::string species;
  WavepacketSpec packet;
  // Spin superposition sum_i b_i phi+_i for system species; for observer or
  // comparator species exactly one entry selecting the internal label.
  std::vector<std::pair<int, complex>> internal_amplitudes;
};

struct SingletPair {
  std::string species_a;  // wing-1 system
  std::string species_b;  // wing-2 system
  WavepacketSpec packet_a;
  WavepacketSpec packet_b;
};

/// Product of one-quantum packets, with an optional two-species spin singlet
/// (|1>|2> - |2>|1>)/sqrt(2); normalized on return.
inline SectorState build_packet_state(const ModeTable& modes,
                                      const std::vector<PacketFactor>& factors,
                                      const std::optional<SingletPair>& singlet = std::nullopt) {
  SectorState state = SectorState::vacuum();
  for (const auto& f : factors) {
    auto v = packet_vector(modes.lattice(), f.packet);
    SectorState next;
    next.prune_threshold = state.prune_threshold;
    for (const auto& [label, b] : f.internal_amplitudes) {
      if (std::abs(b) == 0.0) continue;
      auto scaled = v;
      for (auto& z : scaled) z *= b;
      next.add_scaled(apply_smeared_creator(state, modes, f.species, label, scaled), 1.0);
    }
    state = std::move(next);
  }
  if (singlet) {
    auto va = packet_vector(modes.lattice(), singlet->packet_a);
    auto vb = packet_vector(modes.lattice(), singlet->packet_b);
    SectorState up_down = apply_smeared_creator(
        apply_smeared_creator(state, modes, singlet->species_b, 2, vb), modes, singlet->species_a, 1,
        va);
    SectorState down_up = apply_smeared_creator(
        apply_smeared_creator(state, modes, singlet->species_b, 1, vb), modes, singlet->species_a, 2,
        va);
    up_down.add_scaled(down_up, -1.0);
    state = std::move(up_down);
  }
  state.prune();
  state.normalize();
  return state;
}

/// Per-cell expectation of the number density a+ a for one internal component.
inline std::vector<double> density_field(const SectorState& state, const ModeTable& modes,
                                         const std::string& species, int label) {
  std::vector<double> d(modes.lattice().cells(), 0.0);
  int si = modes.species_index(species);
  int slot = modes.spec(species).slot_of(label);
  for (const auto& [cfg, a] : state.amplitudes()) {
    for (auto r : cfg) {
      auto dec = modes.decode(int(r));
      if (dec.species_idx == si && dec.internal_slot == slot) d[dec.cell] += std::norm(a);
    }
  }
  return d;
}

}  // namespace evlab

#endif
