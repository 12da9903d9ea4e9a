#ifndef EVLAB_DEUTSCH_HAYDEN_HPP
#define EVLAB_DEUTSCH_HAYDEN_HPP

#include <random>
#include <string>
#include <vector>

#include "evlab/dense.hpp"
#include "evlab/model.hpp"

namespace evlab {

/// A static one-level field dressing one physical quantum, with its own
/// normalized wavefunction.
struct FictitiousFieldSpec {
  std::string id;
  std::string partner;
  std::vector<complex> wavefunction;  // per cell, sum |.|^2 = 1

  void validate(const Lattice& lat) const {
    if (static_cast<int>(wavefunction.size()) != lat.cells())
      throw std::invalid_argument("fictitious wavefunction size mismatch");
    double n2 = 0.0;
    for (const auto& z : wavefunction) n2 += std::norm(z);
    if (std::abs(n2 - 1.0) > 1e-10)
      throw std::invalid_argument("fictitious wavefunction is not normalized");
  }
};

enum class FictitiousShape { gaussian, uniform, random_shape };

inline std::vector<complex> fictitious_wavefunction(const Lattice& lat, FictitiousShape shape,
                                                    int center_cell = 0, double width = 1.0,
                                                    unsigned seed = 0) {
  std::vector<complex> v(lat.cells());
  switch (shape) {
    case FictitiousShape::gaussian: {
      for (int c = 0; c < lat.cells(); ++c) {
        double d = lat.distance(c, center_cell);
        v[c] = std::exp(-0.25 * d * d / (width * width));
      }
      break;
    }
    case FictitiousShape::uniform: {
      for (auto& z : v) z = 1.0;
      break;
    }
    case FictitiousShape::random_shape: {
      std::mt19937 rng(seed);
      std::normal_distribution<double> g;
      for (auto& z : v) z = complex(g(rng), g(rng));
      break;
    }
  }
  double n2 = 0.0;
  for (const auto& z : v) n2 += std::norm(z);
  for (auto& z : v) z /= std::sqrt(n2);
  return v;
}

/// Skew-Hermitian generator W = A - A+ where A is the paper-ordered creator
/// block over supplied wavefunctions.
struct DHGenerator {
  std::string kind;
  std::vector<OperatorTerm> terms;
};

namespace dh_detail {

inline void subtract_adjoint(DHGenerator& g) {
  auto adj = adjoint(g.terms);
  for (auto& t : adj) {
    t.coefficient = -t.coefficient;
    g.terms.push_back(std::move(t));
  }
}

}  // namespace dh_detail

/// W for one dressed quantum: sum_i b_i sum_{y,z} psi_g[y] psi'[z]
/// a+_{species,i,y} zeta+_z  -  adjoint.
inline DHGenerator build_pair_generator(const ModeTable& modes, const std::string& species,
                                        const std::vector<std::pair<int, complex>>& amplitudes,
                                        const std::vector<complex>& packet,
                                        const FictitiousFieldSpec& fict) {
  fict.validate(modes.lattice());
  const Lattice& lat = modes.lattice();
  DHGenerator g{"pair:" + species, {}};
  for (const auto& [label, b] : amplitudes) {
    for (int y = 0; y < lat.cells(); ++y) {
      if (std::abs(packet[y]) == 0.0) continue;
      for (int z = 0; z < lat.cells(); ++z) {
        if (std::abs(fict.wavefunction[z]) == 0.0) continue;
        g.terms.push_back({b * packet[y] * fict.wavefunction[z],
                           {std::uint32_t(modes.rank(species, label, y)),
                            std::uint32_t(modes.rank(fict.id, 0, z))},
                           {}});
      }
    }
  }
  dh_detail::subtract_adjoint(g);
  return g;
}

/// The singlet generator: (1/sqrt 2) sum psi1[y1] psi2[y2] w1[z1] w2[z2]
/// (a+_{s1,1,y1} a+_{s2,2,y2} - a+_{s1,2,y1} a+_{s2,1,y2}) zeta1+ zeta2+ - adjoint.
inline DHGenerator build_singlet_generator(const ModeTable& modes, const std::string& s1,
                                           const std::vector<complex>& packet1,
                                           const std::string& s2,
                                           const std::vector<complex>& packet2,
                                           const FictitiousFieldSpec& f1,
                                           const FictitiousFieldSpec& f2) {
  f1.validate(modes.lattice());
  f2.validate(modes.lattice());
  const Lattice& lat = modes.lattice();
  DHGenerator g{"singlet:" + s1 + "," + s2, {}};
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int y1 = 0; y1 < lat.cells(); ++y1) {
    if (std::abs(packet1[y1]) == 0.0) continue;
    for (int y2 = 0; y2 < lat.cells(); ++y2) {
      if (std::abs(packet2[y2]) == 0.0) continue;
      for (int z1 = 0; z1 < lat.cells(); ++z1) {
        if (std::abs(f1.wavefunction[z1]) == 0.0) continue;
        for (int z2 = 0; z2 < lat.cells(); ++z2) {
          if (std::abs(f2.wavefunction[z2]) == 0.0) continue;
          complex w = inv_sqrt2 * packet1[y1] * packet2[y2] * f1.wavefunction[z1] *
                      f2.wavefunction[z2];
          std::uint32_t za = std::uint32_t(modes.rank(f1.id, 0, z1));
          std::uint32_t zb = std::uint32_t(modes.rank(f2.id, 0, z2));
          g.terms.push_back({w,
                             {std::uint32_t(modes.rank(s1, 1, y1)),
                              std::uint32_t(modes.rank(s2, 2, y2)), za, zb},
                             {}});
          g.terms.push_back({-w,
                             {std::uint32_t(modes.rank(s1, 2, y1)),
                              std::uint32_t(modes.rank(s2, 1, y2)), za, zb},
                             {}});
        }
      }
    }
  }
  dh_detail::subtract_adjoint(g);
  return g;
}

/// V (or V+ with adjoint = true) applied as the product of exp(+-(pi/2) W)
/// over the generator set; the generators commute, so order is immaterial.
inline SectorState dh_apply(const SectorState& state, const std::vector<DHGenerator>& generators,
                            bool take_adjoint) {
  SectorState s = state;
  const double angle = take_adjoint ? -M_PI / 2.0 : M_PI / 2.0;
  for (const auto& g : generators) s = evolve_exp(s, g.terms, complex(angle, 0.0));
  return s;
}

/// Closed form of the transformed field at one cell: the label-0 component
/// picks up psi_g[x] (sum_z psi'[z] zeta+_z - sum_y conj(psi_g[y]) a_{0,y}).
inline std::vector<OperatorTerm> dh_closed_form_field(const ModeTable& modes,
                                                      const std::string& species,
                                                      const FictitiousFieldSpec& fict,
                                                      const std::vector<complex>& packet,
                                                      int label, int cell) {
  std::vector<OperatorTerm> terms{{1.0, {}, {std::uint32_t(modes.rank(species, label, cell))}}};
  if (label != 0) return terms;
  const Lattice& lat = modes.lattice();
  const complex px = packet[cell];
  for (int z = 0; z < lat.cells(); ++z)
    terms.push_back({px * fict.wavefunction[z], {std::uint32_t(modes.rank(fict.id, 0, z))}, {}});
  for (int y = 0; y < lat.cells(); ++y)
    terms.push_back({-px * std::conj(packet[y]), {}, {std::uint32_t(modes.rank(species, 0, y))}});
  return terms;
}

struct EquivalenceReport {
  std::vector<complex> plain_values;
  std::vector<complex> dressed_values;
  double max_deviation = 0.0;
};

/// Physical observables must not notice the dressing, for any fictitious
/// wavefunction draw. Observables touching a fictitious mode are rejected.
inline EquivalenceReport expectation_equivalence(const ModeTable& modes,
                                                 const std::vector<OperatorTerm>& observable,
                                                 const SectorState& plain,
                                                 const std::vector<SectorState>& dressed_draws) {
  for (const auto& t : observable) {
    for (const auto& lists : {t.creators, t.annihilators})
      for (auto r : lists)
        if (modes.species()[modes.decode(static_cast<int>(r)).species_idx].fictitious)
          throw std::invalid_argument("observable touches a fictitious field");
  }
  EquivalenceReport rep;
  complex base = inner(plain, apply_terms(plain, observable));
  rep.plain_values.push_back(base);
  for (const auto& d : dressed_draws) {
    complex v = inner(d, apply_terms(d, observable));
    rep.dressed_values.push_back(v);
    rep.max_deviation = std::max(rep.max_deviation, std::abs(v - base));
  }
  return rep;
}

/// Per-cell weight of the linear field content of a transformed-minus-original
/// operator, split into physical and fictitious sectors.
struct LocalityFootprint {
  std::vector<double> physical_weights;
  std::vector<double> fictitious_weights;
  double linear_residual = 0.0;

  double total_physical() const {
    double t = 0.0;
    for (auto w : physical_weights) t += w;
    return t;
  }

  double support_radius(const Lattice& lat, int x_cell, double eps) const {
    double r = 0.0;
    for (int c = 0; c < lat.cells(); ++c)
      if (physical_weights[c] > eps) r = std::max(r, lat.distance(x_cell, c));
    return r;
  }
};

inline LocalityFootprint locality_footprint(const ModeTable& modes, const DenseMatrix& difference) {
  const int n = modes.total_modes();
  dense::check_mode_budget(n, 14);
  const int dim = 1 << n;
  const double hs_norm = std::pow(2.0, n - 1);
  DenseMatrix remainder = difference;
  LocalityFootprint fp;
  fp.physical_weights.assign(modes.lattice().cells(), 0.0);
  fp.fictitious_weights.assign(modes.lattice().cells(), 0.0);
  for (int r = 0; r < n; ++r) {
    complex c_ann = 0.0, c_cre = 0.0;
    for (int b = 0; b < dim; ++b) {
      if (!(b & (1 << r))) continue;
      double sign = (dense::popcount_below(std::uint32_t(b), r) & 1) ? -1.0 : 1.0;
      c_ann += sign * difference(b & ~(1 << r), b);
      c_cre += sign * difference(b, b & ~(1 << r));
    }
    c_ann /= hs_norm;
    c_cre /= hs_norm;
    for (int b = 0; b < dim; ++b) {
      if (!(b & (1 << r))) continue;
      double sign = (dense::popcount_below(std::uint32_t(b), r) & 1) ? -1.0 : 1.0;
      remainder(b & ~(1 << r), b) -= sign * c_ann;
      remainder(b, b & ~(1 << r)) -= sign * c_cre;
    }
    auto dec = modes.decode(r);
    double w = std::sqrt(std::norm(c_ann) + std::norm(c_cre));
    if (modes.species()[dec.species_idx].fictitious)
      fp.fictitious_weights[dec.cell] += w;
    else
      fp.physical_weights[dec.cell] += w;
  }
  fp.linear_residual = remainder.norm();
  return fp;
}

}  // namespace evlab

#endif
