#ifndef EVLAB_CORE_HPP
#define EVLAB_CORE_HPP

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace evlab {

using complex = std::complex<double>;
inline constexpr double hbar = 1.0;

struct Vec3 {
  std::array<double, 3> c{0.0, 0.0, 0.0};
  double& operator[](int i) { return c[i]; }
  double operator[](int i) const { return c[i]; }
};

inline Vec3 operator+(Vec3 a, const Vec3& b) {
  for (int i = 0; i < 3; ++i) a[i] += b[i];
  return a;
}
inline Vec3 operator-(Vec3 a, const Vec3& b) {
  for (int i = 0; i < 3; ++i) a[i] -= b[i];
  return a;
}
inline Vec3 operator*(double s, Vec3 a) {
  for (int i = 0; i < 3; ++i) a[i] *= s;
  return a;
}
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

enum class Boundary { open, periodic };

/// Spatial discretization. Cell centers along each axis are (k + 1/2)*dx.
struct Lattice {
  int dim = 1;
  int sites = 1;       // sites per axis
  double dx = 1.0;
  Boundary boundary = Boundary::open;

  Lattice() = default;
  Lattice(int dim_, int sites_, double dx_, Boundary b = Boundary::open)
      : dim(dim_), sites(sites_), dx(dx_), boundary(b) {
    if (dim < 1 || dim > 3 || sites < 1 || dx <= 0.0)
      throw std::invalid_argument("bad lattice parameters");
  }

  int cells() const {
    int n = 1;
    for (int d = 0; d < dim; ++d) n *= sites;
    return n;
  }

  std::array<int, 3> coords(int cell) const {
    std::array<int, 3> k{0, 0, 0};
    for (int d = 0; d < dim; ++d) {
      k[d] = cell % sites;
      cell /= sites;
    }
    return k;
  }

  int cell_of(const std::array<int, 3>& k) const {
    int c = 0;
    for (int d = dim - 1; d >= 0; --d) c = c * sites + k[d];
    return c;
  }

  Vec3 center(int cell) const {
    auto k = coords(cell);
    Vec3 x;
    for (int d = 0; d < dim; ++d) x[d] = (k[d] + 0.5) * dx;
    return x;
  }

  double extent() const { return sites * dx; }

  /// Distance between cell centers, minimum-image under periodic boundary.
  double distance(int a, int b) const {
    auto ka = coords(a), kb = coords(b);
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
      double delta = std::abs(ka[d] - kb[d]) * dx;
      if (boundary == Boundary::periodic) delta = std::min(delta, extent() - delta);
      s += delta * delta;
    }
    return std::sqrt(s);
  }

  double cell_volume() const {
    double v = 1.0;
    for (int d = 0; d < dim; ++d) v *= dx;
    return v;
  }
};

/// A fermionic field species: internal levels plus a mass (static fields have none).
struct SpeciesSpec {
  std::string id;
  std::vector<int> internal_labels;  // {1,2} systems, {0,1} observers/comparator, {0} fictitious
  double mass = 1.0;
  bool fictitious = false;

  int internal_dim() const { return static_cast<int>(internal_labels.size()); }

  int slot_of(int label) const {
    for (size_t i = 0; i < internal_labels.size(); ++i)
      if (internal_labels[i] == label) return static_cast<int>(i);
    throw std::invalid_argument("unknown internal label for species " + id);
  }

  static SpeciesSpec system(std::string id, double mass) {
    return SpeciesSpec{std::move(id), {1, 2}, mass, false};
  }
  static SpeciesSpec observer(std::string id, double mass) {
    return SpeciesSpec{std::move(id), {0, 1}, mass, false};
  }
  static SpeciesSpec fictitious_field(std::string id) {
    return SpeciesSpec{std::move(id), {0}, 0.0, true};
  }
};

/// Canonical mode ordering over (species list order, internal slot, cell).
/// The rank order fixes every fermionic sign in the artifact.
class ModeTable {
 public:
  ModeTable() = default;
  ModeTable(Lattice lattice, std::vector<SpeciesSpec> species)
      : lattice_(lattice), species_(std::move(species)) {
    int off = 0;
    offsets_.reserve(species_.size());
    for (const auto& s : species_) {
      offsets_.push_back(off);
      off += s.internal_dim() * lattice_.cells();
    }
    total_ = off;
  }

  const Lattice& lattice() const { return lattice_; }
  const std::vector<SpeciesSpec>& species() const { return species_; }
  int total_modes() const { return total_; }

  int species_index(const std::string& id) const {
    for (size_t i = 0; i < species_.size(); ++i)
      if (species_[i].id == id) return static_cast<int>(i);
    throw std::invalid_argument("unknown species " + id);
  }

  const SpeciesSpec& spec(const std::string& id) const { return species_[species_index(id)]; }

  int rank(int species_idx, int internal_slot, int cell) const {
    return offsets_[species_idx] + internal_slot * lattice_.cells() + cell;
  }

  int rank(const std::string& id, int internal_label, int cell) const {
    int si = species_index(id);
    return rank(si, species_[si].slot_of(internal_label), cell);
  }

  struct Decoded {
    int species_idx;
    int internal_slot;
    int cell;
  };

  Decoded decode(int r) const {
    for (int si = static_cast<int>(species_.size()) - 1; si >= 0; --si) {
      if (r >= offsets_[si]) {
        int rel = r - offsets_[si];
        return {si, rel / lattice_.cells(), rel % lattice_.cells()};
      }
    }
    throw std::out_of_range("mode rank");
  }

  int species_of(int r) const { return decode(r).species_idx; }

 private:
  Lattice lattice_;
  std::vector<SpeciesSpec> species_;
  std::vector<int> offsets_;
  int total_ = 0;
};

}  // namespace evlab

#endif
