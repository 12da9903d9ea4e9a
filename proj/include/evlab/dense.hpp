#ifndef EVLAB_DENSE_HPP
#define EVLAB_DENSE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>
#include <unsupported/Eigen/MatrixFunctions>

#include "evlab/fock.hpp"

namespace evlab {

using DenseMatrix = Eigen::MatrixXcd;
using DenseVector = Eigen::VectorXcd;

/// Dense Fock-space tools for lattices with few enough modes (<= 16) that the
/// full 2^n space fits in memory. Basis index = occupation bitmask; bit r set
/// means mode rank r occupied, state = a+_{r1} a+_{r2}...|0> with r1 < r2 < ...
namespace dense {

inline void check_mode_budget(int n_modes, int limit = 16) {
  if (n_modes > limit)
    throw std::invalid_argument("dense Fock space limited to " + std::to_string(limit) + " modes");
}

inline int popcount_below(std::uint32_t mask, int mode) {
  return __builtin_popcount(mask & ((1u << mode) - 1u));
}

inline DenseMatrix creation(int n_modes, int mode) {
  check_mode_budget(n_modes);
  const int dim = 1 << n_modes;
  DenseMatrix m = DenseMatrix::Zero(dim, dim);
  for (int b = 0; b < dim; ++b) {
    if (b & (1 << mode)) continue;
    double sign = (popcount_below(static_cast<std::uint32_t>(b), mode) & 1) ? -1.0 : 1.0;
    m(b | (1 << mode), b) = sign;
  }
  return m;
}

inline DenseMatrix annihilation(int n_modes, int mode) {
  return creation(n_modes, mode).adjoint();
}

inline DenseMatrix from_terms(int n_modes, const std::vector<OperatorTerm>& terms) {
  check_mode_budget(n_modes);
  const int dim = 1 << n_modes;
  DenseMatrix m = DenseMatrix::Zero(dim, dim);
  for (const auto& t : terms) {
    DenseMatrix p = DenseMatrix::Identity(dim, dim);
    for (const auto r : t.creators) p = p * creation(n_modes, static_cast<int>(r));
    for (const auto r : t.annihilators) p = p * annihilation(n_modes, static_cast<int>(r));
    m += t.coefficient * p;
  }
  return m;
}

inline DenseVector to_vector(int n_modes, const SectorState& state) {
  check_mode_budget(n_modes, 24);
  DenseVector v = DenseVector::Zero(1 << n_modes);
  for (const auto& [c, a] : state.amplitudes()) {
    std::uint32_t mask = 0;
    for (auto r : c) mask |= 1u << r;
    v(mask) += a;
  }
  return v;
}

inline SectorState from_vector(int n_modes, const DenseVector& v, double threshold = 0.0) {
  SectorState s;
  for (int b = 0; b < v.size(); ++b) {
    if (std::abs(v(b)) <= threshold) continue;
    Config c;
    for (int r = 0; r < n_modes; ++r)
      if (b & (1 << r)) c.push_back(static_cast<std::uint32_t>(r));
    s.add(c, v(b));
  }
  return s;
}

/// Builds the dense matrix of a linear map given by its action on states,
/// streaming one basis column at a time.
inline DenseMatrix from_action(int n_modes, const std::function<SectorState(const SectorState&)>& op) {
  check_mode_budget(n_modes);
  const int dim = 1 << n_modes;
  DenseMatrix m(dim, dim);
  for (int b = 0; b < dim; ++b) {
    SectorState basis = from_vector(n_modes, DenseVector::Unit(dim, b));
    basis.prune_threshold = 0.0;
    m.col(b) = to_vector(n_modes, op(basis));
  }
  return m;
}

inline DenseMatrix expm(const DenseMatrix& m) { return m.exp(); }

struct CarViolation {
  int mode_a, mode_b;
  std::string identity;
  double deviation;
};

struct CarReport {
  std::vector<CarViolation> violations;
  bool passed() const { return violations.empty(); }
};

namespace car_detail {

// (mask, integer coefficient) accumulator for one matrix column.
using Column = std::vector<long long>;

inline void apply_ann(std::uint32_t b, int r, int sign, std::uint32_t& out, int& out_sign,
                      bool& alive) {
  if (!(b & (1u << r))) {
    alive = false;
    return;
  }
  out = b & ~(1u << r);
  out_sign = sign * ((popcount_below(b, r) & 1) ? -1 : 1);
  alive = true;
}

inline void apply_cre(std::uint32_t b, int r, int sign, std::uint32_t& out, int& out_sign,
                      bool& alive) {
  if (b & (1u << r)) {
    alive = false;
    return;
  }
  out = b | (1u << r);
  out_sign = sign * ((popcount_below(b, r) & 1) ? -1 : 1);
  alive = true;
}

}  // namespace car_detail

/// Checks {a_r, a+_s} = delta_rs * 1 and {a_r, a_s} = 0 exactly, column by
/// column of the dense matrices (integer sign arithmetic, no rounding).
inline CarReport check_car(const ModeTable& modes) {
  using namespace car_detail;
  const int n = modes.total_modes();
  check_mode_budget(n);
  const std::uint32_t dim = 1u << n;
  CarReport report;
  // Each product contributes at most one basis state per column; compare the
  // two contributions (and the delta term) entry-wise.
  struct Entry {
    std::uint32_t mask;
    int coeff;
  };
  auto mismatch = [](std::vector<Entry> entries) {
    for (size_t i = 0; i < entries.size(); ++i) {
      for (size_t j = i + 1; j < entries.size(); ++j) {
        if (entries[j].mask == entries[i].mask) {
          entries[i].coeff += entries[j].coeff;
          entries[j].coeff = 0;
        }
      }
    }
    for (const auto& e : entries)
      if (e.coeff != 0) return true;
    return false;
  };
  for (int r = 0; r < n; ++r) {
    for (int s = 0; s < n; ++s) {
      bool bad = false;
      for (std::uint32_t b = 0; b < dim && !bad; ++b) {
        std::vector<Entry> entries;
        std::uint32_t t, u;
        int st, su;
        bool alive;
        apply_ann(b, r, 1, t, st, alive);  // a+_s a_r
        if (alive) {
          apply_cre(t, s, st, u, su, alive);
          if (alive) entries.push_back({u, su});
        }
        apply_cre(b, s, 1, t, st, alive);  // a_r a+_s
        if (alive) {
          apply_ann(t, r, st, u, su, alive);
          if (alive) entries.push_back({u, su});
        }
        if (r == s) entries.push_back({b, -1});
        bad = mismatch(std::move(entries));
      }
      if (bad) report.violations.push_back({r, s, "{a_r, a+_s} = delta_rs", 1.0});
      if (s > r) continue;
      bad = false;
      for (std::uint32_t b = 0; b < dim && !bad; ++b) {
        std::vector<Entry> entries;
        std::uint32_t t, u;
        int st, su;
        bool alive;
        apply_ann(b, s, 1, t, st, alive);
        if (alive) {
          apply_ann(t, r, st, u, su, alive);
          if (alive) entries.push_back({u, su});
        }
        apply_ann(b, r, 1, t, st, alive);
        if (alive) {
          apply_ann(t, s, st, u, su, alive);
          if (alive) entries.push_back({u, su});
        }
        bad = mismatch(std::move(entries));
      }
      if (bad) report.violations.push_back({r, s, "{a_r, a_s} = 0", 1.0});
    }
  }
  return report;
}

}  // namespace dense
}  // namespace evlab

#endif
