#ifndef EVLAB_FOCK_HPP
#define EVLAB_FOCK_HPP

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evlab/core.hpp"

namespace evlab {

/// Occupied mode ranks in ascending order; |cfg> = a+_{r1} a+_{r2} ... |0> with r1 < r2 < ...
using Config = std::vector<std::uint32_t>;

struct ConfigHash {
  size_t operator()(const Config& c) const {
    std::uint64_t h = 1469598103934665603ull;
    for (auto r : c) {
      h ^= r + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return static_cast<size_t>(h);
  }
};

/// Sparse amplitude map over Fock configurations.
class SectorState {
 public:
  using Map = std::unordered_map<Config, complex, ConfigHash>;

  double prune_threshold = 1e-14;

  static SectorState vacuum() {
    SectorState s;
    s.amp_[Config{}] = 1.0;
    return s;
  }

  Map& amplitudes() { return amp_; }
  const Map& amplitudes() const { return amp_; }
  bool empty() const { return amp_.empty(); }
  size_t size() const { return amp_.size(); }

  complex at(const Config& c) const {
    auto it = amp_.find(c);
    return it == amp_.end() ? complex(0.0) : it->second;
  }

  void add(const Config& c, complex a) {
    auto [it, inserted] = amp_.try_emplace(c, a);
    if (!inserted) it->second += a;
  }

  double norm_sq() const {
    double s = 0.0;
    for (const auto& [c, a] : amp_) s += std::norm(a);
    return s;
  }

  void scale(complex z) {
    for (auto& [c, a] : amp_) a *= z;
  }

  void add_scaled(const SectorState& other, complex z) {
    for (const auto& [c, a] : other.amp_) add(c, z * a);
  }

  void prune() {
    for (auto it = amp_.begin(); it != amp_.end();)
      it = (std::abs(it->second) < prune_threshold) ? amp_.erase(it) : std::next(it);
  }

  void normalize() {
    double n = std::sqrt(norm_sq());
    if (n == 0.0) throw std::runtime_error("cannot normalize zero state");
    scale(1.0 / n);
  }

  /// Quantum count per species (throws if configurations disagree).
  std::vector<int> occupations(const ModeTable& modes) const {
    std::vector<int> counts(modes.species().size(), -1);
    for (const auto& [c, a] : amp_) {
      std::vector<int> here(modes.species().size(), 0);
      for (auto r : c) ++here[modes.species_of(static_cast<int>(r))];
      if (counts[0] == -1)
        counts = here;
      else if (counts != here)
        throw std::runtime_error("mixed occupation numbers in sector state");
    }
    return counts;
  }

 private:
  Map amp_;
};

inline complex inner(const SectorState& bra, const SectorState& ket) {
  const auto& a = bra.amplitudes();
  const auto& b = ket.amplitudes();
  const bool a_small = a.size() < b.size();
  const auto& small = a_small ? a : b;
  complex s = 0.0;
  for (const auto& [c, amp] : small) {
    auto it = (a_small ? b : a).find(c);
    if (it == (a_small ? b : a).end()) continue;
    s += a_small ? std::conj(amp) * it->second : std::conj(it->second) * amp;
  }
  return s;
}

/// coefficient * a+_{c1}...a+_{cm} a_{k1}...a_{kn}, normal-ordered as written.
struct OperatorTerm {
  complex coefficient{1.0, 0.0};
  std::vector<std::uint32_t> creators;
  std::vector<std::uint32_t> annihilators;
};

namespace detail {

/// Sign for inserting/removing `mode`: parity of occupied ranks below it.
inline int parity_below(const Config& c, std::uint32_t mode) {
  int k = 0;
  for (auto r : c) {
    if (r >= mode) break;
    ++k;
  }
  return (k & 1) ? -1 : 1;
}

inline bool contains(const Config& c, std::uint32_t mode) {
  return std::binary_search(c.begin(), c.end(), mode);
}

/// Applies one term to one configuration; returns false if it annihilates.
inline bool term_on_config(const OperatorTerm& t, const Config& in, Config& out, int& sign) {
  out = in;
  sign = 1;
  for (auto it = t.annihilators.rbegin(); it != t.annihilators.rend(); ++it) {
    auto pos = std::lower_bound(out.begin(), out.end(), *it);
    if (pos == out.end() || *pos != *it) return false;
    sign *= parity_below(out, *it);
    out.erase(pos);
  }
  for (auto it = t.creators.rbegin(); it != t.creators.rend(); ++it) {
    auto pos = std::lower_bound(out.begin(), out.end(), *it);
    if (pos != out.end() && *pos == *it) return false;
    sign *= parity_below(out, *it);
    out.insert(pos, *it);
  }
  return true;
}

}  // namespace detail

inline SectorState apply_creation(const SectorState& state, std::uint32_t mode) {
  SectorState out;
  out.prune_threshold = state.prune_threshold;
  for (const auto& [c, a] : state.amplitudes()) {
    if (detail::contains(c, mode)) continue;  // Pauli exclusion
    Config nc = c;
    int sign = detail::parity_below(c, mode);
    nc.insert(std::lower_bound(nc.begin(), nc.end(), mode), mode);
    out.add(nc, double(sign) * a);
  }
  return out;
}

inline SectorState apply_annihilation(const SectorState& state, std::uint32_t mode) {
  SectorState out;
  out.prune_threshold = state.prune_threshold;
  for (const auto& [c, a] : state.amplitudes()) {
    auto pos = std::lower_bound(c.begin(), c.end(), mode);
    if (pos == c.end() || *pos != mode) continue;
    Config nc = c;
    int sign = detail::parity_below(c, mode);
    nc.erase(nc.begin() + (pos - c.begin()));
    out.add(nc, double(sign) * a);
  }
  return out;
}

inline SectorState apply_term(const SectorState& state, const OperatorTerm& t) {
  SectorState out;
  out.prune_threshold = state.prune_threshold;
  Config scratch;
  int sign;
  for (const auto& [c, a] : state.amplitudes())
    if (detail::term_on_config(t, c, scratch, sign))
      out.add(scratch, t.coefficient * double(sign) * a);
  return out;
}

inline SectorState apply_terms(const SectorState& state, const std::vector<OperatorTerm>& terms) {
  SectorState out;
  out.prune_threshold = state.prune_threshold;
  Config scratch;
  int sign;
  for (const auto& [c, a] : state.amplitudes()) {
    for (const auto& t : terms) {
      if (!detail::term_on_config(t, c, scratch, sign)) continue;
      out.add(scratch, t.coefficient * double(sign) * a);
    }
  }
  return out;
}

/// Adjoint of a term list: conjugate coefficients, swap and reverse the lists.
inline std::vector<OperatorTerm> adjoint(const std::vector<OperatorTerm>& terms) {
  std::vector<OperatorTerm> out;
  out.reserve(terms.size());
  for (const auto& t : terms) {
    OperatorTerm a;
    a.coefficient = std::conj(t.coefficient);
    a.creators.assign(t.annihilators.rbegin(), t.annihilators.rend());
    a.annihilators.assign(t.creators.rbegin(), t.creators.rend());
    out.push_back(std::move(a));
  }
  return out;
}

struct FieldOp {
  bool dagger;
  std::uint32_t mode;
};

/// Normal-orders a product of field operators by anticommutation, assuming no
/// same-mode annihilator/creator crossing is required (all uses in this
/// artifact satisfy that; violations throw).
inline OperatorTerm normal_order(complex coefficient, std::vector<FieldOp> ops) {
  for (size_t i = 1; i < ops.size(); ++i) {
    size_t j = i;
    while (j > 0 && !ops[j - 1].dagger && ops[j].dagger) {
      if (ops[j - 1].mode == ops[j].mode)
        throw std::logic_error("normal_order: same-mode contraction required");
      std::swap(ops[j - 1], ops[j]);
      coefficient = -coefficient;
      --j;
    }
  }
  OperatorTerm t;
  t.coefficient = coefficient;
  for (const auto& op : ops)
    (op.dagger ? t.creators : t.annihilators).push_back(op.mode);
  return t;
}

struct EvolveOptions {
  int max_terms = 120;     // Taylor terms per substep
  double tol = 1e-18;      // relative magnitude at which the series has converged
  int max_squarings = 64;  // cap on the scaling exponent
};

/// exp(scale * G)|state> by scaled-and-squared Taylor iteration on sparse states.
inline SectorState evolve_exp(const SectorState& state, const std::vector<OperatorTerm>& generator,
                              complex scale, const EvolveOptions& opt = {}) {
  if (state.empty()) return state;
  const double state_norm = std::sqrt(state.norm_sq());
  // One application estimates ||scale*G|psi>|| and sets the substep count.
  SectorState probe = apply_terms(state, generator);
  double est = std::abs(scale) * std::sqrt(probe.norm_sq()) / state_norm;
  int s = 0;
  while (est > 1.0 && s < opt.max_squarings) {
    est *= 0.5;
    ++s;
  }
  const std::uint64_t substeps = 1ull << s;
  const complex x = scale / double(substeps);

  SectorState current = state;
  for (std::uint64_t step = 0; step < substeps; ++step) {
    SectorState result = current;
    SectorState krylov = current;
    bool converged = false;
    for (int k = 1; k <= opt.max_terms; ++k) {
      SectorState next = apply_terms(krylov, generator);
      next.scale(x / double(k));
      next.prune();
      result.add_scaled(next, 1.0);
      double term_norm = std::sqrt(next.norm_sq());
      krylov = std::move(next);
      if (term_norm < opt.tol * state_norm) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw std::runtime_error("evolve_exp: Taylor series not converged, residual norm " +
                               std::to_string(std::sqrt(krylov.norm_sq())));
    result.prune();
    current = std::move(result);
  }
  return current;
}

}  // namespace evlab

#endif
