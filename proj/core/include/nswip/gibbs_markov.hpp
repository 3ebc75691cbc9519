#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nswip/rng.hpp"

namespace nswip {

/// Symbols (k, +) and (k, -) are encoded as the signed integers +k and -k.
using Symbol = std::int32_t;

inline int symbol_sign(Symbol s) noexcept { return s > 0 ? 1 : -1; }
inline std::uint32_t symbol_magnitude(Symbol s) noexcept {
  return static_cast<std::uint32_t>(s > 0 ? s : -s);
}

/// Countable-alphabet Markov chain with a heavy-tailed observable.
///
///   pi(k, +-) = k^-3 / (2 zeta3(K)),   zeta3(K) = sum_{k <= K} k^-3
///   P(a -> b) = pi(b) (1 + eps g(a) h(b)),  g = h = sign
///   V(k, +-)  = +- scale k
///
/// The sign performs a two-state chain that stays put with probability
/// (1 + eps)/2; magnitudes are i.i.d. with law k^-3 / zeta3(K). The tail
/// constant of |V| is sigma2 = scale^2 / (2 zeta3(K)).
class CountableMarkovModel {
 public:
  std::uint32_t k_max() const noexcept { return k_max_; }
  double epsilon() const noexcept { return eps_; }
  double scale() const noexcept { return scale_; }
  double zeta3() const noexcept { return zeta3_; }
  /// Tail constant: P(|V| > x) ~ sigma2 x^-2.
  double sigma2() const noexcept { return sigma2_; }

  /// Magnitude law p_k = k^-3 / zeta3(K) for k = 1..K (index k - 1).
  const std::vector<double>& magnitude_law() const noexcept { return p_; }
  double pi(Symbol s) const noexcept { return 0.5 * p_[symbol_magnitude(s) - 1]; }
  double kernel(Symbol a, Symbol b) const noexcept {
    return pi(b) * (1.0 + eps_ * symbol_sign(a) * symbol_sign(b));
  }
  double value(Symbol s) const noexcept { return scale_ * static_cast<double>(s); }

  /// Number of magnitudes served by the small head table.
  static constexpr std::uint32_t kHead = 64;

  /// Draw a magnitude from p (alias method). The law is split into a head
  /// k <= kHead, which carries almost all mass and stays in cache, and a
  /// tail table; the first word picks the part and, in the head, the column.
  std::uint32_t draw_magnitude(RngStream& rng) const noexcept {
    const std::uint64_t word = rng.next_u64();
    if (word < head_split_) {
      const std::uint64_t idx = word / head_width_;
      const std::uint64_t frac = word - idx * head_width_;
      return static_cast<std::uint32_t>(frac < head_threshold_[idx] ? idx + 1
                                                                    : head_alias_[idx] + 1);
    }
    const unsigned __int128 prod =
        static_cast<unsigned __int128>(rng.next_u64()) * (k_max_ - kHead);
    const auto idx = static_cast<std::uint32_t>(prod >> 64);
    const auto frac = static_cast<std::uint64_t>(prod);
    return (frac < tail_threshold_[idx] ? idx : tail_alias_[idx]) + kHead + 1;
  }
  /// P(sign stays) as a 32-bit threshold.
  std::uint64_t stay_threshold() const noexcept { return stay_threshold_; }

 private:
  friend CountableMarkovModel build_model(std::uint32_t, double, std::optional<double>);

  std::uint32_t k_max_ = 0;
  double eps_ = 0.0;
  double scale_ = 1.0;
  double zeta3_ = 0.0;
  double sigma2_ = 0.0;
  std::vector<double> p_;
  std::uint64_t head_split_ = 0;
  std::uint64_t head_width_ = 1;
  std::vector<std::uint64_t> head_threshold_;
  std::vector<std::uint32_t> head_alias_;
  std::vector<std::uint64_t> tail_threshold_;
  std::vector<std::uint32_t> tail_alias_;
  std::uint64_t stay_threshold_ = 0;
};

/// K_max >= 100, eps in [0, 0.9]. With a target, V is rescaled so the tail
/// constant equals it; otherwise scale = 1 and sigma2 = 1/(2 zeta3(K)).
CountableMarkovModel build_model(std::uint32_t k_max, double epsilon,
                                 std::optional<double> target_sigma2 = std::nullopt);

/// Function of the first symbol: tables over k = 1..K for each sign.
class SymbolFunction {
 public:
  SymbolFunction() = default;
  explicit SymbolFunction(std::uint32_t k_max) : plus_(k_max, 0.0), minus_(k_max, 0.0) {}

  static SymbolFunction from(const CountableMarkovModel& model,
                             const std::function<double(Symbol)>& fn);
  /// c * sign.
  static SymbolFunction sign(std::uint32_t k_max, double c = 1.0);

  std::uint32_t k_max() const noexcept { return static_cast<std::uint32_t>(plus_.size()); }
  double operator()(Symbol s) const noexcept {
    return s > 0 ? plus_[static_cast<std::size_t>(s) - 1]
                 : minus_[static_cast<std::size_t>(-s) - 1];
  }
  double& at(Symbol s) noexcept {
    return s > 0 ? plus_[static_cast<std::size_t>(s) - 1]
                 : minus_[static_cast<std::size_t>(-s) - 1];
  }
  std::vector<double>& plus() noexcept { return plus_; }
  std::vector<double>& minus() noexcept { return minus_; }
  const std::vector<double>& plus() const noexcept { return plus_; }
  const std::vector<double>& minus() const noexcept { return minus_; }

  double sup_norm() const noexcept;
  /// Pointwise operations used by the moment formulas.
  SymbolFunction& operator+=(const SymbolFunction& o);
  SymbolFunction& operator*=(double c) noexcept;
  SymbolFunction pow(int p) const;

 private:
  std::vector<double> plus_;
  std::vector<double> minus_;
};

/// E_pi[u].
double integrate(const CountableMarkovModel& model, const SymbolFunction& u);
/// E_pi[sign * u].
double integrate_signed(const CountableMarkovModel& model, const SymbolFunction& u);

/// (Lu)(b) = sum_a pi_a P(a -> b) u(a) / pi_b = E[u] + eps h(b) E[g u]; O(K).
SymbolFunction transfer_apply(const CountableMarkovModel& model, const SymbolFunction& u);

/// Explicit dense chain for small alphabets; the O(K^2) reference for the
/// structured operator.
class DenseMarkovChain {
 public:
  DenseMarkovChain(std::vector<double> pi, std::vector<std::vector<double>> P);
  static DenseMarkovChain from_model(const CountableMarkovModel& model);

  std::size_t size() const noexcept { return pi_.size(); }
  const std::vector<double>& pi() const noexcept { return pi_; }
  const std::vector<std::vector<double>>& P() const noexcept { return P_; }

  std::vector<double> transfer_apply(std::span<const double> u) const;
  /// sum_b |(pi P)_b - pi_b|.
  double stationarity_defect() const;
  /// E_pi[u (w o F)] = sum_{a,b} pi_a P(a,b) u(a) w(b).
  double correlation(std::span<const double> u, std::span<const double> w) const;
  double integrate(std::span<const double> u) const;

 private:
  std::vector<double> pi_;
  std::vector<std::vector<double>> P_;
};

/// Stationary-start path generator: sign uniform, then a two-state chain;
/// magnitudes from the alias table.
class GmSampler {
 public:
  GmSampler(const CountableMarkovModel& model, RngStream& rng) : model_(&model), rng_(&rng) {}

  Symbol next() noexcept {
    const std::uint32_t u = rng_->next_u32();
    if (first_) {
      sign_ = (u & 1U) ? 1 : -1;
      first_ = false;
    } else if (u >= model_->stay_threshold()) {
      sign_ = -sign_;
    }
    const std::uint32_t k = model_->draw_magnitude(*rng_);
    return sign_ * static_cast<Symbol>(k);
  }

 private:
  const CountableMarkovModel* model_;
  RngStream* rng_;
  int sign_ = 1;
  bool first_ = true;
};

std::vector<Symbol> sample_path(const CountableMarkovModel& model, RngStream& rng,
                                std::uint64_t n);

/// q_n = (n ln ln n)^{1/2}; n >= 16.
double truncation_level(std::uint64_t n);

/// V_n = m_n + chi_n o F - chi_n with m_n a function of symbol pairs.
struct MartingaleDecomposition {
  std::uint64_t n = 0;
  double q_n = 0.0;
  /// V 1_{|V| <= q_n} minus its mean.
  SymbolFunction V_n;
  /// sum_{j >= 1} L^j V_n.
  SymbolFunction chi;
  std::size_t iterations = 0;

  /// m_n(a, b) = V_n(a) + chi(a) - chi(b).
  double m(Symbol a, Symbol b) const noexcept { return V_n(a) + chi(a) - chi(b); }
};

inline constexpr double kChiTolerance = 1e-14;
inline constexpr std::size_t kChiMaxIterations = 1000;

/// Sums the chi series until ||L^j V_n||_inf <= 1e-14; ConvergenceError
/// after 1000 terms.
MartingaleDecomposition martingale_decompose(const CountableMarkovModel& model,
                                             std::uint64_t n);

/// Pair-level transfer operator (L u)(b) = sum_a pi_a P(a,b) m(a,b) / pi_b
/// applied to m_n; zero when m_n is in the kernel.
SymbolFunction pair_transfer_of_m(const CountableMarkovModel& model,
                                  const MartingaleDecomposition& d);

struct MomentRow {
  std::uint64_t n = 0;
  double q_n = 0.0;
  double chi_sup = 0.0;
  double m2 = 0.0;
  double m4 = 0.0;
  double m2_over_log_n = 0.0;
  /// ||L m_n||_inf.
  double kernel_residual = 0.0;
  std::size_t chi_iterations = 0;
  /// int m^2 (m^2 o F^j) - (int m^2)^2 for j = 1..20.
  std::vector<double> decorrelation;
  double decorrelation_gamma = 0.0;
  bool decorrelation_geometric = true;
};

struct MomentReport {
  std::vector<MomentRow> rows;
  /// max_n |chi_n|_inf / min_n |chi_n|_inf (NaN if some chi_n vanishes).
  double chi_ratio = 0.0;
};

inline constexpr std::size_t kDecorrelationLags = 20;

/// Exact moments of m_n against the pair law pi_a P(a, b); no sampling.
MomentReport moment_report(const CountableMarkovModel& model,
                           std::span<const std::uint64_t> n_grid);

/// int m_n^2 (m_n^2 o F^j) dmu - (int m_n^2 dmu)^2 for j = 1..lags.
std::vector<double> decorrelation_profile(const CountableMarkovModel& model,
                                          const MartingaleDecomposition& d,
                                          std::size_t lags = kDecorrelationLags);

/// sum_{j < len - 1} m_n(a_j, a_{j+1})^2 along a symbol path.
double martingale_square_sum(const MartingaleDecomposition& d, std::span<const Symbol> path);

}  // namespace nswip
