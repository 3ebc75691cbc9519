#include "nswip/gibbs_markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nswip/errors.hpp"
#include "nswip/numeric.hpp"

namespace nswip {

namespace {

// Vose alias table: acceptance probability and alias per column, for a law
// given up to normalization.
void build_alias(std::span<const double> w, std::vector<double>& prob,
                 std::vector<std::uint32_t>& alias) {
  const std::size_t K = w.size();
  CompensatedSum total;
  for (double x : w) total.add(x);
  std::vector<double> q(K);
  for (std::size_t i = 0; i < K; ++i) q[i] = w[i] / total.value() * static_cast<double>(K);
  std::vector<std::uint32_t> small, large;
  for (std::size_t i = 0; i < K; ++i) {
    (q[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  }
  alias.resize(K);
  prob.assign(K, 1.0);
  for (std::size_t i = 0; i < K; ++i) alias[i] = static_cast<std::uint32_t>(i);
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    small.pop_back();
    const std::uint32_t l = large.back();
    prob[s] = q[s];
    alias[s] = l;
    q[l] = (q[l] + q[s]) - 1.0;
    if (q[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  // Leftovers keep prob 1 (they are 1 up to rounding).
}

// (P f)(a) = E[f] + eps g(a) E[h f].
SymbolFunction forward_apply(const CountableMarkovModel& model, const SymbolFunction& f) {
  const double mean = integrate(model, f);
  const double smean = integrate_signed(model, f);
  const double e = model.epsilon();
  SymbolFunction out(model.k_max());
  std::fill(out.plus().begin(), out.plus().end(), mean + e * smean);
  std::fill(out.minus().begin(), out.minus().end(), mean - e * smean);
  return out;
}

SymbolFunction product(const SymbolFunction& a, const SymbolFunction& b) {
  SymbolFunction out(a.k_max());
  for (std::size_t i = 0; i < a.plus().size(); ++i) {
    out.plus()[i] = a.plus()[i] * b.plus()[i];
    out.minus()[i] = a.minus()[i] * b.minus()[i];
  }
  return out;
}

double dot_pi(const CountableMarkovModel& model, const SymbolFunction& a,
              const SymbolFunction& b) {
  return integrate(model, product(a, b));
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// E over the pair law of (A(a) + B(b))^p.
double pair_moment(const CountableMarkovModel& model, const SymbolFunction& A,
                   const SymbolFunction& B, int p) {
  CompensatedSum acc;
  const double e = model.epsilon();
  for (int i = 0; i <= p; ++i) {
    const SymbolFunction Ai = A.pow(i);
    const SymbolFunction Bj = B.pow(p - i);
    const double term = integrate(model, Ai) * integrate(model, Bj) +
                        e * integrate_signed(model, Ai) * integrate_signed(model, Bj);
    acc.add(binomial(p, i) * term);
  }
  return acc.value();
}

}  // namespace

CountableMarkovModel build_model(std::uint32_t k_max, double epsilon,
                                 std::optional<double> target_sigma2) {
  if (k_max < 100) throw DomainError("build_model: K_max must be >= 100");
  if (!std::isfinite(epsilon) || epsilon < 0.0 || epsilon > 0.9) {
    throw DomainError("build_model: epsilon must lie in [0, 0.9]");
  }
  if (target_sigma2 && !(std::isfinite(*target_sigma2) && *target_sigma2 > 0.0)) {
    throw DomainError("build_model: target sigma^2 must be positive");
  }
  CountableMarkovModel m;
  m.k_max_ = k_max;
  m.eps_ = epsilon;
  m.p_.resize(k_max);
  // Smallest terms first.
  CompensatedSum z;
  for (std::uint32_t k = k_max; k >= 1; --k) {
    const double kd = static_cast<double>(k);
    const double w = 1.0 / (kd * kd * kd);
    m.p_[k - 1] = w;
    z.add(w);
  }
  m.zeta3_ = z.value();
  for (double& w : m.p_) w /= m.zeta3_;
  if (target_sigma2) {
    m.scale_ = std::sqrt(2.0 * m.zeta3_ * *target_sigma2);
    m.sigma2_ = *target_sigma2;
  } else {
    m.scale_ = 1.0;
    m.sigma2_ = 1.0 / (2.0 * m.zeta3_);
  }
  {
    constexpr std::uint32_t H = CountableMarkovModel::kHead;
    std::vector<double> prob;
    CompensatedSum head_mass;
    for (std::uint32_t k = H; k >= 1; --k) head_mass.add(m.p_[k - 1]);
    // Head columns have equal integer width so word / width is exact.
    m.head_width_ = static_cast<std::uint64_t>(std::ldexp(head_mass.value(), 64) / H);
    m.head_split_ = m.head_width_ * H;
    build_alias(std::span<const double>(m.p_.data(), H), prob, m.head_alias_);
    m.head_threshold_.resize(H);
    for (std::uint32_t i = 0; i < H; ++i) {
      m.head_threshold_[i] = prob[i] >= 1.0
                                 ? m.head_width_
                                 : static_cast<std::uint64_t>(prob[i] * static_cast<double>(m.head_width_));
    }
    build_alias(std::span<const double>(m.p_.data() + H, k_max - H), prob, m.tail_alias_);
    m.tail_threshold_.resize(k_max - H);
    for (std::uint32_t i = 0; i < k_max - H; ++i) {
      m.tail_threshold_[i] = prob[i] >= 1.0 ? std::numeric_limits<std::uint64_t>::max()
                                            : static_cast<std::uint64_t>(std::ldexp(prob[i], 64));
    }
  }
  m.stay_threshold_ =
      static_cast<std::uint64_t>(std::ldexp(0.5 * (1.0 + epsilon), 32));
  return m;
}

// ---------------------------------------------------------------------------

SymbolFunction SymbolFunction::from(const CountableMarkovModel& model,
                                    const std::function<double(Symbol)>& fn) {
  SymbolFunction u(model.k_max());
  for (std::uint32_t k = 1; k <= model.k_max(); ++k) {
    const auto s = static_cast<Symbol>(k);
    u.plus_[k - 1] = fn(s);
    u.minus_[k - 1] = fn(-s);
  }
  return u;
}

SymbolFunction SymbolFunction::sign(std::uint32_t k_max, double c) {
  SymbolFunction u(k_max);
  std::fill(u.plus_.begin(), u.plus_.end(), c);
  std::fill(u.minus_.begin(), u.minus_.end(), -c);
  return u;
}

double SymbolFunction::sup_norm() const noexcept {
  double s = 0.0;
  for (double v : plus_) s = std::max(s, std::abs(v));
  for (double v : minus_) s = std::max(s, std::abs(v));
  return s;
}

SymbolFunction& SymbolFunction::operator+=(const SymbolFunction& o) {
  if (o.k_max() != k_max()) throw DomainError("SymbolFunction: alphabet mismatch");
  for (std::size_t i = 0; i < plus_.size(); ++i) {
    plus_[i] += o.plus_[i];
    minus_[i] += o.minus_[i];
  }
  return *this;
}

SymbolFunction& SymbolFunction::operator*=(double c) noexcept {
  for (double& v : plus_) v *= c;
  for (double& v : minus_) v *= c;
  return *this;
}

SymbolFunction SymbolFunction::pow(int p) const {
  SymbolFunction out(k_max());
  for (std::size_t i = 0; i < plus_.size(); ++i) {
    double a = 1.0, b = 1.0;
    for (int j = 0; j < p; ++j) {
      a *= plus_[i];
      b *= minus_[i];
    }
    out.plus_[i] = a;
    out.minus_[i] = b;
  }
  return out;
}

double integrate(const CountableMarkovModel& model, const SymbolFunction& u) {
  if (u.k_max() != model.k_max()) throw DomainError("integrate: alphabet mismatch");
  const auto& p = model.magnitude_law();
  CompensatedSum s;
  for (std::size_t i = p.size(); i-- > 0;) {
    s.add(0.5 * p[i] * (u.plus()[i] + u.minus()[i]));
  }
  return s.value();
}

double integrate_signed(const CountableMarkovModel& model, const SymbolFunction& u) {
  if (u.k_max() != model.k_max()) throw DomainError("integrate: alphabet mismatch");
  const auto& p = model.magnitude_law();
  CompensatedSum s;
  for (std::size_t i = p.size(); i-- > 0;) {
    s.add(0.5 * p[i] * (u.plus()[i] - u.minus()[i]));
  }
  return s.value();
}

SymbolFunction transfer_apply(const CountableMarkovModel& model, const SymbolFunction& u) {
  const double mean = integrate(model, u);
  const double smean = integrate_signed(model, u);
  const double e = model.epsilon();
  SymbolFunction out(model.k_max());
  std::fill(out.plus().begin(), out.plus().end(), mean + e * smean);
  std::fill(out.minus().begin(), out.minus().end(), mean - e * smean);
  return out;
}

// ---------------------------------------------------------------------------

DenseMarkovChain::DenseMarkovChain(std::vector<double> pi,
                                   std::vector<std::vector<double>> P)
    : pi_(std::move(pi)), P_(std::move(P)) {
  if (pi_.empty() || P_.size() != pi_.size()) {
    throw DomainError("DenseMarkovChain: dimension mismatch");
  }
  for (const auto& row : P_) {
    if (row.size() != pi_.size()) throw DomainError("DenseMarkovChain: ragged kernel");
  }
  for (double w : pi_) {
    if (!(w > 0.0)) throw DomainError("DenseMarkovChain: weights must be positive");
  }
}

DenseMarkovChain DenseMarkovChain::from_model(const CountableMarkovModel& model) {
  const std::uint32_t K = model.k_max();
  std::vector<Symbol> syms;
  syms.reserve(2 * K);
  for (std::uint32_t k = 1; k <= K; ++k) {
    syms.push_back(static_cast<Symbol>(k));
    syms.push_back(-static_cast<Symbol>(k));
  }
  std::vector<double> pi(syms.size());
  std::vector<std::vector<double>> P(syms.size(), std::vector<double>(syms.size()));
  for (std::size_t i = 0; i < syms.size(); ++i) {
    pi[i] = model.pi(syms[i]);
    for (std::size_t j = 0; j < syms.size(); ++j) P[i][j] = model.kernel(syms[i], syms[j]);
  }
  return DenseMarkovChain(std::move(pi), std::move(P));
}

std::vector<double> DenseMarkovChain::transfer_apply(std::span<const double> u) const {
  if (u.size() != size()) throw DomainError("transfer_apply: size mismatch");
  std::vector<double> out(size());
  for (std::size_t b = 0; b < size(); ++b) {
    CompensatedSum s;
    for (std::size_t a = 0; a < size(); ++a) s.add(pi_[a] * P_[a][b] * u[a]);
    out[b] = s.value() / pi_[b];
  }
  return out;
}

double DenseMarkovChain::stationarity_defect() const {
  double defect = 0.0;
  for (std::size_t b = 0; b < size(); ++b) {
    CompensatedSum s;
    for (std::size_t a = 0; a < size(); ++a) s.add(pi_[a] * P_[a][b]);
    defect += std::abs(s.value() - pi_[b]);
  }
  return defect;
}

double DenseMarkovChain::correlation(std::span<const double> u,
                                     std::span<const double> w) const {
  CompensatedSum s;
  for (std::size_t a = 0; a < size(); ++a) {
    for (std::size_t b = 0; b < size(); ++b) s.add(pi_[a] * P_[a][b] * u[a] * w[b]);
  }
  return s.value();
}

double DenseMarkovChain::integrate(std::span<const double> u) const {
  CompensatedSum s;
  for (std::size_t a = 0; a < size(); ++a) s.add(pi_[a] * u[a]);
  return s.value();
}

// ---------------------------------------------------------------------------

std::vector<Symbol> sample_path(const CountableMarkovModel& model, RngStream& rng,
                                std::uint64_t n) {
  if (n < 1) throw DomainError("sample_path: n must be >= 1");
  GmSampler sampler(model, rng);
  std::vector<Symbol> path(n);
  for (auto& s : path) s = sampler.next();
  return path;
}

double truncation_level(std::uint64_t n) {
  if (n < 16) throw DomainError("truncation level needs n >= 16");
  const double nd = static_cast<double>(n);
  return std::sqrt(nd * std::log(std::log(nd)));
}

MartingaleDecomposition martingale_decompose(const CountableMarkovModel& model,
                                             std::uint64_t n) {
  MartingaleDecomposition d;
  d.n = n;
  d.q_n = truncation_level(n);
  d.V_n = SymbolFunction::from(model, [&](Symbol s) {
    const double v = model.value(s);
    return std::abs(v) <= d.q_n ? v : 0.0;
  });
  const double mean = integrate(model, d.V_n);
  if (mean != 0.0) {
    for (double& v : d.V_n.plus()) v -= mean;
    for (double& v : d.V_n.minus()) v -= mean;
  }
  d.chi = SymbolFunction(model.k_max());
  SymbolFunction w = transfer_apply(model, d.V_n);
  while (w.sup_norm() > kChiTolerance) {
    if (d.iterations >= kChiMaxIterations) {
      throw ConvergenceError("martingale_decompose: no geometric decay of L^j V_n");
    }
    d.chi += w;
    ++d.iterations;
    w = transfer_apply(model, w);
  }
  return d;
}

SymbolFunction pair_transfer_of_m(const CountableMarkovModel& model,
                                  const MartingaleDecomposition& d) {
  // m(a, b) = A(a) + B(b) with A = V_n + chi, B = -chi; L_pair m = L A + B.
  SymbolFunction A = d.V_n;
  A += d.chi;
  SymbolFunction out = transfer_apply(model, A);
  SymbolFunction B = d.chi;
  B *= -1.0;
  out += B;
  return out;
}

std::vector<double> decorrelation_profile(const CountableMarkovModel& model,
                                          const MartingaleDecomposition& d,
                                          std::size_t lags) {
  SymbolFunction A = d.V_n;
  A += d.chi;
  SymbolFunction B = d.chi;
  B *= -1.0;
  const SymbolFunction A2 = A.pow(2);
  const SymbolFunction B2 = B.pow(2);

  // (L_pair m^2)(b) = L(A^2)(b) + 2 B(b) L(A)(b) + B(b)^2.
  SymbolFunction Lu = transfer_apply(model, A2);
  {
    SymbolFunction cross = product(B, transfer_apply(model, A));
    cross *= 2.0;
    Lu += cross;
    Lu += B2;
  }
  // r(a) = E[m^2(a, b) | a] = A(a)^2 + 2 A(a) (P B)(a) + (P B^2)(a).
  SymbolFunction r = A2;
  {
    SymbolFunction cross = product(A, forward_apply(model, B));
    cross *= 2.0;
    r += cross;
    r += forward_apply(model, B2);
  }
  const double m2 = pair_moment(model, A, B, 2);
  std::vector<double> out;
  out.reserve(lags);
  SymbolFunction cur = Lu;
  for (std::size_t j = 1; j <= lags; ++j) {
    out.push_back(dot_pi(model, cur, r) - m2 * m2);
    cur = transfer_apply(model, cur);
  }
  return out;
}

namespace {

// Fitted decay rate of |profile| and the ratio test against it.
void fit_decay(const std::vector<double>& profile, double scale, MomentRow& row) {
  std::vector<double> xs, ys;
  const double floor = 1e-12 * scale;
  for (std::size_t j = 0; j < profile.size(); ++j) {
    if (std::abs(profile[j]) > floor) {
      xs.push_back(static_cast<double>(j + 1));
      ys.push_back(std::log(std::abs(profile[j])));
    }
  }
  if (xs.size() < 2) {
    row.decorrelation_gamma = 0.0;
    row.decorrelation_geometric = true;
    return;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  row.decorrelation_gamma = std::exp(sxy / sxx);
  bool ok = row.decorrelation_gamma < 1.0;
  for (std::size_t j = 0; j + 1 < profile.size(); ++j) {
    if (std::abs(profile[j]) <= floor) continue;
    if (std::abs(profile[j + 1]) / std::abs(profile[j]) > row.decorrelation_gamma + 0.1) {
      ok = false;
    }
  }
  row.decorrelation_geometric = ok;
}

}  // namespace

MomentReport moment_report(const CountableMarkovModel& model,
                           std::span<const std::uint64_t> n_grid) {
  MomentReport rep;
  double chi_max = 0.0;
  double chi_min = std::numeric_limits<double>::infinity();
  for (std::uint64_t n : n_grid) {
    const MartingaleDecomposition d = martingale_decompose(model, n);
    SymbolFunction A = d.V_n;
    A += d.chi;
    SymbolFunction B = d.chi;
    B *= -1.0;
    MomentRow row;
    row.n = n;
    row.q_n = d.q_n;
    row.chi_sup = d.chi.sup_norm();
    row.chi_iterations = d.iterations;
    row.m2 = pair_moment(model, A, B, 2);
    row.m4 = pair_moment(model, A, B, 4);
    row.m2_over_log_n = row.m2 / std::log(static_cast<double>(n));
    row.kernel_residual = pair_transfer_of_m(model, d).sup_norm();
    row.decorrelation = decorrelation_profile(model, d, kDecorrelationLags);
    fit_decay(row.decorrelation, row.m2 * row.m2, row);
    chi_max = std::max(chi_max, row.chi_sup);
    chi_min = std::min(chi_min, row.chi_sup);
    rep.rows.push_back(std::move(row));
  }
  rep.chi_ratio = chi_min > 0.0 ? chi_max / chi_min
                                : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

double martingale_square_sum(const MartingaleDecomposition& d,
                             std::span<const Symbol> path) {
  CompensatedSum s;
  for (std::size_t j = 0; j + 1 < path.size(); ++j) {
    const double m = d.m(path[j], path[j + 1]);
    s.add(m * m);
  }
  return s.value();
}

}  // namespace nswip
