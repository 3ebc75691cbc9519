#include "nswip/stadium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "nswip/errors.hpp"
#include "nswip/numeric.hpp"

namespace nswip {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = 0.5 * std::numbers::pi;
// Slack when deciding which boundary piece an intersection lies on.
constexpr double kPieceSlack = 1e-12;

inline double dot(Vec2 a, Vec2 b) noexcept { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) noexcept { return a.x * b.y - a.y * b.x; }

void require_not_tangent(double psi) {
  if (!std::isfinite(psi) || std::abs(psi) > kHalfPi - kTangencyMargin) {
    throw GeometryError("collision state is tangential (|psi| too close to pi/2)");
  }
}

// Larger root of |p + t d - c|^2 = 1 (exit point from the unit disk at c).
inline double disk_exit(Vec2 p, Vec2 d, Vec2 c) noexcept {
  const Vec2 w{p.x - c.x, p.y - c.y};
  const double b = dot(d, w);
  const double cc = dot(w, w) - 1.0;
  const double disc = b * b - cc;
  if (disc < 0.0) return -1.0;
  return -b + std::sqrt(disc);
}

}  // namespace

const char* component_name(Component c) noexcept {
  switch (c) {
    case Component::C1:
      return "C1";
    case Component::C2:
      return "C2";
    case Component::S1:
      return "S1";
    case Component::S2:
      return "S2";
    case Component::None:
      return "none";
  }
  return "?";
}

StadiumGeometry::StadiumGeometry(double segment_length) : length_(segment_length) {
  if (!std::isfinite(segment_length) || segment_length <= 0.0) {
    throw DomainError("stadium segment length must be positive");
  }
}

double StadiumGeometry::perimeter() const noexcept { return 2.0 * length_ + 2.0 * kPi; }
double StadiumGeometry::area() const noexcept { return 2.0 * length_ + kPi; }
double StadiumGeometry::mean_free_path() const noexcept {
  return kPi * area() / perimeter();
}

Vec2 StadiumGeometry::position(Component c, double param) const noexcept {
  switch (c) {
    case Component::S1:
      return {param, -1.0};
    case Component::S2:
      return {param, 1.0};
    case Component::C1:
      return {-std::cos(param), -std::sin(param)};
    case Component::C2:
      return {length_ + std::cos(param), std::sin(param)};
    case Component::None:
      break;
  }
  return {};
}

Vec2 StadiumGeometry::inward_normal(Component c, double param) const noexcept {
  switch (c) {
    case Component::S1:
      return {0.0, 1.0};
    case Component::S2:
      return {0.0, -1.0};
    case Component::C1:
      return {std::cos(param), std::sin(param)};
    case Component::C2:
      return {-std::cos(param), -std::sin(param)};
    case Component::None:
      break;
  }
  return {};
}

double StadiumGeometry::arclength(Component c, double param) const noexcept {
  switch (c) {
    case Component::S1:
      return param;
    case Component::C2:
      return length_ + (param + kHalfPi);
    case Component::S2:
      return length_ + kPi + (length_ - param);
    case Component::C1:
      return 2.0 * length_ + kPi + (param + kHalfPi);
    case Component::None:
      break;
  }
  return 0.0;
}

std::pair<Component, double> StadiumGeometry::from_arclength(double s) const {
  if (!std::isfinite(s)) throw DomainError("arclength must be finite");
  const double per = perimeter();
  s = std::fmod(s, per);
  if (s < 0.0) s += per;
  if (s < length_) return {Component::S1, s};
  s -= length_;
  if (s < kPi) return {Component::C2, s - kHalfPi};
  s -= kPi;
  if (s < length_) return {Component::S2, length_ - s};
  s -= length_;
  return {Component::C1, std::min(s, kPi) - kHalfPi};
}

Vec2 outgoing_direction(const StadiumGeometry& geom, const CollisionState& state) {
  const Vec2 n = geom.inward_normal(state.component, state.param);
  const Vec2 t{-n.y, n.x};
  const double c = std::cos(state.psi);
  const double s = std::sin(state.psi);
  return {c * n.x + s * t.x, c * n.y + s * t.y};
}

CollisionStep next_collision(const StadiumGeometry& geom, const CollisionState& state) {
  require_not_tangent(state.psi);
  const double L = geom.segment_length();
  const Vec2 p = geom.position(state.component, state.param);
  const Vec2 d = outgoing_direction(geom, state);

  double best_t = std::numeric_limits<double>::infinity();
  Component best = Component::None;
  double best_param = 0.0;

  auto consider = [&](double t, Component c, double param) {
    if (t > kMinFlight && t < best_t) {
      best_t = t;
      best = c;
      best_param = param;
    }
  };

  // Straight segments: a segment is never hit twice in a row.
  if (state.component != Component::S1 && d.y < 0.0) {
    const double t = (-1.0 - p.y) / d.y;
    const double x = p.x + t * d.x;
    if (x >= -kPieceSlack && x <= L + kPieceSlack) consider(t, Component::S1, x);
  }
  if (state.component != Component::S2 && d.y > 0.0) {
    const double t = (1.0 - p.y) / d.y;
    const double x = p.x + t * d.x;
    if (x >= -kPieceSlack && x <= L + kPieceSlack) consider(t, Component::S2, x);
  }

  // Caps. Leaving a cap, the chord back to the same circle has length
  // 2 cos psi exactly; otherwise take the exit root of the quadratic.
  for (Component cap : {Component::C1, Component::C2}) {
    const Vec2 center{cap == Component::C1 ? 0.0 : L, 0.0};
    const double t = (state.component == cap) ? 2.0 * std::cos(state.psi)
                                              : disk_exit(p, d, center);
    if (!(t > kMinFlight)) continue;
    const Vec2 q{p.x + t * d.x, p.y + t * d.y};
    if (cap == Component::C1 && q.x <= kPieceSlack) {
      consider(t, cap, std::atan2(-q.y, -q.x));
    } else if (cap == Component::C2 && q.x >= L - kPieceSlack) {
      consider(t, cap, std::atan2(q.y, q.x - L));
    }
  }

  if (best == Component::None) {
    throw GeometryError("next_collision: no boundary intersection found");
  }

  if (is_segment(best)) {
    best_param = std::clamp(best_param, 0.0, L);
  } else {
    best_param = std::clamp(best_param, -kHalfPi, kHalfPi);
  }

  const Vec2 n = geom.inward_normal(best, best_param);
  // Reflection keeps the tangential component and flips the normal one.
  const double psi_next = std::atan2(cross(n, d), -dot(n, d));
  require_not_tangent(psi_next);

  CollisionStep out;
  out.next.component = best;
  out.next.param = best_param;
  out.next.psi = psi_next;
  out.next.prev = state.component;
  out.flight_length = best_t;
  return out;
}

bool in_return_base(const CollisionState& s) noexcept {
  return is_cap(s.component) && s.prev != Component::None && s.prev != s.component;
}

double specular_residual(const StadiumGeometry& geom, const CollisionState& state) {
  const Vec2 d_in = outgoing_direction(geom, state);
  const CollisionStep step = next_collision(geom, state);
  const Vec2 d_out = outgoing_direction(geom, step.next);
  const Vec2 n = geom.inward_normal(step.next.component, step.next.param);
  // Angle between -d_in and n must equal the angle between d_out and n,
  // on opposite sides of the normal.
  const double incidence = std::atan2(cross(n, Vec2{-d_in.x, -d_in.y}),
                                      dot(n, Vec2{-d_in.x, -d_in.y}));
  const double reflection = std::atan2(cross(n, d_out), dot(n, d_out));
  return std::abs(incidence + reflection);
}

// ---------------------------------------------------------------------------

SectionObservable SectionObservable::constant(double c) {
  SectionObservable o;
  o.kind_ = Kind::Constant;
  o.c_ = c;
  o.name_ = "constant";
  return o;
}

SectionObservable SectionObservable::segment_indicator() {
  SectionObservable o;
  o.kind_ = Kind::SegmentIndicator;
  o.name_ = "segment_indicator";
  return o;
}

SectionObservable SectionObservable::x_coordinate() {
  SectionObservable o;
  o.kind_ = Kind::XCoordinate;
  o.name_ = "x_coordinate";
  return o;
}

SectionObservable SectionObservable::cos_psi() {
  SectionObservable o;
  o.kind_ = Kind::CosPsi;
  o.name_ = "cos_psi";
  return o;
}

SectionObservable SectionObservable::custom(Fn fn, std::string name) {
  SectionObservable o;
  o.kind_ = Kind::Custom;
  o.fn_ = std::move(fn);
  o.name_ = std::move(name);
  return o;
}

SectionObservable SectionObservable::from_name(const std::string& name) {
  if (name == "constant") return constant(1.0);
  if (name == "segment_indicator") return segment_indicator();
  if (name == "x_coordinate") return x_coordinate();
  if (name == "cos_psi") return cos_psi();
  throw DomainError("unknown section observable '" + name + "'");
}

double SectionObservable::raw(const StadiumGeometry& g, const CollisionState& s) const {
  switch (kind_) {
    case Kind::Constant:
      return c_;
    case Kind::SegmentIndicator:
      return is_segment(s.component) ? 1.0 : 0.0;
    case Kind::XCoordinate:
      return g.position(s.component, s.param).x;
    case Kind::CosPsi:
      return std::cos(s.psi);
    case Kind::Custom:
      return fn_(g, s);
  }
  return 0.0;
}

std::optional<double> SectionObservable::exact_mean(const StadiumGeometry& g) const {
  const double L = g.segment_length();
  switch (kind_) {
    case Kind::Constant:
      return c_;
    case Kind::SegmentIndicator:
      return 2.0 * L / g.perimeter();
    case Kind::XCoordinate:
      return 0.5 * L;
    case Kind::CosPsi:
      return 0.25 * kPi;
    case Kind::Custom:
      break;
  }
  return std::nullopt;
}

FlowObservable FlowObservable::constant(double c) {
  FlowObservable o;
  o.kind_ = Kind::Constant;
  o.c_ = c;
  o.name_ = "constant";
  return o;
}

FlowObservable FlowObservable::vy_squared() {
  FlowObservable o;
  o.kind_ = Kind::VySquared;
  o.name_ = "vy_squared";
  return o;
}

FlowObservable FlowObservable::custom(Fn fn, std::string name) {
  FlowObservable o;
  o.kind_ = Kind::Custom;
  o.fn_ = std::move(fn);
  o.name_ = std::move(name);
  return o;
}

FlowObservable FlowObservable::from_name(const std::string& name) {
  if (name == "constant") return constant(1.0);
  if (name == "vy_squared") return vy_squared();
  throw DomainError("unknown flow observable '" + name + "'");
}

double FlowObservable::raw(Vec2 position, Vec2 velocity) const {
  switch (kind_) {
    case Kind::Constant:
      return c_;
    case Kind::VySquared:
      return velocity.y * velocity.y;
    case Kind::Custom:
      return fn_(position, velocity);
  }
  return 0.0;
}

double FlowObservable::integrate_flight(Vec2 start, Vec2 direction, double duration) const {
  switch (kind_) {
    case Kind::Constant:
      return duration * (c_ - centering_);
    case Kind::VySquared:
      return duration * (direction.y * direction.y - centering_);
    case Kind::Custom:
      break;
  }
  return GaussLegendre8::integrate(
      [&](double u) {
        return (*this)(Vec2{start.x + u * direction.x, start.y + u * direction.y},
                       direction);
      },
      0.0, duration);
}

std::optional<double> FlowObservable::exact_mean() const {
  switch (kind_) {
    case Kind::Constant:
      return c_;
    case Kind::VySquared:
      return 0.5;
    case Kind::Custom:
      break;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

ReturnRecord first_return(const StadiumGeometry& geom, const CollisionState& y,
                          const SectionObservable& obs, const FlowObservable* flow,
                          std::uint64_t cap) {
  if (!in_return_base(y)) {
    throw DomainError("first_return: initial state is not in the return base Y");
  }
  ReturnRecord rec;
  CompensatedSum v_sum;
  CompensatedSum flow_sum;
  CompensatedSum flight_sum;
  CollisionState cur = y;
  while (true) {
    v_sum.add(obs(geom, cur));
    rec.max_partial = std::max(rec.max_partial, std::abs(v_sum.value()));
    const CollisionStep step = next_collision(geom, cur);
    flight_sum.add(step.flight_length);
    if (flow != nullptr) {
      flow_sum.add(flow->integrate_flight(geom.position(cur.component, cur.param),
                                          outgoing_direction(geom, cur),
                                          step.flight_length));
    }
    ++rec.R;
    cur = step.next;
    if (in_return_base(cur)) break;
    if (is_segment(cur.component)) {
      ++rec.n_seg;
    } else {
      ++rec.n_slide;
    }
    if (rec.R >= cap) {
      throw RunawayExcursion("first_return: excursion exceeded iteration cap", rec.R);
    }
  }
  rec.V = v_sum.value();
  rec.V_flow = flow_sum.value();
  rec.flight_total = flight_sum.value();
  rec.end = cur;
  return rec;
}

BoundaryAverages boundary_averages(const StadiumGeometry& geom,
                                   const SectionObservable& section,
                                   const FlowObservable& flow) {
  using Quad = boost::math::quadrature::gauss_kronrod<double, 21>;
  constexpr double kRelTol = 1e-10;
  constexpr unsigned kMaxDepth = 30;
  const double L = geom.segment_length();

  auto integrate = [&](auto&& f) {
    double err = 0.0;
    double l1 = 0.0;
    const double value = Quad::integrate(f, 0.0, L, kMaxDepth, kRelTol, &err, &l1);
    // err is an absolute estimate; compare against the L1 norm so an
    // identically zero integrand passes.
    if (!std::isfinite(value) || err > 10.0 * kRelTol * l1) {
      throw ConvergenceError("boundary_averages: quadrature did not converge");
    }
    return value;
  };

  BoundaryAverages out;
  for (Component seg : {Component::S1, Component::S2}) {
    out.I_v += integrate([&](double x) {
      CollisionState s{seg, x, 0.0, Component::None};
      return section(geom, s);
    });
    out.J_v += integrate([&](double x) {
      const Vec2 p = geom.position(seg, x);
      const Vec2 n = geom.inward_normal(seg, x);
      return flow.integrate_flight(p, n, 2.0);
    });
  }
  out.I_v /= 2.0 * L;
  out.J_v /= 2.0 * L;
  return out;
}

Component previous_component(const StadiumGeometry& geom, const CollisionState& state) {
  CollisionState reversed = state;
  reversed.psi = -state.psi;
  reversed.prev = Component::None;
  return next_collision(geom, reversed).next.component;
}

CollisionState liouville_sample(const StadiumGeometry& geom, RngStream& rng) {
  while (true) {
    const double s = rng.uniform() * geom.perimeter();
    const double psi = std::asin(2.0 * rng.uniform() - 1.0);
    if (std::abs(psi) >= kHalfPi - kTangencyMargin) continue;
    auto [component, param] = geom.from_arclength(s);
    CollisionState state{component, param, psi, Component::None};
    state.prev = previous_component(geom, state);
    return state;
  }
}

}  // namespace nswip
