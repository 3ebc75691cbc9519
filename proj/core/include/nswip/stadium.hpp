#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "nswip/rng.hpp"

namespace nswip {

/// Boundary pieces of the stadium. Segments S1 = {(x, -1)}, S2 = {(x, +1)},
/// x in [0, L]; caps C1 (center (0,0), x <= 0) and C2 (center (L,0), x >= L).
enum class Component : std::uint8_t { C1, C2, S1, S2, None };

const char* component_name(Component c) noexcept;
inline bool is_cap(Component c) noexcept { return c == Component::C1 || c == Component::C2; }
inline bool is_segment(Component c) noexcept { return c == Component::S1 || c == Component::S2; }

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Unit-radius Bunimovich stadium with straight segments of length L.
///
/// Cap parameters are angles phi in [-pi/2, pi/2] measured from the long
/// axis, so the apexes sit at phi = 0 exactly:
///   C1: (-cos phi, -sin phi),   C2: (L + cos phi, sin phi).
/// Segment parameters are the x coordinate.
class StadiumGeometry {
 public:
  explicit StadiumGeometry(double segment_length);

  double segment_length() const noexcept { return length_; }
  double perimeter() const noexcept;
  double area() const noexcept;
  /// Mean free path pi |Q| / |dQ| (mean flight under Liouville measure).
  double mean_free_path() const noexcept;

  Vec2 position(Component c, double param) const noexcept;
  Vec2 inward_normal(Component c, double param) const noexcept;

  /// Counter-clockwise arclength in [0, perimeter), starting at (0, -1).
  double arclength(Component c, double param) const noexcept;
  std::pair<Component, double> from_arclength(double s) const;

 private:
  double length_;
};

/// Point of the collision section: boundary point plus outgoing angle psi
/// from the inward normal (positive = counter-clockwise), and the component
/// of the previous collision (None when unknown).
struct CollisionState {
  Component component = Component::S1;
  double param = 0.0;
  double psi = 0.0;
  Component prev = Component::None;
};

/// States with |psi| beyond this are treated as tangential and rejected.
inline constexpr double kTangencyMargin = 1e-9;
/// Candidate intersections closer than this are the departure point.
inline constexpr double kMinFlight = 1e-12;

struct CollisionStep {
  CollisionState next;
  double flight_length = 0.0;
};

/// Next collision of the outgoing ray with the boundary, reflected
/// specularly. Throws GeometryError for tangential states or when no
/// intersection is found.
CollisionStep next_collision(const StadiumGeometry& geom, const CollisionState& state);

/// Outgoing unit direction of a state.
Vec2 outgoing_direction(const StadiumGeometry& geom, const CollisionState& state);

/// Y membership: on a cap, previous collision known and not on the same cap.
bool in_return_base(const CollisionState& state) noexcept;

/// Observable on the collision section.
class SectionObservable {
 public:
  enum class Kind { Constant, SegmentIndicator, XCoordinate, CosPsi, Custom };
  using Fn = std::function<double(const StadiumGeometry&, const CollisionState&)>;

  static SectionObservable constant(double c);
  /// 1 on S1 u S2, 0 on the caps.
  static SectionObservable segment_indicator();
  static SectionObservable x_coordinate();
  static SectionObservable cos_psi();
  static SectionObservable custom(Fn fn, std::string name = "custom");
  static SectionObservable from_name(const std::string& name);

  double raw(const StadiumGeometry& g, const CollisionState& s) const;
  double operator()(const StadiumGeometry& g, const CollisionState& s) const {
    return raw(g, s) - centering_;
  }

  /// Liouville mean when known in closed form.
  std::optional<double> exact_mean(const StadiumGeometry& g) const;
  void set_centering(double m) noexcept { centering_ = m; }
  double centering() const noexcept { return centering_; }
  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

 private:
  Kind kind_ = Kind::Constant;
  double c_ = 1.0;
  Fn fn_;
  std::string name_ = "constant";
  double centering_ = 0.0;
};

/// Observable on the billiard flow, a function of position and unit velocity.
class FlowObservable {
 public:
  enum class Kind { Constant, VySquared, Custom };
  using Fn = std::function<double(Vec2 position, Vec2 velocity)>;

  static FlowObservable constant(double c);
  /// Squared vertical velocity component; flow mean 1/2.
  static FlowObservable vy_squared();
  static FlowObservable custom(Fn fn, std::string name = "custom");
  static FlowObservable from_name(const std::string& name);

  double raw(Vec2 position, Vec2 velocity) const;
  double operator()(Vec2 p, Vec2 v) const { return raw(p, v) - centering_; }

  /// Integral of the centered observable along the first `duration` units
  /// of a straight flight (8-point Gauss-Legendre; exact for the closed-form
  /// kinds).
  double integrate_flight(Vec2 start, Vec2 direction, double duration) const;

  /// Mean under the flow-invariant (normalised Lebesgue x uniform angle) measure.
  std::optional<double> exact_mean() const;
  void set_centering(double m) noexcept { centering_ = m; }
  double centering() const noexcept { return centering_; }
  Kind kind() const noexcept { return kind_; }
  const std::string& name() const noexcept { return name_; }

 private:
  Kind kind_ = Kind::Constant;
  double c_ = 1.0;
  Fn fn_;
  std::string name_ = "constant";
  double centering_ = 0.0;
};

/// One excursion from Y back to Y.
struct ReturnRecord {
  std::uint64_t R = 0;
  std::uint64_t n_slide = 0;
  std::uint64_t n_seg = 0;
  /// Induced section observable sum over the R collisions.
  double V = 0.0;
  /// max over 0 <= l <= R of |partial sums of the section observable|.
  double max_partial = 0.0;
  /// Induced flow observable: integral over the R flights (0 if none given).
  double V_flow = 0.0;
  double flight_total = 0.0;
  CollisionState end{};

  std::uint64_t R_bounce() const noexcept { return n_seg + 1; }
  std::uint64_t R_slide() const noexcept { return n_slide; }
};

inline constexpr std::uint64_t kDefaultExcursionCap = 100'000'000ULL;

/// Step from y in Y until the next state in Y.
ReturnRecord first_return(const StadiumGeometry& geom, const CollisionState& y,
                          const SectionObservable& obs,
                          const FlowObservable* flow = nullptr,
                          std::uint64_t cap = kDefaultExcursionCap);

struct BoundaryAverages {
  double I_v = 0.0;
  double J_v = 0.0;
};

/// I_v = (1/2L) int_{S1 u S2} v(q, 0) dq and
/// J_v = (1/2L) int_{S1 u S2} v_h(q, 0) dq, v_h integrating the flow
/// observable along the perpendicular flight of length 2.
/// Adaptive Gauss-Kronrod, relative tolerance 1e-10.
BoundaryAverages boundary_averages(const StadiumGeometry& geom,
                                   const SectionObservable& section,
                                   const FlowObservable& flow);

/// Draw from the normalised Liouville measure cos psi ds dpsi / (2 |dQ|),
/// rejecting near-tangential draws, then recover prev by one backward solve.
CollisionState liouville_sample(const StadiumGeometry& geom, RngStream& rng);

/// Component of the collision preceding `state` (time-reversed solve).
Component previous_component(const StadiumGeometry& geom, const CollisionState& state);

/// |angle of incidence| - |angle of reflection| at the collision reached by
/// one step from `state`, computed from the Cartesian directions.
double specular_residual(const StadiumGeometry& geom, const CollisionState& state);

}  // namespace nswip
