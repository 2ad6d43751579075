#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ewb/geometry.hpp"

namespace ewb {

enum class Axis { Z, X, Y1, Y2 };
constexpr std::array<Axis, 4> kAllAxes{Axis::Z, Axis::X, Axis::Y1, Axis::Y2};
const char* axis_name(Axis a);
Axis axis_from_name(const std::string& name);

/// Disc angles commanded at the instrument housing, degrees.
struct DiscState {
  double z = 0.0;   // roll disc (disc 1)
  double x = 0.0;   // pitch disc (disc 2)
  double y1 = 0.0;  // jaw-1 disc (disc 3)
  double y2 = 0.0;  // jaw-2 disc (disc 4)

  double& axis(Axis a);
  double axis(Axis a) const;
};

/// Instrument-tip configuration, degrees.
struct TipPose {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw1 = 0.0;
  double yaw2 = 0.0;

  double jaw_opening() const { return yaw1 - yaw2; }
};

struct OutOfRangeError : std::runtime_error {
  Axis axis;
  OutOfRangeError(Axis a, const std::string& what)
      : std::runtime_error(what), axis(a) {}
};

struct InfeasibleError : std::runtime_error {
  explicit InfeasibleError(const std::string& reason) : std::runtime_error(reason) {}
};

/// Strictly increasing piecewise-linear disc<->tip map for one axis.
/// Breakpoints are (disc_deg, tip_deg) pairs; the center breakpoint maps
/// 0 <-> 0. Evaluation outside the disc span is an error, never a clamp.
class AxisMap {
 public:
  struct Breakpoint {
    double disc_deg;
    double tip_deg;
  };

  AxisMap() = default;
  AxisMap(Axis axis, std::vector<Breakpoint> breakpoints);

  Axis axis() const { return axis_; }
  const std::vector<Breakpoint>& breakpoints() const { return points_; }

  double disc_min() const { return points_.front().disc_deg; }
  double disc_max() const { return points_.back().disc_deg; }
  double tip_min() const { return points_.front().tip_deg; }
  double tip_max() const { return points_.back().tip_deg; }

  bool disc_in_range(double disc_deg) const;
  bool tip_in_range(double tip_deg) const;

  double forward(double disc_deg) const;  // throws OutOfRangeError
  double inverse(double tip_deg) const;   // throws OutOfRangeError

  /// Same interpolation with the disc coordinate clamped to the span.
  /// Models the physical hard stop of the disc; command validation stays
  /// strict.
  double forward_clamped(double disc_deg) const;

  /// End-to-end tip span over disc span.
  double transmission_ratio() const;

 private:
  Axis axis_ = Axis::Z;
  std::vector<Breakpoint> points_;
};

/// Marker positions in the tip-local frame at pose zero, plus the rigid
/// body each marker is mounted on (markers cannot be occluded by their
/// own mounting body).
enum class MarkerId { C1, T1, C2, T2, T3 };
constexpr std::array<MarkerId, 5> kAllMarkers{MarkerId::C1, MarkerId::T1, MarkerId::C2,
                                              MarkerId::T2, MarkerId::T3};
const char* marker_name(MarkerId m);

enum class BodyId { Shaft, Wrist, Jaw1, Jaw2 };

struct InstrumentGeometry {
  double total_length_mm = 430.0;
  double jaw_length_mm = 10.0;
  double pivot_to_clevis_mm = 9.0;
  // rest-pose marker layout, tip-local mm (origin at the wrist pivot,
  // +z distal, x pitch axis, y yaw axis)
  std::map<MarkerId, Vec3> markers;

  static InstrumentGeometry default_geometry();
  Vec3 marker(MarkerId m) const { return markers.at(m); }
  BodyId marker_body(MarkerId m) const;
  void validate() const;  // throws std::invalid_argument
};

struct InstrumentCalibration {
  std::string instrument_id;
  AxisMap map_z, map_x, map_y1, map_y2;
  double coupling_y1 = 0.0;  // yaw-disc deg per pitch-disc deg to hold jaw 1
  double coupling_y2 = 0.0;
  double coupling_y1_reciprocal = 0.0;  // as-reported inverse form (may be 0 = unknown)
  double coupling_y2_reciprocal = 0.0;
  double jaw_open_max_deg = 60.0;
  InstrumentGeometry geometry;

  const AxisMap& map(Axis a) const;
  double coupling(Axis a) const;  // 0 for Z/X
  void validate() const;          // throws std::invalid_argument
};

struct FeasibilityReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// disc -> tip through the per-axis maps with pitch/yaw coupling removed.
TipPose forward_map(const InstrumentCalibration& calib, const DiscState& disc);

/// tip -> disc; exact inverse of forward_map on the continuous domain.
DiscState inverse_map(const InstrumentCalibration& calib, const TipPose& tip);

/// Total function listing every violated range / jaw constraint.
FeasibilityReport feasibility_check(const InstrumentCalibration& calib, const TipPose& tip);

/// World positions of the five tracking markers for a tip pose.
/// C1/T1/C2 ride the roll+pitch chain; T2/T3 additionally rotate by their
/// jaw yaw about the clevis y-axis.
std::map<MarkerId, Vec3> marker_world_positions(const InstrumentGeometry& geometry,
                                                const TipPose& tip,
                                                const RigidTransform& shaft_pose);

/// Occluder capsule (segment + radius) used by the visibility model.
struct Capsule {
  Vec3 a;
  Vec3 b;
  double radius;
  BodyId body;
};

/// Shaft/wrist/jaw occluder capsules for a pose, in world coordinates.
std::vector<Capsule> instrument_occluders(const InstrumentGeometry& geometry,
                                          const TipPose& tip,
                                          const RigidTransform& shaft_pose);

// JSON serialization (schema: axes -> breakpoints, coupling, geometry block)
std::string calibration_to_json(const InstrumentCalibration& calib);
InstrumentCalibration calibration_from_json(const std::string& json_text);
InstrumentCalibration load_calibration(const std::string& path);
void save_calibration(const InstrumentCalibration& calib, const std::string& path);

}  // namespace ewb
