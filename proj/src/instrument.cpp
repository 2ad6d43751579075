#include "ewb/instrument.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ewb {

using nlohmann::json;

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::Z: return "z";
    case Axis::X: return "x";
    case Axis::Y1: return "y1";
    case Axis::Y2: return "y2";
  }
  return "?";
}

Axis axis_from_name(const std::string& name) {
  for (Axis a : kAllAxes)
    if (name == axis_name(a)) return a;
  throw std::invalid_argument("unknown axis name: " + name);
}

double& DiscState::axis(Axis a) {
  switch (a) {
    case Axis::Z: return z;
    case Axis::X: return x;
    case Axis::Y1: return y1;
    default: return y2;
  }
}

double DiscState::axis(Axis a) const {
  switch (a) {
    case Axis::Z: return z;
    case Axis::X: return x;
    case Axis::Y1: return y1;
    default: return y2;
  }
}

const char* marker_name(MarkerId m) {
  switch (m) {
    case MarkerId::C1: return "C1";
    case MarkerId::T1: return "T1";
    case MarkerId::C2: return "C2";
    case MarkerId::T2: return "T2";
    case MarkerId::T3: return "T3";
  }
  return "?";
}

AxisMap::AxisMap(Axis axis, std::vector<Breakpoint> breakpoints)
    : axis_(axis), points_(std::move(breakpoints)) {
  if (points_.size() < 3)
    throw std::invalid_argument(std::string(axis_name(axis_)) +
                                ": axis map needs at least 3 breakpoints");
  for (std::size_t i = 1; i < points_.size(); ++i) {
    if (!(points_[i].disc_deg > points_[i - 1].disc_deg) ||
        !(points_[i].tip_deg > points_[i - 1].tip_deg))
      throw std::invalid_argument(std::string(axis_name(axis_)) +
                                  ": breakpoints must be strictly increasing on both scales");
  }
  bool has_center = false;
  for (const auto& p : points_)
    if (p.disc_deg == 0.0 && p.tip_deg == 0.0) has_center = true;
  if (!has_center)
    throw std::invalid_argument(std::string(axis_name(axis_)) +
                                ": axis map must contain the center breakpoint (0, 0)");
}

bool AxisMap::disc_in_range(double d) const { return d >= disc_min() && d <= disc_max(); }
bool AxisMap::tip_in_range(double t) const { return t >= tip_min() && t <= tip_max(); }

namespace {

double interp(const std::vector<AxisMap::Breakpoint>& pts, double v, bool disc_to_tip) {
  auto key = [&](const AxisMap::Breakpoint& p) { return disc_to_tip ? p.disc_deg : p.tip_deg; };
  auto val = [&](const AxisMap::Breakpoint& p) { return disc_to_tip ? p.tip_deg : p.disc_deg; };
  std::size_t hi = 1;
  while (hi + 1 < pts.size() && v > key(pts[hi])) ++hi;
  const auto& a = pts[hi - 1];
  const auto& b = pts[hi];
  double t = (v - key(a)) / (key(b) - key(a));
  return val(a) + t * (val(b) - val(a));
}

}  // namespace

double AxisMap::forward(double disc_deg) const {
  if (!std::isfinite(disc_deg) || !disc_in_range(disc_deg))
    throw OutOfRangeError(axis_, std::string(axis_name(axis_)) + ": disc angle " +
                                     std::to_string(disc_deg) + " outside [" +
                                     std::to_string(disc_min()) + ", " +
                                     std::to_string(disc_max()) + "]");
  return interp(points_, disc_deg, true);
}

double AxisMap::forward_clamped(double disc_deg) const {
  return interp(points_, std::clamp(disc_deg, disc_min(), disc_max()), true);
}

double AxisMap::inverse(double tip_deg) const {
  if (!std::isfinite(tip_deg) || !tip_in_range(tip_deg))
    throw OutOfRangeError(axis_, std::string(axis_name(axis_)) + ": tip angle " +
                                     std::to_string(tip_deg) + " outside [" +
                                     std::to_string(tip_min()) + ", " +
                                     std::to_string(tip_max()) + "]");
  return interp(points_, tip_deg, false);
}

double AxisMap::transmission_ratio() const {
  return (tip_max() - tip_min()) / (disc_max() - disc_min());
}

InstrumentGeometry InstrumentGeometry::default_geometry() {
  InstrumentGeometry g;
  // Marker layout is a bench assumption: levers chosen so every marker sits
  // proud of its occluder body and the pitch arc stays inside the default
  // camera frustum. T3 carries a lateral standoff so it is not hidden under
  // jaw 1 when the jaws close; the measurement removes the resulting
  // constant rest-angle bias.
  const double t_len = std::sqrt(g.jaw_length_mm * g.jaw_length_mm - 0.64);
  g.markers[MarkerId::C1] = Vec3(1.5, 0.0, 0.0);
  g.markers[MarkerId::T1] = Vec3(1.5, 0.0, 6.0);
  g.markers[MarkerId::C2] = Vec3(0.0, 0.0, g.pivot_to_clevis_mm);
  g.markers[MarkerId::T2] = Vec3(0.0, 0.8, t_len);   // offset along the yaw axis
  g.markers[MarkerId::T3] = Vec3(-0.8, 0.0, t_len);  // lateral standoff
  return g;
}

BodyId InstrumentGeometry::marker_body(MarkerId m) const {
  switch (m) {
    case MarkerId::T2: return BodyId::Jaw1;
    case MarkerId::T3: return BodyId::Jaw2;
    default: return BodyId::Wrist;
  }
}

void InstrumentGeometry::validate() const {
  if (!(total_length_mm > 0) || !(jaw_length_mm > 0) || !(pivot_to_clevis_mm > 0))
    throw std::invalid_argument("geometry lengths must be positive");
  for (MarkerId m : kAllMarkers)
    if (!markers.count(m))
      throw std::invalid_argument(std::string("geometry: missing marker ") + marker_name(m));
  const Vec3 c2 = marker(MarkerId::C2);
  for (MarkerId m : {MarkerId::T2, MarkerId::T3}) {
    double d = (marker(m) - c2).norm();
    if (std::abs(d - jaw_length_mm) > 1e-9)
      throw std::invalid_argument(std::string("geometry: |C2-") + marker_name(m) +
                                  "| must equal the jaw length");
  }
}

const AxisMap& InstrumentCalibration::map(Axis a) const {
  switch (a) {
    case Axis::Z: return map_z;
    case Axis::X: return map_x;
    case Axis::Y1: return map_y1;
    default: return map_y2;
  }
}

double InstrumentCalibration::coupling(Axis a) const {
  if (a == Axis::Y1) return coupling_y1;
  if (a == Axis::Y2) return coupling_y2;
  return 0.0;
}

void InstrumentCalibration::validate() const {
  for (Axis a : kAllAxes) {
    if (!(map(a).transmission_ratio() > 0))
      throw std::invalid_argument(std::string(axis_name(a)) + ": transmission must be positive");
  }
  for (double k : {coupling_y1, coupling_y2}) {
    if (!std::isfinite(k) || k <= 0.0 || k >= 3.0)
      throw std::invalid_argument("coupling coefficients must lie in (0, 3)");
  }
  if (!(jaw_open_max_deg > 0))
    throw std::invalid_argument("jaw_open_max_deg must be positive");
  geometry.validate();
}

TipPose forward_map(const InstrumentCalibration& calib, const DiscState& disc) {
  TipPose tip;
  tip.roll = calib.map_z.forward(disc.z);
  tip.pitch = calib.map_x.forward(disc.x);
  tip.yaw1 = calib.map_y1.forward(disc.y1 - calib.coupling_y1 * disc.x);
  tip.yaw2 = calib.map_y2.forward(disc.y2 - calib.coupling_y2 * disc.x);
  return tip;
}

DiscState inverse_map(const InstrumentCalibration& calib, const TipPose& tip) {
  FeasibilityReport report = feasibility_check(calib, tip);
  if (!report.ok()) {
    std::string reason;
    for (const auto& v : report.violations) {
      if (!reason.empty()) reason += "; ";
      reason += v;
    }
    throw InfeasibleError(reason);
  }
  DiscState disc;
  disc.z = calib.map_z.inverse(tip.roll);
  disc.x = calib.map_x.inverse(tip.pitch);
  disc.y1 = calib.map_y1.inverse(tip.yaw1) + calib.coupling_y1 * disc.x;
  disc.y2 = calib.map_y2.inverse(tip.yaw2) + calib.coupling_y2 * disc.x;
  return disc;
}

FeasibilityReport feasibility_check(const InstrumentCalibration& calib, const TipPose& tip) {
  FeasibilityReport report;
  auto check = [&](Axis a, double value, const char* label) {
    const AxisMap& m = calib.map(a);
    if (!std::isfinite(value) || !m.tip_in_range(value)) {
      std::ostringstream os;
      os << label << " " << value << " outside [" << m.tip_min() << ", " << m.tip_max() << "]";
      report.violations.push_back(os.str());
    }
  };
  check(Axis::Z, tip.roll, "roll");
  check(Axis::X, tip.pitch, "pitch");
  check(Axis::Y1, tip.yaw1, "yaw1");
  check(Axis::Y2, tip.yaw2, "yaw2");
  double opening = tip.jaw_opening();
  if (!std::isfinite(opening) || opening < 0.0) {
    report.violations.push_back("jaw opening negative (jaws crossed)");
  } else if (opening > calib.jaw_open_max_deg) {
    std::ostringstream os;
    os << "jaw opening " << opening << " exceeds max " << calib.jaw_open_max_deg;
    report.violations.push_back(os.str());
  }
  return report;
}

std::map<MarkerId, Vec3> marker_world_positions(const InstrumentGeometry& geometry,
                                                const TipPose& tip,
                                                const RigidTransform& shaft_pose) {
  const Mat3 wrist = rot_z(tip.roll) * rot_x(tip.pitch);
  const Vec3 clevis_local = geometry.marker(MarkerId::C2);
  std::map<MarkerId, Vec3> out;
  for (MarkerId m : {MarkerId::C1, MarkerId::T1, MarkerId::C2})
    out[m] = shaft_pose.apply(wrist * geometry.marker(m));
  const Mat3 jaw1 = wrist * rot_y(tip.yaw1);
  const Mat3 jaw2 = wrist * rot_y(tip.yaw2);
  out[MarkerId::T2] =
      shaft_pose.apply(wrist * clevis_local + jaw1 * (geometry.marker(MarkerId::T2) - clevis_local));
  out[MarkerId::T3] =
      shaft_pose.apply(wrist * clevis_local + jaw2 * (geometry.marker(MarkerId::T3) - clevis_local));
  return out;
}

std::vector<Capsule> instrument_occluders(const InstrumentGeometry& geometry,
                                          const TipPose& tip,
                                          const RigidTransform& shaft_pose) {
  const Mat3 wrist = rot_z(tip.roll) * rot_x(tip.pitch);
  const Vec3 clevis_local = geometry.marker(MarkerId::C2);
  const Vec3 clevis = shaft_pose.apply(wrist * clevis_local);
  std::vector<Capsule> out;
  // shaft: proximal of the pivot, does not pitch
  out.push_back({shaft_pose.apply(Vec3(0, 0, -geometry.total_length_mm)),
                 shaft_pose.apply(Vec3(0, 0, -1.0)), 1.2, BodyId::Shaft});
  // wrist body between pivot and clevis
  out.push_back({shaft_pose.apply(wrist * Vec3(0, 0, 1.0)),
                 shaft_pose.apply(wrist * Vec3(0, 0, geometry.pivot_to_clevis_mm - 1.0)), 1.2,
                 BodyId::Wrist});
  // jaws: keep a margin off the clevis and the tip markers
  auto jaw_capsule = [&](double yaw_deg, BodyId body) {
    const Vec3 dir = shaft_pose.rotate(wrist * rot_y(yaw_deg) * Vec3(0, 0, 1));
    out.push_back({clevis + 0.15 * geometry.jaw_length_mm * dir,
                   clevis + 0.85 * geometry.jaw_length_mm * dir, 0.5, body});
  };
  jaw_capsule(tip.yaw1, BodyId::Jaw1);
  jaw_capsule(tip.yaw2, BodyId::Jaw2);
  return out;
}

namespace {

json map_to_json(const AxisMap& m) {
  json arr = json::array();
  for (const auto& p : m.breakpoints()) arr.push_back({p.disc_deg, p.tip_deg});
  return json{{"breakpoints", arr}};
}

AxisMap map_from_json(Axis axis, const json& j) {
  std::vector<AxisMap::Breakpoint> pts;
  for (const auto& p : j.at("breakpoints"))
    pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return AxisMap(axis, std::move(pts));
}

}  // namespace

std::string calibration_to_json(const InstrumentCalibration& calib) {
  json j;
  j["instrument_id"] = calib.instrument_id;
  j["axes"] = {{"z", map_to_json(calib.map_z)},
               {"x", map_to_json(calib.map_x)},
               {"y1", map_to_json(calib.map_y1)},
               {"y2", map_to_json(calib.map_y2)}};
  j["coupling"] = {{"y1", calib.coupling_y1},
                   {"y2", calib.coupling_y2},
                   {"y1_reciprocal", calib.coupling_y1_reciprocal},
                   {"y2_reciprocal", calib.coupling_y2_reciprocal}};
  j["jaw_open_max_deg"] = calib.jaw_open_max_deg;
  json markers;
  for (MarkerId m : kAllMarkers) {
    const Vec3 v = calib.geometry.marker(m);
    markers[marker_name(m)] = {v.x(), v.y(), v.z()};
  }
  j["geometry"] = {{"total_length_mm", calib.geometry.total_length_mm},
                   {"jaw_length_mm", calib.geometry.jaw_length_mm},
                   {"pivot_to_clevis_mm", calib.geometry.pivot_to_clevis_mm},
                   {"markers", markers}};
  return j.dump(2) + "\n";
}

InstrumentCalibration calibration_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  InstrumentCalibration calib;
  calib.instrument_id = j.at("instrument_id").get<std::string>();
  calib.map_z = map_from_json(Axis::Z, j.at("axes").at("z"));
  calib.map_x = map_from_json(Axis::X, j.at("axes").at("x"));
  calib.map_y1 = map_from_json(Axis::Y1, j.at("axes").at("y1"));
  calib.map_y2 = map_from_json(Axis::Y2, j.at("axes").at("y2"));
  calib.coupling_y1 = j.at("coupling").at("y1").get<double>();
  calib.coupling_y2 = j.at("coupling").at("y2").get<double>();
  calib.coupling_y1_reciprocal = j.at("coupling").value("y1_reciprocal", 0.0);
  calib.coupling_y2_reciprocal = j.at("coupling").value("y2_reciprocal", 0.0);
  calib.jaw_open_max_deg = j.at("jaw_open_max_deg").get<double>();
  const json& g = j.at("geometry");
  calib.geometry.total_length_mm = g.at("total_length_mm").get<double>();
  calib.geometry.jaw_length_mm = g.at("jaw_length_mm").get<double>();
  calib.geometry.pivot_to_clevis_mm = g.at("pivot_to_clevis_mm").get<double>();
  for (MarkerId m : kAllMarkers) {
    const json& v = g.at("markers").at(marker_name(m));
    calib.geometry.markers[m] = Vec3(v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
  }
  calib.validate();
  return calib;
}

InstrumentCalibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return calibration_from_json(ss.str());
}

void save_calibration(const InstrumentCalibration& calib, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write calibration file: " + path);
  out << calibration_to_json(calib);
}

}  // namespace ewb
