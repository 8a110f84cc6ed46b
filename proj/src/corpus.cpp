#include "partstyle/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "json.hpp"
#include "partstyle/binary_io.hpp"
#include "partstyle/hash.hpp"
#include "partstyle/motion_io.hpp"

namespace partstyle {

namespace {

using Eigen::Matrix3d;
using Eigen::Vector3d;
using nlohmann::json;

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

PartTexts make_parts(std::string root, std::string backbone, std::string left_arm, std::string right_arm,
                     std::string left_leg, std::string right_leg) {
  PartTexts t;
  t[BodyPart::Root] = std::move(root);
  t[BodyPart::Backbone] = std::move(backbone);
  t[BodyPart::LeftArm] = std::move(left_arm);
  t[BodyPart::RightArm] = std::move(right_arm);
  t[BodyPart::LeftLeg] = std::move(left_leg);
  t[BodyPart::RightLeg] = std::move(right_leg);
  return t;
}

// Skeleton (metres), parent-relative rest offsets with arms hanging down,
// facing +z, left side on +x.
const std::array<Vector3d, layout::kNumJoints>& rest_offsets() {
  static const std::array<Vector3d, layout::kNumJoints> o = {
      Vector3d(0, 0, 0),        Vector3d(0.08, -0.09, 0), Vector3d(-0.08, -0.09, 0), Vector3d(0, 0.11, -0.01),
      Vector3d(0, -0.42, 0),    Vector3d(0, -0.42, 0),    Vector3d(0, 0.13, 0),      Vector3d(0, -0.42, 0),
      Vector3d(0, -0.42, 0),    Vector3d(0, 0.06, 0.01),  Vector3d(0, -0.06, 0.12),  Vector3d(0, -0.06, 0.12),
      Vector3d(0, 0.21, 0),     Vector3d(0.07, 0.12, 0),  Vector3d(-0.07, 0.12, 0),  Vector3d(0, 0.10, 0.03),
      Vector3d(0.10, 0.03, 0),  Vector3d(-0.10, 0.03, 0), Vector3d(0, -0.26, 0),     Vector3d(0, -0.26, 0),
      Vector3d(0, -0.25, 0),    Vector3d(0, -0.25, 0),
  };
  return o;
}

constexpr double kThigh = 0.42, kShin = 0.42, kUpperArm = 0.26, kForearm = 0.25;
constexpr double kAnkleClearance = 0.08;
constexpr double kStandHeight = 0.90;
constexpr double kFootLateral = 0.10;
constexpr double kContactHeight = 0.05;

// Heading rotation matching the feature convention: forward (0,0,1) maps to
// (-sin θ, 0, cos θ).
Matrix3d heading(double theta) { return Eigen::AngleAxisd(-theta, Vector3d::UnitY()).toRotationMatrix(); }

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

double lerp(double a, double b, double w) { return a + (b - a) * w; }

// Piecewise smooth keyframe track over u in [0,1).
double track(double u, std::initializer_list<std::pair<double, double>> keys) {
  auto it = keys.begin();
  auto prev = *it;
  for (++it; it != keys.end(); ++it) {
    if (u < it->first) return lerp(prev.second, it->second, smoothstep((u - prev.first) / (it->first - prev.first)));
    prev = *it;
  }
  return prev.second;
}

double frac(double x) { return x - std::floor(x); }

// Upper-arm direction in the torso frame from forward flexion α and
// abduction β (radians); side = +1 left, -1 right.
Vector3d arm_direction(double alpha, double beta, double side) {
  return Vector3d(side * std::sin(beta) * std::cos(alpha), -std::cos(beta) * std::cos(alpha), std::sin(alpha));
}

Vector3d bend_forward(const Vector3d& d, double gamma) {
  Vector3d f = std::abs(d.z()) < 0.9 ? Vector3d::UnitZ() : Vector3d::UnitY();
  Vector3d p = (f - f.dot(d) * d).normalized();
  return (std::cos(gamma) * d + std::sin(gamma) * p).normalized();
}

struct ArmPose {
  Vector3d upper = Vector3d(0, -1, 0);
  Vector3d fore = Vector3d(0, -1, 0);
};

struct Pose {
  Vector3d pelvis = Vector3d(0, kStandHeight, 0);
  double heading = 0.0;
  double pitch = 0.0;
  double twist = 0.0;
  std::array<Vector3d, 2> ankle;  // world targets, [0] left
  std::array<double, 2> foot_yaw{0.0, 0.0};
  std::array<ArmPose, 2> arm;
};

ArmPose rest_arm(double t, double side) {
  ArmPose a;
  a.upper = arm_direction(2.0 * kDeg * std::sin(2 * kPi * 0.25 * t), 6.0 * kDeg, side);
  a.fore = bend_forward(a.upper, 10.0 * kDeg);
  return a;
}

ArmPose swing_arm(double angle, double side, double elbow_deg) {
  ArmPose a;
  a.upper = arm_direction(angle, 8.0 * kDeg, side);
  a.fore = bend_forward(a.upper, elbow_deg * kDeg);
  return a;
}

struct Gait {
  double stride = 0.0;  // metres per cycle
  double cadence = 0.9;
  double phase = 0.0;
  double circle_radius = 0.0;  // 0 = straight

  double path_heading(double s) const { return circle_radius > 0 ? -s / circle_radius : 0.0; }
  Vector3d path_point(double s) const {
    if (circle_radius > 0) return Vector3d(circle_radius * (1 - std::cos(s / circle_radius)), 0, circle_radius * std::sin(s / circle_radius));
    return Vector3d(0, 0, s);
  }
  // Foot cycle coordinate; the right foot runs half a cycle behind.
  double cycle(double t, int side) const { return cadence * t + phase + (side == 1 ? 0.5 : 0.0); }
  // Arc length of a foot: planted for 60% of the cycle, then carried one
  // stride forward; lift starts before and ends after the carry.
  void foot(double t, int side, double& s, double& lift) const {
    const double c = cycle(t, side);
    const double k = std::floor(c), u = c - k;
    const double ph = phase + (side == 1 ? 0.5 : 0.0);
    double g = 0.0;
    lift = 0.0;
    if (u >= 0.6) {
      const double w = (u - 0.6) / 0.4;
      g = smoothstep((w - 0.25) / 0.5);
      lift = 0.08 * std::sin(kPi * w);
    }
    s = stride * (k + g + 0.3 - ph);
  }
};

Vector3d leg_ankle(const Gait& gait, double t, int side, double& yaw) {
  double s = 0, lift = 0;
  gait.foot(t, side, s, lift);
  yaw = gait.path_heading(s);
  const double lat = side == 0 ? kFootLateral : -kFootLateral;
  Vector3d p = gait.path_point(s) + heading(yaw) * Vector3d(lat, 0, 0);
  p.y() = kAnkleClearance + lift;
  return p;
}

void planted_feet(Pose& pose) {
  for (int side = 0; side < 2; ++side) {
    const double lat = side == 0 ? kFootLateral : -kFootLateral;
    pose.ankle[side] = Vector3d(lat, kAnkleClearance, 0);
    pose.foot_yaw[side] = 0.0;
  }
}

double content_pitch_deg(ContentKind k) {
  switch (k) {
    case ContentKind::Walk:
    case ContentKind::WalkCircle: return 4.0;
    case ContentKind::Throw: return 3.0;
    default: return 2.0;
  }
}

Pose make_pose(const ContentSpec& content, const SynthParams& sp, double t) {
  Pose pose;
  const double tt = t * sp.tempo;
  const double arm_phase = 2 * kPi * (0.9 * tt + sp.phase);
  std::array<ArmPose, 2> content_arm = {rest_arm(t, 1.0), rest_arm(t, -1.0)};
  double style_swing_phase = arm_phase;
  pose.pitch = sp.spine_pitch_deg * kDeg;

  switch (content.kind) {
    case ContentKind::Walk:
    case ContentKind::WalkCircle: {
      Gait g;
      g.cadence = sp.cadence;
      g.stride = sp.cadence > 0 ? sp.speed / sp.cadence : 0.0;
      g.phase = sp.phase;
      g.circle_radius = content.kind == ContentKind::WalkCircle ? 2.0 : 0.0;
      const double s_root = sp.speed * t;
      pose.heading = g.path_heading(s_root);
      pose.pelvis = g.path_point(s_root);
      pose.pelvis.y() = kStandHeight - 0.01 + 0.012 * std::cos(4 * kPi * g.cycle(t, 0));
      for (int side = 0; side < 2; ++side) pose.ankle[side] = leg_ankle(g, t, side, pose.foot_yaw[side]);
      // Arms swing against the same-side leg.
      style_swing_phase = 2 * kPi * g.cycle(t, 0);
      content_arm[0] = swing_arm(-20.0 * kDeg * std::sin(style_swing_phase), 1.0, 15.0);
      content_arm[1] = swing_arm(20.0 * kDeg * std::sin(style_swing_phase), -1.0, 15.0);
      break;
    }
    case ContentKind::Wave: {
      planted_feet(pose);
      pose.pelvis.y() = kStandHeight + 0.004 * std::sin(2 * kPi * 0.25 * t);
      ArmPose r;
      r.upper = arm_direction(10.0 * kDeg, 130.0 * kDeg, -1.0);
      const double wag = 30.0 * kDeg * std::sin(2 * kPi * (1.5 * tt + sp.phase));
      r.fore = Vector3d(-std::sin(wag), std::cos(wag), 0.15).normalized();
      content_arm[1] = r;
      break;
    }
    case ContentKind::Throw: {
      planted_feet(pose);
      const double u = frac(tt / 2.0 + sp.phase);
      const double alpha = track(u, {{0.0, 0.0}, {0.35, -50.0}, {0.5, 110.0}, {0.7, 40.0}, {1.0, 0.0}});
      const double beta = track(u, {{0.0, 6.0}, {0.35, 70.0}, {0.5, 40.0}, {0.7, 20.0}, {1.0, 6.0}});
      const double gamma = track(u, {{0.0, 10.0}, {0.35, 100.0}, {0.5, 10.0}, {0.7, 20.0}, {1.0, 10.0}});
      content_arm[1].upper = arm_direction(alpha * kDeg, beta * kDeg, -1.0);
      content_arm[1].fore = bend_forward(content_arm[1].upper, gamma * kDeg);
      pose.twist = track(u, {{0.0, 0.0}, {0.35, -25.0}, {0.5, 20.0}, {0.7, 10.0}, {1.0, 0.0}}) * kDeg;
      pose.pelvis.y() = kStandHeight - 0.02 * std::sin(kPi * u);
      break;
    }
    case ContentKind::Jump: {
      planted_feet(pose);
      const double u = frac(tt / 1.6 + sp.phase);
      double y;
      if (u < 0.35) y = lerp(kStandHeight, 0.76, smoothstep(u / 0.35));
      else if (u < 0.45) y = lerp(0.76, 0.92, smoothstep((u - 0.35) / 0.1));
      else if (u < 0.75) {
        const double w = (u - 0.45) / 0.3;
        y = 0.92 + 0.25 * 4 * w * (1 - w);
      } else if (u < 0.85) y = lerp(0.92, 0.80, smoothstep((u - 0.75) / 0.1));
      else y = lerp(0.80, kStandHeight, smoothstep((u - 0.85) / 0.15));
      pose.pelvis.y() = y;
      const double hip_y = y - 0.09;
      for (int side = 0; side < 2; ++side) pose.ankle[side].y() = std::max(kAnkleClearance, hip_y - 0.835);
      const double crouch = (kStandHeight - std::min(y, kStandHeight)) / (kStandHeight - 0.76);
      if (!sp.backbone_styled) pose.pitch = (2.0 + 25.0 * crouch) * kDeg;
      const double up = track(u, {{0.0, 0.0}, {0.3, -30.0}, {0.45, 150.0}, {0.75, 120.0}, {0.9, 0.0}, {1.0, 0.0}});
      content_arm[0] = swing_arm(up * kDeg, 1.0, 10.0);
      content_arm[1] = swing_arm(up * kDeg, -1.0, 10.0);
      break;
    }
    case ContentKind::Idle: {
      planted_feet(pose);
      pose.pelvis.y() = kStandHeight + 0.004 * std::sin(2 * kPi * 0.25 * t);
      pose.pitch += 1.0 * kDeg * std::sin(2 * kPi * 0.25 * t);
      break;
    }
  }
  if (sp.backbone_styled) pose.pelvis.y() -= 0.03;  // hunched stance sits lower

  const std::array<bool, 2> styled = {sp.left_arm_styled, sp.right_arm_styled};
  for (int side = 0; side < 2; ++side) {
    const double sgn = side == 0 ? 1.0 : -1.0;
    if (!styled[side]) {
      pose.arm[side] = content_arm[side];
    } else if (sp.arm_elevation_deg) {
      ArmPose a;
      const double sway = 2.0 * kDeg * std::sin(2 * kPi * (0.3 * tt + sp.phase));
      a.upper = arm_direction(0.0, *sp.arm_elevation_deg * kDeg + sway, sgn);
      a.fore = a.upper;
      pose.arm[side] = a;
    } else {
      const double amp = sp.arm_swing_deg * kDeg;
      pose.arm[side] = swing_arm(-sgn * amp * std::sin(style_swing_phase), sgn, 35.0);
    }
  }
  return pose;
}

struct Frame {
  std::array<Vector3d, layout::kNumJoints> p;
  std::array<Matrix3d, layout::kNumJoints> g;  // global joint rotations
  double heading = 0.0;
};

Vector3d knee_position(const Vector3d& hip, Vector3d& ankle, const Vector3d& forward) {
  Vector3d d = ankle - hip;
  double len = d.norm();
  const double reach = (kThigh + kShin) * 0.9999;
  if (len > reach) {
    d *= reach / len;
    len = reach;
    ankle = hip + d;
  }
  const Vector3d dir = d / len;
  Vector3d pole = forward - forward.dot(dir) * dir;
  pole.normalize();
  const double h = std::sqrt(std::max(0.0, kThigh * kThigh - 0.25 * len * len));
  return hip + 0.5 * d + h * pole;
}

Frame build_frame(const Pose& pose) {
  const auto& off = rest_offsets();
  Frame f;
  f.heading = pose.heading;
  const Matrix3d h = heading(pose.heading);
  const Vector3d down(0, -1, 0);
  auto& p = f.p;
  auto& g = f.g;
  p[0] = pose.pelvis;
  g[0] = h;

  const Matrix3d seg = (Eigen::AngleAxisd(-pose.twist / 3.0, Vector3d::UnitY()) *
                        Eigen::AngleAxisd(pose.pitch / 3.0, Vector3d::UnitX()))
                           .toRotationMatrix();
  p[3] = p[0] + h * off[3];
  g[3] = h * seg;
  p[6] = p[3] + g[3] * off[6];
  g[6] = g[3] * seg;
  p[9] = p[6] + g[6] * off[9];
  g[9] = g[6] * seg;
  p[12] = p[9] + g[9] * off[12];
  g[12] = g[9];
  p[15] = p[12] + g[9] * off[15];
  g[15] = g[9];

  const Vector3d fwd = h * Vector3d::UnitZ();
  for (int side = 0; side < 2; ++side) {
    const std::size_t hip = side == 0 ? 1 : 2, knee = hip + 3, ankle = hip + 6, foot = hip + 9;
    p[hip] = p[0] + h * off[hip];
    Vector3d a = pose.ankle[side];
    p[knee] = knee_position(p[hip], a, fwd);
    p[ankle] = a;
    const Matrix3d fy = heading(pose.foot_yaw[side]);
    p[foot] = a + fy * off[foot];
    g[hip] = h * Eigen::Quaterniond::FromTwoVectors(down, h.transpose() * (p[knee] - p[hip])).toRotationMatrix();
    g[knee] = h * Eigen::Quaterniond::FromTwoVectors(down, h.transpose() * (p[ankle] - p[knee])).toRotationMatrix();
    g[ankle] = fy;
    g[foot] = fy;

    const std::size_t collar = side == 0 ? 13 : 14, shoulder = collar + 3, elbow = collar + 5, wrist = collar + 7;
    p[collar] = p[9] + g[9] * off[collar];
    g[collar] = g[9];
    p[shoulder] = p[collar] + g[9] * off[shoulder];
    const ArmPose& arm = pose.arm[side];
    g[shoulder] = g[9] * Eigen::Quaterniond::FromTwoVectors(down, arm.upper).toRotationMatrix();
    p[elbow] = p[shoulder] + kUpperArm * (g[9] * arm.upper);
    g[elbow] = g[9] * Eigen::Quaterniond::FromTwoVectors(down, arm.fore).toRotationMatrix();
    p[wrist] = p[elbow] + kForearm * (g[9] * arm.fore);
    g[wrist] = g[elbow];
  }
  return f;
}

MotionSequence pack_features(const std::vector<Frame>& frames) {
  using namespace layout;
  const std::size_t n = frames.size() - 1;
  auto m = MotionSequence::zeros(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Frame& cur = frames[t];
    const Frame& next = frames[t + 1];
    const Matrix3d inv = heading(cur.heading).transpose();
    const Matrix3d inv_next = heading(next.heading).transpose();
    m.at(t, 0) = static_cast<float>(0.5 * (next.heading - cur.heading));
    Vector3d step = next.p[0] - cur.p[0];
    step.y() = 0;
    const Vector3d lv = inv_next * step;
    m.at(t, 1) = static_cast<float>(lv.x());
    m.at(t, 2) = static_cast<float>(lv.z());
    m.at(t, 3) = static_cast<float>(cur.p[0].y());
    const Vector3d root_xz(cur.p[0].x(), 0, cur.p[0].z());
    for (std::size_t j = 1; j < kNumJoints; ++j) {
      const Vector3d ric = inv * (cur.p[j] - root_xz);
      for (int i = 0; i < 3; ++i) m.at(t, pos_col(j) + i) = static_cast<float>(ric[i]);
      const int parent = kParents[j];
      const Matrix3d local = cur.g[parent].transpose() * cur.g[j];
      const double six[6] = {local(0, 0), local(1, 0), local(2, 0), local(0, 1), local(1, 1), local(2, 1)};
      for (int i = 0; i < 6; ++i) m.at(t, rot_col(j) + i) = static_cast<float>(six[i]);
    }
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      const Vector3d v = inv * (next.p[j] - cur.p[j]);
      for (int i = 0; i < 3; ++i) m.at(t, vel_col(j) + i) = static_cast<float>(v[i]);
    }
    const std::array<std::pair<std::size_t, double>, 4> contacts = {
        std::pair{kLeftAnkle, kAnkleClearance + kContactHeight - 0.02}, std::pair{kLeftFoot, kContactHeight},
        std::pair{kRightAnkle, kAnkleClearance + kContactHeight - 0.02}, std::pair{kRightFoot, kContactHeight}};
    for (std::size_t c = 0; c < 4; ++c)
      m.at(t, kContactBegin + c) = cur.p[contacts[c].first].y() < contacts[c].second ? 1.0f : 0.0f;
  }
  return m;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

json parts_json(const PartTexts& t) {
  json j = json::object();
  for (auto p : kAnswerOrder) j[std::string(part_slug(p))] = t[p];
  return j;
}

PartTexts parts_from_json(const json& j) {
  PartTexts t;
  for (auto p : kAllParts) t[p] = j.at(std::string(part_slug(p))).get<std::string>();
  return t;
}

json sample_texts_json(const TripletSample& s) {
  json j;
  j["id"] = s.id;
  j["global"] = s.global_text;
  j["parts"] = parts_json(s.parts);
  j["seed"] = s.seed;
  if (s.style_label) j["style"] = *s.style_label;
  if (s.content_label) j["content"] = *s.content_label;
  if (s.composition) {
    const auto& c = *s.composition;
    j["composition"] = {{"content_text", c.content_text},
                        {"style_text", c.style_text},
                        {"content", parts_json(c.content)},
                        {"style", parts_json(c.style)},
                        {"unified", parts_json(c.unified)}};
  }
  return j;
}

}  // namespace

const std::vector<ContentSpec>& content_specs() {
  static const std::vector<ContentSpec> specs = [] {
    std::vector<ContentSpec> v;
    const std::string swing_l = "left arm swings forward and back", swing_r = "right arm swings forward and back";
    const std::string rest_l = "left arm hangs relaxed at the side", rest_r = "right arm hangs relaxed at the side";
    v.push_back({"walk", ContentKind::Walk, "a person walks forward",
                 make_parts("root moves forward at a steady pace", "back stays upright", swing_l, swing_r,
                            "left leg steps forward in a walking rhythm", "right leg steps forward in a walking rhythm"),
                 1.0});
    v.push_back({"walk_circle", ContentKind::WalkCircle, "a person walks in a circle",
                 make_parts("root travels along a circle turning left", "back stays upright", swing_l, swing_r,
                            "left leg steps along a curved path", "right leg steps along a curved path"),
                 0.9});
    v.push_back({"wave", ContentKind::Wave, "a person waves with the right hand",
                 make_parts("root stays in place", "back stays upright", rest_l,
                            "right arm raised to the side with the forearm waving from the elbow",
                            "left leg stands still", "right leg stands still"),
                 0.0});
    v.push_back({"throw", ContentKind::Throw, "a person throws a ball with the right hand",
                 make_parts("root stays in place", "back twists to follow the throw", rest_l,
                            "right arm winds back and throws forward over the shoulder", "left leg stays planted",
                            "right leg stays planted"),
                 0.0});
    v.push_back({"jump", ContentKind::Jump, "a person jumps in place",
                 make_parts("root crouches then rises into the air and lands", "back leans forward during the crouch",
                            "left arm swings up during the takeoff", "right arm swings up during the takeoff",
                            "left leg bends then pushes off the ground", "right leg bends then pushes off the ground"),
                 0.0});
    v.push_back({"idle", ContentKind::Idle, "a person stands still",
                 make_parts("root stays in place", "back stays upright with slight breathing", rest_l, rest_r,
                            "left leg stands still", "right leg stands still"),
                 0.0});
    return v;
  }();
  return specs;
}

const std::vector<StyleSpec>& style_specs() {
  static const std::vector<StyleSpec> specs = [] {
    std::vector<StyleSpec> v;
    StyleSpec neutral;
    neutral.id = "neutral";
    neutral.global_text = "neutral";
    v.push_back(neutral);

    StyleSpec overhead;
    overhead.id = "arms_overhead";
    overhead.global_text = "arms raised overhead";
    overhead.global_suffix = " with arms raised overhead";
    overhead.parts[BodyPart::LeftArm] = "left arm raised overhead at 160 degrees with the elbow straight";
    overhead.parts[BodyPart::RightArm] = "right arm raised overhead at 160 degrees with the elbow straight";
    overhead.arm_elevation_deg = 160.0;
    v.push_back(overhead);

    StyleSpec hunched;
    hunched.id = "hunched_slow";
    hunched.global_text = "hunched over and slow";
    hunched.global_suffix = " while hunched over and slow";
    hunched.parts[BodyPart::Root] = "root moves at half speed";
    hunched.parts[BodyPart::Backbone] = "back hunched forward at 35 degrees";
    hunched.parts[BodyPart::LeftLeg] = "left leg takes short slow steps";
    hunched.parts[BodyPart::RightLeg] = "right leg takes short slow steps";
    hunched.spine_pitch_deg = 35.0;
    hunched.speed_scale = 0.5;
    hunched.tempo = 0.5;
    v.push_back(hunched);

    StyleSpec swing;
    swing.id = "exaggerated_swing";
    swing.global_text = "exaggerated arm swing";
    swing.global_suffix = " with an exaggerated arm swing";
    swing.parts[BodyPart::LeftArm] = "left arm swings widely through 55 degrees";
    swing.parts[BodyPart::RightArm] = "right arm swings widely through 55 degrees";
    swing.arm_swing_deg = 55.0;
    v.push_back(swing);
    return v;
  }();
  return specs;
}

const ContentSpec& content_spec(std::string_view id) {
  for (const auto& c : content_specs())
    if (c.id == id) return c;
  throw ContractError("unknown content spec '" + std::string(id) + "'");
}

const StyleSpec& style_spec(std::string_view id) {
  for (const auto& s : style_specs())
    if (s.id == id) return s;
  throw ContractError("unknown style spec '" + std::string(id) + "'");
}

SynthParams resolve_params(const ContentSpec& content, const StyleSpec& style, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SynthParams sp;
  sp.phase = unit(rng);
  const double jitter = 0.9 + 0.2 * unit(rng);
  sp.speed = content.base_speed * style.speed_scale * jitter;
  sp.cadence = 0.9 * std::sqrt(style.speed_scale);
  sp.tempo = style.tempo;
  const auto aff = resolve_affinity(content.parts, style.parts, default_affinity());
  auto takes_style = [&](BodyPart p) {
    return !style.parts[p].empty() && style.parts[p] != content.parts[p] && aff[part_index(p)] == Affinity::StyleWins;
  };
  sp.left_arm_styled = takes_style(BodyPart::LeftArm);
  sp.right_arm_styled = takes_style(BodyPart::RightArm);
  sp.backbone_styled = takes_style(BodyPart::Backbone) && style.spine_pitch_deg.has_value();
  sp.spine_pitch_deg = sp.backbone_styled ? *style.spine_pitch_deg : content_pitch_deg(content.kind);
  if (style.arm_elevation_deg) sp.arm_elevation_deg = style.arm_elevation_deg;
  if (style.arm_swing_deg) sp.arm_swing_deg = *style.arm_swing_deg;
  return sp;
}

TripletSample synth_generate(const ContentSpec& content, const StyleSpec& style, std::size_t frames,
                             std::uint64_t seed) {
  if (frames < kMinClipFrames || frames > kMaxClipFrames) {
    throw ContractError("synth_generate: frame count " + std::to_string(frames) + " outside [40, 196]");
  }
  const SynthParams sp = resolve_params(content, style, seed);
  std::vector<Frame> world;
  world.reserve(frames + 1);
  for (std::size_t i = 0; i <= frames; ++i) world.push_back(build_frame(make_pose(content, sp, i / layout::kFps)));

  TripletSample s;
  s.id = content.id + "-" + style.id + "-" + hex64(seed).substr(8);
  s.motion = pack_features(world);
  s.global_text = content.global_text + style.global_suffix;
  s.style_label = style.id;
  s.content_label = content.id;
  s.seed = seed;
  CompositionRecord rec;
  rec.content_text = content.global_text;
  rec.style_text = style.global_text;
  rec.content = content.parts;
  rec.style = style.parts;
  rec.unified = rule_compose(content.parts, style.parts);
  s.parts = rec.unified;
  s.composition = std::move(rec);
  return s;
}

std::vector<TripletSample> generate_corpus(std::size_t count, std::uint64_t seed, SynthConfig cfg) {
  if (cfg.min_frames > cfg.max_frames) throw ConfigError("corpus: min_frames exceeds max_frames");
  if (cfg.min_frames < kMinClipFrames || cfg.max_frames > kMaxClipFrames)
    throw ConfigError("corpus: frame range [" + std::to_string(cfg.min_frames) + ", " + std::to_string(cfg.max_frames) +
                      "] outside [40, 196]");
  const auto& cs = content_specs();
  const auto& ss = style_specs();
  std::vector<TripletSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& c = cs[i % cs.size()];
    const auto& st = ss[(i / cs.size()) % ss.size()];
    const std::uint64_t s = mix_seed(seed, i);
    const std::size_t span = cfg.max_frames - cfg.min_frames + 1;
    const std::size_t n = cfg.min_frames + static_cast<std::size_t>(mix_seed(s, 7) % span);
    out.push_back(synth_generate(c, st, n, s));
  }
  return out;
}

void save_dataset(const std::vector<TripletSample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "motions");
  std::filesystem::create_directories(dir / "texts");
  json index;
  index["format_version"] = kDatasetVersion;
  index["samples"] = json::array();
  for (const auto& s : samples) {
    const auto mpath = std::filesystem::path("motions") / (s.id + ".mbin");
    const auto tpath = std::filesystem::path("texts") / (s.id + ".json");
    write_mbin(dir / mpath, s.motion);
    const std::string text = sample_texts_json(s).dump(2);
    std::ofstream(dir / tpath) << text;
    json e;
    e["id"] = s.id;
    e["motion"] = mpath.generic_string();
    e["texts"] = tpath.generic_string();
    e["frames"] = s.motion.num_frames();
    if (s.style_label) e["style"] = *s.style_label;
    if (s.content_label) e["content"] = *s.content_label;
    e["motion_hash"] = hex64(fnv1a64(ByteReader::slurp(dir / mpath)));
    e["texts_hash"] = hex64(fnv1a64(text));
    index["samples"].push_back(e);
  }
  std::ofstream(dir / "index.json") << index.dump(2) << "\n";
}

std::vector<TripletSample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("dataset index not found: " + (dir / "index.json").string());
  json index;
  try {
    in >> index;
  } catch (const json::exception& e) {
    throw IoError("corrupt dataset index: " + std::string(e.what()));
  }
  if (!index.is_object() || index.value("format_version", -1) != kDatasetVersion) {
    throw IoError("dataset index: unsupported format version");
  }
  std::vector<TripletSample> out;
  try {
    for (const auto& e : index.at("samples")) {
      const std::string id = e.at("id");
      const auto mpath = dir / e.at("motion").get<std::string>();
      const auto tpath = dir / e.at("texts").get<std::string>();
      if (hex64(fnv1a64(ByteReader::slurp(mpath))) != e.at("motion_hash").get<std::string>()) {
        throw IoError("dataset: motion hash mismatch for sample " + id);
      }
      std::ifstream tin(tpath);
      const std::string text((std::istreambuf_iterator<char>(tin)), {});
      if (hex64(fnv1a64(text)) != e.at("texts_hash").get<std::string>()) {
        throw IoError("dataset: texts hash mismatch for sample " + id);
      }
      const json t = json::parse(text);
      TripletSample s;
      s.id = id;
      s.motion = read_mbin(mpath);
      s.global_text = t.at("global");
      s.parts = parts_from_json(t.at("parts"));
      s.seed = t.value("seed", std::uint64_t{0});
      if (t.contains("style")) s.style_label = t["style"].get<std::string>();
      if (t.contains("content")) s.content_label = t["content"].get<std::string>();
      if (t.contains("composition")) {
        const auto& c = t["composition"];
        s.composition = CompositionRecord{c.at("content_text"), c.at("style_text"), parts_from_json(c.at("content")),
                                          parts_from_json(c.at("style")), parts_from_json(c.at("unified"))};
      }
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw IoError("corrupt dataset entry: " + std::string(e.what()));
  }
  return out;
}

std::map<std::string, std::vector<TripletSample>> split(const std::vector<TripletSample>& samples,
                                                        const std::vector<std::pair<std::string, double>>& ratios,
                                                        std::uint64_t seed) {
  if (ratios.empty()) throw ContractError("split: no subsets requested");
  double total = 0.0;
  for (const auto& [name, r] : ratios) {
    if (r < 0.0) throw ContractError("split: negative ratio for '" + name + "'");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("split: ratios sum to " + std::to_string(total) + ", not 1");

  // Group by style label, keeping first-seen order of labels.
  std::vector<std::string> labels;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string key = samples[i].style_label.value_or("");
    if (!groups.count(key)) labels.push_back(key);
    groups[key].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> assigned(ratios.size());
  const std::size_t positive = static_cast<std::size_t>(
      std::count_if(ratios.begin(), ratios.end(), [](const auto& r) { return r.second > 0.0; }));
  for (const auto& label : labels) {
    auto idx = groups[label];
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = idx.size();
    // Largest-remainder allocation.
    std::vector<std::size_t> counts(ratios.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t used = 0;
    for (std::size_t k = 0; k < ratios.size(); ++k) {
      const double exact = ratios[k].second * static_cast<double>(n);
      counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      used += counts[k];
      rem.push_back({exact - static_cast<double>(counts[k]), k});
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; used < n; ++r, ++used) ++counts[rem[r % rem.size()].second];
    // Every positive subset gets a member of this label when there are enough.
    if (n >= positive) {
      for (std::size_t k = 0; k < ratios.size(); ++k) {
        if (ratios[k].second <= 0.0 || counts[k] > 0) continue;
        auto donor = std::max_element(counts.begin(), counts.end()) - counts.begin();
        --counts[static_cast<std::size_t>(donor)];
        ++counts[k];
      }
    }
    std::size_t pos = 0;
    for (std::size_t k = 0; k < ratios.size(); ++k)
      for (std::size_t c = 0; c < counts[k]; ++c) assigned[k].push_back(idx[pos++]);
  }
  std::map<std::string, std::vector<TripletSample>> out;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    auto& v = out[ratios[k].first];
    std::sort(assigned[k].begin(), assigned[k].end());
    for (auto i : assigned[k]) v.push_back(samples[i]);
  }
  return out;
}

MotionSequence import_humanml3d_features(const std::filesystem::path& file) {
  MotionSequence m = read_raw_features(file);
  const auto findings = validate_layout(m);
  for (const auto& f : findings) {
    if (f.kind == LayoutFinding::Kind::NonFinite) throw LayoutError(file.string() + ": " + f.message);
  }
  return m;
}

}  // namespace partstyle
