#include "partstyle/motion.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Geometry>

namespace partstyle {

using namespace layout;

std::string_view part_label(BodyPart p) {
  switch (p) {
    case BodyPart::RightArm: return "Right Arm";
    case BodyPart::LeftArm: return "Left Arm";
    case BodyPart::RightLeg: return "Right Leg";
    case BodyPart::LeftLeg: return "Left Leg";
    case BodyPart::Backbone: return "Backbone";
    case BodyPart::Root: return "Root";
  }
  return "?";
}

std::string_view part_slug(BodyPart p) {
  switch (p) {
    case BodyPart::RightArm: return "right_arm";
    case BodyPart::LeftArm: return "left_arm";
    case BodyPart::RightLeg: return "right_leg";
    case BodyPart::LeftLeg: return "left_leg";
    case BodyPart::Backbone: return "backbone";
    case BodyPart::Root: return "root";
  }
  return "?";
}

std::string_view part_short(BodyPart p) {
  switch (p) {
    case BodyPart::RightArm: return "ra";
    case BodyPart::LeftArm: return "la";
    case BodyPart::RightLeg: return "rl";
    case BodyPart::LeftLeg: return "ll";
    case BodyPart::Backbone: return "bb";
    case BodyPart::Root: return "rt";
  }
  return "?";
}

BodyPart part_from_slug(std::string_view slug) {
  for (auto p : kAllParts)
    if (part_slug(p) == slug) return p;
  throw ContractError("unknown body part '" + std::string(slug) + "'");
}

const std::vector<std::size_t>& part_joints(BodyPart p) {
  static const std::array<std::vector<std::size_t>, kNumParts> joints = {
      std::vector<std::size_t>{14, 17, 19, 21},    // RightArm
      std::vector<std::size_t>{13, 16, 18, 20},    // LeftArm
      std::vector<std::size_t>{2, 5, 8, 11},       // RightLeg
      std::vector<std::size_t>{1, 4, 7, 10},       // LeftLeg
      std::vector<std::size_t>{3, 6, 9, 12, 15},   // Backbone
      std::vector<std::size_t>{0},                 // Root (pelvis velocity only)
  };
  return joints[part_index(p)];
}

namespace {

std::array<std::vector<std::size_t>, kNumParts> build_columns() {
  std::array<std::vector<std::size_t>, kNumParts> cols;
  for (auto p : kAllParts) {
    auto& c = cols[part_index(p)];
    if (p == BodyPart::Root) {
      for (std::size_t i = 0; i < kRootCount; ++i) c.push_back(kRootBegin + i);
      for (std::size_t i = 0; i < 3; ++i) c.push_back(vel_col(0) + i);
      continue;
    }
    for (auto j : part_joints(p)) {
      for (std::size_t i = 0; i < 3; ++i) c.push_back(pos_col(j) + i);
      for (std::size_t i = 0; i < 6; ++i) c.push_back(rot_col(j) + i);
      for (std::size_t i = 0; i < 3; ++i) c.push_back(vel_col(j) + i);
    }
    if (p == BodyPart::LeftLeg) {
      c.push_back(kContactBegin + 0);
      c.push_back(kContactBegin + 1);
    } else if (p == BodyPart::RightLeg) {
      c.push_back(kContactBegin + 2);
      c.push_back(kContactBegin + 3);
    }
  }
  return cols;
}

}  // namespace

const std::vector<std::size_t>& part_columns(BodyPart p) {
  static const auto cols = build_columns();
  return cols[part_index(p)];
}

std::size_t part_width(BodyPart p) { return part_columns(p).size(); }

MotionSequence::MotionSequence(Tensor frames) : frames_(std::move(frames)) {
  if (frames_.rank() != 2 || frames_.cols() != kFeatureDim) {
    throw LayoutError("motion must be [N x 263], got " + shape_str(frames_.shape()));
  }
  if (frames_.rows() < 1) throw LayoutError("motion must have at least one frame");
}

MotionSequence MotionSequence::zeros(std::size_t num_frames) {
  return MotionSequence(Tensor::zeros({num_frames, kFeatureDim}));
}

BodyPartSet partition(const MotionSequence& m) {
  const std::size_t n = m.num_frames();
  BodyPartSet out;
  for (auto p : kAllParts) {
    const auto& cols = part_columns(p);
    Tensor s({n, cols.size()});
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t i = 0; i < cols.size(); ++i) s[t * cols.size() + i] = m.at(t, cols[i]);
    out[p] = std::move(s);
  }
  return out;
}

MotionSequence merge(const BodyPartSet& parts) {
  std::size_t n = 0;
  for (auto p : kAllParts) {
    const Tensor& s = parts[p];
    if (s.empty()) throw ContractError("merge: part " + std::string(part_label(p)) + " is missing");
    if (s.rank() != 2 || s.cols() != part_width(p)) {
      throw ContractError("merge: part " + std::string(part_label(p)) + " has shape " + shape_str(s.shape()) +
                          ", expected width " + std::to_string(part_width(p)));
    }
    if (n == 0) n = s.rows();
    if (s.rows() != n) {
      throw ContractError("merge: part " + std::string(part_label(p)) + " has " + std::to_string(s.rows()) +
                          " frames, expected " + std::to_string(n));
    }
  }
  auto m = MotionSequence::zeros(n);
  for (auto p : kAllParts) {
    const auto& cols = part_columns(p);
    const Tensor& s = parts[p];
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t i = 0; i < cols.size(); ++i) m.at(t, cols[i]) = s[t * cols.size() + i];
  }
  return m;
}

namespace {

// Inverse heading rotation for half-angle a: rotation about +y by -2a.
Eigen::Vector3d rotate_heading(double half_angle, const Eigen::Vector3d& v) {
  const double c = std::cos(2.0 * half_angle), s = std::sin(2.0 * half_angle);
  return {v.x() * c - v.z() * s, v.y(), v.x() * s + v.z() * c};
}

}  // namespace

JointPositions recover_global_positions(const MotionSequence& m) {
  const std::size_t n = m.num_frames();
  JointPositions out(n);
  double angle = 0.0;
  Eigen::Vector3d root = Eigen::Vector3d::Zero();
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      angle += m.at(t - 1, 0);
      const Eigen::Vector3d step(m.at(t - 1, 1), 0.0, m.at(t - 1, 2));
      root += rotate_heading(angle, step);
    }
    root.y() = m.at(t, 3);
    out[t][0] = root;
    for (std::size_t j = 1; j < kNumJoints; ++j) {
      const std::size_t c = pos_col(j);
      Eigen::Vector3d local(m.at(t, c), m.at(t, c + 1), m.at(t, c + 2));
      Eigen::Vector3d w = rotate_heading(angle, local);
      w.x() += root.x();
      w.z() += root.z();
      out[t][j] = w;
    }
  }
  return out;
}

std::vector<LayoutFinding> validate_layout(const Tensor& frames) {
  std::vector<LayoutFinding> findings;
  if (frames.rank() != 2 || frames.cols() != kFeatureDim) {
    findings.push_back({LayoutFinding::Kind::Width, 0, 0,
                        "expected 263 features per frame, got shape " + shape_str(frames.shape())});
    return findings;
  }
  if (frames.rows() == 0) {
    findings.push_back({LayoutFinding::Kind::Empty, 0, 0, "motion has no frames"});
    return findings;
  }
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    for (std::size_t c = 0; c < kFeatureDim; ++c) {
      const float v = frames.at(t, c);
      if (!std::isfinite(v)) {
        findings.push_back({LayoutFinding::Kind::NonFinite, t, c,
                            "non-finite value at frame " + std::to_string(t) + ", column " + std::to_string(c)});
      } else if (c >= kContactBegin && (v < 0.0f || v > 1.0f)) {
        findings.push_back({LayoutFinding::Kind::ContactRange, t, c,
                            "contact value " + std::to_string(v) + " outside [0,1] at frame " + std::to_string(t)});
      }
    }
  }
  return findings;
}

}  // namespace partstyle
