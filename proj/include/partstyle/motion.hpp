#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "partstyle/tensor.hpp"

namespace partstyle {

// HumanML3D-style frame layout over a 22-joint skeleton.
//   [0]        root rotational velocity (half-angle increment about +y, rad/frame)
//   [1..2]     root planar linear velocity (x, z), metres/frame in the heading frame
//   [3]        root height
//   [4..66]    local positions of joints 1..21 (3 each)
//   [67..192]  6-D rotations of joints 1..21 (6 each)
//   [193..258] velocities of joints 0..21 (3 each)
//   [259..262] foot contacts: left ankle, left foot, right ankle, right foot
namespace layout {
inline constexpr std::size_t kFeatureDim = 263;
inline constexpr std::size_t kNumJoints = 22;
inline constexpr std::size_t kRootBegin = 0;
inline constexpr std::size_t kRootCount = 4;
inline constexpr std::size_t kPosBegin = 4;
inline constexpr std::size_t kRotBegin = kPosBegin + (kNumJoints - 1) * 3;  // 67
inline constexpr std::size_t kVelBegin = kRotBegin + (kNumJoints - 1) * 6;  // 193
inline constexpr std::size_t kContactBegin = kVelBegin + kNumJoints * 3;    // 259
inline constexpr std::size_t kContactCount = 4;
inline constexpr double kFps = 20.0;

// Joint j in 1..21.
constexpr std::size_t pos_col(std::size_t joint) { return kPosBegin + (joint - 1) * 3; }
constexpr std::size_t rot_col(std::size_t joint) { return kRotBegin + (joint - 1) * 6; }
// Joint j in 0..21.
constexpr std::size_t vel_col(std::size_t joint) { return kVelBegin + joint * 3; }

// SMPL kinematic tree.
inline constexpr std::array<int, kNumJoints> kParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7,
                                                         8,  9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
inline constexpr std::size_t kLeftAnkle = 7, kRightAnkle = 8, kLeftFoot = 10, kRightFoot = 11;
}  // namespace layout

enum class BodyPart : int { RightArm = 0, LeftArm, RightLeg, LeftLeg, Backbone, Root };

inline constexpr std::size_t kNumParts = 6;
// Storage order of part streams, codebooks, and motion-token ranges.
inline constexpr std::array<BodyPart, kNumParts> kAllParts = {BodyPart::RightArm, BodyPart::LeftArm,
                                                              BodyPart::RightLeg, BodyPart::LeftLeg,
                                                              BodyPart::Backbone, BodyPart::Root};
// Order of labelled sections in prompts and answers.
inline constexpr std::array<BodyPart, kNumParts> kAnswerOrder = {BodyPart::Root,    BodyPart::Backbone,
                                                                 BodyPart::LeftArm, BodyPart::RightArm,
                                                                 BodyPart::LeftLeg, BodyPart::RightLeg};

constexpr std::size_t part_index(BodyPart p) { return static_cast<std::size_t>(p); }

std::string_view part_label(BodyPart p);   // "Left Arm"
std::string_view part_slug(BodyPart p);    // "left_arm"
std::string_view part_short(BodyPart p);   // "la"
BodyPart part_from_slug(std::string_view slug);

// Joints owned by each non-root part; Root owns the four root scalars and
// the pelvis velocity.
const std::vector<std::size_t>& part_joints(BodyPart p);
// Source feature columns of each part stream, in stream order.
const std::vector<std::size_t>& part_columns(BodyPart p);
std::size_t part_width(BodyPart p);

class MotionSequence {
 public:
  MotionSequence() = default;
  // frames must be [N×263] with N >= 1.
  explicit MotionSequence(Tensor frames);
  static MotionSequence zeros(std::size_t num_frames);

  std::size_t num_frames() const { return frames_.rows(); }
  const Tensor& features() const noexcept { return frames_; }
  float at(std::size_t t, std::size_t c) const { return frames_[t * layout::kFeatureDim + c]; }
  float& at(std::size_t t, std::size_t c) { return frames_[t * layout::kFeatureDim + c]; }

  bool operator==(const MotionSequence&) const = default;

 private:
  Tensor frames_;
};

struct BodyPartSet {
  // Streams indexed by part_index(); each is [N×part_width].
  std::array<Tensor, kNumParts> streams;

  const Tensor& operator[](BodyPart p) const { return streams[part_index(p)]; }
  Tensor& operator[](BodyPart p) { return streams[part_index(p)]; }
};

BodyPartSet partition(const MotionSequence& m);
MotionSequence merge(const BodyPartSet& parts);

using JointPositions = std::vector<std::array<Eigen::Vector3d, layout::kNumJoints>>;

// Integrates the root heading and planar velocity into a world trajectory
// and maps local joint positions into the world frame.
JointPositions recover_global_positions(const MotionSequence& m);

struct LayoutFinding {
  enum class Kind { Width, NonFinite, ContactRange, Empty };
  Kind kind;
  std::size_t frame = 0;
  std::size_t column = 0;
  std::string message;
};

// Pure report; accepts any rank-2 tensor so width problems can be reported.
std::vector<LayoutFinding> validate_layout(const Tensor& frames);
inline std::vector<LayoutFinding> validate_layout(const MotionSequence& m) { return validate_layout(m.features()); }

}  // namespace partstyle
