#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>
#include <set>

#include "partstyle/motion.hpp"
#include "partstyle/motion_io.hpp"

using namespace partstyle;

namespace {

MotionSequence random_motion(std::size_t n, std::mt19937_64& rng) {
  return MotionSequence(Tensor::randn({n, layout::kFeatureDim}, rng));
}

// Expected source column of every stream slot, written out from the
// documented joint grouping rather than from part_columns().
std::vector<std::size_t> documented_columns(BodyPart p) {
  auto joint_block = [](std::size_t j) {
    std::vector<std::size_t> c;
    for (int i = 0; i < 3; ++i) c.push_back(4 + (j - 1) * 3 + i);
    for (int i = 0; i < 6; ++i) c.push_back(67 + (j - 1) * 6 + i);
    for (int i = 0; i < 3; ++i) c.push_back(193 + j * 3 + i);
    return c;
  };
  std::vector<std::size_t> joints;
  std::vector<std::size_t> tail;
  switch (p) {
    case BodyPart::LeftLeg: joints = {1, 4, 7, 10}; tail = {259, 260}; break;
    case BodyPart::RightLeg: joints = {2, 5, 8, 11}; tail = {261, 262}; break;
    case BodyPart::Backbone: joints = {3, 6, 9, 12, 15}; break;
    case BodyPart::LeftArm: joints = {13, 16, 18, 20}; break;
    case BodyPart::RightArm: joints = {14, 17, 19, 21}; break;
    case BodyPart::Root: return {0, 1, 2, 3, 193, 194, 195};
  }
  std::vector<std::size_t> out;
  for (auto j : joints) {
    auto b = joint_block(j);
    out.insert(out.end(), b.begin(), b.end());
  }
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

}  // namespace

TEST_SUITE("motion-core") {

TEST_CASE("part widths") {
  CHECK(part_width(BodyPart::LeftLeg) == 50);
  CHECK(part_width(BodyPart::RightLeg) == 50);
  CHECK(part_width(BodyPart::LeftArm) == 48);
  CHECK(part_width(BodyPart::RightArm) == 48);
  CHECK(part_width(BodyPart::Backbone) == 60);
  CHECK(part_width(BodyPart::Root) == 7);
  std::size_t total = 0;
  for (auto p : kAllParts) total += part_width(p);
  CHECK(total == 263);
}

TEST_CASE("column tracing: every sentinel appears once, in its documented slot") {
  auto m = MotionSequence::zeros(1);
  for (std::size_t c = 0; c < 263; ++c) m.at(0, c) = static_cast<float>(1000 + c);
  auto parts = partition(m);
  std::multiset<float> seen;
  for (auto p : kAllParts) {
    const auto expected = documented_columns(p);
    REQUIRE(parts[p].cols() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(parts[p][i] == static_cast<float>(1000 + expected[i]));
      seen.insert(parts[p][i]);
    }
  }
  CHECK(seen.size() == 263);
  for (std::size_t c = 0; c < 263; ++c) CHECK(seen.count(static_cast<float>(1000 + c)) == 1);
}

TEST_CASE("partition/merge round trip is bit exact") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    auto m = random_motion(1 + rng() % 30, rng);
    CHECK(merge(partition(m)) == m);
    auto parts = partition(m);
    auto again = partition(merge(parts));
    for (auto p : kAllParts) CHECK(again[p] == parts[p]);
  }
}

TEST_CASE("merge contract errors") {
  std::mt19937_64 rng(4);
  auto parts = partition(random_motion(5, rng));
  auto missing = parts;
  missing[BodyPart::Backbone] = Tensor();
  CHECK_THROWS_AS(merge(missing), ContractError);
  auto uneven = parts;
  uneven[BodyPart::Root] = Tensor::zeros({4, 7});
  CHECK_THROWS_AS(merge(uneven), ContractError);
}

TEST_CASE("motion rejects wrong width") {
  CHECK_THROWS_AS(MotionSequence(Tensor::zeros({3, 262})), LayoutError);
  CHECK_THROWS_AS(MotionSequence(Tensor::zeros({0, 263})), LayoutError);
}

TEST_CASE("recovery: stationary root stays fixed") {
  auto m = MotionSequence::zeros(12);
  for (std::size_t t = 0; t < 12; ++t) m.at(t, 3) = 0.9f;
  auto pos = recover_global_positions(m);
  for (const auto& f : pos) {
    CHECK(f[0].x() == 0.0);
    CHECK(f[0].y() == doctest::Approx(0.9));
    CHECK(f[0].z() == 0.0);
  }
}

TEST_CASE("recovery: constant planar velocity advances v*dt per frame") {
  const double v = 1.5, dt = 1.0 / layout::kFps;
  auto m = MotionSequence::zeros(10);
  for (std::size_t t = 0; t < 10; ++t) m.at(t, 1) = static_cast<float>(v * dt);
  auto pos = recover_global_positions(m);
  for (std::size_t t = 0; t < 10; ++t) CHECK(pos[t][0].x() == doctest::Approx(t * v * dt).epsilon(1e-6));
}

TEST_CASE("recovery: constant turn rate follows the closed-form arc") {
  // Half-angle increment c per frame turns the heading by 2c per frame; a
  // forward step s along local +z then traces
  //   x_t = -s * sum_{k=1..t} sin(2kc),  z_t = s * sum_{k=1..t} cos(2kc).
  const double c = 0.03, s = 0.05;
  const std::size_t n = 60;
  auto m = MotionSequence::zeros(n);
  for (std::size_t t = 0; t < n; ++t) {
    m.at(t, 0) = static_cast<float>(c);
    m.at(t, 2) = static_cast<float>(s);
  }
  auto pos = recover_global_positions(m);
  const double th = 2.0 * c;
  for (std::size_t t = 1; t < n; ++t) {
    const double k = static_cast<double>(t);
    const double sin_sum = std::sin(k * th / 2) * std::sin((k + 1) * th / 2) / std::sin(th / 2);
    const double cos_sum = std::sin(k * th / 2) * std::cos((k + 1) * th / 2) / std::sin(th / 2);
    CHECK(std::abs(pos[t][0].x() - (-s * sin_sum)) < 1e-4);
    CHECK(std::abs(pos[t][0].z() - (s * cos_sum)) < 1e-4);
  }
}

TEST_CASE("recovery: zero velocities give a time-constant skeleton") {
  std::mt19937_64 rng(5);
  auto m = random_motion(1, rng);
  Tensor frames({8, 263});
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t c = 0; c < 263; ++c) frames.at(t, c) = m.at(0, c);
  for (std::size_t t = 0; t < 8; ++t) frames.at(t, 0) = frames.at(t, 1) = frames.at(t, 2) = 0.0f;
  auto pos = recover_global_positions(MotionSequence(frames));
  for (std::size_t t = 1; t < 8; ++t)
    for (std::size_t j = 0; j < 22; ++j) CHECK((pos[t][j] - pos[0][j]).norm() < 1e-9);
}

TEST_CASE("validate_layout findings") {
  std::mt19937_64 rng(6);
  auto m = MotionSequence::zeros(5);
  CHECK(validate_layout(m).empty());
  auto nan = m;
  nan.at(2, 17) = std::numeric_limits<float>::quiet_NaN();
  auto f = validate_layout(nan);
  REQUIRE(f.size() == 1);
  CHECK(f[0].kind == LayoutFinding::Kind::NonFinite);
  CHECK(f[0].frame == 2);
  auto contact = m;
  contact.at(1, 260) = 2.0f;
  f = validate_layout(contact);
  REQUIRE(f.size() == 1);
  CHECK(f[0].kind == LayoutFinding::Kind::ContactRange);
  f = validate_layout(Tensor::zeros({3, 250}));
  REQUIRE(f.size() == 1);
  CHECK(f[0].kind == LayoutFinding::Kind::Width);
  (void)rng;
}

TEST_CASE("MBIN and raw feature files") {
  const auto dir = std::filesystem::temp_directory_path() / "partstyle_motion_io";
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(7);
  auto m = random_motion(13, rng);
  write_mbin(dir / "a.mbin", m);
  CHECK(read_mbin(dir / "a.mbin") == m);
  write_raw_features(dir / "a.bin", m);
  CHECK(read_raw_features(dir / "a.bin") == m);
  CHECK(std::filesystem::file_size(dir / "a.bin") == 13 * 263 * 4);
  std::filesystem::resize_file(dir / "a.bin", 13 * 263 * 4 - 3);
  CHECK_THROWS_AS(read_raw_features(dir / "a.bin"), IoError);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
