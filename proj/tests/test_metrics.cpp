#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "partstyle/corpus.hpp"
#include "partstyle/metrics.hpp"

using namespace partstyle;

namespace {

// Both feet planted at height h; the right foot slides by `step` m per frame on
// the frames flagged in `slide`.
JointPositions feet_track(const std::vector<bool>& slide, double step, double h = 0.02) {
  JointPositions pos(slide.size() + 1);
  double x = 0.0;
  for (std::size_t t = 0; t < pos.size(); ++t) {
    for (auto& j : pos[t]) j = Eigen::Vector3d(0.0, 1.0, 0.0);
    pos[t][layout::kLeftFoot] = Eigen::Vector3d(-0.1, h, 0.0);
    pos[t][layout::kRightFoot] = Eigen::Vector3d(0.1 + x, h, 0.0);
    if (t < slide.size() && slide[t]) x += step;
  }
  pos.pop_back();
  return pos;
}

double oracle_fs(const JointPositions& pos, const FsConfig& cfg) {
  std::size_t n = 0;
  for (std::size_t t = 0; t < pos.size(); ++t) {
    const std::size_t a = t + 1 < pos.size() ? t : t - 1;
    bool skate = false;
    for (std::size_t j : {layout::kLeftFoot, layout::kRightFoot}) {
      const double dx = pos[a + 1][j].x() - pos[a][j].x(), dz = pos[a + 1][j].z() - pos[a][j].z();
      skate = skate || (pos[t][j].y() < cfg.height && std::sqrt(dx * dx + dz * dz) * cfg.fps > cfg.speed);
    }
    n += skate;
  }
  return static_cast<double>(n) / pos.size();
}

Tensor random_unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  Tensor t = Tensor::randn({n, d}, rng, 1.0f);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < d; ++c) s += t[i * d + c] * t[i * d + c];
    for (std::size_t c = 0; c < d; ++c) t[i * d + c] = static_cast<float>(t[i * d + c] / std::sqrt(s));
  }
  return t;
}

Tensor rotate(const Tensor& t, const Eigen::MatrixXd& q) {
  Tensor out({t.rows(), t.cols()});
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t r = 0; r < t.cols(); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < t.cols(); ++c) s += q(r, c) * t[i * t.cols() + c];
      out[i * t.cols() + r] = static_cast<float>(s);
    }
  return out;
}

struct Trained {
  std::vector<TripletSample> corpus;
  EvalTrainResult result;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained x;
    x.corpus = generate_corpus(96, 5);
    x.result = train_eval_embedders(x.corpus);
    return x;
  }();
  return t;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("fs ratio on constructed tracks") {
  FsConfig cfg;
  CHECK(fs_ratio(feet_track(std::vector<bool>(10, false), 0.0), cfg) == 0.0);
  // 1 m/s at 20 fps
  CHECK(fs_ratio(feet_track(std::vector<bool>(10, true), 0.05), cfg) == 1.0);
  const std::vector<bool> mixed = {false, true, false, false, true, false, true, false, false, false};
  const auto pos = feet_track(mixed, 0.05);
  CHECK(fs_ratio(pos, cfg) == 0.3);
  CHECK(fs_ratio(pos, cfg) == oracle_fs(pos, cfg));
  // lifted feet never skate
  CHECK(fs_ratio(feet_track(std::vector<bool>(10, true), 0.05, 0.2), cfg) == 0.0);
  // below the speed threshold
  CHECK(fs_ratio(feet_track(std::vector<bool>(10, true), 0.004), cfg) == 0.0);
  CHECK(fs_ratio(JointPositions{}, cfg) == 0.0);
  CHECK(fs_ratio(feet_track({true}, 0.05), cfg) == 0.0);
  CHECK_THROWS_AS(fs_ratio(pos, FsConfig{0.0, 0.1, 20.0}), ConfigError);

  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<bool> s(30);
    for (auto&& b : s) b = coin(rng);
    const auto p = feet_track(s, 0.03);
    CHECK(fs_ratio(p, cfg) == oracle_fs(p, cfg));
  }
}

TEST_CASE("fs ratio is translation invariant") {
  const auto corpus = generate_corpus(12, 9);
  for (const auto& s : corpus) {
    auto pos = recover_global_positions(s.motion);
    const double base = fs_ratio(pos, {});
    for (auto& f : pos)
      for (auto& j : f) j += Eigen::Vector3d(3.5, 0.0, -12.25);
    CHECK(fs_ratio(pos, {}) == doctest::Approx(base).epsilon(1e-12));
    CHECK(fs_ratio(s.motion) == base);
  }
}

TEST_CASE("synthetic corpus barely skates") {
  for (const auto& s : generate_corpus(24, 2)) CHECK(fs_ratio(s.motion) <= 0.05);
}

TEST_CASE("mm dist formula oracle") {
  std::mt19937_64 rng(1);
  const Tensor a = Tensor::randn({7, 5}, rng, 1.0f), b = Tensor::randn({7, 5}, rng, 1.0f);
  double want = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += std::pow(double(a[i * 5 + c]) - b[i * 5 + c], 2);
    want += std::sqrt(s) / 7;
  }
  CHECK(mm_dist(a, b) == doctest::Approx(want).epsilon(1e-6));
  CHECK(mm_dist(a, a) == 0.0);
  CHECK_THROWS_AS(mm_dist(a, Tensor::randn({6, 5}, rng, 1.0f)), ContractError);
}

TEST_CASE("r precision of a random embedder") {
  std::mt19937_64 rng(11);
  const Tensor t = random_unit_rows(2500, 64, rng), m = random_unit_rows(2500, 64, rng);
  const double rp = r_precision(t, m, 3, 32, 4);
  CHECK(std::abs(rp - 3.0 / 32.0) <= 0.05);
  CHECK(r_precision(t, m, 3, 1, 4) == 1.0);
  CHECK(r_precision(t, t, 1, 32, 4) == 1.0);
  CHECK_THROWS_AS(r_precision(t, random_unit_rows(10, 64, rng)), ContractError);
  CHECK_THROWS_AS(r_precision(t, m, 3, 0), ConfigError);
}

TEST_CASE("distance metrics ignore a common rotation") {
  std::mt19937_64 rng(2);
  const Tensor t = random_unit_rows(200, 16, rng), m = random_unit_rows(200, 16, rng);
  Eigen::MatrixXd g(16, 16);
  std::normal_distribution<double> n;
  for (int i = 0; i < g.size(); ++i) g(i) = n(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  const Tensor rt = rotate(t, q), rm = rotate(m, q);
  CHECK(mm_dist(rt, rm) == doctest::Approx(mm_dist(t, m)).epsilon(1e-5));
  for (std::size_t k : {1, 3, 5}) CHECK(r_precision(rt, rm, k, 32, 7) == r_precision(t, m, k, 32, 7));
}

TEST_CASE("evaluator training needs labels and two styles") {
  auto corpus = generate_corpus(8, 1);
  for (auto& s : corpus) s.style_label = "neutral";
  CHECK_THROWS_AS(train_eval_embedders(corpus), ContractError);
  corpus[0].style_label.reset();
  CHECK_THROWS_AS(train_eval_embedders(corpus), ContractError);
}

TEST_CASE("trained evaluator separates styles and pairs") {
  const auto& [corpus, res] = trained();
  const auto& rep = res.report;
  CHECK(rep.styles == std::vector<std::string>{"arms_overhead", "exaggerated_swing", "hunched_slow", "neutral"});
  CHECK(res.embedders.styles() == rep.styles);
  CHECK(rep.train_count + rep.heldout_count == corpus.size());
  CHECK(rep.heldout_count > 0);
  CHECK(rep.heldout_accuracy >= 0.9);
  CHECK(std::isfinite(rep.final_loss));

  std::vector<std::string> texts;
  std::vector<MotionSequence> motions;
  std::vector<std::string> held_m_labels;
  std::vector<MotionSequence> held_m;
  for (const auto& s : corpus) {
    if (std::find(rep.heldout_ids.begin(), rep.heldout_ids.end(), s.id) != rep.heldout_ids.end()) {
      held_m.push_back(s.motion);
      held_m_labels.push_back(*s.style_label);
    } else {
      texts.push_back(s.global_text);
      motions.push_back(s.motion);
    }
  }
  CHECK(r_precision(res.embedders, texts, motions) >= 0.9);
  CHECK(sra(res.embedders, held_m, held_m_labels) == rep.heldout_accuracy);

  const Tensor te = res.embedders.embed_texts(texts), me = res.embedders.embed_motions(motions);
  for (std::size_t i = 0; i < te.rows(); ++i) {
    double nt = 0, nm = 0;
    for (std::size_t c = 0; c < te.cols(); ++c) {
      nt += te[i * te.cols() + c] * te[i * te.cols() + c];
      nm += me[i * me.cols() + c] * me[i * me.cols() + c];
    }
    CHECK(nt == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(nm == doctest::Approx(1.0).epsilon(1e-4));
  }

  // own text is among the closest texts for most motions
  std::size_t near = 0;
  for (std::size_t i = 0; i < me.rows(); ++i) {
    auto d = [&](std::size_t j) {
      double s = 0;
      for (std::size_t c = 0; c < me.cols(); ++c) s += std::pow(double(te[j * te.cols() + c]) - me[i * me.cols() + c], 2);
      return s;
    };
    std::size_t closer = 0;
    for (std::size_t j = 0; j < te.rows(); ++j) closer += texts[j] != texts[i] && d(j) < d(i);
    near += closer == 0;
  }
  CHECK(double(near) / me.rows() >= 0.9);
  auto rolled = motions;
  std::rotate(rolled.begin(), rolled.begin() + 1, rolled.end());
  CHECK(mm_dist(res.embedders, texts, motions) < mm_dist(res.embedders, texts, rolled));
}

TEST_CASE("sra edge cases") {
  const auto& [corpus, res] = trained();
  std::vector<MotionSequence> m;
  std::vector<std::string> l;
  for (const auto& s : corpus) {
    m.push_back(s.motion);
    l.push_back(*s.style_label);
  }
  const auto pred = res.embedders.classify({m[0]});
  CHECK(sra(res.embedders, {m[0]}, pred) == 1.0);
  CHECK_THROWS_AS(sra(res.embedders, {m[0]}, {"moonwalk"}), ContractError);
  CHECK_THROWS_AS(sra(res.embedders, {m[0]}, {}), ContractError);

  std::mt19937_64 rng(8);
  double mean = 0;
  for (int r = 0; r < 20; ++r) {
    auto shuffled = l;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    mean += sra(res.embedders, m, shuffled) / 20;
  }
  CHECK(mean == doctest::Approx(0.25).epsilon(0.2));
}

TEST_CASE("duplicated samples are learned exactly") {
  const auto all = generate_corpus(12, 3);
  const std::vector<TripletSample> base = {all[0], all[6]};
  REQUIRE(base[0].style_label != base[1].style_label);
  std::vector<TripletSample> dup;
  for (int i = 0; i < 5; ++i)
    for (const auto& s : base) {
      auto c = s;
      c.id += "-" + std::to_string(i);
      dup.push_back(c);
    }
  EvalConfig cfg;
  cfg.steps = 200;
  cfg.batch = 4;
  const auto r = train_eval_embedders(dup, cfg);
  CHECK(r.report.train_accuracy == 1.0);
  CHECK(r.report.heldout_accuracy == 1.0);
}

TEST_CASE("evaluator training is deterministic and persists") {
  const auto corpus = generate_corpus(24, 4);
  EvalConfig cfg;
  cfg.steps = 60;
  cfg.batch = 8;
  const auto a = train_eval_embedders(corpus, cfg), b = train_eval_embedders(corpus, cfg);
  CHECK(a.report == b.report);

  const auto dir = std::filesystem::temp_directory_path() / "partstyle_eval_embedders";
  std::filesystem::remove_all(dir);
  a.embedders.save(dir);
  const auto loaded = EvalEmbedders::load(dir);
  std::vector<MotionSequence> m;
  std::vector<std::string> t;
  for (const auto& s : corpus) {
    m.push_back(s.motion);
    t.push_back(s.global_text);
  }
  const Tensor x = a.embedders.embed_motions(m), y = loaded.embed_motions(m);
  CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  CHECK(mm_dist(a.embedders, t, m) == mm_dist(loaded, t, m));
  CHECK(loaded.styles() == a.embedders.styles());
  std::filesystem::remove(dir / "embedders.pstc");
  CHECK_THROWS_AS(EvalEmbedders::load(dir), IoError);
}

TEST_CASE("metric report json") {
  const auto corpus = generate_corpus(4, 1);
  MetricReport r{"fs_ratio", 0.125, {{"height", 0.05}}, dataset_hash(corpus), 7};
  const auto j = r.to_json();
  CHECK(j["metric"] == "fs_ratio");
  CHECK(j["value"] == 0.125);
  CHECK(j["dataset_hash"].get<std::string>().size() == 16);
  CHECK(j["seed"] == 7);
  CHECK(dataset_hash(corpus) == dataset_hash(generate_corpus(4, 1)));
  CHECK(dataset_hash(corpus) != dataset_hash(generate_corpus(4, 2)));
}

}
