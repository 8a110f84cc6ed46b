#include "partstyle/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "partstyle/adam.hpp"
#include "partstyle/checkpoint.hpp"
#include "partstyle/graph.hpp"
#include "partstyle/hash.hpp"

namespace partstyle {

namespace {

using nlohmann::json;

constexpr int kEvalFormat = 1;
constexpr float kStdFloor = 1e-2f;

enum Slot { kMw1, kMb1, kMw2, kMb2, kTemb, kTb1, kTw2, kTb2, kCw, kCb, kSlots };

std::vector<std::string> words_of(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

struct Branches {
  Var motion, text;
};

Var mlp(Graph& g, const std::vector<Var>& v, Var x, Slot w1, Slot b1, Slot w2, Slot b2) {
  Var h = g.relu(g.add_row(g.matmul(x, v[w1]), v[b1]));
  return g.l2_normalize_rows(g.add_row(g.matmul(h, v[w2]), v[b2]));
}

double dist(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const double d = static_cast<double>(a[i * a.cols() + c]) - b[j * b.cols() + c];
    s += d * d;
  }
  return std::sqrt(s);
}

void check_pairs(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(what) + ": text and motion embeddings are not paired row for row");
}

}  // namespace

double fs_ratio(const JointPositions& pos, const FsConfig& cfg) {
  if (cfg.height <= 0 || cfg.speed <= 0 || cfg.fps <= 0) throw ConfigError("fs_ratio: thresholds must be positive");
  if (pos.empty()) return 0.0;
  const std::size_t n = pos.size();
  std::size_t skating = 0;
  for (std::size_t t = 0; t < n; ++t) {
    bool skate = false;
    for (std::size_t j : {layout::kLeftFoot, layout::kRightFoot}) {
      if (pos[t][j].y() >= cfg.height || n < 2) continue;
      const std::size_t a = t + 1 < n ? t : t - 1;
      const Eigen::Vector3d d = pos[a + 1][j] - pos[a][j];
      const double v = std::hypot(d.x(), d.z()) * cfg.fps;
      skate = skate || v > cfg.speed;
    }
    skating += skate;
  }
  return static_cast<double>(skating) / static_cast<double>(n);
}

double fs_ratio(const MotionSequence& m, const FsConfig& cfg) { return fs_ratio(recover_global_positions(m), cfg); }

Tensor EvalEmbedders::motion_inputs(const std::vector<MotionSequence>& motions) const {
  const std::size_t w = layout::kFeatureDim;
  Tensor x({motions.size(), 2 * w});
  for (std::size_t i = 0; i < motions.size(); ++i) {
    const auto& f = motions[i].features();
    const std::size_t n = motions[i].num_frames();
    if (n == 0) throw ContractError("embed_motions: empty motion");
    for (std::size_t c = 0; c < w; ++c) {
      double s = 0.0, sq = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        const double z = (f[t * w + c] - feat_mean_[c]) / feat_std_[c];
        s += z;
        sq += z * z;
      }
      const double mean = s / n;
      x[i * 2 * w + c] = static_cast<float>(mean);
      x[i * 2 * w + w + c] = static_cast<float>(std::sqrt(std::max(0.0, sq / n - mean * mean)));
    }
  }
  return x;
}

Tensor EvalEmbedders::text_inputs(const std::vector<std::string>& texts) const {
  Tensor x({texts.size(), words_.size()});
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::vector<std::size_t> hits;
    for (const auto& w : words_of(texts[i])) {
      auto it = std::lower_bound(words_.begin(), words_.end(), w);
      if (it != words_.end() && *it == w) hits.push_back(static_cast<std::size_t>(it - words_.begin()));
    }
    for (auto h : hits) x[i * words_.size() + h] += 1.0f / static_cast<float>(hits.size());
  }
  return x;
}

Tensor EvalEmbedders::embed_motions(const std::vector<MotionSequence>& motions) const {
  if (motions.empty()) return Tensor({0, cfg_.dim});
  Graph g;
  std::vector<Var> v;
  for (const auto& p : params_) v.push_back(g.constant(p.value));
  return g.value(mlp(g, v, g.constant(motion_inputs(motions)), kMw1, kMb1, kMw2, kMb2));
}

Tensor EvalEmbedders::embed_texts(const std::vector<std::string>& texts) const {
  if (texts.empty()) return Tensor({0, cfg_.dim});
  Graph g;
  std::vector<Var> v;
  for (const auto& p : params_) v.push_back(g.constant(p.value));
  return g.value(mlp(g, v, g.constant(text_inputs(texts)), kTemb, kTb1, kTw2, kTb2));
}

std::vector<std::string> EvalEmbedders::classify(const std::vector<MotionSequence>& motions) const {
  std::vector<std::string> out;
  if (motions.empty()) return out;
  Graph g;
  std::vector<Var> v;
  for (const auto& p : params_) v.push_back(g.constant(p.value));
  Var e = mlp(g, v, g.constant(motion_inputs(motions)), kMw1, kMb1, kMw2, kMb2);
  const auto& lg = g.value(g.add_row(g.matmul(e, v[kCw]), v[kCb]));
  const std::size_t s = styles_.size();
  for (std::size_t i = 0; i < motions.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < s; ++j)
      if (lg[i * s + j] > lg[i * s + best]) best = j;
    out.push_back(styles_[best]);
  }
  return out;
}

void EvalEmbedders::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  NamedTensors t;
  for (const auto& p : params_) t[p.name] = p.value;
  save_checkpoint(dir / "embedders.pstc", t);
  json j;
  j["format_version"] = kEvalFormat;
  j["dim"] = cfg_.dim;
  j["hidden"] = cfg_.hidden;
  j["steps"] = cfg_.steps;
  j["batch"] = cfg_.batch;
  j["lr"] = cfg_.lr;
  j["temperature"] = cfg_.temperature;
  j["heldout"] = cfg_.heldout;
  j["seed"] = cfg_.seed;
  j["styles"] = styles_;
  j["words"] = words_;
  j["feature_mean"] = feat_mean_;
  j["feature_std"] = feat_std_;
  std::ofstream f(dir / "embedders.json");
  f << j.dump(1) << "\n";
  if (!f) throw IoError("cannot write " + (dir / "embedders.json").string());
}

EvalEmbedders EvalEmbedders::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "embedders.json");
  if (!in) throw IoError("cannot open " + (dir / "embedders.json").string());
  EvalEmbedders e;
  try {
    json j;
    in >> j;
    if (j.value("format_version", 0) != kEvalFormat) throw IoError("embedders: unsupported format");
    e.cfg_.dim = j.at("dim");
    e.cfg_.hidden = j.at("hidden");
    e.cfg_.steps = j.at("steps");
    e.cfg_.batch = j.at("batch");
    e.cfg_.lr = j.at("lr");
    e.cfg_.temperature = j.at("temperature");
    e.cfg_.heldout = j.at("heldout");
    e.cfg_.seed = j.at("seed");
    e.styles_ = j.at("styles").get<std::vector<std::string>>();
    e.words_ = j.at("words").get<std::vector<std::string>>();
    e.feat_mean_ = j.at("feature_mean").get<std::vector<float>>();
    e.feat_std_ = j.at("feature_std").get<std::vector<float>>();
  } catch (const json::exception& ex) {
    throw IoError(std::string("embedders.json: ") + ex.what());
  }
  auto tensors = load_checkpoint(dir / "embedders.pstc");
  for (const auto& [name, t] : tensors) e.params_.emplace_back(name, t);
  const std::vector<std::string> order = {"m.w1", "m.b1", "m.w2", "m.b2", "t.emb", "t.b1", "t.w2", "t.b2", "c.w", "c.b"};
  std::vector<Parameter> sorted;
  for (const auto& n : order) {
    auto it = tensors.find(n);
    if (it == tensors.end()) throw IoError("embedders.pstc: missing tensor " + n);
    sorted.emplace_back(n, it->second);
  }
  e.params_ = std::move(sorted);
  return e;
}

EvalTrainResult train_eval_embedders(const std::vector<TripletSample>& samples, const EvalConfig& cfg) {
  std::set<std::string> style_set;
  for (const auto& s : samples) {
    if (!s.style_label) throw ContractError("train_eval_embedders: sample " + s.id + " has no style label");
    style_set.insert(*s.style_label);
  }
  if (style_set.size() < 2) throw ContractError("train_eval_embedders: need at least two styles");
  if (cfg.batch < 2 || cfg.dim == 0 || cfg.hidden == 0) throw ConfigError("train_eval_embedders: bad configuration");

  auto parts = split(samples, {{"train", 1.0 - cfg.heldout}, {"heldout", cfg.heldout}}, cfg.seed);
  const auto& train = parts["train"];
  const auto& held = parts["heldout"];
  if (train.empty()) throw ContractError("train_eval_embedders: empty training split");

  EvalTrainResult res;
  auto& e = res.embedders;
  e.cfg_ = cfg;
  e.styles_.assign(style_set.begin(), style_set.end());
  std::set<std::string> vocab;
  for (const auto& s : train)
    for (auto& w : words_of(s.global_text)) vocab.insert(std::move(w));
  e.words_.assign(vocab.begin(), vocab.end());
  if (e.words_.empty()) e.words_.push_back("<none>");

  const std::size_t w = layout::kFeatureDim;
  std::vector<double> sum(w, 0.0), sq(w, 0.0);
  std::size_t frames = 0;
  for (const auto& s : train) {
    const auto& f = s.motion.features();
    for (std::size_t t = 0; t < s.motion.num_frames(); ++t)
      for (std::size_t c = 0; c < w; ++c) {
        sum[c] += f[t * w + c];
        sq[c] += static_cast<double>(f[t * w + c]) * f[t * w + c];
      }
    frames += s.motion.num_frames();
  }
  e.feat_mean_.resize(w);
  e.feat_std_.resize(w);
  for (std::size_t c = 0; c < w; ++c) {
    const double m = sum[c] / frames;
    e.feat_mean_[c] = static_cast<float>(m);
    e.feat_std_[c] = std::max(kStdFloor, static_cast<float>(std::sqrt(std::max(0.0, sq[c] / frames - m * m))));
  }

  std::mt19937_64 rng(cfg.seed);
  const std::size_t in = 2 * w, h = cfg.hidden, d = cfg.dim, nw = e.words_.size(), ns = e.styles_.size();
  auto init = [&](const char* name, Shape shape, double fan_in) {
    e.params_.emplace_back(name, Tensor::randn(std::move(shape), rng, static_cast<float>(1.0 / std::sqrt(fan_in))));
  };
  init("m.w1", {in, h}, static_cast<double>(in));
  e.params_.emplace_back("m.b1", Tensor::zeros({h}));
  init("m.w2", {h, d}, static_cast<double>(h));
  e.params_.emplace_back("m.b2", Tensor::zeros({d}));
  init("t.emb", {nw, h}, 1.0);
  e.params_.emplace_back("t.b1", Tensor::zeros({h}));
  init("t.w2", {h, d}, static_cast<double>(h));
  e.params_.emplace_back("t.b2", Tensor::zeros({d}));
  init("c.w", {d, ns}, 1.0);
  e.params_.emplace_back("c.b", Tensor::zeros({ns}));

  std::vector<MotionSequence> motions;
  std::vector<std::string> texts;
  std::vector<int> labels;
  for (const auto& s : train) {
    motions.push_back(s.motion);
    texts.push_back(s.global_text);
    labels.push_back(static_cast<int>(std::lower_bound(e.styles_.begin(), e.styles_.end(), *s.style_label) -
                                      e.styles_.begin()));
  }
  const Tensor mx = e.motion_inputs(motions);
  const Tensor tx = e.text_inputs(texts);

  std::vector<Parameter*> params;
  for (auto& p : e.params_) params.push_back(&p);
  Adam opt({cfg.lr});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    // Distinct texts only, so in-batch negatives are true negatives.
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> batch;
    std::set<std::string> used;
    for (std::size_t i : order) {
      if (batch.size() == cfg.batch) break;
      if (used.insert(texts[i]).second) batch.push_back(i);
    }
    const std::size_t b = batch.size();
    Tensor xb({b, in}), tb({b, nw});
    std::vector<int> diag(b), lb(b);
    for (std::size_t r = 0; r < b; ++r) {
      std::copy_n(mx.data().begin() + batch[r] * in, in, xb.data().begin() + r * in);
      std::copy_n(tx.data().begin() + batch[r] * nw, nw, tb.data().begin() + r * nw);
      diag[r] = static_cast<int>(r);
      lb[r] = labels[batch[r]];
    }
    zero_grads<float>(params);
    Graph g;
    std::vector<Var> v;
    for (auto& p : e.params_) v.push_back(g.param(p));
    Var me = mlp(g, v, g.constant(xb), kMw1, kMb1, kMw2, kMb2);
    Var te = mlp(g, v, g.constant(tb), kTemb, kTb1, kTw2, kTb2);
    Var sim = g.scale(g.matmul_nt(te, me), static_cast<float>(1.0 / cfg.temperature));
    Var contrast = g.scale(g.add(g.cross_entropy(sim, diag), g.cross_entropy(g.transpose(sim), diag)), 0.5f);
    Var cls = g.cross_entropy(g.add_row(g.matmul(me, v[kCw]), v[kCb]), lb);
    Var loss = g.add(contrast, cls);
    res.report.final_loss = g.value(loss)[0];
    if (!std::isfinite(res.report.final_loss))
      throw TrainingError("train_eval_embedders: non-finite loss", static_cast<long>(step + 1));
    g.backward(loss);
    opt.step(params);
  }

  auto accuracy = [&](const std::vector<TripletSample>& set) {
    std::vector<MotionSequence> m;
    std::vector<std::string> l;
    for (const auto& s : set) {
      m.push_back(s.motion);
      l.push_back(*s.style_label);
    }
    return set.empty() ? 0.0 : sra(e, m, l);
  };
  res.report.styles = e.styles_;
  res.report.train_count = train.size();
  res.report.heldout_count = held.size();
  res.report.train_accuracy = accuracy(train);
  res.report.heldout_accuracy = held.empty() ? res.report.train_accuracy : accuracy(held);
  for (const auto& s : held) res.report.heldout_ids.push_back(s.id);
  return res;
}

double mm_dist(const Tensor& text_emb, const Tensor& motion_emb) {
  check_pairs(text_emb, motion_emb, "mm_dist");
  if (text_emb.rows() == 0) throw ContractError("mm_dist: no pairs");
  double s = 0.0;
  for (std::size_t i = 0; i < text_emb.rows(); ++i) s += dist(text_emb, i, motion_emb, i);
  return s / static_cast<double>(text_emb.rows());
}

double mm_dist(const EvalEmbedders& e, const std::vector<std::string>& texts,
               const std::vector<MotionSequence>& motions) {
  if (texts.size() != motions.size()) throw ContractError("mm_dist: text and motion counts differ");
  return mm_dist(e.embed_texts(texts), e.embed_motions(motions));
}

double r_precision(const Tensor& text_emb, const Tensor& motion_emb, std::size_t k, std::size_t pool,
                   std::uint64_t seed) {
  check_pairs(text_emb, motion_emb, "r_precision");
  const std::size_t n = text_emb.rows();
  if (n == 0) throw ContractError("r_precision: no queries");
  if (pool == 0 || k == 0) throw ConfigError("r_precision: pool and k must be positive");
  const std::size_t p = std::min(pool, n);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> others(n - 1);
  std::size_t hits = 0;
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t i = 0, j = 0; i < n; ++i)
      if (i != q) others[j++] = i;
    // Partial Fisher-Yates draw of the distractors.
    for (std::size_t i = 0; i + 1 < p; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
      std::swap(others[i], others[pick(rng)]);
    }
    const double truth = dist(text_emb, q, motion_emb, q);
    std::size_t rank = 1;
    for (std::size_t i = 0; i + 1 < p; ++i) rank += dist(text_emb, q, motion_emb, others[i]) < truth;
    hits += rank <= k;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double r_precision(const EvalEmbedders& e, const std::vector<std::string>& texts,
                   const std::vector<MotionSequence>& motions, std::size_t k, std::size_t pool, std::uint64_t seed) {
  if (texts.size() != motions.size()) throw ContractError("r_precision: every query needs its paired motion");
  return r_precision(e.embed_texts(texts), e.embed_motions(motions), k, pool, seed);
}

double sra(const EvalEmbedders& e, const std::vector<MotionSequence>& motions,
           const std::vector<std::string>& target_styles) {
  if (motions.size() != target_styles.size()) throw ContractError("sra: motion and label counts differ");
  if (motions.empty()) throw ContractError("sra: no motions");
  for (const auto& s : target_styles)
    if (!std::binary_search(e.styles().begin(), e.styles().end(), s))
      throw ContractError("sra: unknown style label '" + s + "'");
  const auto pred = e.classify(motions);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == target_styles[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

std::string dataset_hash(const std::vector<TripletSample>& samples) {
  std::uint64_t h = fnv1a64("");
  for (const auto& s : samples) {
    h = fnv1a64(s.id, h);
    h = fnv1a64(s.global_text, h);
    const auto f = s.motion.features().data();
    h = fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(f.data()), f.size_bytes()), h);
  }
  return hex64(h);
}

json MetricReport::to_json() const {
  return json{{"metric", metric}, {"value", value}, {"config", config}, {"dataset_hash", dataset_hash}, {"seed", seed}};
}

}  // namespace partstyle
