#include "partstyle/vq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "partstyle/adam.hpp"
#include "partstyle/checkpoint.hpp"

namespace partstyle {

namespace {

constexpr int kManifestVersion = 1;
constexpr double kStdFloor = 1e-2;

struct ConvSpec {
  std::string name;
  std::size_t cout, cin, k;
};

std::vector<ConvSpec> conv_specs(const VqConfig& c, std::size_t width) {
  const std::size_t h = c.hidden;
  std::vector<ConvSpec> s;
  s.push_back({"enc.in", h, width, 3});
  for (std::size_t i = 0; i < c.down_blocks; ++i) {
    const auto p = "enc.block" + std::to_string(i);
    s.push_back({p + ".down", h, h, 4});
    s.push_back({p + ".res_a", h, h, 3});
    s.push_back({p + ".res_b", h, h, 1});
  }
  s.push_back({"enc.out", c.code_dim, h, 3});
  s.push_back({"dec.in", h, c.code_dim, 3});
  for (std::size_t i = 0; i < c.down_blocks; ++i) {
    const auto p = "dec.block" + std::to_string(i);
    s.push_back({p + ".res_a", h, h, 3});
    s.push_back({p + ".res_b", h, h, 1});
    s.push_back({p + ".up", h, h, 3});
  }
  s.push_back({"dec.out", width, h, 3});
  return s;
}

// Conv index helpers matching conv_specs() order.
std::size_t enc_block(std::size_t i) { return 1 + 3 * i; }
std::size_t enc_out(const VqConfig& c) { return 1 + 3 * c.down_blocks; }
std::size_t dec_in(const VqConfig& c) { return enc_out(c) + 1; }
std::size_t dec_block(const VqConfig& c, std::size_t i) { return dec_in(c) + 1 + 3 * i; }
std::size_t dec_out(const VqConfig& c) { return dec_in(c) + 1 + 3 * c.down_blocks; }

void check_finite_or_throw(double v, std::size_t step) {
  if (!std::isfinite(v)) throw TrainingError("VQ training diverged (non-finite loss)", step);
}

}  // namespace

VqConfig default_vq_config(BodyPart p) {
  VqConfig c;
  if (p == BodyPart::Root) c.code_dim = 64;
  return c;
}

QuantizeResult quantize(const Tensor& codebook, const Tensor& latents) {
  if (codebook.empty() || codebook.rows() == 0) throw ContractError("quantize: empty codebook");
  if (codebook.rank() != 2 || latents.rank() != 2 || codebook.cols() != latents.cols()) {
    throw ContractError("quantize: codebook " + shape_str(codebook.shape()) + " vs latents " +
                        shape_str(latents.shape()));
  }
  const std::size_t k = codebook.rows(), d = codebook.cols(), n = latents.rows();
  QuantizeResult r;
  r.indices.resize(n);
  r.distances.resize(n);
  r.vectors = Tensor({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const float* z = latents.ptr() + i * d;
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const float* c = codebook.ptr() + j * d;
      double dist = 0.0;
      for (std::size_t e = 0; e < d; ++e) {
        const double diff = static_cast<double>(z[e]) - static_cast<double>(c[e]);
        dist += diff * diff;
      }
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    r.indices[i] = static_cast<int>(arg);
    r.distances[i] = best;
    std::copy_n(codebook.ptr() + arg * d, d, r.vectors.ptr() + i * d);
  }
  return r;
}

VqLossVars vq_loss(Graph& g, Var x, Var x_hat, Var latent, Var code, double beta) {
  auto mse = [&](Var a, Var b) {
    const float n = static_cast<float>(g.value(a).size());
    return g.scale(g.sum_squares(g.sub(a, b)), 1.0f / n);
  };
  VqLossVars l;
  l.recon = mse(x, x_hat);
  l.codebook = mse(g.stop_gradient(latent), code);
  l.commit = mse(latent, g.stop_gradient(code));
  l.total = g.add(g.add(l.recon, l.codebook), g.scale(l.commit, static_cast<float>(beta)));
  return l;
}

PartVqModel::PartVqModel(BodyPart part, VqConfig cfg) : part_(part), cfg_(cfg) {
  if (cfg_.codebook_size == 0 || cfg_.code_dim == 0 || cfg_.hidden == 0) {
    throw ConfigError("VQ config: codebook size, code dim and hidden width must be positive");
  }
  init_params(cfg_.seed);
  mean_ = Tensor::zeros({width()});
  std_ = Tensor::ones({width()});
}

void PartVqModel::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  params_.clear();
  params_.emplace_back("codebook", Tensor::randn({cfg_.codebook_size, cfg_.code_dim}, rng));
  for (const auto& s : conv_specs(cfg_, width())) {
    const float stddev = std::sqrt(2.0f / static_cast<float>(s.cin * s.k));
    params_.emplace_back(s.name + ".w", Tensor::randn({s.cout, s.cin, s.k}, rng, stddev));
    params_.emplace_back(s.name + ".b", Tensor::zeros({s.cout, 1}));
  }
  for (auto& p : params_) p.zero_grad();
}

void PartVqModel::set_normalization(Tensor mean, Tensor stddev) {
  if (mean.size() != width() || stddev.size() != width()) {
    throw ContractError("VQ normalization vectors must have " + std::to_string(width()) + " entries");
  }
  mean_ = mean.reshaped({width()});
  std_ = stddev.reshaped({width()});
}

std::vector<Parameter*> PartVqModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

Tensor PartVqModel::prepare(const Tensor& stream) const {
  if (stream.rank() != 2 || stream.cols() != width() || stream.rows() == 0) {
    throw ContractError("VQ " + std::string(part_label(part_)) + ": stream " + shape_str(stream.shape()) +
                        " does not match width " + std::to_string(width()));
  }
  const std::size_t n = stream.rows(), w = width();
  const std::size_t padded = token_count(n) * rate();
  Tensor x({w, padded});
  for (std::size_t c = 0; c < w; ++c) {
    const float m = mean_[c], s = std_[c];
    for (std::size_t t = 0; t < padded; ++t) x[c * padded + t] = (stream.at(std::min(t, n - 1), c) - m) / s;
  }
  return x;
}

PartVqModel::Bound PartVqModel::bind(Graph& g) {
  Bound b;
  for (auto& p : params_) b.vars.push_back(g.param(p));
  return b;
}

Var PartVqModel::conv(Graph& g, const Bound& b, std::size_t idx, Var x, int stride, int pad) const {
  return g.add_col(g.conv1d(x, b.vars[1 + 2 * idx], stride, pad), b.vars[2 + 2 * idx]);
}

Var PartVqModel::encode_graph(Graph& g, const Bound& b, Var x) const {
  Var h = g.relu(conv(g, b, 0, x, 1, 1));
  for (std::size_t i = 0; i < cfg_.down_blocks; ++i) {
    const std::size_t base = enc_block(i);
    h = g.relu(conv(g, b, base, h, 2, 1));
    Var r = conv(g, b, base + 2, g.relu(conv(g, b, base + 1, h, 1, 1)), 1, 0);
    h = g.add(h, r);
  }
  return conv(g, b, enc_out(cfg_), h, 1, 1);
}

Var PartVqModel::decode_graph(Graph& g, const Bound& b, Var z) const {
  Var h = g.relu(conv(g, b, dec_in(cfg_), z, 1, 1));
  for (std::size_t i = 0; i < cfg_.down_blocks; ++i) {
    const std::size_t base = dec_block(cfg_, i);
    Var r = conv(g, b, base + 1, g.relu(conv(g, b, base, h, 1, 1)), 1, 0);
    h = g.add(h, r);
    h = g.relu(conv(g, b, base + 2, g.upsample_nearest(h, 2), 1, 1));
  }
  return conv(g, b, dec_out(cfg_), h, 1, 1);
}

Tensor PartVqModel::encode(const Tensor& stream) const {
  Graph g;
  Bound b;
  for (const auto& p : params_) b.vars.push_back(g.constant(p.value));
  Var z = encode_graph(g, b, g.constant(prepare(stream)));
  return g.value(g.transpose(z));
}

std::vector<int> PartVqModel::tokenize(const Tensor& stream) const {
  return quantize(codebook(), encode(stream)).indices;
}

Tensor PartVqModel::run_decoder(const Tensor& codes) const {
  Graph g;
  Bound b;
  for (const auto& p : params_) b.vars.push_back(g.constant(p.value));
  Var out = decode_graph(g, b, g.transpose(g.constant(codes)));
  return g.value(out);
}

Tensor PartVqModel::decode(std::span<const int> indices, std::optional<std::size_t> source_len) const {
  if (indices.empty()) throw ContractError("VQ decode: empty token sequence");
  const std::size_t k = cfg_.codebook_size, d = cfg_.code_dim;
  Tensor codes({indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= k) {
      throw RangeError("VQ decode: code index " + std::to_string(indices[i]) + " outside [0," + std::to_string(k) +
                       ")");
    }
    std::copy_n(codebook().ptr() + static_cast<std::size_t>(indices[i]) * d, d, codes.ptr() + i * d);
  }
  const Tensor y = run_decoder(codes);  // [w×T·r]
  const std::size_t full = y.cols();
  std::size_t n = full;
  if (source_len) {
    if (*source_len == 0 || *source_len > full) {
      throw ContractError("VQ decode: source length " + std::to_string(*source_len) + " incompatible with " +
                          std::to_string(indices.size()) + " tokens");
    }
    n = *source_len;
  }
  const std::size_t w = width();
  Tensor out({n, w});
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t c = 0; c < w; ++c) out.at(t, c) = y[c * full + t] * std_[c] + mean_[c];
  // Contact channels are probabilities.
  const auto& cols = part_columns(part_);
  for (std::size_t c = 0; c < w; ++c) {
    if (cols[c] < layout::kContactBegin) continue;
    for (std::size_t t = 0; t < n; ++t) out.at(t, c) = std::clamp(out.at(t, c), 0.0f, 1.0f);
  }
  return out;
}

void PartVqModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const std::string stem = "vq_" + std::string(part_slug(part_));
  NamedTensors t;
  for (const auto& p : params_) t[p.name] = p.value;
  save_checkpoint(dir / (stem + ".pstc"), t);
  nlohmann::json j;
  j["format_version"] = kManifestVersion;
  j["part"] = std::string(part_slug(part_));
  j["codebook_size"] = cfg_.codebook_size;
  j["code_dim"] = cfg_.code_dim;
  j["rate"] = rate();
  j["down_blocks"] = cfg_.down_blocks;
  j["hidden"] = cfg_.hidden;
  j["beta"] = cfg_.beta;
  j["width"] = width();
  j["mean"] = mean_.vec();
  j["std"] = std_.vec();
  j["checkpoint"] = stem + ".pstc";
  std::ofstream(dir / (stem + ".json")) << j.dump(2) << "\n";
}

PartVqModel PartVqModel::load(const std::filesystem::path& dir, BodyPart part) {
  const std::string stem = "vq_" + std::string(part_slug(part));
  std::ifstream in(dir / (stem + ".json"));
  if (!in) throw IoError("cannot open VQ manifest " + (dir / (stem + ".json")).string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("VQ manifest " + stem + ".json: " + e.what());
  }
  if (j.value("format_version", 0) != kManifestVersion) throw IoError("VQ manifest " + stem + ": unsupported version");
  if (j.at("part").get<std::string>() != part_slug(part)) throw IoError("VQ manifest " + stem + ": part mismatch");
  VqConfig cfg;
  cfg.codebook_size = j.at("codebook_size");
  cfg.code_dim = j.at("code_dim");
  cfg.down_blocks = j.at("down_blocks");
  cfg.hidden = j.at("hidden");
  cfg.beta = j.at("beta");
  PartVqModel m(part, cfg);
  auto mean = j.at("mean").get<std::vector<float>>();
  auto sd = j.at("std").get<std::vector<float>>();
  m.set_normalization(Tensor({mean.size()}, mean), Tensor({sd.size()}, sd));
  load_into(load_checkpoint(dir / (stem + ".pstc")), m.parameters());
  return m;
}

VqTrainResult train_vq(const std::vector<Tensor>& streams, BodyPart part, const VqConfig& cfg) {
  if (streams.empty()) throw ContractError("train_vq: empty corpus");
  PartVqModel model(part, cfg);
  const std::size_t w = model.width(), r = model.rate();

  // Per-feature statistics over every training frame.
  std::vector<double> sum(w, 0.0), sq(w, 0.0);
  std::size_t frames = 0;
  for (const auto& s : streams) {
    if (s.rank() != 2 || s.cols() != w || s.rows() == 0) {
      throw ContractError("train_vq: clip " + shape_str(s.shape()) + " does not match width " + std::to_string(w));
    }
    for (std::size_t t = 0; t < s.rows(); ++t)
      for (std::size_t c = 0; c < w; ++c) {
        sum[c] += s.at(t, c);
        sq[c] += static_cast<double>(s.at(t, c)) * s.at(t, c);
      }
    frames += s.rows();
  }
  Tensor mean({w}), sd({w});
  for (std::size_t c = 0; c < w; ++c) {
    const double m = sum[c] / frames;
    const double var = std::max(0.0, sq[c] / frames - m * m);
    mean[c] = static_cast<float>(m);
    sd[c] = static_cast<float>(std::max(std::sqrt(var), kStdFloor));
  }
  model.set_normalization(mean, sd);

  std::vector<Tensor> prepared;
  for (const auto& s : streams) prepared.push_back(model.prepare(s));

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t k = cfg.codebook_size, d = cfg.code_dim;

  // Codebook starts from encoder outputs on the corpus.
  {
    std::vector<float> pool;
    for (const auto& s : streams) {
      const Tensor z = model.encode(s);
      pool.insert(pool.end(), z.data().begin(), z.data().end());
    }
    const std::size_t count = pool.size() / d;
    std::uniform_int_distribution<std::size_t> pick(0, count - 1);
    std::normal_distribution<double> jitter(0.0, 1e-3);
    Tensor& cb = model.codebook();
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t src = j < count ? j : pick(rng);
      for (std::size_t e = 0; e < d; ++e) cb[j * d + e] = pool[src * d + e] + static_cast<float>(jitter(rng));
    }
  }

  const std::size_t window = std::max(r, cfg.window / r * r);
  Adam adam(AdamConfig{.lr = cfg.lr});
  auto params = model.parameters();
  VqTrainResult result;
  std::vector<std::size_t> usage(k, 0);
  std::vector<float> recent;  // latents from the latest step, for re-seeding dead codes
  std::uniform_int_distribution<std::size_t> clip_dist(0, prepared.size() - 1);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    zero_grads<float>(params);
    Graph g;
    auto bound = model.bind(g);
    std::vector<Var> totals, recons, cbs, commits;
    recent.clear();
    for (std::size_t bi = 0; bi < cfg.batch; ++bi) {
      const Tensor& clip = prepared[clip_dist(rng)];
      const std::size_t n = clip.cols();
      const std::size_t len = std::min(window, n);
      const std::size_t off = n > len ? std::uniform_int_distribution<std::size_t>(0, n - len)(rng) : 0;
      Tensor crop({w, len});
      for (std::size_t c = 0; c < w; ++c) std::copy_n(clip.ptr() + c * n + off, len, crop.ptr() + c * len);

      Var x = g.constant(std::move(crop));
      Var latent = g.transpose(model.encode_graph(g, bound, x));  // [T×d]
      const auto q = quantize(model.codebook(), g.value(latent));
      for (int idx : q.indices) ++usage[static_cast<std::size_t>(idx)];
      recent.insert(recent.end(), g.value(latent).data().begin(), g.value(latent).data().end());
      Var code = g.embedding(bound.vars[0], q.indices);
      Var zq = g.straight_through(code, latent);
      Var x_hat = model.decode_graph(g, bound, g.transpose(zq));
      auto l = vq_loss(g, x, x_hat, latent, code, cfg.beta);
      totals.push_back(l.total);
      recons.push_back(l.recon);
      cbs.push_back(l.codebook);
      commits.push_back(l.commit);
    }
    auto avg = [&](const std::vector<Var>& v) {
      Var acc = v[0];
      for (std::size_t i = 1; i < v.size(); ++i) acc = g.add(acc, v[i]);
      return g.scale(acc, 1.0f / static_cast<float>(v.size()));
    };
    Var total = avg(totals);
    const double tv = g.value(total)[0];
    check_finite_or_throw(tv, step);
    g.backward(total);
    adam.step(params);

    if (cfg.reinit_every > 0 && step % cfg.reinit_every == 0 && step + cfg.reinit_every <= cfg.steps) {
      std::size_t used = 0;
      const std::size_t avail = recent.size() / d;
      std::uniform_int_distribution<std::size_t> pick(0, avail - 1);
      std::normal_distribution<double> jitter(0.0, 1e-3);
      Tensor& cb = model.codebook();
      for (std::size_t j = 0; j < k; ++j) {
        if (usage[j] > 0) {
          ++used;
          continue;
        }
        const std::size_t src = pick(rng);
        for (std::size_t e = 0; e < d; ++e) cb[j * d + e] = recent[src * d + e] + static_cast<float>(jitter(rng));
      }
      result.log.push_back({step, tv, g.value(avg(recons))[0], g.value(avg(cbs))[0], g.value(avg(commits))[0], used});
      std::fill(usage.begin(), usage.end(), 0);
    } else if (step == 1 || step % 50 == 0 || step == cfg.steps) {
      const auto used = static_cast<std::size_t>(std::count_if(usage.begin(), usage.end(), [](auto u) { return u > 0; }));
      result.log.push_back({step, tv, g.value(avg(recons))[0], g.value(avg(cbs))[0], g.value(avg(commits))[0], used});
    }
  }
  result.model = std::move(model);
  return result;
}

double reconstruction_mse(const PartVqModel& model, const std::vector<Tensor>& streams) {
  double err = 0.0;
  std::size_t count = 0;
  for (const auto& s : streams) {
    const Tensor rec = model.decode(model.tokenize(s), s.rows());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double diff = static_cast<double>(rec[i]) - s[i];
      err += diff * diff;
    }
    count += s.size();
  }
  return count ? err / count : 0.0;
}

std::size_t VqSet::rate() const {
  const std::size_t r = models[0].rate();
  for (const auto& m : models) {
    if (m.rate() != r) throw ConfigError("VQ models disagree on downsampling rate");
  }
  return r;
}

void VqSet::save(const std::filesystem::path& dir) const {
  for (auto p : kAllParts) (*this)[p].save(dir);
}

VqSet VqSet::load(const std::filesystem::path& dir) {
  VqSet s;
  for (auto p : kAllParts) s[p] = PartVqModel::load(dir, p);
  s.rate();
  return s;
}

std::array<PartTokenSeq, kNumParts> tokenize(const VqSet& vq, const MotionSequence& m) {
  vq.rate();
  const auto parts = partition(m);
  std::array<PartTokenSeq, kNumParts> out;
  for (auto p : kAllParts) {
    if (vq[p].part() != p) throw ConfigError("VQ set slot " + std::string(part_label(p)) + " holds another part");
    out[part_index(p)] = {p, vq[p].tokenize(parts[p]), m.num_frames()};
  }
  return out;
}

MotionSequence detokenize(const VqSet& vq, const std::array<PartTokenSeq, kNumParts>& tokens) {
  const std::size_t r = vq.rate();
  const std::size_t len = tokens[0].codes.size();
  for (auto p : kAllParts) {
    const auto& t = tokens[part_index(p)];
    if (t.codes.size() != len) {
      throw ContractError("detokenize: " + std::string(part_label(p)) + " has " + std::to_string(t.codes.size()) +
                          " tokens, expected " + std::to_string(len));
    }
  }
  if (len == 0) throw ContractError("detokenize: empty token sequences");
  std::size_t n = tokens[0].source_len;
  if (n == 0 || n > len * r || n <= (len - 1) * r) n = len * r;
  BodyPartSet parts;
  for (auto p : kAllParts) parts[p] = vq[p].decode(tokens[part_index(p)].codes, n);
  return merge(parts);
}

}  // namespace partstyle
