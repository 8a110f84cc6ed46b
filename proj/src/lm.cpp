#include "partstyle/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "json.hpp"
#include "partstyle/adam.hpp"
#include "partstyle/checkpoint.hpp"

namespace partstyle {

namespace {

constexpr int kModelFormat = 1;

std::uint64_t next_seed(std::uint64_t& s) {
  // splitmix64
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void validate(const SeqModelConfig& c) {
  if (c.vocab_size < 3) throw ConfigError("model: vocab_size must cover the special tokens");
  if (c.d_model == 0 || c.heads == 0 || c.d_model % c.heads != 0)
    throw ConfigError("model: d_model " + std::to_string(c.d_model) + " not divisible by heads " + std::to_string(c.heads));
  if (c.d_ff == 0) throw ConfigError("model: d_ff must be positive");
  if (c.max_input_len == 0 || c.max_input_len > 512) throw ConfigError("model: max_input_len must lie in [1, 512]");
  if (c.max_target_len == 0) throw ConfigError("model: max_target_len must be positive");
  for (int id : {c.pad_id, c.bos_id, c.eos_id})
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) throw ConfigError("model: special id out of range");
}

std::string_view task_name(TaskKind k) {
  switch (k) {
    case TaskKind::PartTextToMotion: return "part_text_to_motion";
    case TaskKind::PartMotionToText: return "part_motion_to_text";
    case TaskKind::GlobalToParts: return "global_to_parts";
    case TaskKind::Compose: return "compose";
    case TaskKind::PartTextsToMotion: return "part_texts_to_motion";
  }
  return "?";
}

template <typename T>
BasicSeqModel<T>::BasicSeqModel(SeqModelConfig cfg) : cfg_(cfg) {
  validate(cfg_);
  std::uint64_t seed = cfg_.seed;
  const std::size_t d = cfg_.d_model;
  std::mt19937_64 rng(next_seed(seed));
  tok_ = add("tok_emb", TensorT::randn({cfg_.vocab_size, d}, rng, T(0.02)));
  enc_pos_ = add("enc_pos", TensorT::randn({cfg_.max_input_len, d}, rng, T(0.02)));
  dec_pos_ = add("dec_pos", TensorT::randn({cfg_.max_target_len, d}, rng, T(0.02)));
  for (std::size_t l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string n = "enc" + std::to_string(l);
    EncLayer e;
    e.ln1 = add_norm(n + ".ln1");
    e.self = add_attn(n + ".self", seed);
    e.ln2 = add_norm(n + ".ln2");
    e.ff = add_ff(n + ".ff", seed);
    enc_.push_back(e);
  }
  enc_ln_ = add_norm("enc.ln");
  for (std::size_t l = 0; l < cfg_.decoder_layers; ++l) {
    const std::string n = "dec" + std::to_string(l);
    DecLayer e;
    e.ln1 = add_norm(n + ".ln1");
    e.self = add_attn(n + ".self", seed);
    e.ln2 = add_norm(n + ".ln2");
    e.cross = add_attn(n + ".cross", seed);
    e.ln3 = add_norm(n + ".ln3");
    e.ff = add_ff(n + ".ff", seed);
    dec_.push_back(e);
  }
  dec_ln_ = add_norm("dec.ln");
}

template <typename T>
std::size_t BasicSeqModel<T>::add(std::string name, TensorT value) {
  params_.emplace_back(std::move(name), std::move(value));
  return params_.size() - 1;
}

template <typename T>
typename BasicSeqModel<T>::Norm BasicSeqModel<T>::add_norm(const std::string& name) {
  Norm n;
  n.g = add(name + ".g", TensorT::ones({cfg_.d_model}));
  n.b = add(name + ".b", TensorT::zeros({cfg_.d_model}));
  return n;
}

template <typename T>
typename BasicSeqModel<T>::Attn BasicSeqModel<T>::add_attn(const std::string& name, std::uint64_t& seed) {
  const std::size_t d = cfg_.d_model;
  std::mt19937_64 rng(next_seed(seed));
  const T s = T(1) / std::sqrt(static_cast<T>(d));
  // Residual branches start small so the stack begins close to identity.
  const T so = s / std::sqrt(static_cast<T>(2 * (cfg_.encoder_layers + cfg_.decoder_layers)));
  Attn a;
  a.wq = add(name + ".wq", TensorT::randn({d, d}, rng, s));
  a.bq = add(name + ".bq", TensorT::zeros({d}));
  a.wk = add(name + ".wk", TensorT::randn({d, d}, rng, s));
  a.bk = add(name + ".bk", TensorT::zeros({d}));
  a.wv = add(name + ".wv", TensorT::randn({d, d}, rng, s));
  a.bv = add(name + ".bv", TensorT::zeros({d}));
  a.wo = add(name + ".wo", TensorT::randn({d, d}, rng, so));
  a.bo = add(name + ".bo", TensorT::zeros({d}));
  return a;
}

template <typename T>
typename BasicSeqModel<T>::FF BasicSeqModel<T>::add_ff(const std::string& name, std::uint64_t& seed) {
  const std::size_t d = cfg_.d_model, h = cfg_.d_ff;
  std::mt19937_64 rng(next_seed(seed));
  FF f;
  f.w1 = add(name + ".w1", TensorT::randn({d, h}, rng, T(1) / std::sqrt(static_cast<T>(d))));
  f.b1 = add(name + ".b1", TensorT::zeros({h}));
  f.w2 = add(name + ".w2", TensorT::randn({h, d}, rng,
                                         T(1) / std::sqrt(static_cast<T>(h * 2 * (cfg_.encoder_layers + cfg_.decoder_layers)))));
  f.b2 = add(name + ".b2", TensorT::zeros({d}));
  return f;
}

template <typename T>
std::vector<BasicParameter<T>*> BasicSeqModel<T>::parameters() {
  std::vector<ParameterT*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
typename BasicSeqModel<T>::Bound BasicSeqModel<T>::bind(GraphT& g) {
  Bound b;
  for (auto& p : params_) b.vars.push_back(g.param(p));
  return b;
}

template <typename T>
Var BasicSeqModel<T>::norm(GraphT& g, const Bound& b, const Norm& n, Var x) const {
  return g.layer_norm(x, b.vars[n.g], b.vars[n.b]);
}

template <typename T>
Var BasicSeqModel<T>::attend(GraphT& g, const Bound& b, const Attn& a, Var x, Var kv, bool causal,
                             std::span<const std::uint8_t> mask) const {
  const auto& v = b.vars;
  Var q = g.add_row(g.matmul(x, v[a.wq]), v[a.bq]);
  Var k = g.add_row(g.matmul(kv, v[a.wk]), v[a.bk]);
  Var val = g.add_row(g.matmul(kv, v[a.wv]), v[a.bv]);
  Var o = g.attention(q, k, val, static_cast<int>(cfg_.heads), causal, mask);
  return g.add_row(g.matmul(o, v[a.wo]), v[a.bo]);
}

template <typename T>
Var BasicSeqModel<T>::feed_forward(GraphT& g, const Bound& b, const FF& f, Var x) const {
  const auto& v = b.vars;
  Var h = g.relu(g.add_row(g.matmul(x, v[f.w1]), v[f.b1]));
  return g.add_row(g.matmul(h, v[f.w2]), v[f.b2]);
}

template <typename T>
void BasicSeqModel<T>::check_ids(std::span<const int> ids, std::size_t limit, const char* what) const {
  if (ids.empty()) throw ContractError(std::string("model: empty ") + what);
  if (ids.size() > limit)
    throw ContractError(std::string("model: ") + what + " of " + std::to_string(ids.size()) + " tokens exceeds " +
                        std::to_string(limit));
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
      throw RangeError(std::string("model: token id ") + std::to_string(id) + " in " + what + " outside vocabulary");
}

template <typename T>
std::vector<std::uint8_t> BasicSeqModel<T>::resolve_mask(std::span<const int> input,
                                                         std::span<const std::uint8_t> mask) const {
  if (!mask.empty()) {
    if (mask.size() != input.size()) throw DimensionError("model: input mask length differs from input");
    return {mask.begin(), mask.end()};
  }
  std::vector<std::uint8_t> m(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) m[i] = input[i] != cfg_.pad_id;
  return m;
}

template <typename T>
Var BasicSeqModel<T>::encode_graph(GraphT& g, const Bound& b, std::span<const int> input,
                                   std::span<const std::uint8_t> mask) const {
  check_ids(input, cfg_.max_input_len, "input");
  std::vector<int> pos(input.size());
  std::iota(pos.begin(), pos.end(), 0);
  Var x = g.add(g.embedding(b.vars[tok_], input), g.embedding(b.vars[enc_pos_], pos));
  for (const auto& l : enc_) {
    Var h = norm(g, b, l.ln1, x);
    x = g.add(x, attend(g, b, l.self, h, h, false, mask));
    x = g.add(x, feed_forward(g, b, l.ff, norm(g, b, l.ln2, x)));
  }
  return norm(g, b, enc_ln_, x);
}

template <typename T>
Var BasicSeqModel<T>::decode_graph(GraphT& g, const Bound& b, Var memory, std::span<const std::uint8_t> mask,
                                   std::span<const int> prefix) const {
  check_ids(prefix, cfg_.max_target_len, "target prefix");
  std::vector<int> pos(prefix.size());
  std::iota(pos.begin(), pos.end(), 0);
  Var x = g.add(g.embedding(b.vars[tok_], prefix), g.embedding(b.vars[dec_pos_], pos));
  for (const auto& l : dec_) {
    Var h = norm(g, b, l.ln1, x);
    x = g.add(x, attend(g, b, l.self, h, h, true, {}));
    x = g.add(x, attend(g, b, l.cross, norm(g, b, l.ln2, x), memory, false, mask));
    x = g.add(x, feed_forward(g, b, l.ff, norm(g, b, l.ln3, x)));
  }
  return g.matmul_nt(norm(g, b, dec_ln_, x), b.vars[tok_]);
}

template <typename T>
BasicTensor<T> BasicSeqModel<T>::forward(std::span<const int> input, std::span<const int> prefix,
                                         std::span<const std::uint8_t> input_mask) {
  GraphT g;
  const auto b = bind(g);
  const auto mask = resolve_mask(input, input_mask);
  Var mem = encode_graph(g, b, input, mask);
  return g.value(decode_graph(g, b, mem, mask, prefix));
}

template class BasicSeqModel<float>;
template class BasicSeqModel<double>;

template <typename T>
BasicTensor<T> lm_forward(BasicSeqModel<T>& model, std::span<const int> input, std::span<const int> prefix,
                          std::span<const std::uint8_t> input_mask) {
  return model.forward(input, prefix, input_mask);
}

template BasicTensor<float> lm_forward(SeqModel&, std::span<const int>, std::span<const int>,
                                       std::span<const std::uint8_t>);
template BasicTensor<double> lm_forward(SeqModel64&, std::span<const int>, std::span<const int>,
                                        std::span<const std::uint8_t>);

namespace {

void check_task(const TrainingTask& t, const SeqModelConfig& c) {
  if (t.target.empty() || t.target.back() != c.eos_id) throw ContractError("training task target must end with <eos>");
}

std::vector<int> shifted_prefix(const TrainingTask& t, int bos) {
  std::vector<int> p;
  p.reserve(t.target.size());
  p.push_back(bos);
  p.insert(p.end(), t.target.begin(), t.target.end() - 1);
  return p;
}

}  // namespace

template <typename T>
Var lm_loss_graph(BasicGraph<T>& g, BasicSeqModel<T>& model, const typename BasicSeqModel<T>::Bound& b,
                  std::span<const TrainingTask> batch) {
  if (batch.empty()) throw ContractError("lm_loss: empty batch");
  const auto& c = model.config();
  Var total;
  for (const auto& t : batch) {
    check_task(t, c);
    std::vector<std::uint8_t> mask(t.input.size());
    for (std::size_t i = 0; i < t.input.size(); ++i) mask[i] = t.input[i] != c.pad_id;
    Var mem = model.encode_graph(g, b, t.input, mask);
    const auto prefix = shifted_prefix(t, c.bos_id);
    Var logits = model.decode_graph(g, b, mem, mask, prefix);
    Var nll = g.cross_entropy(logits, t.target, BasicGraph<T>::Reduction::Sum);
    total = total.valid() ? g.add(total, nll) : nll;
  }
  return g.scale(total, T(1) / static_cast<T>(batch.size()));
}

template <typename T>
double lm_loss(BasicSeqModel<T>& model, std::span<const TrainingTask> batch) {
  BasicGraph<T> g;
  const auto b = model.bind(g);
  return static_cast<double>(g.value(lm_loss_graph(g, model, b, batch))[0]);
}

template Var lm_loss_graph(Graph&, SeqModel&, const SeqModel::Bound&, std::span<const TrainingTask>);
template Var lm_loss_graph(Graph64&, SeqModel64&, const SeqModel64::Bound&, std::span<const TrainingTask>);
template double lm_loss(SeqModel&, std::span<const TrainingTask>);
template double lm_loss(SeqModel64&, std::span<const TrainingTask>);

NllStats evaluate_nll(SeqModel& model, std::span<const TrainingTask> tasks) {
  NllStats s;
  for (const auto& t : tasks) {
    s.total += lm_loss(model, std::span<const TrainingTask>(&t, 1));
    s.tokens += t.target.size();
  }
  return s;
}

std::string_view stage_name(TrainStage s) { return s == TrainStage::Pretrain ? "pretrain" : "posttrain"; }

TrainStage stage_from_name(std::string_view name) {
  if (name == "pretrain") return TrainStage::Pretrain;
  if (name == "posttrain") return TrainStage::Posttrain;
  throw ConfigError("unknown training stage '" + std::string(name) + "'");
}

double default_lr(TrainStage s) { return s == TrainStage::Pretrain ? 2e-4 : 1e-4; }

std::vector<LmLogEntry> train_lm(SeqModel& model, std::span<const TrainingTask> tasks, TrainStage stage,
                                 const LmTrainConfig& cfg) {
  if (tasks.empty()) throw ContractError("train_lm: empty dataset");
  if (cfg.batch == 0) throw ConfigError("train_lm: batch must be positive");
  for (const auto& t : tasks) {
    check_task(t, model.config());
    if (t.input.size() > model.config().max_input_len)
      throw ContractError("train_lm: input of " + std::to_string(t.input.size()) + " tokens exceeds the model limit");
  }
  std::map<TaskKind, std::vector<std::size_t>> by_kind;
  for (std::size_t i = 0; i < tasks.size(); ++i) by_kind[tasks[i].kind].push_back(i);
  std::vector<const std::vector<std::size_t>*> kinds;
  for (const auto& [k, v] : by_kind) kinds.push_back(&v);

  const double lr = cfg.lr > 0 ? cfg.lr : default_lr(stage);
  Adam opt({lr, 0.9, 0.98, 1e-9});
  auto params = model.parameters();
  std::mt19937_64 rng(cfg.seed);
  std::vector<LmLogEntry> curve;
  std::vector<TrainingTask> batch(cfg.batch);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::size_t tokens = 0;
    for (auto& slot : batch) {
      const auto& pool = *kinds[rng() % kinds.size()];
      slot = tasks[pool[rng() % pool.size()]];
      tokens += slot.target.size();
    }
    zero_grads<float>(params);
    Graph g;
    const auto b = model.bind(g);
    Var loss = lm_loss_graph(g, model, b, std::span<const TrainingTask>(batch));
    const double value = g.value(loss)[0];
    if (!std::isfinite(value)) throw TrainingError("train_lm: non-finite loss", static_cast<long>(step));
    g.backward(loss);
    if (cfg.clip > 0) clip_grad_norm<float>(params, cfg.clip);
    const double cur = cfg.warmup > 0 ? lr * std::min(1.0, static_cast<double>(step) / cfg.warmup) : lr;
    opt.set_lr(cur);
    opt.step(params);
    curve.push_back({step, value, value * cfg.batch / tokens, cur});
  }
  return curve;
}

void write_curve_csv(const std::vector<LmLogEntry>& curve, const std::filesystem::path& file) {
  std::ofstream f(file);
  if (!f) throw IoError("cannot write " + file.string());
  f << "step,loss,token_nll,lr\n";
  for (const auto& e : curve) f << e.step << ',' << e.loss << ',' << e.token_nll << ',' << e.lr << '\n';
  if (!f) throw IoError("write failed for " + file.string());
}

void save_model(const SeqModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& c = model.config();
  NamedTensors t;
  for (const auto& p : model.parameter_storage()) t[p.name] = p.value;
  save_checkpoint(dir / "lm.pstc", t);
  nlohmann::json j;
  j["format_version"] = kModelFormat;
  j["vocab_size"] = c.vocab_size;
  j["d_model"] = c.d_model;
  j["heads"] = c.heads;
  j["d_ff"] = c.d_ff;
  j["encoder_layers"] = c.encoder_layers;
  j["decoder_layers"] = c.decoder_layers;
  j["max_input_len"] = c.max_input_len;
  j["max_target_len"] = c.max_target_len;
  j["pad_id"] = c.pad_id;
  j["bos_id"] = c.bos_id;
  j["eos_id"] = c.eos_id;
  j["seed"] = c.seed;
  j["checkpoint"] = "lm.pstc";
  std::ofstream f(dir / "lm.json");
  f << j.dump(2) << "\n";
  if (!f) throw IoError("cannot write " + (dir / "lm.json").string());
}

SeqModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "lm.json");
  if (!in) throw IoError("cannot open model config " + (dir / "lm.json").string());
  try {
    nlohmann::json j;
    in >> j;
    if (j.value("format_version", 0) != kModelFormat) throw IoError("model config: unsupported version");
    SeqModelConfig c;
    c.vocab_size = j.at("vocab_size");
    c.d_model = j.at("d_model");
    c.heads = j.at("heads");
    c.d_ff = j.at("d_ff");
    c.encoder_layers = j.at("encoder_layers");
    c.decoder_layers = j.at("decoder_layers");
    c.max_input_len = j.at("max_input_len");
    c.max_target_len = j.at("max_target_len");
    c.pad_id = j.at("pad_id");
    c.bos_id = j.at("bos_id");
    c.eos_id = j.at("eos_id");
    c.seed = j.at("seed");
    SeqModel m(c);
    load_into(load_checkpoint(dir / j.at("checkpoint").get<std::string>()), m.parameters());
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("model config " + (dir / "lm.json").string() + ": " + e.what());
  }
}

std::vector<int> generate_tokens(SeqModel& model, std::span<const int> input, const DecodeConfig& cfg) {
  const auto& c = model.config();
  Graph enc;
  const auto eb = model.bind(enc);
  std::vector<std::uint8_t> mask(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) mask[i] = input[i] != c.pad_id;
  const Tensor memory = enc.value(model.encode_graph(enc, eb, input, mask));

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> prefix{c.bos_id};
  std::vector<int> out;
  const std::size_t cap = std::min(cfg.max_len, c.max_target_len - 1);
  while (out.size() < cap) {
    Graph g;
    const auto b = model.bind(g);
    Var logits = model.decode_graph(g, b, g.constant(memory), mask, prefix);
    const auto& lv = g.value(logits);
    const std::size_t V = lv.cols(), row = (lv.rows() - 1) * V;
    int next;
    if (cfg.temperature <= 0.0) {
      next = 0;
      for (std::size_t j = 1; j < V; ++j)
        if (lv[row + j] > lv[row + next]) next = static_cast<int>(j);
    } else {
      std::vector<int> idx(V);
      std::iota(idx.begin(), idx.end(), 0);
      const std::size_t k = cfg.top_k == 0 ? V : std::min(cfg.top_k, V);
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                        [&](int a, int b2) { return lv[row + a] > lv[row + b2] || (lv[row + a] == lv[row + b2] && a < b2); });
      std::vector<double> w(k);
      const double mx = lv[row + idx[0]];
      for (std::size_t j = 0; j < k; ++j) w[j] = std::exp((lv[row + idx[j]] - mx) / cfg.temperature);
      std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
      next = idx[dist(rng)];
    }
    if (next == c.eos_id) break;
    out.push_back(next);
    prefix.push_back(next);
  }
  return out;
}

}  // namespace partstyle
