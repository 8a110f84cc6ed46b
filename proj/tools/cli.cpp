#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include "partstyle/corpus.hpp"
#include "partstyle/hash.hpp"
#include "partstyle/lm.hpp"
#include "partstyle/metrics.hpp"
#include "partstyle/motion_io.hpp"
#include "partstyle/pipeline.hpp"

#include "CLI11.hpp"
#include "json.hpp"
#include "toml.hpp"

namespace partstyle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFailure = 1;

constexpr std::array<const char*, layout::kNumJoints> kJointNames = {
    "pelvis",     "left_hip",       "right_hip",      "spine1",     "left_knee",  "right_knee",
    "spine2",     "left_ankle",     "right_ankle",    "spine3",     "left_foot",  "right_foot",
    "neck",       "left_collar",    "right_collar",   "head",       "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",    "left_wrist",     "right_wrist"};

struct RunConfig {
  fs::path workdir = "run";
  std::uint64_t seed = 1;

  std::size_t corpus_count = 96;
  SynthConfig corpus;

  std::size_t vq_steps = 2000, vq_batch = 8, vq_window = 32, codebook_size = 512;
  double vq_lr = 2e-3;

  std::size_t merges = 2000;

  SeqModelConfig model;
  LmTrainConfig train;

  DecodeConfig decode;
  std::string reason_backend = "local", compose_backend = "rule";
  LlmEndpointConfig llm;

  EvalConfig eval;
};

// One TOML key bound to a config field; the same table drives loading and
// the resolved-config dump in provenance files.
struct Field {
  std::function<void(const toml::node&)> set;
  std::function<json()> get;
};

template <typename T>
Field bind(T& ref, const std::string& key) {
  Field f;
  f.set = [&ref, key](const toml::node& n) {
    std::optional<T> v;
    if constexpr (std::is_same_v<T, std::string>) {
      v = n.value<std::string>();
    } else if constexpr (std::is_same_v<T, fs::path>) {
      if (auto s = n.value<std::string>()) v = fs::path(*s);
    } else if constexpr (std::is_floating_point_v<T>) {
      v = n.value<double>();
    } else if constexpr (std::is_integral_v<T>) {
      auto i = n.value<std::int64_t>();
      if (i && (*i >= 0 || std::is_signed_v<T>)) v = static_cast<T>(*i);
    }
    if (!v) throw ConfigError("config: bad value for " + key);
    ref = *v;
  };
  f.get = [&ref] {
    if constexpr (std::is_same_v<T, fs::path>) return json(ref.string());
    else return json(ref);
  };
  return f;
}

std::map<std::string, Field> fields(RunConfig& c) {
  std::map<std::string, Field> m;
  auto add = [&](const std::string& key, auto& ref) { m.emplace(key, bind(ref, key)); };
  add("run.workdir", c.workdir);
  add("run.seed", c.seed);
  add("corpus.count", c.corpus_count);
  add("corpus.min_frames", c.corpus.min_frames);
  add("corpus.max_frames", c.corpus.max_frames);
  add("vq.steps", c.vq_steps);
  add("vq.batch", c.vq_batch);
  add("vq.window", c.vq_window);
  add("vq.lr", c.vq_lr);
  add("vq.codebook_size", c.codebook_size);
  add("vocab.merges", c.merges);
  add("lm.d_model", c.model.d_model);
  add("lm.heads", c.model.heads);
  add("lm.d_ff", c.model.d_ff);
  add("lm.encoder_layers", c.model.encoder_layers);
  add("lm.decoder_layers", c.model.decoder_layers);
  add("lm.max_input_len", c.model.max_input_len);
  add("lm.steps", c.train.steps);
  add("lm.batch", c.train.batch);
  add("lm.lr", c.train.lr);
  add("lm.warmup", c.train.warmup);
  add("lm.clip", c.train.clip);
  add("decode.temperature", c.decode.temperature);
  add("decode.top_k", c.decode.top_k);
  add("decode.max_len", c.decode.max_len);
  add("pipeline.reason_backend", c.reason_backend);
  add("pipeline.compose_backend", c.compose_backend);
  add("llm.base_url", c.llm.base_url);
  add("llm.model", c.llm.model);
  add("llm.api_key_env", c.llm.api_key_env);
  add("llm.timeout_s", c.llm.timeout_s);
  add("llm.max_retries", c.llm.max_retries);
  add("llm.temperature", c.llm.temperature);
  add("llm.max_in_flight", c.llm.max_in_flight);
  add("eval.dim", c.eval.dim);
  add("eval.hidden", c.eval.hidden);
  add("eval.steps", c.eval.steps);
  add("eval.batch", c.eval.batch);
  add("eval.lr", c.eval.lr);
  add("eval.temperature", c.eval.temperature);
  add("eval.heldout", c.eval.heldout);
  return m;
}

void load_toml(RunConfig& c, const fs::path& file) {
  toml::table t;
  try {
    t = toml::parse_file(file.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError("config " + file.string() + ": " + std::string(e.description()));
  }
  auto f = fields(c);
  for (const auto& [section, node] : t) {
    const auto* tab = node.as_table();
    if (!tab) throw ConfigError("config: top-level key '" + std::string(section.str()) + "' must be a table");
    for (const auto& [key, value] : *tab) {
      const std::string name = std::string(section.str()) + "." + std::string(key.str());
      auto it = f.find(name);
      if (it == f.end()) throw ConfigError("config: unknown key " + name);
      it->second.set(value);
    }
  }
}

json resolved(RunConfig& c) {
  json j;
  for (auto& [key, f] : fields(c)) {
    const auto dot = key.find('.');
    j[key.substr(0, dot)][key.substr(dot + 1)] = f.get();
  }
  return j;
}

void write_json(const fs::path& file, const json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream f(file);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("cannot write " + file.string());
}

json read_json(const fs::path& file) {
  std::ifstream f(file);
  if (!f) throw IoError("cannot open " + file.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  }
}

// Workspace layout under the work directory.
struct Paths {
  fs::path root;
  fs::path dataset() const { return root / "dataset"; }
  fs::path vq() const { return root / "vq"; }
  fs::path vocab() const { return root / "vocab.json"; }
  fs::path lm() const { return root / "lm"; }
  fs::path evaluator() const { return root / "evaluator"; }
  fs::path out() const { return root / "out"; }
  fs::path provenance(const std::string& cmd) const { return root / "provenance" / (cmd + ".json"); }
};

struct Context {
  RunConfig cfg;
  std::vector<std::string> argv;
  std::ostream& out;
  Paths paths() const { return {cfg.workdir}; }

  void provenance(const std::string& cmd, json extra) {
    json p;
    p["command"] = cmd;
    p["argv"] = argv;
    p["seed"] = cfg.seed;
    p["config"] = resolved(cfg);
    p["template_hash"] = hex64(template_asset_hash());
    for (auto& [k, v] : extra.items()) p[k] = v;
    write_json(paths().provenance(cmd), p);
  }
};

struct Models {
  Vocabulary vocab;
  VqSet vq;
  SeqModel lm;
};

Models load_models(const Paths& p) {
  Models m;
  m.vocab = Vocabulary::load(p.vocab());
  m.vq = VqSet::load(p.vq());
  m.lm = load_model(p.lm());
  return m;
}

PipelineConfig pipeline_config(const RunConfig& c) {
  PipelineConfig pc;
  pc.reason_backend = backend_from_name(c.reason_backend);
  pc.compose_backend = backend_from_name(c.compose_backend);
  pc.decode = c.decode;
  pc.decode.seed = c.seed;
  pc.min_frames = c.corpus.min_frames;
  pc.max_frames = c.corpus.max_frames;
  return pc;
}

std::unique_ptr<LlmClient> maybe_client(const RunConfig& c) {
  if (c.reason_backend == "external" || c.compose_backend == "external")
    return std::make_unique<LlmClient>(c.llm);
  return nullptr;
}

std::string motion_hash(const MotionSequence& m) {
  const auto d = m.features().data();
  return hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()), d.size_bytes())));
}

std::vector<fs::path> motion_files(const fs::path& input) {
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::recursive_directory_iterator(input))
      if (e.is_regular_file() && e.path().extension() == ".mbin") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else if (fs::exists(input)) {
    files.push_back(input);
  }
  if (files.empty()) throw IoError("no .mbin motions under " + input.string());
  return files;
}

// ---- subcommands ----

void gen_corpus(Context& ctx) {
  const auto samples = generate_corpus(ctx.cfg.corpus_count, ctx.cfg.seed, ctx.cfg.corpus);
  save_dataset(samples, ctx.paths().dataset());
  ctx.out << "wrote " << samples.size() << " samples to " << ctx.paths().dataset().string() << "\n";
  ctx.provenance("gen-corpus", {{"outputs", {ctx.paths().dataset().string()}}, {"dataset_hash", dataset_hash(samples)}});
}

void train_vq_cmd(Context& ctx) {
  const auto samples = load_dataset(ctx.paths().dataset());
  const auto& c = ctx.cfg;
  auto cfg_for = [&](BodyPart p) {
    auto v = default_vq_config(p);
    v.steps = c.vq_steps;
    v.batch = c.vq_batch;
    v.window = c.vq_window;
    v.lr = c.vq_lr;
    v.codebook_size = c.codebook_size;
    v.seed = c.seed + part_index(p);
    return v;
  };
  const auto res = train_vq_set(samples, cfg_for);
  res.set.save(ctx.paths().vq());
  json mse;
  for (auto p : kAllParts) {
    std::vector<Tensor> streams;
    for (const auto& s : samples) streams.push_back(partition(s.motion)[p]);
    mse[std::string(part_slug(p))] = reconstruction_mse(res.set[p], streams);
    std::ofstream log(ctx.paths().vq() / ("log_" + std::string(part_slug(p)) + ".csv"));
    log << "step,total,recon,codebook,commit,codes_used\n";
    for (const auto& e : res.logs[part_index(p)])
      log << e.step << "," << e.total << "," << e.recon << "," << e.codebook << "," << e.commit << "," << e.codes_used
          << "\n";
  }
  ctx.out << "reconstruction mse " << mse.dump() << "\n";
  ctx.provenance("train-vq", {{"dataset_hash", dataset_hash(samples)}, {"reconstruction_mse", mse},
                              {"outputs", {ctx.paths().vq().string()}}});
}

void train_lm_cmd(Context& ctx, const std::string& stage_name_arg, bool fresh) {
  const auto stage = stage_from_name(stage_name_arg);
  const auto p = ctx.paths();
  const auto samples = load_dataset(p.dataset());
  const auto vq = VqSet::load(p.vq());
  Vocabulary vocab;
  if (fs::exists(p.vocab())) {
    vocab = Vocabulary::load(p.vocab());
  } else {
    VocabConfig vc;
    vc.codebook_size = ctx.cfg.codebook_size;
    vc.merges = ctx.cfg.merges;
    vocab = build_pipeline_vocab(samples, vc);
    vocab.save(p.vocab());
  }
  std::vector<TrainingTask> tasks;
  for (const auto& s : samples) {
    const auto tokens = tokenize(vq, s.motion);
    auto t = stage == TrainStage::Pretrain ? pretrain_tasks(vocab, s, tokens) : posttrain_tasks(vocab, s, tokens);
    tasks.insert(tasks.end(), t.begin(), t.end());
  }
  tasks = unique_tasks(std::move(tasks));

  SeqModel model;
  const bool resume = !fresh && fs::exists(p.lm() / "lm.json");
  if (resume) {
    model = load_model(p.lm());
    if (model.config().vocab_size != vocab.size()) throw ConfigError("train-lm: saved model does not match the vocabulary");
  } else {
    auto mc = ctx.cfg.model;
    mc.vocab_size = vocab.size();
    mc.seed = ctx.cfg.seed;
    model = SeqModel(mc);
  }
  auto tc = ctx.cfg.train;
  tc.seed = ctx.cfg.seed;
  const auto curve = train_lm(model, tasks, stage, tc);
  save_model(model, p.lm());
  const auto csv = p.lm() / ("curve_" + std::string(stage_name(stage)) + ".csv");
  write_curve_csv(curve, csv);
  const auto nll = evaluate_nll(model, tasks);
  ctx.out << stage_name(stage) << ": " << tasks.size() << " tasks, final loss "
          << (curve.empty() ? 0.0 : curve.back().loss) << ", token nll " << nll.per_token() << "\n";
  ctx.provenance("train-lm-" + std::string(stage_name(stage)),
                 {{"dataset_hash", dataset_hash(samples)},
                  {"tasks", tasks.size()},
                  {"resumed", resume},
                  {"token_nll", nll.per_token()},
                  {"outputs", {p.lm().string(), csv.string()}}});
}

StyleOrContentInput make_input(const std::string& text, const std::string& motion) {
  if (!motion.empty()) return StyleOrContentInput::from_motion(read_mbin(motion));
  return StyleOrContentInput::from_text(text);
}

void reason_cmd(Context& ctx, const std::string& text, const std::string& motion) {
  auto m = load_models(ctx.paths());
  auto client = maybe_client(ctx.cfg);
  Pipeline pipe(m.vocab, m.lm, m.vq, pipeline_config(ctx.cfg), client.get());
  const auto parts = pipe.reason(make_input(text, motion), backend_from_name(ctx.cfg.reason_backend));
  const json j = part_texts_json(parts);
  const auto file = ctx.paths().out() / "reason.json";
  write_json(file, j);
  ctx.out << j.dump(2) << "\n";
  ctx.provenance("reason", {{"input", motion.empty() ? json{{"text", text}} : json{{"motion", motion}}},
                            {"reply", pipe.records().back().reply},
                            {"outputs", {file.string()}}});
}

void compose_cmd(Context& ctx, const std::string& content, const std::string& style) {
  const auto c = part_texts_from_json(read_json(content)), s = part_texts_from_json(read_json(style));
  auto m = load_models(ctx.paths());
  auto client = maybe_client(ctx.cfg);
  Pipeline pipe(m.vocab, m.lm, m.vq, pipeline_config(ctx.cfg), client.get());
  const auto u = pipe.compose(c, s, backend_from_name(ctx.cfg.compose_backend));
  const json j = part_texts_json(u);
  const auto file = ctx.paths().out() / "compose.json";
  write_json(file, j);
  ctx.out << j.dump(2) << "\n";
  ctx.provenance("compose", {{"content", content}, {"style", style}, {"outputs", {file.string()}}});
}

void generate_cmd(Context& ctx, const std::string& parts_file, fs::path out_file) {
  const auto parts = part_texts_from_json(read_json(parts_file));
  auto m = load_models(ctx.paths());
  Pipeline pipe(m.vocab, m.lm, m.vq, pipeline_config(ctx.cfg));
  const auto tokens = pipe.generate_tokens(parts);
  const auto motion = detokenize(m.vq, tokens);
  if (!validate_layout(motion).empty()) throw LayoutError("generated motion failed layout validation");
  if (out_file.empty()) out_file = ctx.paths().out() / "generated.mbin";
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_mbin(out_file, motion);
  ctx.out << "wrote " << motion.num_frames() << " frames to " << out_file.string() << "\n";
  ctx.provenance("generate", {{"parts", part_texts_json(parts)},
                              {"tokens", tokens_json(tokens)},
                              {"motion_fnv1a64", motion_hash(motion)},
                              {"outputs", {out_file.string()}}});
}

void stylize_cmd(Context& ctx, const std::string& ct, const std::string& cm, const std::string& st,
                 const std::string& sm, fs::path out_file) {
  if (ct.empty() == cm.empty()) throw CLI::ValidationError("--content", "give exactly one of --content, --content-motion");
  if (st.empty() == sm.empty()) throw CLI::ValidationError("--style", "give exactly one of --style, --style-motion");
  auto m = load_models(ctx.paths());
  auto client = maybe_client(ctx.cfg);
  Pipeline pipe(m.vocab, m.lm, m.vq, pipeline_config(ctx.cfg), client.get());
  auto res = pipe.stylize(make_input(ct, cm), make_input(st, sm));
  if (out_file.empty()) out_file = ctx.paths().out() / "stylized.mbin";
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_mbin(out_file, res.motion);
  auto prov_file = out_file;
  prov_file.replace_extension(".provenance.json");
  res.provenance["motion_fnv1a64"] = motion_hash(res.motion);
  res.provenance["outputs"] = {out_file.string()};
  write_json(prov_file, res.provenance);
  ctx.out << "wrote " << res.motion.num_frames() << " frames to " << out_file.string() << "\n"
          << "unified: " << part_texts_json(res.unified).dump() << "\n";
  ctx.provenance("stylize", {{"stylize", res.provenance}, {"outputs", {out_file.string(), prov_file.string()}}});
}

void eval_cmd(Context& ctx, const std::string& metric, const std::string& input, const std::string& target) {
  const auto p = ctx.paths();
  MetricReport rep;
  rep.metric = metric;
  rep.seed = ctx.cfg.seed;
  json extra;
  auto dataset_input = [&] { return load_dataset(input.empty() ? p.dataset() : fs::path(input)); };
  if (metric == "fs-ratio") {
    if (input.empty()) throw CLI::ValidationError("--input", "fs-ratio needs --input");
    FsConfig fc;
    std::vector<TripletSample> pseudo;
    double sum = 0;
    json per = json::object();
    for (const auto& f : motion_files(input)) {
      const auto m = read_mbin(f);
      const double r = fs_ratio(m, fc);
      per[f.filename().string()] = r;
      sum += r;
      pseudo.push_back({f.filename().string(), m, "", {}, {}, {}, {}, 0});
    }
    rep.value = sum / static_cast<double>(per.size());
    rep.config = {{"height", fc.height}, {"speed", fc.speed}, {"fps", fc.fps}};
    rep.dataset_hash = dataset_hash(pseudo);
    extra["per_file"] = per;
  } else if (metric == "train") {
    auto ec = ctx.cfg.eval;
    ec.seed = ctx.cfg.seed;
    const auto samples = dataset_input();
    auto res = train_eval_embedders(samples, ec);
    res.embedders.save(p.evaluator());
    rep.metric = "evaluator_heldout_accuracy";
    rep.value = res.report.heldout_accuracy;
    rep.config = resolved(ctx.cfg)["eval"];
    rep.dataset_hash = dataset_hash(samples);
    extra["train_accuracy"] = res.report.train_accuracy;
    extra["heldout_ids"] = res.report.heldout_ids;
  } else {
    const auto emb = EvalEmbedders::load(p.evaluator());
    if (metric == "sra") {
      std::vector<MotionSequence> motions;
      std::vector<std::string> labels;
      std::vector<TripletSample> pseudo;
      if (!input.empty() && !fs::exists(fs::path(input) / "index.json")) {
        if (target.empty()) throw CLI::ValidationError("--target-style", "sra on motion files needs --target-style");
        for (const auto& f : motion_files(input)) {
          motions.push_back(read_mbin(f));
          labels.push_back(target);
          pseudo.push_back({f.filename().string(), motions.back(), "", {}, {}, {}, {}, 0});
        }
      } else {
        pseudo = dataset_input();
        for (const auto& s : pseudo) {
          motions.push_back(s.motion);
          labels.push_back(target.empty() ? s.style_label.value_or("") : target);
        }
      }
      rep.value = sra(emb, motions, labels);
      rep.dataset_hash = dataset_hash(pseudo);
      rep.config = {{"target_style", target}};
    } else if (metric == "mm-dist" || metric == "r-precision") {
      const auto samples = dataset_input();
      std::vector<std::string> texts;
      std::vector<MotionSequence> motions;
      for (const auto& s : samples) {
        texts.push_back(s.global_text);
        motions.push_back(s.motion);
      }
      if (metric == "mm-dist") {
        rep.value = mm_dist(emb, texts, motions);
        rep.config = json::object();
      } else {
        rep.value = r_precision(emb, texts, motions, 3, 32, ctx.cfg.seed);
        rep.config = {{"k", 3}, {"pool", 32}};
      }
      rep.dataset_hash = dataset_hash(samples);
    } else {
      throw CLI::ValidationError("--metric", "unknown metric '" + metric + "'");
    }
  }
  json j = rep.to_json();
  for (auto& [k, v] : extra.items()) j[k] = v;
  const auto file = p.out() / ("eval_" + rep.metric + ".json");
  write_json(file, j);
  ctx.out << j.dump(2) << "\n";
  ctx.provenance("eval-" + metric, {{"report", j}, {"outputs", {file.string()}}});
}

void export_anim(Context& ctx, const std::string& input, fs::path out_file) {
  const auto m = read_mbin(input);
  const auto pos = recover_global_positions(m);
  json frames = json::array();
  for (const auto& f : pos) {
    json joints = json::array();
    for (const auto& j : f) joints.push_back({j.x(), j.y(), j.z()});
    frames.push_back(std::move(joints));
  }
  json j{{"format", "partstyle-anim"}, {"version", 1}, {"fps", layout::kFps},
         {"joints", kJointNames},     {"frames", std::move(frames)}};
  if (out_file.empty()) out_file = fs::path(input).replace_extension(".anim.json");
  write_json(out_file, j);
  ctx.out << "wrote " << pos.size() << " frames to " << out_file.string() << "\n";
  ctx.provenance("export-anim", {{"input", input}, {"motion_fnv1a64", motion_hash(m)}, {"outputs", {out_file.string()}}});
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{{}, args, out};
  RunConfig& c = ctx.cfg;

  CLI::App app{"Body-part stylized motion toolkit", "partstyle"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("--config", config_file, "TOML configuration file");
  app.add_option("--workdir", c.workdir, "Workspace directory");
  app.add_option("--seed", c.seed, "Seed for every stochastic step");

  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic triplet corpus");
  gen->add_option("--count", c.corpus_count);
  gen->add_option("--min-frames", c.corpus.min_frames);
  gen->add_option("--max-frames", c.corpus.max_frames);

  auto* tvq = app.add_subcommand("train-vq", "Train the six part tokenizers");
  tvq->add_option("--steps", c.vq_steps);
  tvq->add_option("--batch", c.vq_batch);
  tvq->add_option("--window", c.vq_window);
  tvq->add_option("--lr", c.vq_lr);
  tvq->add_option("--codebook-size", c.codebook_size);

  std::string stage;
  bool fresh = false;
  auto* tlm = app.add_subcommand("train-lm", "Train the sequence model");
  tlm->add_option("--stage", stage)->required()->check(CLI::IsMember({"pretrain", "posttrain"}));
  tlm->add_option("--steps", c.train.steps);
  tlm->add_option("--batch", c.train.batch);
  tlm->add_option("--lr", c.train.lr);
  tlm->add_option("--warmup", c.train.warmup);
  tlm->add_option("--d-model", c.model.d_model);
  tlm->add_option("--heads", c.model.heads);
  tlm->add_option("--d-ff", c.model.d_ff);
  tlm->add_option("--encoder-layers", c.model.encoder_layers);
  tlm->add_option("--decoder-layers", c.model.decoder_layers);
  tlm->add_option("--merges", c.merges);
  tlm->add_flag("--fresh", fresh, "Start from a new model even if one is saved");

  auto add_backends = [&](CLI::App* sub, bool composing) {
    if (composing) {
      sub->add_option("--backend", c.compose_backend)->check(CLI::IsMember({"local", "external", "rule"}));
    } else {
      sub->add_option("--backend", c.reason_backend)->check(CLI::IsMember({"local", "external"}));
      sub->add_option("--compose-backend", c.compose_backend)->check(CLI::IsMember({"local", "external", "rule"}));
    }
    sub->add_option("--temperature", c.decode.temperature);
    sub->add_option("--top-k", c.decode.top_k);
    sub->add_option("--llm-url", c.llm.base_url);
    sub->add_option("--llm-model", c.llm.model);
  };

  std::string text, motion;
  auto* rsn = app.add_subcommand("reason", "Body-part texts for a global text or a motion");
  auto* rsn_text = rsn->add_option("--text", text);
  rsn->add_option("--motion", motion, "MBIN motion file")->excludes(rsn_text);
  add_backends(rsn, false);

  std::string content_file, style_file;
  auto* cmp = app.add_subcommand("compose", "Unify content and style part texts");
  cmp->add_option("--content", content_file, "JSON part texts")->required();
  cmp->add_option("--style", style_file, "JSON part texts")->required();
  add_backends(cmp, true);

  std::string parts_file, out_file;
  auto* gm = app.add_subcommand("generate", "Motion for a set of part texts");
  gm->add_option("--parts", parts_file, "JSON part texts")->required();
  gm->add_option("--out", out_file);
  gm->add_option("--temperature", c.decode.temperature);
  gm->add_option("--top-k", c.decode.top_k);

  std::string content_text, content_motion, style_text, style_motion;
  auto* sty = app.add_subcommand("stylize", "Reason, compose and generate in one go");
  sty->add_option("--content", content_text);
  sty->add_option("--content-motion", content_motion);
  sty->add_option("--style", style_text);
  sty->add_option("--style-motion", style_motion);
  sty->add_option("--out", out_file);
  add_backends(sty, false);

  std::string metric, input, target;
  auto* ev = app.add_subcommand("eval", "Metrics and evaluator training");
  ev->add_option("--metric", metric)
      ->required()
      ->check(CLI::IsMember({"fs-ratio", "sra", "mm-dist", "r-precision", "train"}));
  ev->add_option("--input", input, "Motion file, directory of .mbin files, or dataset");
  ev->add_option("--target-style", target);
  ev->add_option("--steps", c.eval.steps);

  auto* exp = app.add_subcommand("export-anim", "Per-frame joint positions as JSON keyframes");
  exp->add_option("--input", input)->required();
  exp->add_option("--out", out_file);

  // defaults < TOML < flags: the file is read before the flags are parsed.
  std::vector<std::string> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
  for (std::size_t i = 0; i < rest.size(); ++i) {
    if (rest[i] == "--config" && i + 1 < rest.size()) config_file = rest[i + 1];
    else if (rest[i].rfind("--config=", 0) == 0) config_file = rest[i].substr(9);
  }
  try {
    if (!config_file.empty()) load_toml(c, config_file);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }

  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (std::size_t i = 1; i < args.size(); ++i) {
      const auto& a = args[i];
      if (a == "--config" || a == "--workdir" || a == "--seed") {
        ++i;
        continue;
      }
      if (a.empty() || a[0] == '-') continue;
      if (!app.get_subcommand_no_throw(a)) msg = "unknown subcommand '" + a + "'";
      break;
    }
    err << "error: " << msg << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*gen) gen_corpus(ctx);
    else if (*tvq) train_vq_cmd(ctx);
    else if (*tlm) train_lm_cmd(ctx, stage, fresh);
    else if (*rsn) {
      if (text.empty() && motion.empty()) throw CLI::RequiredError("--text or --motion");
      reason_cmd(ctx, text, motion);
    } else if (*cmp) compose_cmd(ctx, content_file, style_file);
    else if (*gm) generate_cmd(ctx, parts_file, out_file);
    else if (*sty) stylize_cmd(ctx, content_text, content_motion, style_text, style_motion, out_file);
    else if (*ev) eval_cmd(ctx, metric, input, target);
    else if (*exp) export_anim(ctx, input, out_file);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}

}  // namespace partstyle::cli
