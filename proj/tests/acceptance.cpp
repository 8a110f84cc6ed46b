// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>

#include "partstyle/corpus.hpp"
#include "partstyle/metrics.hpp"
#include "partstyle/pipeline.hpp"
#include "support/gradcheck.hpp"

#include "httplib.h"
#include "json.hpp"

using namespace partstyle;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- shared fixtures ----

const std::vector<TripletSample>& vq_corpus() {
  static const auto c = generate_corpus(64, 7, {40, 64});
  return c;
}

struct VqFixture {
  VqSet set;
  double seconds = 0;
};

const VqFixture& vq_fixture() {
  static const VqFixture f = [] {
    VqFixture x;
    const auto t0 = Clock::now();
    x.set = train_vq_set(vq_corpus()).set;
    x.seconds = seconds_since(t0);
    return x;
  }();
  return f;
}

const Vocabulary& vocab() {
  static const Vocabulary v = build_pipeline_vocab(vq_corpus());
  return v;
}

// One clip per (content, style) pair for three contents and every style.
const std::vector<TripletSample>& memorized() {
  static const auto m = [] {
    std::vector<TripletSample> out;
    for (const char* c : {"walk", "throw", "jump"})
      for (const auto& st : style_specs())
        for (const auto& s : vq_corpus())
          if (s.content_label == c && s.style_label == st.id) {
            out.push_back(s);
            break;
          }
    return out;
  }();
  return m;
}

struct LmFixture {
  std::vector<TrainingTask> tasks;
  SeqModel model;
  std::vector<LmLogEntry> curve;
  double seconds = 0;
};

LmFixture& lm_fixture() {
  static LmFixture f = [] {
    LmFixture x;
    const auto& vq = vq_fixture().set;
    PosttrainOptions o;
    o.reason_global = false;
    o.reason_motion = false;
    for (const auto& s : memorized()) {
      auto t = posttrain_tasks(vocab(), s, tokenize(vq, s.motion), o);
      x.tasks.insert(x.tasks.end(), t.begin(), t.end());
    }
    x.tasks = unique_tasks(std::move(x.tasks));
    // Top up with motion-to-text reasoning until 32 tasks.
    PosttrainOptions motion_only{false, true, false, false, false};
    for (std::size_t i = 0; x.tasks.size() < 32 && i < memorized().size(); ++i) {
      const auto& s = memorized()[i];
      auto t = posttrain_tasks(vocab(), s, tokenize(vq, s.motion), motion_only);
      x.tasks.insert(x.tasks.end(), t.begin(), t.end());
    }
    SeqModelConfig mc;
    mc.vocab_size = vocab().size();
    x.model = SeqModel(mc);
    LmTrainConfig tc;
    tc.steps = 3000;
    tc.batch = 8;
    tc.lr = 1e-3;
    tc.warmup = 100;
    const auto t0 = Clock::now();
    x.curve = train_lm(x.model, x.tasks, TrainStage::Posttrain, tc);
    x.seconds = seconds_since(t0);
    return x;
  }();
  return f;
}

struct EvalFixture {
  std::vector<TripletSample> corpus;
  EvalTrainResult result;
};

const EvalFixture& eval_fixture() {
  static const EvalFixture f = [] {
    EvalFixture x;
    x.corpus = generate_corpus(96, 5);
    x.result = train_eval_embedders(x.corpus);
    return x;
  }();
  return f;
}

struct StylizeRuns {
  std::vector<StylizeResult> first, second;
  double worst_seconds = 0;
};

const StylizeRuns& stylize_runs() {
  static const StylizeRuns r = [] {
    StylizeRuns x;
    auto& lm = lm_fixture();
    PipelineConfig cfg;
    cfg.compose_backend = Backend::Local;
    Pipeline pipe(vocab(), lm.model, vq_fixture().set, cfg);
    for (auto* out : {&x.first, &x.second})
      for (const auto& s : memorized()) {
        const auto& c = *s.composition;
        const auto t0 = Clock::now();
        try {
          out->push_back(pipe.stylize(StyleOrContentInput::from_text(c.content_text),
                                      StyleOrContentInput::from_text(c.style_text)));
        } catch (const std::exception& e) {
          std::printf("  stylize %s failed: %s\n", s.id.c_str(), e.what());
          out->push_back({});
        }
        x.worst_seconds = std::max(x.worst_seconds, seconds_since(t0));
      }
    return x;
  }();
  return r;
}

// ---- criteria ----

Outcome c1_autodiff() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string where;
  std::size_t n = 0;
  for (unsigned seed : {11u, 12u, 13u})
    for (const auto& c : testing::registered_op_cases(seed)) {
      const auto r = testing::grad_check(c.build, c.inputs, c.differentiable);
      ++n;
      if (r.max_rel_error > worst) {
        worst = r.max_rel_error;
        where = c.name + " " + r.worst;
      }
    }
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && secs < 10,
          fmt("%zu op cases, worst relative error %.2e (%s), %.1f s", n, worst, where.c_str(), secs)};
}

Outcome c2_partition() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::normal_distribution<float> nd;
  std::size_t bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng() % 64;
    Tensor f({n, layout::kFeatureDim});
    for (auto& v : f.vec()) v = nd(rng);
    const MotionSequence m(std::move(f));
    bad += !(merge(partition(m)) == m);
  }
  const std::array<BodyPart, kNumParts> order = {BodyPart::LeftLeg, BodyPart::RightLeg, BodyPart::LeftArm,
                                                 BodyPart::RightArm, BodyPart::Backbone, BodyPart::Root};
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (auto p : order) {
    widths.push_back(part_width(p));
    total += part_width(p);
  }
  const bool widths_ok = widths == std::vector<std::size_t>{50, 50, 48, 48, 60, 7} && total == 263;
  const double secs = seconds_since(t0);
  return {bad == 0 && widths_ok && secs < 5,
          fmt("1000 random motions, %zu mismatches; widths LL %zu, RL %zu, LA %zu, RA %zu, BB %zu, root %zu, sum %zu; %.2f s", bad, widths[0],
              widths[1], widths[2], widths[3], widths[4], widths[5], total, secs)};
}

Outcome c3_quantize() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  std::normal_distribution<float> nd;
  std::size_t mismatches = 0, ties = 0;
  for (int draw = 0; draw < 10000; ++draw) {
    const std::size_t k = 2 + rng() % 30, d = 1 + rng() % 8, t = 1 + rng() % 4;
    Tensor cb({k, d}), z({t, d});
    for (auto& v : cb.vec()) v = nd(rng);
    for (auto& v : z.vec()) v = nd(rng);
    if (draw % 4 == 0) {
      // duplicate code rows and place a latent exactly on one of them
      const std::size_t a = rng() % k, b = rng() % k;
      for (std::size_t e = 0; e < d; ++e) cb.at(std::max(a, b), e) = cb.at(std::min(a, b), e);
      for (std::size_t e = 0; e < d; ++e) z.at(0, e) = cb.at(a, e);
      ties += a != b;
    }
    const auto q = quantize(cb, z);
    for (std::size_t r = 0; r < t; ++r) {
      int best = -1;
      double best_d = 0;
      for (std::size_t c = 0; c < k; ++c) {
        double dist = 0;
        for (std::size_t e = 0; e < d; ++e) {
          const double diff = static_cast<double>(z.at(r, e)) - cb.at(c, e);
          dist += diff * diff;
        }
        if (best < 0 || dist < best_d) {
          best = static_cast<int>(c);
          best_d = dist;
        }
      }
      mismatches += q.indices[r] != best;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10,
          fmt("10000 draws (%zu with duplicated codes), %zu disagreements with the exhaustive scan, %.2f s", ties,
              mismatches, secs)};
}

Outcome c4_vq() {
  const auto& f = vq_fixture();
  double worst = 0;
  std::string worst_part;
  bool lengths_ok = true;
  for (auto p : kAllParts) {
    std::vector<Tensor> streams;
    for (const auto& s : vq_corpus()) streams.push_back(partition(s.motion)[p]);
    const double mse = reconstruction_mse(f.set[p], streams);
    if (mse >= worst) {
      worst = mse;
      worst_part = std::string(part_slug(p));
    }
    for (const auto& s : streams)
      lengths_ok = lengths_ok && f.set[p].tokenize(s).size() == (s.rows() + 3) / 4;
  }
  return {worst < 0.01 && lengths_ok && f.seconds < 600 && default_vq_config(BodyPart::Root).steps == 2000,
          fmt("64 clips, 2000 steps per part; worst MSE %.5f (%s); token length ceil(N/4) %s; %.0f s", worst,
              worst_part.c_str(), lengths_ok ? "holds" : "violated", f.seconds)};
}

Outcome c5_vocab() {
  const auto t0 = Clock::now();
  const auto& v = vocab();
  std::size_t id_fail = 0;
  for (std::size_t id = 0; id < v.size(); ++id) {
    const int i = static_cast<int>(id);
    const auto back = v.id(v.token(i));
    const std::vector<int> one{i};
    id_fail += !(back && *back == i && v.encode(v.decode(one)) == one);
  }
  std::size_t motion_tokens = 0;
  for (std::size_t id = 0; id < v.size(); ++id) motion_tokens += v.token_class(static_cast<int>(id)) == TokenClass::Motion;

  std::mt19937_64 rng(5);
  std::vector<std::string> pool;
  for (const auto& s : vq_corpus()) {
    for (const auto& t : s.parts.text) pool.push_back(t);
    for (const auto& t : s.composition->style.text) pool.push_back(t);
  }
  std::size_t parse_fail = 0;
  for (int i = 0; i < 500; ++i) {
    PartTexts x;
    for (auto& t : x.text) t = pool[rng() % pool.size()];
    std::array<PartTokenSeq, kNumParts> m;
    const std::size_t len = 1 + rng() % 49;
    for (auto p : kAllParts) {
      m[part_index(p)].part = p;
      for (std::size_t j = 0; j < len; ++j) m[part_index(p)].codes.push_back(static_cast<int>(rng() % 512));
    }
    try {
      parse_fail += !(parse_text_answer(v, answer_ids(v, render_text_answer(x))) == x);
      const auto y = parse_motion_answer(v, answer_ids(v, render_motion_answer(v, m)));
      for (std::size_t k = 0; k < kNumParts; ++k) parse_fail += y[k].codes != m[k].codes;
    } catch (const std::exception&) {
      ++parse_fail;
    }
  }
  const double secs = seconds_since(t0);
  return {id_fail == 0 && motion_tokens == 3072 && parse_fail == 0 && secs < 10,
          fmt("%zu tokens, %zu identity failures; %zu motion tokens; 500 text + 500 motion answers, %zu parse "
              "failures; %.1f s",
              v.size(), id_fail, motion_tokens, parse_fail, secs)};
}

Outcome c6_lm() {
  auto& f = lm_fixture();
  std::set<TaskKind> kinds;
  for (const auto& t : f.tasks) kinds.insert(t.kind);
  const double nll = evaluate_nll(f.model, f.tasks).per_token();
  std::size_t exact = 0;
  for (const auto& t : f.tasks) {
    const auto out = generate_tokens(f.model, t.input);
    exact += std::equal(out.begin(), out.end(), t.target.begin(), t.target.end() - 1) &&
             out.size() + 1 == t.target.size();
  }
  const auto& mc = f.model.config();
  return {f.tasks.size() == 32 && mc.encoder_layers == 2 && mc.decoder_layers == 2 && nll < 0.1 && exact == 32 &&
              f.seconds < 900,
          fmt("%zu tasks over %zu task kinds, 2+2 layers, 3000 steps: per-token NLL %.4f, greedy exact %zu/32, "
              "%.0f s",
              f.tasks.size(), kinds.size(), nll, exact, f.seconds)};
}

Outcome c7_causality() {
  SeqModelConfig mc;
  mc.vocab_size = 60;
  mc.d_model = 32;
  mc.heads = 4;
  mc.d_ff = 64;
  mc.max_input_len = mc.max_target_len = 32;
  SeqModel64 m(mc);
  std::mt19937_64 rng(7);
  auto ids = [&](std::size_t n) {
    std::vector<int> v(n);
    for (auto& x : v) x = 3 + static_cast<int>(rng() % 57);
    return v;
  };
  std::size_t ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto in = ids(1 + rng() % 12);
    auto prefix = ids(2 + rng() % 12);
    prefix.insert(prefix.begin(), 1);
    const auto base = lm_forward(m, in, prefix);
    const std::size_t k = 1 + rng() % (prefix.size() - 1);
    auto changed = prefix;
    changed[k] = 3 + (changed[k] - 3 + 1 + static_cast<int>(rng() % 55)) % 57;
    const auto pert = lm_forward(m, in, changed);
    const std::size_t v = mc.vocab_size;
    bool before = true, after = false;
    for (std::size_t r = 0; r < prefix.size(); ++r)
      for (std::size_t c = 0; c < v; ++c) {
        const bool same = base[r * v + c] == pert[r * v + c];
        if (r < k) before = before && same;
        else if (r == k) after = after || !same;
      }
    ok += before && after;
  }
  return {ok == 100, fmt("%zu/100 perturbations leave earlier rows unchanged and move row k", ok)};
}

Outcome c8_compose() {
  std::size_t fails = 0, cases = 0;
  PartTexts c, s;
  for (auto p : kAllParts) {
    c[p] = "C_" + std::string(part_slug(p));
    s[p] = "S_" + std::string(part_slug(p));
  }
  for (int mask = 0; mask < 729; ++mask) {
    AffinityTable a;
    PartTexts want;
    int m = mask;
    for (auto p : kAllParts) {
      a[part_index(p)] = static_cast<Affinity>(m % 3);
      m /= 3;
      switch (a[part_index(p)]) {
        case Affinity::ContentWins: want[p] = c[p]; break;
        case Affinity::StyleWins: want[p] = s[p]; break;
        case Affinity::Blend: want[p] = c[p] + std::string(kBlendConnective) + s[p]; break;
      }
    }
    ++cases;
    fails += !(rule_compose(c, s, a) == want);
  }
  std::size_t idem = 0;
  for (const auto& spec : content_specs()) idem += rule_compose(spec.parts, spec.parts) == spec.parts;
  for (const auto& spec : style_specs()) idem += rule_compose(spec.parts, spec.parts) == spec.parts;
  const bool idem_ok = idem == content_specs().size() + style_specs().size();

  const auto& th = content_spec("throw");
  const auto& ov = style_spec("arms_overhead");
  const auto u = rule_compose(th.parts, ov.parts);
  const bool conflict = u[BodyPart::RightArm] == th.parts[BodyPart::RightArm] &&
                        u[BodyPart::LeftArm] == ov.parts[BodyPart::LeftArm];
  return {fails == 0 && idem_ok && conflict,
          fmt("%zu/%zu affinity tables exact; compose(x,x)==x on %zu sets; throw x arms overhead: right arm keeps "
              "\"%s\", left arm takes \"%s\"",
              cases - fails, cases, idem, u[BodyPart::RightArm].c_str(), u[BodyPart::LeftArm].c_str())};
}

Outcome c9_end_to_end() {
  const auto& runs = stylize_runs();
  const auto& vq = vq_fixture().set;
  std::size_t exact = 0, identical = 0, valid = 0;
  for (std::size_t i = 0; i < memorized().size(); ++i) {
    const auto want = tokenize(vq, memorized()[i].motion);
    const auto& a = runs.first[i];
    bool same = a.motion.num_frames() > 0;
    for (std::size_t k = 0; k < kNumParts; ++k) same = same && a.tokens[k].codes == want[k].codes;
    exact += same;
    identical += a.motion.num_frames() > 0 && a.motion == runs.second[i].motion;
    valid += a.motion.num_frames() > 0 && validate_layout(a.motion).empty();
  }
  const std::size_t n = memorized().size();
  return {exact == n && identical == n && valid == n && runs.worst_seconds < 30,
          fmt("%zu memorized pairs: tokens exact %zu, repeat bit-identical %zu, layout valid %zu; slowest run %.1f s",
              n, exact, identical, valid, runs.worst_seconds)};
}

Outcome c10_fs() {
  auto track = [](const std::vector<bool>& slide) {
    JointPositions pos(slide.size());
    double x = 0;
    for (std::size_t t = 0; t < slide.size(); ++t) {
      for (auto& j : pos[t]) j = Eigen::Vector3d(0, 1, 0);
      pos[t][layout::kLeftFoot] = Eigen::Vector3d(-0.1, 0.02, 0);
      pos[t][layout::kRightFoot] = Eigen::Vector3d(0.1 + x, 0.02, 0);
      if (slide[t]) x += 0.05;  // 1 m/s at 20 fps
    }
    return pos;
  };
  auto oracle = [](const JointPositions& pos, const FsConfig& cfg) {
    std::size_t n = 0;
    for (std::size_t t = 0; t < pos.size(); ++t) {
      const std::size_t a = t + 1 < pos.size() ? t : t - 1;
      bool skate = false;
      for (std::size_t j : {layout::kLeftFoot, layout::kRightFoot}) {
        const double dx = pos[a + 1][j].x() - pos[a][j].x(), dz = pos[a + 1][j].z() - pos[a][j].z();
        skate = skate || (pos[t][j].y() < cfg.height && std::hypot(dx, dz) * cfg.fps > cfg.speed);
      }
      n += skate;
    }
    return static_cast<double>(n) / pos.size();
  };
  const FsConfig cfg;
  const auto still = track(std::vector<bool>(10, false));
  const auto sliding = track(std::vector<bool>(10, true));
  std::vector<bool> mixed(10, false);
  mixed[1] = mixed[4] = mixed[6] = true;
  const auto mix = track(mixed);
  const double a = fs_ratio(still, cfg), b = fs_ratio(sliding, cfg), c = fs_ratio(mix, cfg);
  bool oracle_ok = a == oracle(still, cfg) && b == oracle(sliding, cfg) && c == oracle(mix, cfg);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 200; ++i) {
    std::vector<bool> s(5 + rng() % 40);
    for (auto&& x : s) x = rng() % 3 == 0;
    const auto p = track(s);
    oracle_ok = oracle_ok && fs_ratio(p, cfg) == oracle(p, cfg);
  }
  std::size_t invariant = 0, clips = 0;
  for (const auto& s : generate_corpus(24, 11)) {
    auto pos = recover_global_positions(s.motion);
    const double base = fs_ratio(pos, cfg);
    for (auto& f : pos)
      for (auto& j : f) j += Eigen::Vector3d(4.25, 0.0, -7.5);
    invariant += fs_ratio(pos, cfg) == base;
    ++clips;
  }
  return {a == 0.0 && b == 1.0 && c == 0.3 && oracle_ok && invariant == clips,
          fmt("stationary %.1f, sliding %.1f, mixed %.1f; oracle agreement on 203 tracks %s; translation invariant "
              "on %zu/%zu clips",
              a, b, c, oracle_ok ? "exact" : "broken", invariant, clips)};
}

Outcome c11_evaluators() {
  const auto& f = eval_fixture();
  const auto& rep = f.result.report;
  std::mt19937_64 rng(12);
  std::normal_distribution<float> nd;
  auto unit_rows = [&](std::size_t n) {
    Tensor t({n, 64});
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t c = 0; c < 64; ++c) s += std::pow(t.at(i, c) = nd(rng), 2);
      for (std::size_t c = 0; c < 64; ++c) t.at(i, c) = static_cast<float>(t.at(i, c) / std::sqrt(s));
    }
    return t;
  };
  const std::size_t trials = 4000;
  const double random_rp = r_precision(unit_rows(trials), unit_rows(trials), 3, 32, 13);

  std::vector<std::string> texts;
  std::vector<MotionSequence> motions;
  std::set<std::string> held(rep.heldout_ids.begin(), rep.heldout_ids.end());
  for (const auto& s : f.corpus)
    if (!held.count(s.id)) {
      texts.push_back(s.global_text);
      motions.push_back(s.motion);
    }
  const double train_rp = r_precision(f.result.embedders, texts, motions);
  return {rep.heldout_accuracy >= 0.9 && std::abs(random_rp - 3.0 / 32.0) <= 0.05 && train_rp >= 0.9,
          fmt("held-out style accuracy %.3f (%zu clips, 4 styles); random embedder R-precision %.4f over %zu "
              "queries (3/32 = %.4f); trained R-precision on training pairs %.3f",
              rep.heldout_accuracy, rep.heldout_count, random_rp, trials, 3.0 / 32.0, train_rp)};
}

Outcome c12_sra() {
  const auto& runs = stylize_runs();
  const auto& emb = eval_fixture().result.embedders;
  std::map<std::string, std::pair<std::vector<MotionSequence>, std::vector<std::string>>> by_style;
  for (std::size_t i = 0; i < memorized().size(); ++i) {
    if (runs.first[i].motion.num_frames() == 0) continue;
    auto& [m, l] = by_style[*memorized()[i].style_label];
    m.push_back(runs.first[i].motion);
    l.push_back(*memorized()[i].style_label);
  }
  bool pass = by_style.size() == style_specs().size();
  std::string detail;
  for (const auto& [style, ml] : by_style) {
    const double acc = sra(emb, ml.first, ml.second);
    pass = pass && acc >= 0.8;
    detail += fmt("%s %.2f (%zu) ", style.c_str(), acc, ml.first.size());
  }
  return {pass, "per-style SRA of generated motions: " + detail};
}

Outcome c13_llm() {
  struct Server {
    httplib::Server srv;
    std::thread th;
    int port = 0;
    int calls = 0;
    std::function<int(int)> status;
    explicit Server(std::function<int(int)> s) : status(std::move(s)) {
      srv.Post("/v1/chat/completions", [this](const httplib::Request&, httplib::Response& res) {
        res.status = status(calls++);
        res.set_content(res.status == 200
                            ? R"({"choices":[{"message":{"role":"assistant","content":"fixed answer"}}]})"
                            : R"({"error":"busy"})",
                        "application/json");
      });
      port = srv.bind_to_any_port("127.0.0.1");
      th = std::thread([this] { srv.listen_after_bind(); });
      srv.wait_until_ready();
    }
    ~Server() {
      srv.stop();
      th.join();
    }
    LlmEndpointConfig cfg(int retries) const {
      LlmEndpointConfig c;
      c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
      c.model = "mock";
      c.max_retries = retries;
      c.timeout_s = 5;
      return c;
    }
  };
  std::vector<double> waits;
  auto sleeper = [&](double s) { waits.push_back(s); };

  bool echo = false, retry = false, fail = false;
  {
    Server s([](int) { return 200; });
    echo = LlmClient(s.cfg(3), sleeper).complete({{"user", "hi"}}) == "fixed answer" && s.calls == 1;
  }
  CompletionTrace tr;
  {
    Server s([](int call) { return call < 2 ? 429 : 200; });
    waits.clear();
    retry = LlmClient(s.cfg(3), sleeper).complete({{"user", "hi"}}, &tr) == "fixed answer" && tr.attempts == 3 &&
            tr.delays_s.size() == 2 && tr.delays_s[1] == 2 * tr.delays_s[0] && waits == tr.delays_s;
  }
  CompletionTrace tr500;
  {
    Server s([](int) { return 500; });
    try {
      LlmClient(s.cfg(2), sleeper).complete({{"user", "hi"}}, &tr500);
    } catch (const BackendError&) {
      fail = tr500.attempts == 3 && s.calls == 3;
    }
  }
  return {echo && retry && fail,
          fmt("echo %s; 429,429,200 %s with delays %.1f s, %.1f s; persistent 500 %s after %d attempts",
              echo ? "ok" : "FAILED", retry ? "ok" : "FAILED", tr.delays_s.size() > 0 ? tr.delays_s[0] : -1.0,
              tr.delays_s.size() > 1 ? tr.delays_s[1] : -1.0, fail ? "fails" : "DID NOT FAIL", tr500.attempts)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"autodiff finite-difference checks", c1_autodiff},
      {"partition/merge round trip", c2_partition},
      {"quantization oracle", c3_quantize},
      {"VQ training", c4_vq},
      {"vocabulary", c5_vocab},
      {"LM overfit", c6_lm},
      {"decoder causality", c7_causality},
      {"composition", c8_compose},
      {"end-to-end stylize", c9_end_to_end},
      {"FS-Ratio", c10_fs},
      {"evaluators", c11_evaluators},
      {"SRA sanity", c12_sra},
      {"LLM client", c13_llm},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
