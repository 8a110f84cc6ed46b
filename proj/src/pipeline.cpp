#include "partstyle/pipeline.hpp"

#include <algorithm>
#include <set>

#include "partstyle/hash.hpp"

namespace partstyle {

namespace {

using nlohmann::json;

constexpr int kProvenanceVersion = 1;

std::string block_text(const Vocabulary& vocab, BodyPart p, const std::vector<int>& codes) {
  std::string s = vocab.token(vocab.som(p));
  for (int c : codes) s += " " + motion_token_form(p, c);
  return s + " " + vocab.token(vocab.eom(p));
}

std::vector<int> prompt_ids(const Vocabulary& vocab, const std::string& text) {
  auto ids = vocab.encode(normalize_whitespace(text));
  ids.push_back(Vocabulary::kEos);
  if (ids.size() > kMaxInputTokens) throw TruncationError(ids.size(), kMaxInputTokens);
  return ids;
}

json input_json(const StyleOrContentInput& in) {
  if (in.kind == StyleOrContentInput::Kind::GlobalText) return {{"kind", "text"}, {"text", in.text}};
  const auto f = in.motion.features().data();
  const auto h = fnv1a64(std::string_view(reinterpret_cast<const char*>(f.data()), f.size_bytes()));
  return {{"kind", "motion"}, {"frames", in.motion.num_frames()}, {"features_fnv1a64", hex64(h)}};
}

template <typename F>
auto staged(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Local: return "local";
    case Backend::External: return "external";
    case Backend::Rule: return "rule";
  }
  return "?";
}

Backend backend_from_name(std::string_view name) {
  for (auto b : {Backend::Local, Backend::External, Backend::Rule})
    if (backend_name(b) == name) return b;
  throw ConfigError("unknown backend '" + std::string(name) + "'");
}

StyleOrContentInput StyleOrContentInput::from_text(std::string text) {
  StyleOrContentInput in;
  in.text = std::move(text);
  return in;
}

StyleOrContentInput StyleOrContentInput::from_motion(MotionSequence motion) {
  const auto findings = validate_layout(motion);
  if (!findings.empty()) throw LayoutError("motion input: " + findings.front().message);
  StyleOrContentInput in;
  in.kind = Kind::Motion;
  in.motion = std::move(motion);
  return in;
}

Pipeline::Pipeline(const Vocabulary& vocab, SeqModel& lm, const VqSet& vq, PipelineConfig cfg, const LlmClient* llm)
    : vocab_(vocab), lm_(lm), vq_(vq), cfg_(std::move(cfg)), llm_(llm) {
  if (lm_.config().vocab_size != vocab_.size())
    throw ConfigError("pipeline: model vocabulary size " + std::to_string(lm_.config().vocab_size) +
                      " does not match the vocabulary (" + std::to_string(vocab_.size()) + ")");
  if (vq_.rate() == 0) throw ConfigError("pipeline: bad VQ rate");
  if (cfg_.min_frames > cfg_.max_frames) throw ConfigError("pipeline: min_frames exceeds max_frames");
  if (cfg_.compose_backend == Backend::External || cfg_.reason_backend == Backend::External)
    if (!llm_) throw ConfigError("pipeline: external backend selected without an endpoint");
  if (cfg_.reason_backend == Backend::Rule) throw ConfigError("pipeline: the rule backend only composes");
}

std::string Pipeline::local_reply(const std::string& prompt, std::vector<int>& ids) {
  ids = partstyle::generate_tokens(lm_, prompt_ids(vocab_, prompt), cfg_.decode);
  return vocab_.decode(ids);
}

std::string Pipeline::external_reply(std::vector<ChatMessage>& messages) {
  if (!llm_) throw BackendError("no external endpoint configured");
  std::string reply = llm_->complete(messages);
  messages.push_back({"assistant", reply});
  return reply;
}

PartTexts Pipeline::query_texts(const std::string& stage, TemplateId t, const PromptFields& fields, Backend backend) {
  const std::string prompt = render_prompt_text(t, fields);
  StageRecord rec{stage, backend, prompt, "", 0};
  std::vector<ChatMessage> messages{{"user", prompt}};
  std::string error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    rec.attempts = attempt + 1;
    std::vector<int> ids;
    if (backend == Backend::External) {
      if (attempt) messages.push_back({"user", std::string(kFormatReminder)});
      rec.reply = normalize_whitespace(external_reply(messages));
      ids = vocab_.encode(rec.reply);
    } else {
      rec.reply = local_reply(attempt ? prompt + " " + std::string(kFormatReminder) : prompt, ids);
    }
    try {
      auto parts = parse_text_answer(vocab_, ids);
      records_.push_back(rec);
      return parts;
    } catch (const ParseError& e) {
      error = e.what();
    }
  }
  records_.push_back(rec);
  throw ParseError("reply still malformed after a format reminder: " + error, "stage " + stage);
}

PartTexts Pipeline::reason(const StyleOrContentInput& in, Backend backend) {
  if (backend == Backend::Rule) throw ConfigError("reason: the rule backend only composes");
  PromptFields f;
  if (in.kind == StyleOrContentInput::Kind::Motion) {
    backend = Backend::Local;
    f.input = motion_input(vocab_, tokenize(vq_, in.motion));
  } else {
    f.input = global_input(in.text);
  }
  return query_texts("reason", TemplateId::Reason, f, backend);
}

PartTexts Pipeline::compose(const PartTexts& content, const PartTexts& style, Backend backend) {
  if (!content.complete()) throw ContractError("compose: content texts must cover all six parts");
  PartTexts out;
  if (backend == Backend::Rule) {
    out = rule_compose(content, style, resolve_affinity(content, style, cfg_.affinity));
    records_.push_back({"compose", backend, "", "", 1});
  } else {
    PromptFields f;
    f.content = content;
    f.style = style;
    out = query_texts("compose", TemplateId::Compose, f, backend);
  }
  if (!out.complete()) {
    for (auto p : kAnswerOrder)
      if (out[p].empty()) throw ContractError("compose: unified " + std::string(part_label(p)) + " text is empty");
  }
  return out;
}

std::array<PartTokenSeq, kNumParts> Pipeline::generate_tokens(const PartTexts& unified) {
  PromptFields f;
  f.parts = unified;
  const std::string prompt = render_prompt_text(TemplateId::Generate, f);
  StageRecord rec{"generate", Backend::Local, prompt, "", 0};
  const std::size_t r = vq_.rate();
  std::string error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    rec.attempts = attempt + 1;
    std::vector<int> ids;
    rec.reply = local_reply(attempt ? prompt + " " + std::string(kFormatReminder) : prompt, ids);
    try {
      auto tokens = parse_motion_answer(vocab_, ids);
      const std::size_t len = tokens[0].codes.size();
      for (auto p : kAnswerOrder) {
        const auto& seq = tokens[part_index(p)];
        if (seq.codes.empty()) throw ParseError("empty motion block", std::string(part_label(p)) + " section");
        if (seq.codes.size() != len)
          throw ParseError(std::to_string(seq.codes.size()) + " tokens where the other parts have " +
                               std::to_string(len),
                           std::string(part_label(p)) + " section");
      }
      if (len * r < cfg_.min_frames || len * r > cfg_.max_frames)
        throw ParseError(std::to_string(len * r) + " frames outside [" + std::to_string(cfg_.min_frames) + ", " +
                             std::to_string(cfg_.max_frames) + "]",
                         "motion answer");
      for (auto& seq : tokens) seq.source_len = len * r;
      records_.push_back(rec);
      return tokens;
    } catch (const ParseError& e) {
      error = e.what();
    }
  }
  records_.push_back(rec);
  throw ParseError("motion reply unusable after a format reminder: " + error, "stage generate");
}

MotionSequence Pipeline::generate_motion(const PartTexts& unified) {
  auto m = detokenize(vq_, generate_tokens(unified));
  const auto findings = validate_layout(m);
  if (!findings.empty()) throw LayoutError("generated motion: " + findings.front().message);
  return m;
}

StylizeResult Pipeline::stylize(const StyleOrContentInput& content, const StyleOrContentInput& style) {
  records_.clear();
  StylizeResult res;
  res.content = staged("reason_content", [&] { return reason(content, cfg_.reason_backend); });
  res.style = staged("reason_style", [&] { return reason(style, cfg_.reason_backend); });
  res.unified = staged("compose", [&] { return compose(res.content, res.style, cfg_.compose_backend); });
  res.tokens = staged("generate", [&] { return generate_tokens(res.unified); });
  res.motion = staged("generate", [&] {
    auto m = detokenize(vq_, res.tokens);
    const auto findings = validate_layout(m);
    if (!findings.empty()) throw LayoutError("generated motion: " + findings.front().message);
    return m;
  });

  json stages = json::array();
  for (const auto& r : records_)
    stages.push_back({{"stage", r.stage},
                      {"backend", backend_name(r.backend)},
                      {"prompt", r.prompt},
                      {"reply", r.reply},
                      {"attempts", r.attempts}});
  json& p = res.provenance;
  p["provenance_version"] = kProvenanceVersion;
  p["command"] = "stylize";
  p["inputs"] = {{"content", input_json(content)}, {"style", input_json(style)}};
  p["backends"] = {{"reason", backend_name(cfg_.reason_backend)}, {"compose", backend_name(cfg_.compose_backend)}};
  if (llm_) p["endpoint"] = {{"base_url", llm_->config().base_url}, {"model", llm_->config().model}};
  p["decode"] = {{"max_len", cfg_.decode.max_len},
                 {"temperature", cfg_.decode.temperature},
                 {"top_k", cfg_.decode.top_k},
                 {"seed", cfg_.decode.seed}};
  p["frame_bounds"] = {cfg_.min_frames, cfg_.max_frames};
  p["template_hash"] = hex64(template_asset_hash());
  p["model_fingerprint"] = model_fingerprint();
  p["stages"] = std::move(stages);
  p["content_parts"] = part_texts_json(res.content);
  p["style_parts"] = part_texts_json(res.style);
  p["unified_parts"] = part_texts_json(res.unified);
  p["tokens"] = tokens_json(res.tokens);
  p["frames"] = res.motion.num_frames();
  return res;
}

std::string Pipeline::model_fingerprint() const {
  std::uint64_t h = fnv1a64("");
  auto mix = [&](const Tensor& t) {
    const auto d = t.data();
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(d.data()), d.size_bytes()), h);
  };
  for (const auto& p : lm_.parameter_storage()) mix(p.value);
  for (const auto& m : vq_.models) mix(m.codebook());
  for (const auto& [a, b] : vocab_.merges()) h = fnv1a64(std::to_string(a) + "," + std::to_string(b), h);
  return hex64(h);
}

std::vector<int> answer_ids(const Vocabulary& vocab, const std::string& answer) {
  auto ids = vocab.encode(answer);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::vector<TrainingTask> pretrain_tasks(const Vocabulary& vocab, const TripletSample& sample,
                                         const std::array<PartTokenSeq, kNumParts>& tokens) {
  std::vector<TrainingTask> out;
  for (auto p : kAnswerOrder) {
    const std::string text = "<" + std::string(part_label(p)) + ": " + sample.parts[p] + ">";
    const std::string block = block_text(vocab, p, tokens[part_index(p)].codes);
    out.push_back({TaskKind::PartTextToMotion, prompt_ids(vocab, text), answer_ids(vocab, block)});
    out.push_back({TaskKind::PartMotionToText, prompt_ids(vocab, block), answer_ids(vocab, sample.parts[p])});
  }
  return out;
}

std::vector<TrainingTask> posttrain_tasks(const Vocabulary& vocab, const TripletSample& sample,
                                          const std::array<PartTokenSeq, kNumParts>& tokens,
                                          const PosttrainOptions& opts) {
  std::vector<TrainingTask> out;
  auto reason = [&](TaskKind k, const std::string& input, const PartTexts& parts) {
    PromptFields f;
    f.input = input;
    out.push_back({k, render_prompt(vocab, TemplateId::Reason, f), answer_ids(vocab, render_text_answer(parts))});
  };
  if (opts.reason_global) reason(TaskKind::GlobalToParts, global_input(sample.global_text), sample.parts);
  if (opts.reason_motion) reason(TaskKind::PartMotionToText, motion_input(vocab, tokens), sample.parts);
  if (sample.composition) {
    const auto& c = *sample.composition;
    if (opts.reason_components) {
      reason(TaskKind::GlobalToParts, global_input(c.content_text), c.content);
      reason(TaskKind::GlobalToParts, global_input(c.style_text), c.style);
    }
    if (opts.compose) {
      PromptFields f;
      f.content = c.content;
      f.style = c.style;
      out.push_back({TaskKind::Compose, render_prompt(vocab, TemplateId::Compose, f),
                     answer_ids(vocab, render_text_answer(c.unified))});
    }
  }
  if (opts.generate) {
    PromptFields f;
    f.parts = sample.parts;
    out.push_back({TaskKind::PartTextsToMotion, render_prompt(vocab, TemplateId::Generate, f),
                   answer_ids(vocab, render_motion_answer(vocab, tokens))});
  }
  return out;
}

std::vector<TrainingTask> unique_tasks(std::vector<TrainingTask> tasks) {
  std::set<std::pair<std::vector<int>, std::vector<int>>> seen;
  std::vector<TrainingTask> out;
  for (auto& t : tasks)
    if (seen.insert({t.input, t.target}).second) out.push_back(std::move(t));
  return out;
}

Vocabulary build_pipeline_vocab(const std::vector<TripletSample>& samples, const VocabConfig& cfg) {
  std::vector<std::string> corpus;
  for (auto t : kAllTemplates) corpus.push_back(template_body(t));
  auto add_parts = [&](const PartTexts& p) {
    bool renderable = true;
    for (const auto& s : p.text) corpus.push_back(s);
    try {
      corpus.push_back(render_text_answer(p));
    } catch (const ContractError&) {
      renderable = false;
    }
    if (renderable) corpus.push_back(render_part_set(p));
  };
  for (const auto& s : samples) {
    corpus.push_back(global_input(s.global_text));
    add_parts(s.parts);
    if (s.composition) {
      corpus.push_back(global_input(s.composition->content_text));
      corpus.push_back(global_input(s.composition->style_text));
      add_parts(s.composition->content);
      add_parts(s.composition->style);
    }
  }
  return build_vocab(corpus, cfg);
}

VqSetTrainResult train_vq_set(const std::vector<TripletSample>& samples,
                              const std::function<VqConfig(BodyPart)>& config_for) {
  if (samples.empty()) throw ContractError("train_vq_set: no samples");
  std::array<std::vector<Tensor>, kNumParts> streams;
  for (const auto& s : samples) {
    const auto parts = partition(s.motion);
    for (auto p : kAllParts) streams[part_index(p)].push_back(parts[p]);
  }
  VqSetTrainResult out;
  for (auto p : kAllParts) {
    auto r = train_vq(streams[part_index(p)], p, config_for(p));
    out.set[p] = std::move(r.model);
    out.logs[part_index(p)] = std::move(r.log);
  }
  out.set.rate();
  return out;
}

json part_texts_json(const PartTexts& t) {
  json j = json::object();
  for (auto p : kAnswerOrder) j[std::string(part_slug(p))] = t[p];
  return j;
}

PartTexts part_texts_from_json(const json& j) {
  PartTexts t;
  try {
    for (auto p : kAllParts) t[p] = j.at(std::string(part_slug(p))).get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("part texts: ") + e.what());
  }
  return t;
}

json tokens_json(const std::array<PartTokenSeq, kNumParts>& tokens) {
  json j = json::object();
  for (auto p : kAnswerOrder) j[std::string(part_slug(p))] = tokens[part_index(p)].codes;
  return j;
}

}  // namespace partstyle
