#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "partstyle/corpus.hpp"
#include "partstyle/motion.hpp"
#include "partstyle/tensor.hpp"

namespace partstyle {

struct FsConfig {
  double height = 0.05;  // m
  double speed = 0.10;   // m/s
  double fps = 20.0;
};

// A frame skates when either foot is below `height` while moving faster than
// `speed` horizontally. Speed is a forward difference, backward on the last
// frame.
double fs_ratio(const JointPositions& positions, const FsConfig& cfg = {});
double fs_ratio(const MotionSequence& m, const FsConfig& cfg = {});

struct EvalConfig {
  std::size_t dim = 64;
  std::size_t hidden = 128;
  std::size_t steps = 2000;
  std::size_t batch = 32;
  double lr = 1e-3;
  double temperature = 0.1;
  double heldout = 0.2;
  std::uint64_t seed = 1;
};

struct EvalReport {
  std::vector<std::string> styles;
  std::size_t train_count = 0, heldout_count = 0;
  double train_accuracy = 0.0, heldout_accuracy = 0.0;
  double final_loss = 0.0;
  std::vector<std::string> heldout_ids;
  bool operator==(const EvalReport&) const = default;
};

// Motion and text encoders into a shared unit-sphere space, plus a style
// classifier on the motion embedding.
class EvalEmbedders {
 public:
  EvalEmbedders() = default;

  const EvalConfig& config() const noexcept { return cfg_; }
  const std::vector<std::string>& styles() const noexcept { return styles_; }

  Tensor embed_motions(const std::vector<MotionSequence>& motions) const;  // [n×dim]
  Tensor embed_texts(const std::vector<std::string>& texts) const;         // [n×dim]
  std::vector<std::string> classify(const std::vector<MotionSequence>& motions) const;

  void save(const std::filesystem::path& dir) const;
  static EvalEmbedders load(const std::filesystem::path& dir);

 private:
  friend struct EvalTrainResult train_eval_embedders(const std::vector<TripletSample>& samples, const EvalConfig& cfg);

  Tensor motion_inputs(const std::vector<MotionSequence>& motions) const;
  Tensor text_inputs(const std::vector<std::string>& texts) const;

  EvalConfig cfg_;
  std::vector<std::string> styles_;
  std::vector<std::string> words_;
  std::vector<float> feat_mean_, feat_std_;
  std::vector<Parameter> params_;
};

struct EvalTrainResult {
  EvalEmbedders embedders;
  EvalReport report;
};

// Samples need style labels; ContractError with fewer than two styles. The
// held-out share is split off per style before training.
EvalTrainResult train_eval_embedders(const std::vector<TripletSample>& samples, const EvalConfig& cfg = {});

// Mean Euclidean distance between row-paired embeddings.
double mm_dist(const Tensor& text_emb, const Tensor& motion_emb);
double mm_dist(const EvalEmbedders& e, const std::vector<std::string>& texts,
               const std::vector<MotionSequence>& motions);

// Row i of text_emb is the query whose true match is row i of motion_emb. Each
// query is ranked against its match plus pool-1 other rows drawn with `seed`.
double r_precision(const Tensor& text_emb, const Tensor& motion_emb, std::size_t k = 3, std::size_t pool = 32,
                   std::uint64_t seed = 1);
double r_precision(const EvalEmbedders& e, const std::vector<std::string>& texts,
                   const std::vector<MotionSequence>& motions, std::size_t k = 3, std::size_t pool = 32,
                   std::uint64_t seed = 1);

// Share of motions the classifier assigns to their target style.
double sra(const EvalEmbedders& e, const std::vector<MotionSequence>& motions,
           const std::vector<std::string>& target_styles);

std::string dataset_hash(const std::vector<TripletSample>& samples);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  nlohmann::json config;
  std::string dataset_hash;
  std::uint64_t seed = 0;
  nlohmann::json to_json() const;
};

}  // namespace partstyle
