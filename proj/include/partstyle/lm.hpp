#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "partstyle/graph.hpp"

namespace partstyle {

struct SeqModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t max_input_len = 512;
  std::size_t max_target_len = 512;
  int pad_id = 0, bos_id = 1, eos_id = 2;
  std::uint64_t seed = 1;
};

// ConfigError on an unusable configuration.
void validate(const SeqModelConfig& cfg);

enum class TaskKind { PartTextToMotion, PartMotionToText, GlobalToParts, Compose, PartTextsToMotion };
std::string_view task_name(TaskKind k);

struct TrainingTask {
  TaskKind kind = TaskKind::GlobalToParts;
  std::vector<int> input;
  std::vector<int> target;  // ends with the end token
};

// Pre-LN transformer encoder-decoder with tied input/output embeddings and
// learned positions.
template <typename T>
class BasicSeqModel {
 public:
  using GraphT = BasicGraph<T>;
  using TensorT = BasicTensor<T>;
  using ParameterT = BasicParameter<T>;

  BasicSeqModel() = default;
  explicit BasicSeqModel(SeqModelConfig cfg);

  const SeqModelConfig& config() const noexcept { return cfg_; }
  std::vector<ParameterT*> parameters();
  std::vector<ParameterT>& parameter_storage() noexcept { return params_; }
  const std::vector<ParameterT>& parameter_storage() const noexcept { return params_; }

  struct Bound {
    std::vector<Var> vars;
  };
  Bound bind(GraphT& g);

  // input_mask: nonzero marks a visible input position; empty means every
  // position except padding is visible.
  Var encode_graph(GraphT& g, const Bound& b, std::span<const int> input, std::span<const std::uint8_t> mask) const;
  // Logits [L×V] for a decoder prefix of length L.
  Var decode_graph(GraphT& g, const Bound& b, Var memory, std::span<const std::uint8_t> mask,
                   std::span<const int> prefix) const;

  TensorT forward(std::span<const int> input, std::span<const int> prefix,
                  std::span<const std::uint8_t> input_mask = {});

 private:
  struct Attn {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
  };
  struct Norm {
    std::size_t g, b;
  };
  struct FF {
    std::size_t w1, b1, w2, b2;
  };
  struct EncLayer {
    Norm ln1;
    Attn self;
    Norm ln2;
    FF ff;
  };
  struct DecLayer {
    Norm ln1;
    Attn self;
    Norm ln2;
    Attn cross;
    Norm ln3;
    FF ff;
  };

  std::size_t add(std::string name, TensorT value);
  Norm add_norm(const std::string& name);
  Attn add_attn(const std::string& name, std::uint64_t& seed);
  FF add_ff(const std::string& name, std::uint64_t& seed);
  Var norm(GraphT& g, const Bound& b, const Norm& n, Var x) const;
  Var attend(GraphT& g, const Bound& b, const Attn& a, Var x, Var kv, bool causal,
             std::span<const std::uint8_t> mask) const;
  Var feed_forward(GraphT& g, const Bound& b, const FF& f, Var x) const;
  std::vector<std::uint8_t> resolve_mask(std::span<const int> input, std::span<const std::uint8_t> mask) const;
  void check_ids(std::span<const int> ids, std::size_t limit, const char* what) const;

  SeqModelConfig cfg_;
  std::vector<ParameterT> params_;
  std::size_t tok_ = 0, enc_pos_ = 0, dec_pos_ = 0;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  Norm enc_ln_{}, dec_ln_{};
};

using SeqModel = BasicSeqModel<float>;
using SeqModel64 = BasicSeqModel<double>;

// Writes lm.json (config) and lm.pstc into dir.
void save_model(const SeqModel& model, const std::filesystem::path& dir);
SeqModel load_model(const std::filesystem::path& dir);

// Logits [L×V]; ContractError on over-length input.
template <typename T>
BasicTensor<T> lm_forward(BasicSeqModel<T>& model, std::span<const int> input, std::span<const int> prefix,
                          std::span<const std::uint8_t> input_mask = {});

// Mean over sequences of the summed target negative log-likelihood, with the
// decoder fed <bos> followed by the target shifted right.
template <typename T>
Var lm_loss_graph(BasicGraph<T>& g, BasicSeqModel<T>& model, const typename BasicSeqModel<T>::Bound& b,
                  std::span<const TrainingTask> batch);
template <typename T>
double lm_loss(BasicSeqModel<T>& model, std::span<const TrainingTask> batch);

struct NllStats {
  double total = 0.0;
  std::size_t tokens = 0;
  double per_token() const noexcept { return tokens ? total / static_cast<double>(tokens) : 0.0; }
};
NllStats evaluate_nll(SeqModel& model, std::span<const TrainingTask> tasks);

enum class TrainStage { Pretrain, Posttrain };
std::string_view stage_name(TrainStage s);
TrainStage stage_from_name(std::string_view name);

struct LmTrainConfig {
  std::size_t steps = 3000;
  std::size_t batch = 8;
  double lr = 0.0;  // 0 picks the stage default
  std::size_t warmup = 100;
  double clip = 1.0;
  std::uint64_t seed = 1;
};

double default_lr(TrainStage s);  // 2e-4 pre-training, 1e-4 post-training

struct LmLogEntry {
  std::size_t step;
  double loss;       // batch objective
  double token_nll;  // batch NLL per target token
  double lr;
};

// Batches draw a task kind uniformly among the kinds present, then a task of
// that kind uniformly. TrainingError on a non-finite loss.
std::vector<LmLogEntry> train_lm(SeqModel& model, std::span<const TrainingTask> tasks, TrainStage stage,
                                 const LmTrainConfig& cfg);
void write_curve_csv(const std::vector<LmLogEntry>& curve, const std::filesystem::path& file);

struct DecodeConfig {
  std::size_t max_len = 512;  // generated tokens, end token excluded
  double temperature = 0.0;   // 0 is greedy
  std::size_t top_k = 0;      // 0 keeps the full distribution
  std::uint64_t seed = 1;
};

// Tokens after <bos>, stopping before the end token or at max_len.
std::vector<int> generate_tokens(SeqModel& model, std::span<const int> input, const DecodeConfig& cfg = {});

}  // namespace partstyle
