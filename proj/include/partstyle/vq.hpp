#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "partstyle/graph.hpp"
#include "partstyle/motion.hpp"

namespace partstyle {

struct VqConfig {
  std::size_t codebook_size = 512;
  std::size_t code_dim = 128;
  std::size_t hidden = 64;
  std::size_t down_blocks = 2;  // rate = 2^down_blocks
  double beta = 0.25;
  double lr = 2e-3;
  std::size_t steps = 2000;
  std::size_t batch = 8;
  std::size_t window = 32;  // training crop, frames
  std::size_t reinit_every = 200;
  std::uint64_t seed = 1;
};

// Defaults for a part: 64-dim codes for Root, 128 elsewhere.
VqConfig default_vq_config(BodyPart p);

struct QuantizeResult {
  std::vector<int> indices;
  std::vector<double> distances;  // squared
  Tensor vectors;                 // [T×d]
};

// Nearest code per latent row by exact squared Euclidean distance; ties go
// to the lowest index. codebook [K×d], latents [T×d].
QuantizeResult quantize(const Tensor& codebook, const Tensor& latents);

struct VqLossVars {
  Var total, recon, codebook, commit;
};

// Each term is a mean over elements:
//   total = |x - x̂|² + |sg[z] - c|² + β|z - sg[c]|²
// x̂ is expected to have been decoded from straight_through(c, z).
VqLossVars vq_loss(Graph& g, Var x, Var x_hat, Var latent, Var code, double beta);

struct VqLogEntry {
  std::size_t step;
  double total, recon, codebook, commit;
  std::size_t codes_used;
};

class PartVqModel {
 public:
  PartVqModel() = default;
  PartVqModel(BodyPart part, VqConfig cfg);

  BodyPart part() const noexcept { return part_; }
  const VqConfig& config() const noexcept { return cfg_; }
  std::size_t rate() const noexcept { return std::size_t{1} << cfg_.down_blocks; }
  std::size_t width() const { return part_width(part_); }
  std::size_t token_count(std::size_t frames) const { return (frames + rate() - 1) / rate(); }

  const Tensor& codebook() const { return params_.front().value; }
  Tensor& codebook() { return params_.front().value; }
  const Tensor& feature_mean() const noexcept { return mean_; }
  const Tensor& feature_std() const noexcept { return std_; }
  void set_normalization(Tensor mean, Tensor stddev);

  // stream [N×width] in feature units -> latents [ceil(N/r)×d].
  Tensor encode(const Tensor& stream) const;
  // Output has r·len(indices) frames, cropped to source_len when given.
  Tensor decode(std::span<const int> indices, std::optional<std::size_t> source_len = std::nullopt) const;
  std::vector<int> tokenize(const Tensor& stream) const;

  // Normalized, edge-padded [width×N'] with N' a multiple of r.
  Tensor prepare(const Tensor& stream) const;

  // Graph builders over prepared input; encoder gives [d×T], decoder takes
  // [d×T] and gives [width×T·r] in normalized units.
  struct Bound {
    std::vector<Var> vars;
  };
  Bound bind(Graph& g);
  Var encode_graph(Graph& g, const Bound& b, Var x) const;
  Var decode_graph(Graph& g, const Bound& b, Var z) const;

  std::vector<Parameter*> parameters();
  std::vector<Parameter>& parameter_storage() { return params_; }

  // Writes vq_<slug>.json (manifest) and vq_<slug>.pstc into dir.
  void save(const std::filesystem::path& dir) const;
  static PartVqModel load(const std::filesystem::path& dir, BodyPart part);

 private:
  void init_params(std::uint64_t seed);
  Var conv(Graph& g, const Bound& b, std::size_t idx, Var x, int stride, int pad) const;
  Tensor run_decoder(const Tensor& codes) const;

  BodyPart part_ = BodyPart::Root;
  VqConfig cfg_;
  std::vector<Parameter> params_;  // [0] is the codebook; then (weight, bias) pairs
  Tensor mean_, std_;
};

struct VqTrainResult {
  PartVqModel model;
  std::vector<VqLogEntry> log;
};

// streams: training clips of one part, each [N×width] in feature units.
VqTrainResult train_vq(const std::vector<Tensor>& streams, BodyPart part, const VqConfig& cfg);

// Mean over all frames and dims of the squared reconstruction error after a
// tokenize/decode round trip, in feature units.
double reconstruction_mse(const PartVqModel& model, const std::vector<Tensor>& streams);

struct PartTokenSeq {
  BodyPart part = BodyPart::Root;
  std::vector<int> codes;
  std::size_t source_len = 0;
};

// Six models indexed by part_index().
struct VqSet {
  std::array<PartVqModel, kNumParts> models;

  const PartVqModel& operator[](BodyPart p) const { return models[part_index(p)]; }
  PartVqModel& operator[](BodyPart p) { return models[part_index(p)]; }

  std::size_t rate() const;  // throws ConfigError when parts disagree
  void save(const std::filesystem::path& dir) const;
  static VqSet load(const std::filesystem::path& dir);
};

std::array<PartTokenSeq, kNumParts> tokenize(const VqSet& vq, const MotionSequence& m);
MotionSequence detokenize(const VqSet& vq, const std::array<PartTokenSeq, kNumParts>& tokens);

}  // namespace partstyle
