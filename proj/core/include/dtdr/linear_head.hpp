#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtdr/embedding.hpp"

namespace dtdr {

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_decay = 0.9;  // multiplied into the rate after every epoch
  double weight_decay = 1e-5;
  int epochs = 10;
  std::uint64_t seed = 5006;
  std::size_t batch_size = 32;
  bool bias = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Throws std::invalid_argument.
  void validate() const;
};

/// One row per catalog tool (ordinal order) over an e-dimensional input.
class LinearHead {
 public:
  LinearHead() = default;
  LinearHead(std::size_t tools, std::size_t dim, bool bias = true);

  /// Uniform(-1/sqrt(dim), 1/sqrt(dim)) init for weights and biases.
  static LinearHead initialized(std::size_t tools, std::size_t dim, bool bias,
                                std::uint64_t seed);

  std::size_t tools() const noexcept { return tools_; }
  std::size_t dim() const noexcept { return dim_; }
  bool has_bias() const noexcept { return bias_; }

  std::vector<double>& weights() noexcept { return weights_; }  // row-major
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::vector<double>& biases() noexcept { return biases_; }
  const std::vector<double>& biases() const noexcept { return biases_; }
  double& w(std::size_t tool, std::size_t j) { return weights_[tool * dim_ + j]; }
  double w(std::size_t tool, std::size_t j) const { return weights_[tool * dim_ + j]; }

  std::vector<double> logits(const Embedding& x) const;
  std::vector<double> softmax(const Embedding& x) const;

  /// Metadata carried with the persisted model.
  std::size_t history_len = 0;
  double threshold = 0.2;

  /// Persists weights with the catalog fingerprint and tool names.
  std::string to_json(std::string_view catalog_fingerprint,
                      std::span<const std::string> tool_names) const;
  /// Throws CatalogMismatch when the fingerprint differs, SchemaError on
  /// malformed input.
  static LinearHead from_json(std::string_view text, std::string_view catalog_fingerprint);

  friend bool operator==(const LinearHead&, const LinearHead&) = default;

 private:
  std::size_t tools_ = 0;
  std::size_t dim_ = 0;
  bool bias_ = true;
  std::vector<double> weights_;
  std::vector<double> biases_;
};

struct TrainingExample {
  Embedding input;
  std::vector<double> target;  // multi-hot over catalog ordinals
};

/// Mean over examples of the summed per-tool sigmoid binary cross-entropy.
/// Gradients (same layout as the head) are written when the pointers are
/// non-null. Weight decay is not part of this loss.
double loss_and_gradient(const LinearHead& head, std::span<const TrainingExample> batch,
                         std::vector<double>* grad_w, std::vector<double>* grad_b);

struct TrainLog {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;  // full-data loss after each epoch
};

/// Mini-batch Adam (L2 weight decay folded into the gradient), shuffled per
/// epoch under the seed. Throws NonFiniteLoss, EmptyCorpus for no examples.
LinearHead train_linear_head(std::span<const TrainingExample> examples, std::size_t tools,
                             const TrainConfig& config, TrainLog* log = nullptr,
                             const std::function<void(int, double)>& on_epoch = {});

}  // namespace dtdr
