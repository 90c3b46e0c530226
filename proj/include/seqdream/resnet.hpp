#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seqdream/dataset.hpp"
#include "seqdream/tensor.hpp"

namespace seqdream {

struct ResNetConfig {
  int blocks = 3;
  int convs_per_block = 3;
  std::vector<int> channels = {64, 128, 128};  // one entry per block
  std::vector<int> kernels = {7, 5, 3};        // one entry per conv within a block
  int num_classes = 2;
  int input_length = 0;

  void validate() const;
  bool operator==(const ResNetConfig&) const = default;
};

struct ConvParams {
  Tensor w;  // [Cout, Cin, K]
  Tensor b;  // [Cout]
};

struct BnParams {
  Tensor gamma, beta;
  BatchNormState state;
};

struct ResBlock {
  std::vector<ConvParams> convs;
  std::vector<BnParams> bns;
  std::optional<ConvParams> proj;  // 1x1 conv on the skip path when channels change
};

struct ModelWeights {
  ResNetConfig config;
  std::vector<ResBlock> blocks;
  Tensor fc_w;  // [num_classes, channels.back()]
  Tensor fc_b;  // [num_classes]
};

// Trainable tensors in the fixed canonical order (also the Adam update order
// and the order forward() registers leaves): per block, conv/bn interleaved,
// then the projection; finally the linear head.
std::vector<Tensor*> trainable_params(ModelWeights& model);
std::vector<std::string> trainable_param_names(const ModelWeights& model);

// Block = convs_per_block x (conv1d -> batchnorm -> relu), with the residual
// (identity or 1x1-projected) added before the block's final relu. Head is
// global_avg_pool -> linear.
ModelWeights build_resnet(const ResNetConfig& cfg, uint64_t seed);

struct TrainConfig {
  int epochs = 500;
  double lr = 1e-3;
  int batch_size = 64;
  double beta1 = 0.9, beta2 = 0.999, eps_adam = 1e-8;
  uint64_t seed = 0;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Adam on softmax cross entropy, batch order shuffled per epoch from cfg.seed.
// Mutates the model in place; history is bit-reproducible for a fixed seed.
std::vector<EpochStats> train(ModelWeights& model, const Dataset& data, const TrainConfig& cfg);

struct LayerSelector {
  enum class Kind { logits, penultimate, block };
  Kind kind = Kind::logits;
  int block_index = 0;

  static LayerSelector parse(const std::string& text);  // "logits" | "penultimate" | "blockN"
  std::string str() const;
};

// Eval-mode forward passes (frozen running statistics, pure functions).
std::vector<double> logits(const ModelWeights& model, const std::vector<double>& series);
std::vector<std::vector<double>> logits_batch(const ModelWeights& model,
                                              const std::vector<std::vector<double>>& series);
std::vector<double> activations(const ModelWeights& model, const std::vector<double>& series,
                                const LayerSelector& layer);
std::vector<std::vector<double>> activations_batch(const ModelWeights& model,
                                                   const std::vector<std::vector<double>>& series,
                                                   const LayerSelector& layer);

// Tape-level forward used by train and the dreaming loops. `input` is a
// [1,L] or [N,1,L] leaf already on the tape.
struct ForwardTap {
  std::vector<Tape::Id> params;  // aligned with trainable_params order
  std::vector<Tape::Id> block_outputs;
  Tape::Id pooled = -1;
  Tape::Id logits = -1;
};
ForwardTap resnet_forward(Tape& tape, ModelWeights& model, Tape::Id input, BnMode mode,
                          bool params_require_grad);

// Text format, magic SEQDREAM-W1: embedded config, named parameter blocks,
// 17-significant-digit decimals, trailing end marker.
void save_weights(const ModelWeights& model, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

}  // namespace seqdream
