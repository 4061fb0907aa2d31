#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssvep/dataio.hpp"
#include "ssvep/nn.hpp"

namespace ssvep {
namespace models {

// Stack of convolutional units: conv -> batchnorm -> ReLU -> maxpool. The
// first block carries the wide kernel that resolves the stimulus
// frequencies; later blocks refine with narrow kernels.
struct ScuSpec {
  std::size_t n_scu_blocks{1};  // 1..5
  std::size_t filters{16};
  std::size_t first_kernel{10};
  std::size_t first_stride{4};
  std::size_t first_pool{2};
  std::size_t later_kernel{3};
  std::size_t later_stride{1};
  std::size_t later_pool{2};
  double dropout_p{0.5};
  std::size_t n_classes{4};
  std::size_t in_channels{7};
  std::size_t in_length{1500};
};

inline constexpr std::size_t kMaxScuBlocks = 5;

// Post-pool sequence length after each block, led by the input length;
// throws naming the first block whose length underflows.
std::vector<std::size_t> scu_length_trace(const ScuSpec& spec);

nn::Network build_scu_cnn(const ScuSpec& spec);       // enforces n_scu_blocks == 1
nn::Network build_deep_scu_cnn(const ScuSpec& spec);  // n_scu_blocks in 1..5

nn::Network build_recurrent(nn::CellKind kind, std::size_t hidden,
                            std::size_t in_channels = 7, std::size_t n_classes = 4,
                            double dropout_p = 0.001);

// The two published weight-decay scalings; lambda_l2 stays configurable.
inline constexpr double kL2Default = 1e-4;
inline constexpr double kL2GridAlternative = 1e-3;

struct TrainConfig {
  std::size_t epochs{100};
  std::size_t batch_size{32};
  double lr{1e-3};
  double lambda_l2{kL2Default};
  std::uint64_t seed{0};
  bool shuffle{true};
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean training objective per epoch
};

// Adam over seeded-shuffled mini-batches on the CCE + L2 objective; the
// network is (re)initialized from cfg.seed, so identical inputs give
// bit-identical parameters.
TrainResult train(nn::Network& net, const nn::Tensor& inputs,
                  const std::vector<int>& labels, const TrainConfig& cfg);

// Eval-mode argmax of the softmax head; ties go to the lowest class index.
std::pair<std::vector<int>, nn::Tensor> predict(nn::Network& net,
                                                const nn::Tensor& inputs);

// [N, data_channels, T] tensor from trials; a stored reference row is
// dropped (it exists for re-referencing only).
nn::Tensor trials_to_tensor(const Dataset& ds, const std::vector<std::size_t>& indices);
nn::Tensor trials_to_tensor(const Dataset& ds);

// Versioned binary checkpoint: magic, architecture descriptor, then
// parameters and buffers as 64-bit little-endian in declaration order.
void save_checkpoint(nn::Network& net, const std::filesystem::path& path);
nn::Network load_checkpoint(const std::filesystem::path& path);

}  // namespace models
}  // namespace ssvep
