#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "deeprank/checkpoint.hpp"
#include "deeprank/image_ops.hpp"
#include "deeprank/network.hpp"
#include "deeprank/optimizer.hpp"
#include "deeprank/sampler.hpp"

namespace deeprank {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_units = 16;
  SgdConfig sgd;  // 1e-4, momentum 0.9, weight decay 5e-4
  std::size_t stitch_side = 0;  // 0: derived from the crop, as 256 is to 227
  std::size_t crop = 0;         // 0: the network input side
  std::uint64_t seed = 0;
  std::size_t snapshot_every = 0;  // epochs between snap_<epoch>.drnk files; 0 disables
  std::filesystem::path snapshot_dir;
  std::size_t threads = 1;
  bool compute_input_mean = true;  // per-channel mean of the training images
};

/// Even side s with s/crop as close as possible to 256/227.
std::size_t default_stitch_side(std::size_t crop);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> heldout_loss;
  double seconds = 0.0;
  std::size_t reference_count = 0;
};

struct LossLog {
  std::vector<EpochRecord> epochs;

  /// `epoch,train_loss,heldout_loss,seconds`, one row per epoch.
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainHooks {
  /// Called with the merged batch gradient right before each optimizer step.
  std::function<void(std::size_t step, const Gradients<float>&)> before_step;
  /// Called with the gradient accumulators right after they are cleared.
  std::function<void(std::size_t step, const Gradients<float>&)> after_step;
  /// Called after every epoch; returning false stops training early.
  std::function<bool(const EpochRecord&, const Network<float>&)> on_epoch_end;
};

struct TrainResult {
  Checkpoint checkpoint;
  LossLog log;
};

/// SGD with momentum over ranking units. Each pair gets a fresh flip/swap
/// variant and random crop; the gradient of a batch is the mean over its units.
/// Results depend only on the inputs and cfg.seed, not on cfg.threads.
TrainResult train(Network<float>& net, std::span<const PersonImage> train_set, const TrainConfig& cfg,
                  const SamplerPolicy& policy, const TrainHooks& hooks = {},
                  std::span<const PersonImage> heldout_set = {});

/// train() starting from a pretrained checkpoint whose config must equal `expected`.
TrainResult fine_tune(const Checkpoint& pretrained, const NetworkConfig& expected,
                      std::span<const PersonImage> target_train_set, const TrainConfig& cfg,
                      const SamplerPolicy& policy, const TrainHooks& hooks = {},
                      std::span<const PersonImage> heldout_set = {});

/// Mean unit loss with infer-mode scoring of canonical, centrally cropped pairs.
double held_out_loss(const Network<float>& net, std::span<const PersonImage> images,
                     std::span<const RankingUnit> units, std::size_t stitch_side, std::size_t threads = 1);

}  // namespace deeprank
