#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "udnet/image.hpp"
#include "udnet/losses.hpp"
#include "udnet/network.hpp"
#include "udnet/refgen.hpp"

namespace udnet::trainer {

enum class ColourMode { labels_only, all_inputs, off };

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 10;
  int epochs = 500;
  int crop_size = 256;
  std::uint64_t seed = 0;
  losses::LossWeights loss_weights;
  ColourMode colour_mode = ColourMode::labels_only;
  int num_labels = 3;
  bool use_perceptual = true;
  double width_factor = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int checkpoint_every_epochs = 10;
  bool randomize_refs = false;
  bool colour_trainable = false;  // identity-initialised merge convs instead of averaging
  std::string feature_weights_file;  // empty -> fixed-seed feature net

  void validate() const;
};

std::string config_to_text(const TrainConfig& cfg);
TrainConfig config_from_text(const std::string& text);
TrainConfig load_config_file(const std::filesystem::path& path);

struct ImageRecord {
  std::filesystem::path path;
  mutable std::optional<ImageTensor> cached;

  const ImageTensor& image() const;
};

/// Lexicographically ordered records; unreadable files are skipped with a
/// warning on stderr, empty result is an error.
std::vector<ImageRecord> load_dataset(const std::filesystem::path& dir);

/// Coin-flip horizontal/vertical flips and k*90-degree rotation, then scale
/// the shortest side to crop_size and take a random crop.
ImageTensor augment(const ImageTensor& img, std::uint64_t seed, int crop_size);

ImageTensor flip_horizontal(const ImageTensor& img);
ImageTensor flip_vertical(const ImageTensor& img);
ImageTensor rotate90(const ImageTensor& img, int quarter_turns);

/// Deterministic stream splitting for per-step / per-sample randomness.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

struct AdamState {
  std::vector<ad::Array<float>> m, v;
  long t = 0;

  void init(const nn::ParamStore<float>& store);
};

/// One ADAM update over all store parameters; throws on non-finite gradients.
void adam_step(nn::ParamStore<float>& store, AdamState& state, const TrainConfig& cfg);

struct Checkpoint {
  nn::ArchDescriptor arch;
  TrainConfig config;
  long step = 0;
  std::uint64_t run_seed = 0;
  // weights/moments live in the model + adam state passed alongside
};

inline constexpr std::uint32_t kCheckpointMagic = 0x4B4E4455;  // "UDNK"
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const nn::Model<float>& model,
                     const AdamState& adam, const TrainConfig& cfg, long step,
                     std::uint64_t run_seed);

struct LoadedCheckpoint {
  std::unique_ptr<nn::Model<float>> model;
  AdamState adam;
  TrainConfig config;
  long step = 0;
  std::uint64_t run_seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

struct StepLog {
  long step;
  double l_mse, l_perc, l_m, l_s, total;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  std::function<void()> on_colour_correct;  // fired when a ref/input is colour-corrected
};

/// Runs the full loop; writes loss_log.csv plus periodic/best/final
/// checkpoints under out_dir. Returns the final checkpoint path.
std::filesystem::path train(const TrainConfig& cfg, const std::filesystem::path& data_dir,
                            const std::filesystem::path& out_dir,
                            const std::filesystem::path& resume = {},
                            const TrainHooks& hooks = {});

}  // namespace udnet::trainer
