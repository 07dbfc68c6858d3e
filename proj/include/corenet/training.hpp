#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "corenet/dataset.hpp"
#include "corenet/losses.hpp"
#include "corenet/models.hpp"

namespace corenet {

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Bias-corrected Adam over a named parameter map. The handles share storage
// with the live model, so step() mutates the network in place.
class AdamOptimizer {
 public:
  AdamOptimizer(const ParamMap& params, AdamConfig cfg = {});

  // Applies the currently accumulated gradients, then advances the step
  // counter. Parameters without an allocated gradient are treated as having
  // a zero gradient (moments still decay).
  void step(float lr);
  void zero_grad();

  std::uint64_t step_count() const { return steps_; }
  const std::map<std::string, std::vector<float>>& first_moments() const { return m_; }
  const std::map<std::string, std::vector<float>>& second_moments() const { return v_; }
  void set_state(std::map<std::string, std::vector<float>> m,
                 std::map<std::string, std::vector<float>> v, std::uint64_t steps);

 private:
  ParamMap params_;
  AdamConfig cfg_;
  std::map<std::string, std::vector<float>> m_, v_;
  std::uint64_t steps_ = 0;
};

// Annealed learning rate, restarting every t_max iterations:
//   lr(t) = lr0/2 * (1 + cos(pi * (t mod t_max) / t_max))
// Periodic by construction; within a period the rate decays from lr0 towards
// zero (the infimum is approached, the restart boundary snaps back to lr0).
float cosine_lr(std::uint64_t t, float lr0, std::uint64_t t_max);

struct TrainConfig {
  int max_epochs = 1000;
  int batch_size = 64;
  float lr_apprentice = 5e-3f;
  float lr_master = 5e-3f;
  std::uint64_t t_max = 100;  // scheduler period, in iterations
  std::uint64_t seed = 1;
  LossWeights weights{};
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double loss_apprentice = 0.0;
  double loss_fidelity = 0.0;
  double loss_time = 0.0;
  double loss_freq = 0.0;
  double loss_master = 0.0;
  double val_snr_db = 0.0;
  double mr_val_mse = 0.0;
  float lr = 0.0f;  // rate at the first iteration of the epoch
};

// Full state of both networks plus optimizer progress. Serialization is
// byte-stable: identical data produces identical files.
struct CheckpointData {
  ApprenticeConfig acfg;
  MasterConfig mcfg;
  int pass_index = 0;
  double val_snr_db = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t apprentice_steps = 0;
  std::uint64_t master_steps = 0;
  ParamMap apprentice;  // deep copies, detached from any live model
  ParamMap master;
  std::map<std::string, std::vector<float>> adam_m;  // keyed by parameter name
  std::map<std::string, std::vector<float>> adam_v;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::filesystem::path& path);

ParamMap deep_copy(const ParamMap& params);

struct TrainHooks {
  // Both fire once per mini-batch, right after the respective update.
  std::function<void(int epoch, int step, const ParamMap& apprentice,
                     const ParamMap& master)>
      after_apprentice_step;
  std::function<void(int epoch, int step, const ParamMap& apprentice,
                     const ParamMap& master)>
      after_master_step;
  std::function<void(const EpochStats&)> on_epoch;
};

struct PassResult {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based; ties resolved to the earlier epoch
  double best_val_snr_db = 0.0;
  CheckpointData best;
  CheckpointData last;
};

// One cooperative training pass: per mini-batch, one apprentice update (with
// the master frozen) followed by one master update (on the detached
// restoration). Validation runs after every epoch; the best-by-validation-SNR
// state is kept. When run_dir is non-empty, writes config.json, epochs.csv,
// best.ckpt and last.ckpt there. Throws NumericError with a diagnostic
// snapshot if any loss goes non-finite.
PassResult train_corenet(const std::vector<Record>& train_records,
                         const std::vector<Record>& val_records,
                         const ApprenticeConfig& acfg, const MasterConfig& mcfg,
                         const TrainConfig& tcfg, const ParamMap& apprentice_init,
                         const ParamMap& master_init,
                         const std::filesystem::path& run_dir = {},
                         const TrainHooks& hooks = {}, int pass_index = 0);

// Mean restoration SNR over a split, evaluation mode (dropout off). Restores
// each record's corrupted signal and scores it against the normalized clean
// one. Deterministic for fixed inputs regardless of batch size.
double validate(const ParamMap& apprentice, const ApprenticeConfig& acfg,
                const std::vector<Record>& records, int batch_size = 64);

// Batch assembly: normalizes each record and packs [count,2,1024] tensors.
// Consumers index records via `order` so shuffled epochs reuse one buffer.
void batch_tensors(const std::vector<Record>& records, const std::vector<int>& order,
                   std::size_t begin, std::size_t end, ad::Tensor& received,
                   ad::Tensor& clean);

// Mean corrupted-vs-clean SNR of a split in the normalized domain; the
// reference line toy training must beat.
double corrupted_baseline_db(const std::vector<Record>& records);

}  // namespace corenet
