#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "corenet/signal.hpp"
#include "corenet/waveform.hpp"

namespace corenet {

// Bit flags for the three artifact kinds a corrupted segment can carry.
inline constexpr unsigned kArtifactAwgn = 1u;
inline constexpr unsigned kArtifactEcho = 2u;
inline constexpr unsigned kArtifactInterference = 4u;

// Blueprint for corrupting one segment:
//   d = w_n * noise + w_e * clean(t - delay) + w_i * interference
// scaled so the corrupted segment clean + alpha * d meets target_snr_db.
// Weights of inactive artifacts are exactly zero; active weights lie in
// [0.1, 1.0]. The echo is non-circular (leading `echo_delay` samples of the
// echo term are zero) with delay in [32, 512].
struct CorruptionRecipe {
  unsigned active_mask = kArtifactAwgn;  // 1..7, at least one artifact
  double weight_awgn = 0.0;
  double weight_echo = 0.0;
  double weight_interference = 0.0;
  int echo_delay = 0;
  std::optional<WaveformSpec> interference;
  double target_snr_db = 0.0;
  std::uint64_t noise_seed = 0;
};

struct CorruptedPair {
  ComplexSignal clean;      // synthesized segment, unit amplitude
  ComplexSignal corrupted;  // clean + scaled disturbance, same domain
  CorruptionRecipe recipe;
  double achieved_snr_db = 0.0;
  Modulation modulation = Modulation::kLfm;
};

// Draws a recipe with the artifact subset uniform over the 7 non-empty
// subsets, active weights Uniform(0.1, 1.0), echo delay uniform in [32, 512],
// a fresh interference spec, and target SNR Uniform(-14, 10) dB.
CorruptionRecipe sample_recipe(std::uint64_t seed);

// Variant used by dataset builders: restricts the subset choice, overrides
// the SNR range, or pins the target to a grid value.
struct RecipeOptions {
  std::vector<unsigned> allowed_masks = {1, 2, 3, 4, 5, 6, 7};
  double snr_min_db = -14.0;
  double snr_max_db = 10.0;
  std::optional<double> fixed_target_db;
};
CorruptionRecipe sample_recipe(std::uint64_t seed, const RecipeOptions& options);

// Applies the recipe to a clean segment. The aggregate disturbance is scaled
// by alpha = sqrt(P_clean / (P_dist * 10^(target/10))) so the achieved SNR
// matches the target to well under 1e-3 dB; the result records the value
// actually measured. Throws ParameterError for malformed recipes and
// NumericError if the disturbance has zero power.
CorruptedPair compose_corruption(const ComplexSignal& clean,
                                 const CorruptionRecipe& recipe,
                                 Modulation modulation);

}  // namespace corenet
