#include "corenet/corruption.hpp"

#include <cmath>

#include "corenet/error.hpp"
#include "corenet/metrics.hpp"
#include "corenet/rng.hpp"

namespace corenet {

namespace {

constexpr int kEchoDelayMin = 32;
constexpr int kEchoDelayMax = 512;

void validate_recipe(const CorruptionRecipe& r) {
  if (r.active_mask == 0 || r.active_mask > 7)
    throw ParameterError("corruption: active artifact set must be one of the 7 non-empty subsets");
  auto check_weight = [](bool active, double w, const char* name) {
    if (active) {
      if (w < 0.1 || w > 1.0)
        throw ParameterError(std::string("corruption: active ") + name +
                             " weight must lie in [0.1, 1.0]");
    } else if (w != 0.0) {
      throw ParameterError(std::string("corruption: inactive ") + name +
                           " weight must be exactly zero");
    }
  };
  check_weight(r.active_mask & kArtifactAwgn, r.weight_awgn, "noise");
  check_weight(r.active_mask & kArtifactEcho, r.weight_echo, "echo");
  check_weight(r.active_mask & kArtifactInterference, r.weight_interference,
               "interference");
  if (r.active_mask & kArtifactEcho) {
    if (r.echo_delay < kEchoDelayMin || r.echo_delay > kEchoDelayMax)
      throw ParameterError("corruption: echo delay must lie in [32, 512]");
  }
  if ((r.active_mask & kArtifactInterference) && !r.interference.has_value())
    throw ParameterError("corruption: interference artifact requires a waveform spec");
}

}  // namespace

CorruptionRecipe sample_recipe(std::uint64_t seed) {
  return sample_recipe(seed, RecipeOptions{});
}

CorruptionRecipe sample_recipe(std::uint64_t seed, const RecipeOptions& options) {
  if (options.allowed_masks.empty())
    throw ParameterError("corruption: allowed subset list is empty");
  for (unsigned m : options.allowed_masks)
    if (m == 0 || m > 7)
      throw ParameterError("corruption: allowed subsets must be in 1..7");

  Rng rng(Rng::mix(seed, 0xC0441234u));
  CorruptionRecipe r;
  r.active_mask = options.allowed_masks[rng.uniform_int(options.allowed_masks.size())];
  if (r.active_mask & kArtifactAwgn) r.weight_awgn = rng.uniform(0.1, 1.0);
  if (r.active_mask & kArtifactEcho) {
    r.weight_echo = rng.uniform(0.1, 1.0);
    r.echo_delay = kEchoDelayMin +
                   static_cast<int>(rng.uniform_int(kEchoDelayMax - kEchoDelayMin + 1));
  }
  if (r.active_mask & kArtifactInterference) {
    r.weight_interference = rng.uniform(0.1, 1.0);
    auto family = static_cast<Modulation>(rng.uniform_int(kModulationCount));
    r.interference = random_spec(family, rng);
    // Costas specs carry their own permutation seed; give every family an
    // independent stream so the interferer never repeats the victim's draw.
    r.interference->seed = rng.next_u64();
  }
  r.target_snr_db = options.fixed_target_db
                        ? *options.fixed_target_db
                        : rng.uniform(options.snr_min_db, options.snr_max_db);
  r.noise_seed = rng.next_u64();
  return r;
}

CorruptedPair compose_corruption(const ComplexSignal& clean,
                                 const CorruptionRecipe& recipe,
                                 Modulation modulation) {
  validate_recipe(recipe);
  if (clean.i.size() != clean.q.size() || clean.size() == 0)
    throw DimensionError("corruption: malformed clean signal");
  const std::size_t n = clean.size();

  std::vector<double> di(n, 0.0), dq(n, 0.0);
  if (recipe.active_mask & kArtifactAwgn) {
    Rng noise(Rng::mix(recipe.noise_seed, 0xA36));
    for (std::size_t t = 0; t < n; ++t) di[t] += recipe.weight_awgn * noise.normal();
    for (std::size_t t = 0; t < n; ++t) dq[t] += recipe.weight_awgn * noise.normal();
  }
  if (recipe.active_mask & kArtifactEcho) {
    const std::size_t tau = static_cast<std::size_t>(recipe.echo_delay);
    for (std::size_t t = tau; t < n; ++t) {
      di[t] += recipe.weight_echo * clean.i[t - tau];
      dq[t] += recipe.weight_echo * clean.q[t - tau];
    }
  }
  if (recipe.active_mask & kArtifactInterference) {
    ComplexSignal interferer = generate_waveform(*recipe.interference);
    if (interferer.size() != n)
      throw DimensionError("corruption: interference length mismatch");
    for (std::size_t t = 0; t < n; ++t) {
      di[t] += recipe.weight_interference * interferer.i[t];
      dq[t] += recipe.weight_interference * interferer.q[t];
    }
  }

  double p_sig = 0.0, p_dist = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    p_sig += static_cast<double>(clean.i[t]) * clean.i[t] +
             static_cast<double>(clean.q[t]) * clean.q[t];
    p_dist += di[t] * di[t] + dq[t] * dq[t];
  }
  if (p_dist <= 0.0)
    throw NumericError("corruption: disturbance has zero power; refusing to emit a clean pair");

  const double alpha =
      std::sqrt(p_sig / (p_dist * std::pow(10.0, recipe.target_snr_db / 10.0)));

  CorruptedPair pair;
  pair.clean = clean;
  pair.corrupted = ComplexSignal(n);
  for (std::size_t t = 0; t < n; ++t) {
    pair.corrupted.i[t] = static_cast<float>(clean.i[t] + alpha * di[t]);
    pair.corrupted.q[t] = static_cast<float>(clean.q[t] + alpha * dq[t]);
  }
  pair.recipe = recipe;
  pair.modulation = modulation;
  pair.achieved_snr_db = snr_db(pair.clean, pair.corrupted);
  if (std::abs(pair.achieved_snr_db - recipe.target_snr_db) > 1e-3)
    throw NumericError("corruption: achieved SNR missed the target by more than 1e-3 dB");
  return pair;
}

}  // namespace corenet
