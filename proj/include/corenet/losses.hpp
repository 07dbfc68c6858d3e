#pragma once

#include <vector>

#include "corenet/models.hpp"
#include "corenet/signal.hpp"
#include "corenet/stft.hpp"

namespace corenet {

struct LossWeights {
  float fidelity = 1.0f;        // critic-agreement term
  float time = 10.0f;           // time-domain reconstruction term
  float freq = 1.0f;            // spectral reconstruction term
  float psnr_target_db = 40.0f; // scale that maps restoration quality to a
                                // critic label in [0,1]
};

// Shared spectral analysis setup used by the frequency loss (periodic Hann,
// 64-sample window, hop 16). Same kernel as the plain spectrogram metric.
const StftPlan& loss_stft_plan();

// Differentiable per-item peak signal-to-noise ratio in dB: [B] tensor.
// `reference` is treated as the ground truth; its per-item peak fixes the
// numerator, the squared error is clamped at 1e-12 before the log.
ad::Tensor psnr_per_item(const ad::Tensor& pred, const ad::Tensor& reference);

struct ApprenticeLoss {
  ad::Tensor total;     // scalar, graph-attached
  ad::Tensor restored;  // [B,2,L] network output, graph-attached
  float fidelity_term;  // unweighted component values, for logging
  float time_term;
  float freq_term;
};

struct MasterLoss {
  ad::Tensor total;
  float real_term;      // mean squared gap from 1 on genuine pairs
  float restored_term;  // mean squared gap from the quality label
};

// Generator step. Runs the apprentice on `received`, scores the output with a
// gradient-frozen master, and combines critic agreement with time/spectral
// reconstruction quality. `clean` carries no gradient.
ApprenticeLoss loss_apprentice(const ParamMap& apprentice, const ApprenticeConfig& acfg,
                               ParamMap& master, const MasterConfig& mcfg,
                               const ad::Tensor& received, const ad::Tensor& clean,
                               const RunMode& mode, const LossWeights& weights);

// Critic step. Scores (received, clean) against label 1 and
// (received, restored) against a label derived from the restoration's actual
// quality. `restored` must already be detached from the generator graph.
MasterLoss loss_master(const ParamMap& master, const MasterConfig& mcfg,
                       const ad::Tensor& received, const ad::Tensor& clean,
                       const ad::Tensor& restored, const RunMode& mode,
                       const LossWeights& weights);

// Quality labels in [0,1] for each (clean, restored) item; plain arithmetic,
// no graph. Exposed for tests.
std::vector<float> restoration_labels(const ad::Tensor& clean,
                                      const ad::Tensor& restored,
                                      float psnr_target_db);

// Extracts item b of a [B,2,L] tensor as a complex signal.
ComplexSignal tensor_item_signal(const ad::Tensor& batch, int b);

}  // namespace corenet
