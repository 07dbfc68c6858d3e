#pragma once

#include <vector>

#include "corenet/signal.hpp"
#include "corenet/stft.hpp"

namespace corenet {

// Mean squared error over two equal-length sequences.
double mse(const std::vector<float>& a, const std::vector<float>& b);

// Peak signal-to-noise ratio in dB over both channels jointly:
//   10 * log10(max(clean)^2 / mse(clean, candidate))
// where max is taken over every sample of both clean channels and the MSE is
// clamped below at 1e-12 so a perfect match yields a finite ceiling.
double psnr_db(const ComplexSignal& clean, const ComplexSignal& candidate);

// Signal-to-noise ratio in dB of a candidate against the clean reference,
// computed on the complex sequence jointly:
//   10 * log10(sum |clean|^2 / sum |clean - candidate|^2)
// The error power is clamped below at 1e-12.
double snr_db(const ComplexSignal& clean, const ComplexSignal& candidate);

// Magnitude spectrogram grid, frame-major (frames x bins).
std::vector<float> spectrogram(const ComplexSignal& s, const StftPlan& plan);

// Restoration-quality label in [0, 1]: psnr_db(clean, restored) divided by
// the target PSNR and clamped. A clean candidate saturates at 1.
double restoration_label(const ComplexSignal& clean,
                         const ComplexSignal& restored,
                         double psnr_target_db);

}  // namespace corenet
