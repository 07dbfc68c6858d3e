#pragma once

#include <vector>

#include "corenet/signal.hpp"

namespace corenet {

// Precomputed tables for a magnitude short-time Fourier transform of a
// complex signal. The same kernel backs both the plain spectrogram metric
// and the differentiable loss term, so their grids agree bit for bit.
//
// Framing: first frame starts at sample 0, frames advance by `hop`, and any
// partial frame at the tail is dropped. A window-64 / hop-16 plan over 1024
// samples yields 61 frames of 64 bins.
struct StftPlan {
  int window_len;
  int hop;
  std::vector<float> window;  // periodic Hann
  // Row-major [m][n] -> cos/sin(2*pi*m*n/window_len).
  std::vector<float> cos_table;
  std::vector<float> sin_table;

  StftPlan(int window_len, int hop);

  int frames_for(int samples) const {
    return samples < window_len ? 0 : (samples - window_len) / hop + 1;
  }
  int bins() const { return window_len; }
};

// Writes `frames * bins` magnitudes (frame-major) into out.
// out must have frames_for(n) * window_len elements; i/q length n.
void stft_magnitude_grid(const StftPlan& plan, const float* i, const float* q,
                         int n, float* out);

inline constexpr float kStftMagnitudeEps = 1e-12f;

}  // namespace corenet
