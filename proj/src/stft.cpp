#include "corenet/stft.hpp"

#include <cmath>
#include <numbers>

#include "corenet/error.hpp"

namespace corenet {

StftPlan::StftPlan(int window_len_, int hop_)
    : window_len(window_len_), hop(hop_) {
  if (window_len < 2 || hop < 1)
    throw ParameterError("stft: window must be >= 2 and hop >= 1");
  window.resize(window_len);
  for (int n = 0; n < window_len; ++n)
    window[n] = static_cast<float>(
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window_len));
  cos_table.resize(static_cast<std::size_t>(window_len) * window_len);
  sin_table.resize(cos_table.size());
  for (int m = 0; m < window_len; ++m) {
    for (int n = 0; n < window_len; ++n) {
      double a = 2.0 * std::numbers::pi * m * n / window_len;
      cos_table[static_cast<std::size_t>(m) * window_len + n] =
          static_cast<float>(std::cos(a));
      sin_table[static_cast<std::size_t>(m) * window_len + n] =
          static_cast<float>(std::sin(a));
    }
  }
}

void stft_magnitude_grid(const StftPlan& plan, const float* xi, const float* xq,
                         int n, float* out) {
  const int frames = plan.frames_for(n);
  const int w = plan.window_len;
  for (int f = 0; f < frames; ++f) {
    const float* fi = xi + static_cast<std::size_t>(f) * plan.hop;
    const float* fq = xq + static_cast<std::size_t>(f) * plan.hop;
    for (int m = 0; m < w; ++m) {
      const float* ct = &plan.cos_table[static_cast<std::size_t>(m) * w];
      const float* st = &plan.sin_table[static_cast<std::size_t>(m) * w];
      // X[m] = sum_n win[n] * (i + j q)(fi) * exp(-j 2 pi m n / w)
      float re = 0.0f, im = 0.0f;
      for (int k = 0; k < w; ++k) {
        float wi = plan.window[k] * fi[k];
        float wq = plan.window[k] * fq[k];
        re += wi * ct[k] + wq * st[k];
        im += wq * ct[k] - wi * st[k];
      }
      out[static_cast<std::size_t>(f) * w + m] =
          std::sqrt(re * re + im * im + kStftMagnitudeEps);
    }
  }
}

}  // namespace corenet
