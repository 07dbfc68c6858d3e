#include "corenet/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "corenet/error.hpp"

namespace corenet {

namespace {

void require_pair(const ComplexSignal& a, const ComplexSignal& b,
                  const char* who) {
  if (a.i.size() != a.q.size() || b.i.size() != b.q.size() ||
      a.size() != b.size() || a.size() == 0)
    throw DimensionError(std::string(who) + ": signals must share a non-zero length");
}

}  // namespace

double mse(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size() || a.empty())
    throw DimensionError("mse: sequences must share a non-zero length");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr_db(const ComplexSignal& clean, const ComplexSignal& candidate) {
  require_pair(clean, candidate, "psnr_db");
  double peak = clean.i[0];
  double acc = 0.0;
  const std::size_t n = clean.size();
  for (std::size_t k = 0; k < n; ++k) {
    peak = std::max({peak, static_cast<double>(clean.i[k]),
                     static_cast<double>(clean.q[k])});
    double di = static_cast<double>(clean.i[k]) - candidate.i[k];
    double dq = static_cast<double>(clean.q[k]) - candidate.q[k];
    acc += di * di + dq * dq;
  }
  double err = std::max(acc / (2.0 * static_cast<double>(n)), 1e-12);
  return 10.0 * std::log10(peak * peak / err);
}

double snr_db(const ComplexSignal& clean, const ComplexSignal& candidate) {
  require_pair(clean, candidate, "snr_db");
  double sig = 0.0, err = 0.0;
  for (std::size_t k = 0; k < clean.size(); ++k) {
    double si = clean.i[k], sq = clean.q[k];
    double di = si - candidate.i[k], dq = sq - candidate.q[k];
    sig += si * si + sq * sq;
    err += di * di + dq * dq;
  }
  return 10.0 * std::log10(sig / std::max(err, 1e-12));
}

std::vector<float> spectrogram(const ComplexSignal& s, const StftPlan& plan) {
  if (s.i.size() != s.q.size())
    throw DimensionError("spectrogram: channel lengths differ");
  int n = static_cast<int>(s.size());
  int frames = plan.frames_for(n);
  if (frames <= 0)
    throw DimensionError("spectrogram: signal shorter than the analysis window");
  std::vector<float> grid(static_cast<std::size_t>(frames) * plan.bins());
  stft_magnitude_grid(plan, s.i.data(), s.q.data(), n, grid.data());
  return grid;
}

double restoration_label(const ComplexSignal& clean,
                         const ComplexSignal& restored,
                         double psnr_target_db) {
  if (psnr_target_db <= 0.0)
    throw ParameterError("restoration_label: target PSNR must be positive");
  double y = psnr_db(clean, restored) / psnr_target_db;
  return std::clamp(y, 0.0, 1.0);
}

}  // namespace corenet
