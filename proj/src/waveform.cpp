#include "corenet/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "corenet/error.hpp"

namespace corenet {

namespace {

constexpr int kN = ComplexSignal::kSamples;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ParameterError("waveform: " + msg);
}

ComplexSignal from_phase(const std::vector<double>& phi) {
  ComplexSignal s(phi.size());
  for (std::size_t n = 0; n < phi.size(); ++n) {
    s.i[n] = static_cast<float>(std::cos(phi[n]));
    s.q[n] = static_cast<float>(std::sin(phi[n]));
  }
  return s;
}

void require_band(double f_lo, double f_hi) {
  require(f_lo > 0.0 && f_hi < 0.5 && f_lo <= f_hi,
          "instantaneous frequency band must stay inside (0, 0.5)");
}

// --- Linear FM -------------------------------------------------------------

ComplexSignal gen_lfm(const WaveformSpec& sp) {
  require(sp.bandwidth >= 0.0, "LFM sweep span must be non-negative");
  require_band(sp.start_freq, sp.start_freq + sp.bandwidth);
  double k = sp.bandwidth / kN;  // cycles per sample^2
  std::vector<double> phi(kN);
  for (int n = 0; n < kN; ++n) {
    double t = static_cast<double>(n);
    double cycles = sp.sweep_down
                        ? (sp.start_freq + sp.bandwidth) * t - 0.5 * k * t * t
                        : sp.start_freq * t + 0.5 * k * t * t;
    phi[n] = kTwoPi * cycles;
  }
  return from_phase(phi);
}

// --- Costas ----------------------------------------------------------------

bool is_costas(const std::vector<int>& c) {
  int n = static_cast<int>(c.size());
  for (int d = 1; d < n; ++d) {
    std::vector<int> diffs;
    diffs.reserve(n - d);
    for (int i = 0; i + d < n; ++i) diffs.push_back(c[i + d] - c[i]);
    std::sort(diffs.begin(), diffs.end());
    if (std::adjacent_find(diffs.begin(), diffs.end()) != diffs.end())
      return false;
  }
  return true;
}

ComplexSignal gen_costas(const WaveformSpec& sp) {
  require(sp.code_length >= 4 && sp.code_length <= 8,
          "Costas hop count must be in 4..8");
  require(sp.bandwidth > 0.0, "Costas hop band must be positive");
  require_band(sp.start_freq, sp.start_freq + sp.bandwidth);
  int nc = sp.code_length;
  std::vector<int> code = costas_sequence(nc, sp.seed);
  int chip = kN / nc;
  double df = sp.bandwidth / nc;
  // Phase-continuous hopping: accumulate phase sample by sample.
  std::vector<double> phi(kN);
  double acc = 0.0;
  for (int n = 0; n < kN; ++n) {
    phi[n] = acc;
    int j = std::min(n / chip, nc - 1);
    double f = sp.start_freq + (code[j] + 0.5) * df;
    acc += kTwoPi * f;
  }
  return from_phase(phi);
}

// --- Phase-coded families ----------------------------------------------------

// Spreads one period of `code_phase` chips over the segment; the final chip
// absorbs the remainder samples.
ComplexSignal gen_phase_code(double f0, const std::vector<double>& code_phase) {
  require_band(f0, f0);
  int len = static_cast<int>(code_phase.size());
  int chip = kN / len;
  std::vector<double> phi(kN);
  for (int n = 0; n < kN; ++n) {
    int k = std::min(n / chip, len - 1);
    phi[n] = kTwoPi * f0 * n + code_phase[k];
  }
  return from_phase(phi);
}

const std::vector<int>& barker(int len) {
  static const std::vector<int> b7 = {1, 1, 1, -1, -1, 1, -1};
  static const std::vector<int> b11 = {1, 1, 1, -1, -1, -1, 1, -1, -1, 1, -1};
  static const std::vector<int> b13 = {1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1};
  switch (len) {
    case 7: return b7;
    case 11: return b11;
    case 13: return b13;
    default: throw ParameterError("waveform: Barker length must be 7, 11 or 13");
  }
}

ComplexSignal gen_bpsk(const WaveformSpec& sp) {
  const std::vector<int>& code = barker(sp.code_length);
  std::vector<double> ph(code.size());
  for (std::size_t k = 0; k < code.size(); ++k)
    ph[k] = code[k] > 0 ? 0.0 : std::numbers::pi;
  return gen_phase_code(sp.start_freq, ph);
}

void require_square_m(int m) {
  require(m == 4 || m == 6 || m == 8, "code size M must be 4, 6 or 8");
}

ComplexSignal gen_frank(const WaveformSpec& sp) {
  int m = sp.code_length;
  require_square_m(m);
  std::vector<double> ph(m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      ph[i * m + j] = kTwoPi * i * j / m;
  return gen_phase_code(sp.start_freq, ph);
}

ComplexSignal gen_p1(const WaveformSpec& sp) {
  int m = sp.code_length;
  require_square_m(m);
  std::vector<double> ph(m * m);
  for (int j = 1; j <= m; ++j)
    for (int i = 1; i <= m; ++i)
      ph[(j - 1) * m + (i - 1)] =
          -std::numbers::pi / m * (m - (2.0 * j - 1)) * ((j - 1) * m + (i - 1));
  return gen_phase_code(sp.start_freq, ph);
}

ComplexSignal gen_p2(const WaveformSpec& sp) {
  int m = sp.code_length;
  require_square_m(m);
  std::vector<double> ph(m * m);
  for (int j = 1; j <= m; ++j)
    for (int i = 1; i <= m; ++i)
      ph[(j - 1) * m + (i - 1)] =
          -std::numbers::pi / (2.0 * m) * (2.0 * i - 1 - m) * (2.0 * j - 1 - m);
  return gen_phase_code(sp.start_freq, ph);
}

void require_nc(int nc) {
  require(nc == 16 || nc == 36 || nc == 64, "chip count Nc must be 16, 36 or 64");
}

ComplexSignal gen_p3(const WaveformSpec& sp) {
  int nc = sp.code_length;
  require_nc(nc);
  std::vector<double> ph(nc);
  for (int k = 0; k < nc; ++k) ph[k] = std::numbers::pi * k * k / nc;
  return gen_phase_code(sp.start_freq, ph);
}

ComplexSignal gen_p4(const WaveformSpec& sp) {
  int nc = sp.code_length;
  require_nc(nc);
  std::vector<double> ph(nc);
  for (int k = 0; k < nc; ++k)
    ph[k] = std::numbers::pi * k * k / nc - std::numbers::pi * k;
  return gen_phase_code(sp.start_freq, ph);
}

// --- Polytime families -------------------------------------------------------

void require_states(int n) {
  require(n >= 2 && n <= 6, "phase state count must be in 2..6");
}

ComplexSignal gen_t1(const WaveformSpec& sp) {
  int kseg = sp.code_length;
  int n = sp.phase_states;
  require(kseg >= 2 && kseg <= 6, "segment count must be in 2..6");
  require_states(n);
  // Segment count also bounds the frequency excursion: j*kseg/kN cycles/sample.
  double dev = static_cast<double>(kseg - 1) * kseg / kN;
  require_band(sp.start_freq, sp.start_freq + dev);
  std::vector<double> phi(kN);
  for (int t = 0; t < kN; ++t) {
    int j = std::min(kseg * t / kN, kseg - 1);
    double ramp = static_cast<double>(kseg) * t - static_cast<double>(j) * kN;
    double state = std::floor(ramp * j * n / kN);
    phi[t] = kTwoPi * sp.start_freq * t + kTwoPi / n * state;
  }
  return from_phase(phi);
}

ComplexSignal gen_t2(const WaveformSpec& sp) {
  int kseg = sp.code_length;
  int n = sp.phase_states;
  require(kseg >= 2 && kseg <= 6, "segment count must be in 2..6");
  require_states(n);
  double dev = static_cast<double>(kseg) * (kseg + 1) / (2.0 * kN);
  require_band(sp.start_freq - dev, sp.start_freq + dev);
  std::vector<double> phi(kN);
  for (int t = 0; t < kN; ++t) {
    int j = std::min(kseg * t / kN, kseg - 1);
    double ramp = static_cast<double>(kseg) * t - static_cast<double>(j) * kN;
    double state = std::floor(ramp * (2.0 * j - kseg + 1) * n / (2.0 * kN));
    phi[t] = kTwoPi * sp.start_freq * t + kTwoPi / n * state;
  }
  return from_phase(phi);
}

ComplexSignal gen_t3(const WaveformSpec& sp) {
  int n = sp.phase_states;
  require_states(n);
  require(sp.bandwidth > 0.0, "T3 swept span must be positive");
  require_band(sp.start_freq, sp.start_freq + sp.bandwidth);
  std::vector<double> phi(kN);
  for (int t = 0; t < kN; ++t) {
    double state = std::floor(n * sp.bandwidth * t * static_cast<double>(t) / (2.0 * kN));
    phi[t] = kTwoPi * sp.start_freq * t + kTwoPi / n * state;
  }
  return from_phase(phi);
}

ComplexSignal gen_t4(const WaveformSpec& sp) {
  int n = sp.phase_states;
  require_states(n);
  require(sp.bandwidth > 0.0, "T4 swept span must be positive");
  require_band(sp.start_freq - 0.5 * sp.bandwidth,
               sp.start_freq + 0.5 * sp.bandwidth);
  std::vector<double> phi(kN);
  for (int t = 0; t < kN; ++t) {
    double state = std::floor(n * sp.bandwidth * t * static_cast<double>(t) / (2.0 * kN) -
                              n * sp.bandwidth * t / 2.0);
    phi[t] = kTwoPi * sp.start_freq * t + kTwoPi / n * state;
  }
  return from_phase(phi);
}

}  // namespace

const char* modulation_name(Modulation m) {
  switch (m) {
    case Modulation::kLfm: return "LFM";
    case Modulation::kCostas: return "Costas";
    case Modulation::kBpsk: return "BPSK";
    case Modulation::kFrank: return "Frank";
    case Modulation::kP1: return "P1";
    case Modulation::kP2: return "P2";
    case Modulation::kP3: return "P3";
    case Modulation::kP4: return "P4";
    case Modulation::kT1: return "T1";
    case Modulation::kT2: return "T2";
    case Modulation::kT3: return "T3";
    case Modulation::kT4: return "T4";
  }
  throw ParameterError("waveform: unknown modulation tag");
}

std::vector<int> costas_sequence(int hop_count, std::uint64_t seed) {
  if (hop_count < 4 || hop_count > 8)
    throw ParameterError("waveform: Costas hop count must be in 4..8");
  std::vector<int> perm(hop_count);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(Rng::mix(seed, 0xC057A5));
  // Rejection-sample permutations until the distinct-differences property
  // holds. Dense enough at these orders that this terminates quickly.
  for (;;) {
    for (int i = hop_count - 1; i > 0; --i) {
      int j = static_cast<int>(rng.uniform_int(i + 1));
      std::swap(perm[i], perm[j]);
    }
    if (is_costas(perm)) return perm;
  }
}

ComplexSignal generate_waveform(const WaveformSpec& spec) {
  switch (spec.modulation) {
    case Modulation::kLfm: return gen_lfm(spec);
    case Modulation::kCostas: return gen_costas(spec);
    case Modulation::kBpsk: return gen_bpsk(spec);
    case Modulation::kFrank: return gen_frank(spec);
    case Modulation::kP1: return gen_p1(spec);
    case Modulation::kP2: return gen_p2(spec);
    case Modulation::kP3: return gen_p3(spec);
    case Modulation::kP4: return gen_p4(spec);
    case Modulation::kT1: return gen_t1(spec);
    case Modulation::kT2: return gen_t2(spec);
    case Modulation::kT3: return gen_t3(spec);
    case Modulation::kT4: return gen_t4(spec);
  }
  throw ParameterError("waveform: unknown modulation tag");
}

WaveformSpec random_spec(Modulation m, Rng& rng) {
  WaveformSpec sp;
  sp.modulation = m;
  switch (m) {
    case Modulation::kLfm:
      sp.bandwidth = rng.uniform(0.05, 0.4);
      sp.start_freq = rng.uniform(0.05, 0.45 - sp.bandwidth);
      sp.sweep_down = rng.uniform() < 0.5;
      break;
    case Modulation::kCostas: {
      sp.code_length = 4 + static_cast<int>(rng.uniform_int(5));
      sp.bandwidth = rng.uniform(0.15, 0.35);
      sp.start_freq = rng.uniform(0.05, 0.45 - sp.bandwidth);
      sp.seed = rng.next_u64();
      break;
    }
    case Modulation::kBpsk: {
      static const int lens[3] = {7, 11, 13};
      sp.code_length = lens[rng.uniform_int(3)];
      sp.start_freq = rng.uniform(0.1, 0.4);
      break;
    }
    case Modulation::kFrank:
    case Modulation::kP1:
    case Modulation::kP2: {
      static const int ms[3] = {4, 6, 8};
      sp.code_length = ms[rng.uniform_int(3)];
      sp.start_freq = rng.uniform(0.1, 0.4);
      break;
    }
    case Modulation::kP3:
    case Modulation::kP4: {
      static const int ncs[3] = {16, 36, 64};
      sp.code_length = ncs[rng.uniform_int(3)];
      sp.start_freq = rng.uniform(0.1, 0.4);
      break;
    }
    case Modulation::kT1:
    case Modulation::kT2:
      sp.code_length = 2 + static_cast<int>(rng.uniform_int(5));
      sp.phase_states = 2;
      sp.start_freq = rng.uniform(0.1, 0.4);
      break;
    case Modulation::kT3:
      sp.phase_states = 2 + static_cast<int>(rng.uniform_int(5));
      sp.bandwidth = rng.uniform(0.05, 0.3);
      sp.start_freq = rng.uniform(0.05, 0.45 - sp.bandwidth);
      break;
    case Modulation::kT4:
      sp.phase_states = 2 + static_cast<int>(rng.uniform_int(5));
      sp.bandwidth = rng.uniform(0.05, 0.3);
      sp.start_freq = rng.uniform(0.05 + 0.5 * sp.bandwidth, 0.45 - 0.5 * sp.bandwidth);
      break;
  }
  return sp;
}

}  // namespace corenet
