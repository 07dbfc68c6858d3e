#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corenet/rng.hpp"
#include "corenet/signal.hpp"

namespace corenet {

// The twelve low-probability-of-intercept modulation families the generator
// can synthesize. Values are stable: they are persisted in dataset records.
enum class Modulation : std::uint32_t {
  kLfm = 0,
  kCostas = 1,
  kBpsk = 2,
  kFrank = 3,
  kP1 = 4,
  kP2 = 5,
  kP3 = 6,
  kP4 = 7,
  kT1 = 8,
  kT2 = 9,
  kT3 = 10,
  kT4 = 11,
};

inline constexpr int kModulationCount = 12;

const char* modulation_name(Modulation m);

// Parameters of one unit-amplitude segment. Frequencies are normalized
// (cycles per sample) and must keep every instantaneous frequency inside
// (0, 0.5). Field use per family:
//   LFM     start_freq = low band edge, bandwidth = sweep span, sweep_down
//   Costas  start_freq = band low edge, bandwidth = hop band, code_length =
//           hop count (4..8), seed drives the permutation draw
//   BPSK    start_freq = carrier, code_length = Barker length (7, 11, 13)
//   Frank/P1/P2  start_freq = carrier, code_length = M (4, 6, 8; M^2 chips)
//   P3/P4   start_freq = carrier, code_length = Nc (16, 36, 64 chips)
//   T1/T2   start_freq = carrier, code_length = segment count (2..6),
//           phase_states = quantization states
//   T3/T4   start_freq = carrier, bandwidth = swept span, phase_states (2..6)
struct WaveformSpec {
  Modulation modulation = Modulation::kLfm;
  double start_freq = 0.1;
  double bandwidth = 0.0;
  int code_length = 0;
  int phase_states = 2;
  bool sweep_down = false;
  std::uint64_t seed = 0;
};

// Synthesizes the segment as i[n] = cos(phi(n)), q[n] = sin(phi(n)).
// Unit magnitude by construction. Throws ParameterError on any spec whose
// instantaneous frequency would leave (0, 0.5) or whose code parameters are
// not in the documented sets. Deterministic: equal specs give equal samples.
ComplexSignal generate_waveform(const WaveformSpec& spec);

// Draws a random spec for the given family with parameters in the documented
// ranges. Deterministic given the rng state.
WaveformSpec random_spec(Modulation m, Rng& rng);

// Costas hop permutation for the given spec (exposed for verification).
std::vector<int> costas_sequence(int hop_count, std::uint64_t seed);

}  // namespace corenet
