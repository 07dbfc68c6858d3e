#pragma once

#include <cstddef>
#include <vector>

namespace corenet {

// Complex baseband segment stored as separate in-phase / quadrature channels.
// Generated radar segments are kSamples long; shorter signals are allowed so
// utility code (normalization, metrics) can be exercised on small vectors.
struct ComplexSignal {
  static constexpr int kSamples = 1024;

  std::vector<float> i;
  std::vector<float> q;

  ComplexSignal() = default;
  explicit ComplexSignal(std::size_t n) : i(n, 0.0f), q(n, 0.0f) {}

  std::size_t size() const { return i.size(); }
};

struct NormalizedSignal {
  ComplexSignal signal;
  // Set when the corresponding channel was constant and mapped to all-zeros.
  bool i_degenerate = false;
  bool q_degenerate = false;
};

// Per-channel min/max normalization onto [-1, 1]:
//   y = 2 * (x - min) / (max - min) - 1
// Extremal samples land on -1 and +1 exactly. A constant channel has no
// usable range and becomes all-zeros with its degenerate flag set.
NormalizedSignal normalize_segment(const ComplexSignal& s);

}  // namespace corenet
