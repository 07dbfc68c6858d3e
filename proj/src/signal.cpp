#include "corenet/signal.hpp"

#include <algorithm>

#include "corenet/error.hpp"

namespace corenet {

namespace {

bool normalize_channel(std::vector<float>& x) {
  auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  float lo = *lo_it, hi = *hi_it;
  if (lo == hi) {
    std::fill(x.begin(), x.end(), 0.0f);
    return true;
  }
  float range = hi - lo;
  for (float& v : x) v = 2.0f * ((v - lo) / range) - 1.0f;
  return false;
}

}  // namespace

NormalizedSignal normalize_segment(const ComplexSignal& s) {
  if (s.i.size() != s.q.size())
    throw DimensionError("normalize_segment: channel lengths differ");
  if (s.i.empty()) throw DimensionError("normalize_segment: empty signal");

  NormalizedSignal out;
  out.signal = s;
  out.i_degenerate = normalize_channel(out.signal.i);
  out.q_degenerate = normalize_channel(out.signal.q);
  return out;
}

}  // namespace corenet
