#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "corenet/autodiff.hpp"

namespace corenet {

// Named parameter store. Names are stable and persisted by checkpoints:
//   ar.enc{1..N}.{conv,norm,proj}.{w,b|g,b}   encoder residual blocks
//   ar.dec{1..N}.{conv,norm,proj}.{w,b|g,b}   decoder residual blocks
//   ar.head.{w,b}                             stride-1 output layer
//   mr.blk{1..M}.{conv,norm,proj}.{w,b|g,b}   critic residual blocks
//   mr.head.{w,b}                             final linear layer
using ParamMap = std::map<std::string, ad::Tensor>;

// Per-call execution mode. `seed` identifies the step; layers derive their
// dropout streams from it, so one forward pass is reproducible bit for bit.
struct RunMode {
  bool train = false;
  std::uint64_t seed = 0;
};

struct ApprenticeConfig {
  // Encoder channel widths, one per downsampling block. The decoder mirrors
  // them; each block halves (encoder) or doubles (decoder) the length.
  std::vector<int> encoder_widths{16, 32, 48, 64, 80};
  int q = 3;        // polynomial order of every generative layer
  int kernel = 3;
  float dropout_rate = 0.25f;
};

struct MasterConfig {
  // One width per downsampling block; input is 4 channels (received signal
  // stacked with the candidate under judgement).
  std::vector<int> widths{12, 24, 40, 48, 56, 64};
  int q = 3;
  int kernel = 3;
  float dropout_rate = 0.25f;
};

// Fresh parameter sets. Conv weights use uniform fan-in/fan-out init applied
// independently to each power slice; biases start at zero, norm gains at one.
ParamMap init_apprentice(const ApprenticeConfig& cfg, std::uint64_t seed);
ParamMap init_master(const MasterConfig& cfg, std::uint64_t seed);

// x: [B,2,1024] normalized I/Q. Returns [B,2,1024] in [-1,1]; the tanh head
// bounds the output, with saturated activations rounding to the endpoints in
// float arithmetic.
ad::Tensor apprentice_forward(const ParamMap& params, const ApprenticeConfig& cfg,
                              const ad::Tensor& x, const RunMode& mode);

// received, candidate: [B,2,1024]. Returns [B,1] scores in (0,1).
ad::Tensor master_forward(const ParamMap& params, const MasterConfig& cfg,
                          const ad::Tensor& received, const ad::Tensor& candidate,
                          const RunMode& mode);

// Closed-form parameter counts for the given configs. Tests cross-check these
// against enumeration of the live maps.
std::size_t apprentice_param_count(const ApprenticeConfig& cfg);
std::size_t master_param_count(const MasterConfig& cfg);
std::size_t param_count(const ParamMap& params);

void set_requires_grad(ParamMap& params, bool enabled);

// Flips requires_grad off on construction and restores it on destruction.
// Keeps a frozen net's parameters out of the gradient pass entirely.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamMap& params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamMap& params_;
  std::vector<bool> saved_;
};

}  // namespace corenet
