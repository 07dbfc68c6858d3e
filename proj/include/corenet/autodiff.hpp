#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "corenet/stft.hpp"

namespace corenet::ad {

using Shape = std::vector<int>;

struct TensorImpl {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // allocated on first use
  bool requires_grad = false;
};

// Value-semantics handle over shared storage. Ops never mutate their inputs,
// so captured handles stay valid for the backward pass.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<float> values,
                            bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->values.size()); }

  std::span<float> values() { return impl_->values; }
  std::span<const float> values() const { return impl_->values; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  // Grad buffer, zero-initialized on first access.
  std::span<float> grad();
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  // Value of a single-element tensor.
  float item() const;

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

// Append-only record of backward closures. Creation order is a topological
// order of the graph, so backward simply runs the closures in reverse.
// One tape per thread; independent threads own independent tapes.
class Tape {
 public:
  static Tape& active();

  bool recording() const { return recording_; }
  void set_recording(bool v) { recording_ = v; }

  void push(std::function<void()> backward_fn);
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. The loss must be a single
  // element tensor. The tape is left intact; call clear() to reuse it.
  void backward(const Tensor& loss);
  // Seeds an arbitrary output gradient instead (vector-Jacobian product).
  void backward(const Tensor& output, std::span<const float> seed);

  void clear();

 private:
  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
};

// Disables tape recording in scope (evaluation / metric passes).
struct NoGradGuard {
  NoGradGuard() : prev_(Tape::active().recording()) { Tape::active().set_recording(false); }
  ~NoGradGuard() { Tape::active().set_recording(prev_); }

 private:
  bool prev_;
};

// When enabled, every op validates that its outputs are finite and throws
// NumericError otherwise. Cheap relative to the conv kernels.
void set_debug_checks(bool enabled);
bool debug_checks_enabled();

// ---- operators -------------------------------------------------------------
// All tensors are float32; reductions accumulate in double before rounding
// so metric-level agreement holds at 1e-5 dB.

// Operator-powered convolution: for weights w[Q][Cout][Cin][K],
//   y[b,co,l] = bias[co] + sum_q sum_ci sum_k w[q,co,ci,k] * x[b,ci,l*s+k-p]^(q+1-1)
// with powers x^1..x^Q. Q = 1 reproduces a plain convolution bit for bit.
// x: [B,Cin,L], w: [Q,Cout,Cin,K], bias: [Cout]. Output [B,Cout,L'] with
// L' = (L + 2p - K) / s + 1.
Tensor selfonn_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                      int stride, int padding);

// Transposed counterpart (scatter form). Output length
// L' = (L - 1) * s - 2p + K + output_padding.
Tensor selfonn_tconv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                       int stride, int padding, int output_padding = 0);

// Per (item, channel) normalization over length with biased variance and the
// learned affine (gamma, beta). Requires L >= 2.
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     float eps = 1e-5f);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Train mode: keeps each element with probability 1-rate and scales kept
// values by 1/(1-rate); the mask is a pure function of the seed. Evaluation
// mode is the identity.
Tensor dropout(const Tensor& x, float rate, bool train, std::uint64_t seed);

// [B,C,L] -> [B,C,1] mean over length.
Tensor adaptive_avg_pool1d(const Tensor& x);

// x: [B,F], w: [Out,F], bias: [Out] -> [B,Out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// [B,C1,L] ++ [B,C2,L] -> [B,C1+C2,L].
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float c);
Tensor add_scalar(const Tensor& x, float c);
// Integer power x^q, q >= 1.
Tensor elementwise_power(const Tensor& x, int q);
// max(x, floor); gradient flows only where x > floor.
Tensor clamp_min(const Tensor& x, float floor);
Tensor log10(const Tensor& x);

// Whole-tensor mean -> [1].
Tensor mean_all(const Tensor& x);
// Mean over all but the leading dimension: [B,...] -> [B].
Tensor mean_per_item(const Tensor& x);

// Same-numel reshape (copies).
Tensor reshape(const Tensor& x, Shape shape);

// Shares values, drops the graph connection.
Tensor detach(const Tensor& x);

// Magnitude spectrogram of a two-channel complex batch: [B,2,L] -> [B,F,M].
Tensor stft_magnitude(const Tensor& x, const StftPlan& plan);

}  // namespace corenet::ad
