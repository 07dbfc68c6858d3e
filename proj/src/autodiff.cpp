#include "corenet/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "corenet/error.hpp"
#include "corenet/rng.hpp"

namespace corenet::ad {

namespace {

int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

bool g_debug_checks = false;

void check_finite(const Tensor& t, const char* op) {
  if (!g_debug_checks) return;
  for (float v : t.values())
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + ": non-finite value in forward output");
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(s[k]);
  }
  return out + "]";
}

// Records a backward closure when grads are in play; output inherits
// requires_grad so downstream ops keep extending the graph.
template <typename Fn>
void record(bool any_input_grad, Tensor& out, Fn&& fn) {
  if (any_input_grad && Tape::active().recording()) {
    out.set_requires_grad(true);
    Tape::active().push(std::forward<Fn>(fn));
  }
}

// Convenience for closures: output grad span or empty if untouched.
std::span<const float> out_grad(const std::shared_ptr<TensorImpl>& impl) {
  return impl->grad;
}

void accumulate(std::vector<float>& grad, std::size_t n) {
  if (grad.empty()) grad.assign(n, 0.0f);
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor: dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values.assign(n, 0.0f);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (float& v : t.impl_->values) v = value;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<float> values,
                           bool requires_grad) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor: dimensions must be positive");
    n *= static_cast<std::size_t>(d);
  }
  if (n != values.size())
    throw DimensionError("tensor: value count does not match shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

std::span<float> Tensor::grad() {
  accumulate(impl_->grad, impl_->values.size());
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("tensor: item() requires a single element");
  return impl_->values[0];
}

// ---- Tape -------------------------------------------------------------------

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::push(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw DimensionError("backward: loss must be a single-element tensor");
  const float one = 1.0f;
  backward(loss, std::span<const float>(&one, 1));
}

void Tape::backward(const Tensor& output, std::span<const float> seed) {
  if (static_cast<std::size_t>(output.numel()) != seed.size())
    throw DimensionError("backward: seed size does not match output");
  Tensor out = output;
  auto g = out.grad();
  for (std::size_t k = 0; k < seed.size(); ++k) g[k] += seed[k];
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::clear() { nodes_.clear(); }

void set_debug_checks(bool enabled) { g_debug_checks = enabled; }
bool debug_checks_enabled() { return g_debug_checks; }

// ---- convolution ------------------------------------------------------------

namespace {

struct ConvDims {
  int batch, cin, len, q, cout, kernel, lout;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& bias,
                   int stride, int padding, const char* op) {
  require(x.shape().size() == 3, std::string(op) + ": input must be [B,Cin,L], got " +
                                     shape_str(x.shape()));
  require(w.shape().size() == 4, std::string(op) + ": weights must be [Q,Cout,Cin,K]");
  require(bias.shape().size() == 1, std::string(op) + ": bias must be [Cout]");
  ConvDims d;
  d.batch = x.shape()[0];
  d.cin = x.shape()[1];
  d.len = x.shape()[2];
  d.q = w.shape()[0];
  d.cout = w.shape()[1];
  d.kernel = w.shape()[3];
  require(w.shape()[2] == d.cin, std::string(op) + ": weight Cin " +
                                     std::to_string(w.shape()[2]) +
                                     " does not match input Cin " + std::to_string(d.cin));
  require(bias.shape()[0] == d.cout, std::string(op) + ": bias size mismatch");
  if (stride < 1 || padding < 0 || d.q < 1)
    throw ParameterError(std::string(op) + ": stride must be >= 1, padding >= 0, Q >= 1");
  return d;
}

// Power rows x^1..x^Q for one (b, ci) row.
void fill_powers(const float* x, int len, int q, std::vector<float>& pows) {
  pows.resize(static_cast<std::size_t>(q) * len);
  std::memcpy(pows.data(), x, sizeof(float) * len);
  for (int p = 1; p < q; ++p) {
    const float* prev = pows.data() + static_cast<std::size_t>(p - 1) * len;
    float* cur = pows.data() + static_cast<std::size_t>(p) * len;
    for (int t = 0; t < len; ++t) cur[t] = prev[t] * x[t];
  }
}

}  // namespace

Tensor selfonn_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                      int stride, int padding) {
  ConvDims d = conv_dims(x, w, bias, stride, padding, "selfonn_conv1d");
  int lout = (d.len + 2 * padding - d.kernel) / stride + 1;
  require(d.len + 2 * padding >= d.kernel,
          "selfonn_conv1d: kernel longer than padded input");
  d.lout = lout;

  Tensor y = Tensor::zeros({d.batch, d.cout, lout});
  {
    const float* xv = x.values().data();
    const float* wv = w.values().data();
    const float* bv = bias.values().data();
    float* yv = y.values().data();
    for (int b = 0; b < d.batch; ++b)
      for (int co = 0; co < d.cout; ++co) {
        float* row = yv + (static_cast<std::size_t>(b) * d.cout + co) * lout;
        for (int l = 0; l < lout; ++l) row[l] = bv[co];
      }
    std::vector<float> pows;
    for (int b = 0; b < d.batch; ++b) {
      for (int ci = 0; ci < d.cin; ++ci) {
        const float* xrow = xv + (static_cast<std::size_t>(b) * d.cin + ci) * d.len;
        fill_powers(xrow, d.len, d.q, pows);
        for (int q = 0; q < d.q; ++q) {
          const float* prow = pows.data() + static_cast<std::size_t>(q) * d.len;
          for (int co = 0; co < d.cout; ++co) {
            float* yrow = yv + (static_cast<std::size_t>(b) * d.cout + co) * lout;
            const float* wrow =
                wv + ((static_cast<std::size_t>(q) * d.cout + co) * d.cin + ci) * d.kernel;
            for (int k = 0; k < d.kernel; ++k) {
              float wk = wrow[k];
              int lmin = std::max(0, ceil_div(padding - k, stride));
              int lmax = std::min(lout - 1, floor_div(d.len - 1 + padding - k, stride));
              const float* src = prow + (static_cast<std::size_t>(lmin) * stride + k - padding);
              for (int l = lmin; l <= lmax; ++l, src += stride) yrow[l] += wk * *src;
            }
          }
        }
      }
    }
  }
  check_finite(y, "selfonn_conv1d");

  // Trainability is captured now: a tensor frozen during the forward stays
  // out of the backward even if its flag is flipped back before then.
  bool needs = x.requires_grad() || w.requires_grad() || bias.requires_grad();
  record(needs, y, [xi = x.impl(), wi = w.impl(), bi = bias.impl(), yi = y.impl(),
                    need_x = x.requires_grad(), need_w = w.requires_grad(),
                    need_b = bias.requires_grad(), d, stride, padding]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    if (need_b) {
      accumulate(bi->grad, bi->values.size());
      for (int b = 0; b < d.batch; ++b)
        for (int co = 0; co < d.cout; ++co) {
          const float* g = dy.data() + (static_cast<std::size_t>(b) * d.cout + co) * d.lout;
          float acc = 0.0f;
          for (int l = 0; l < d.lout; ++l) acc += g[l];
          bi->grad[co] += acc;
        }
    }
    if (!need_x && !need_w) return;
    if (need_x) accumulate(xi->grad, xi->values.size());
    if (need_w) accumulate(wi->grad, wi->values.size());
    std::vector<float> pows, tmp(static_cast<std::size_t>(d.len));
    for (int b = 0; b < d.batch; ++b) {
      for (int ci = 0; ci < d.cin; ++ci) {
        const float* xrow =
            xi->values.data() + (static_cast<std::size_t>(b) * d.cin + ci) * d.len;
        fill_powers(xrow, d.len, d.q, pows);
        for (int q = 0; q < d.q; ++q) {
          const float* prow = pows.data() + static_cast<std::size_t>(q) * d.len;
          if (need_x) std::fill(tmp.begin(), tmp.end(), 0.0f);
          for (int co = 0; co < d.cout; ++co) {
            const float* g =
                dy.data() + (static_cast<std::size_t>(b) * d.cout + co) * d.lout;
            std::size_t wbase =
                ((static_cast<std::size_t>(q) * d.cout + co) * d.cin + ci) * d.kernel;
            for (int k = 0; k < d.kernel; ++k) {
              int lmin = std::max(0, ceil_div(padding - k, stride));
              int lmax = std::min(d.lout - 1, floor_div(d.len - 1 + padding - k, stride));
              int t0 = lmin * stride + k - padding;
              if (need_w) {
                float acc = 0.0f;
                const float* src = prow + t0;
                for (int l = lmin; l <= lmax; ++l, src += stride) acc += g[l] * *src;
                wi->grad[wbase + k] += acc;
              }
              if (need_x) {
                float wk = wi->values[wbase + k];
                float* dst = tmp.data() + t0;
                for (int l = lmin; l <= lmax; ++l, dst += stride) *dst += wk * g[l];
              }
            }
          }
          if (need_x) {
            float* dxrow =
                xi->grad.data() + (static_cast<std::size_t>(b) * d.cin + ci) * d.len;
            if (q == 0) {
              for (int t = 0; t < d.len; ++t) dxrow[t] += tmp[t];
            } else {
              const float* prev = pows.data() + static_cast<std::size_t>(q - 1) * d.len;
              const float fq = static_cast<float>(q + 1);
              for (int t = 0; t < d.len; ++t) dxrow[t] += fq * prev[t] * tmp[t];
            }
          }
        }
      }
    }
  });
  return y;
}

Tensor selfonn_tconv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                       int stride, int padding, int output_padding) {
  ConvDims d = conv_dims(x, w, bias, stride, padding, "selfonn_tconv1d");
  if (output_padding < 0 || output_padding >= stride)
    throw ParameterError("selfonn_tconv1d: output padding must be in [0, stride)");
  int lout = (d.len - 1) * stride - 2 * padding + d.kernel + output_padding;
  require(lout >= 1, "selfonn_tconv1d: output would be empty");
  d.lout = lout;

  Tensor y = Tensor::zeros({d.batch, d.cout, lout});
  {
    const float* xv = x.values().data();
    const float* wv = w.values().data();
    const float* bv = bias.values().data();
    float* yv = y.values().data();
    for (int b = 0; b < d.batch; ++b)
      for (int co = 0; co < d.cout; ++co) {
        float* row = yv + (static_cast<std::size_t>(b) * d.cout + co) * lout;
        for (int l = 0; l < lout; ++l) row[l] = bv[co];
      }
    std::vector<float> pows;
    for (int b = 0; b < d.batch; ++b) {
      for (int ci = 0; ci < d.cin; ++ci) {
        const float* xrow = xv + (static_cast<std::size_t>(b) * d.cin + ci) * d.len;
        fill_powers(xrow, d.len, d.q, pows);
        for (int q = 0; q < d.q; ++q) {
          const float* prow = pows.data() + static_cast<std::size_t>(q) * d.len;
          for (int co = 0; co < d.cout; ++co) {
            float* yrow = yv + (static_cast<std::size_t>(b) * d.cout + co) * lout;
            const float* wrow =
                wv + ((static_cast<std::size_t>(q) * d.cout + co) * d.cin + ci) * d.kernel;
            for (int k = 0; k < d.kernel; ++k) {
              float wk = wrow[k];
              int lmin = std::max(0, ceil_div(padding - k, stride));
              int lmax = std::min(d.len - 1, floor_div(lout - 1 + padding - k, stride));
              float* dst = yrow + (static_cast<std::size_t>(lmin) * stride + k - padding);
              for (int l = lmin; l <= lmax; ++l, dst += stride) *dst += wk * prow[l];
            }
          }
        }
      }
    }
  }
  check_finite(y, "selfonn_tconv1d");

  bool needs = x.requires_grad() || w.requires_grad() || bias.requires_grad();
  record(needs, y, [xi = x.impl(), wi = w.impl(), bi = bias.impl(), yi = y.impl(),
                    need_x = x.requires_grad(), need_w = w.requires_grad(),
                    need_b = bias.requires_grad(), d, stride, padding]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    if (need_b) {
      accumulate(bi->grad, bi->values.size());
      for (int b = 0; b < d.batch; ++b)
        for (int co = 0; co < d.cout; ++co) {
          const float* g = dy.data() + (static_cast<std::size_t>(b) * d.cout + co) * d.lout;
          float acc = 0.0f;
          for (int l = 0; l < d.lout; ++l) acc += g[l];
          bi->grad[co] += acc;
        }
    }
    if (!need_x && !need_w) return;
    if (need_x) accumulate(xi->grad, xi->values.size());
    if (need_w) accumulate(wi->grad, wi->values.size());
    std::vector<float> pows, tmp(static_cast<std::size_t>(d.len));
    for (int b = 0; b < d.batch; ++b) {
      for (int ci = 0; ci < d.cin; ++ci) {
        const float* xrow =
            xi->values.data() + (static_cast<std::size_t>(b) * d.cin + ci) * d.len;
        fill_powers(xrow, d.len, d.q, pows);
        for (int q = 0; q < d.q; ++q) {
          const float* prow = pows.data() + static_cast<std::size_t>(q) * d.len;
          if (need_x) std::fill(tmp.begin(), tmp.end(), 0.0f);
          for (int co = 0; co < d.cout; ++co) {
            const float* g =
                dy.data() + (static_cast<std::size_t>(b) * d.cout + co) * d.lout;
            std::size_t wbase =
                ((static_cast<std::size_t>(q) * d.cout + co) * d.cin + ci) * d.kernel;
            for (int k = 0; k < d.kernel; ++k) {
              int lmin = std::max(0, ceil_div(padding - k, stride));
              int lmax = std::min(d.len - 1, floor_div(d.lout - 1 + padding - k, stride));
              int t0 = lmin * stride + k - padding;
              if (need_w) {
                float acc = 0.0f;
                const float* src = g + t0;
                for (int l = lmin; l <= lmax; ++l, src += stride) acc += prow[l] * *src;
                wi->grad[wbase + k] += acc;
              }
              if (need_x) {
                float wk = wi->values[wbase + k];
                const float* src = g + t0;
                for (int l = lmin; l <= lmax; ++l, src += stride) tmp[l] += wk * *src;
              }
            }
          }
          if (need_x) {
            float* dxrow =
                xi->grad.data() + (static_cast<std::size_t>(b) * d.cin + ci) * d.len;
            if (q == 0) {
              for (int t = 0; t < d.len; ++t) dxrow[t] += tmp[t];
            } else {
              const float* prev = pows.data() + static_cast<std::size_t>(q - 1) * d.len;
              const float fq = static_cast<float>(q + 1);
              for (int t = 0; t < d.len; ++t) dxrow[t] += fq * prev[t] * tmp[t];
            }
          }
        }
      }
    }
  });
  return y;
}

// ---- normalization ----------------------------------------------------------

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     float eps) {
  require(x.shape().size() == 3, "instance_norm: input must be [B,C,L]");
  const int batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
  if (len < 2) throw DimensionError("instance_norm: length must be >= 2");
  require(gamma.shape() == Shape{ch} && beta.shape() == Shape{ch},
          "instance_norm: affine parameters must be [C]");

  Tensor y = Tensor::zeros(x.shape());
  {
    const float* xv = x.values().data();
    const float* gv = gamma.values().data();
    const float* bv = beta.values().data();
    float* yv = y.values().data();
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < ch; ++c) {
        const float* row = xv + (static_cast<std::size_t>(b) * ch + c) * len;
        float* out = yv + (static_cast<std::size_t>(b) * ch + c) * len;
        double mu = 0.0;
        for (int t = 0; t < len; ++t) mu += row[t];
        mu /= len;
        double var = 0.0;
        for (int t = 0; t < len; ++t) {
          double dv = row[t] - mu;
          var += dv * dv;
        }
        var /= len;
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        const float mean = static_cast<float>(mu);
        const float g = gv[c], be = bv[c];
        for (int t = 0; t < len; ++t) out[t] = g * ((row[t] - mean) * inv) + be;
      }
    }
  }
  check_finite(y, "instance_norm");

  bool needs = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  record(needs, y, [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(),
                    yi = y.impl(), need_x = x.requires_grad(),
                    need_g = gamma.requires_grad(), need_b = beta.requires_grad(),
                    batch, ch, len, eps]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    if (need_x) accumulate(xi->grad, xi->values.size());
    if (need_g) accumulate(gi->grad, gi->values.size());
    if (need_b) accumulate(bi->grad, bi->values.size());
    std::vector<float> xhat(static_cast<std::size_t>(len));
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < ch; ++c) {
        const std::size_t base = (static_cast<std::size_t>(b) * ch + c) * len;
        const float* row = xi->values.data() + base;
        const float* g = dy.data() + base;
        double mu = 0.0;
        for (int t = 0; t < len; ++t) mu += row[t];
        mu /= len;
        double var = 0.0;
        for (int t = 0; t < len; ++t) {
          double dv = row[t] - mu;
          var += dv * dv;
        }
        var /= len;
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        const float mean = static_cast<float>(mu);
        for (int t = 0; t < len; ++t) xhat[t] = (row[t] - mean) * inv;
        if (need_b) {
          float acc = 0.0f;
          for (int t = 0; t < len; ++t) acc += g[t];
          bi->grad[c] += acc;
        }
        if (need_g) {
          float acc = 0.0f;
          for (int t = 0; t < len; ++t) acc += g[t] * xhat[t];
          gi->grad[c] += acc;
        }
        if (need_x) {
          const float gam = gi->values[c];
          double m1 = 0.0, m2 = 0.0;
          for (int t = 0; t < len; ++t) {
            double dxh = static_cast<double>(g[t]) * gam;
            m1 += dxh;
            m2 += dxh * xhat[t];
          }
          m1 /= len;
          m2 /= len;
          float* dx = xi->grad.data() + base;
          const float fm1 = static_cast<float>(m1), fm2 = static_cast<float>(m2);
          for (int t = 0; t < len; ++t)
            dx[t] += inv * (g[t] * gam - fm1 - xhat[t] * fm2);
        }
      }
    }
  });
  return y;
}

// ---- pointwise --------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Bwd make_bwd) {
  Tensor y = Tensor::zeros(x.shape());
  auto xv = x.values();
  auto yv = y.values();
  for (std::size_t k = 0; k < xv.size(); ++k) yv[k] = fwd(xv[k]);
  check_finite(y, name);
  record(x.requires_grad(), y, make_bwd(x.impl(), y.impl()));
  return y;
}

}  // namespace

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](float v) { return std::tanh(v); },
      [](std::shared_ptr<TensorImpl> xi, std::shared_ptr<TensorImpl> yi) {
        return [xi, yi]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          accumulate(xi->grad, xi->values.size());
          for (std::size_t k = 0; k < dy.size(); ++k) {
            float yv = yi->values[k];
            xi->grad[k] += dy[k] * (1.0f - yv * yv);
          }
        };
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid", [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](std::shared_ptr<TensorImpl> xi, std::shared_ptr<TensorImpl> yi) {
        return [xi, yi]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          accumulate(xi->grad, xi->values.size());
          for (std::size_t k = 0; k < dy.size(); ++k) {
            float yv = yi->values[k];
            xi->grad[k] += dy[k] * yv * (1.0f - yv);
          }
        };
      });
}

Tensor dropout(const Tensor& x, float rate, bool train, std::uint64_t seed) {
  if (rate < 0.0f || rate >= 1.0f)
    throw ParameterError("dropout: rate must lie in [0, 1)");
  if (!train || rate == 0.0f) {
    // Identity, but still a fresh tensor so the graph stays uniform.
    Tensor y = Tensor::from_values(x.shape(),
                                   {x.values().begin(), x.values().end()});
    record(x.requires_grad(), y, [xi = x.impl(), yi = y.impl()]() {
      auto dy = out_grad(yi);
      if (dy.empty()) return;
      accumulate(xi->grad, xi->values.size());
      for (std::size_t k = 0; k < dy.size(); ++k) xi->grad[k] += dy[k];
    });
    return y;
  }
  Tensor y = Tensor::zeros(x.shape());
  auto mask = std::make_shared<std::vector<std::uint8_t>>(x.values().size());
  {
    Rng rng(Rng::mix(seed, 0xD207));
    const float keep_scale = 1.0f / (1.0f - rate);
    auto xv = x.values();
    auto yv = y.values();
    for (std::size_t k = 0; k < xv.size(); ++k) {
      bool keep = rng.uniform() >= rate;
      (*mask)[k] = keep;
      yv[k] = keep ? xv[k] * keep_scale : 0.0f;
    }
  }
  check_finite(y, "dropout");
  record(x.requires_grad(), y, [xi = x.impl(), yi = y.impl(), mask,
                                keep_scale = 1.0f / (1.0f - rate)]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    accumulate(xi->grad, xi->values.size());
    for (std::size_t k = 0; k < dy.size(); ++k)
      if ((*mask)[k]) xi->grad[k] += dy[k] * keep_scale;
  });
  return y;
}

Tensor adaptive_avg_pool1d(const Tensor& x) {
  require(x.shape().size() == 3, "adaptive_avg_pool1d: input must be [B,C,L]");
  const int batch = x.shape()[0], ch = x.shape()[1], len = x.shape()[2];
  Tensor y = Tensor::zeros({batch, ch, 1});
  auto xv = x.values();
  auto yv = y.values();
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < ch; ++c) {
      const float* row = xv.data() + (static_cast<std::size_t>(b) * ch + c) * len;
      double acc = 0.0;
      for (int t = 0; t < len; ++t) acc += row[t];
      yv[static_cast<std::size_t>(b) * ch + c] = static_cast<float>(acc / len);
    }
  check_finite(y, "adaptive_avg_pool1d");
  record(x.requires_grad(), y, [xi = x.impl(), yi = y.impl(), batch, ch, len]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    accumulate(xi->grad, xi->values.size());
    const float inv = 1.0f / static_cast<float>(len);
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < ch; ++c) {
        float g = dy[static_cast<std::size_t>(b) * ch + c] * inv;
        float* dst = xi->grad.data() + (static_cast<std::size_t>(b) * ch + c) * len;
        for (int t = 0; t < len; ++t) dst[t] += g;
      }
  });
  return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.shape().size() == 2, "linear: input must be [B,F]");
  require(w.shape().size() == 2, "linear: weights must be [Out,F]");
  require(bias.shape().size() == 1, "linear: bias must be [Out]");
  const int batch = x.shape()[0], feat = x.shape()[1], out = w.shape()[0];
  require(w.shape()[1] == feat, "linear: weight feature size mismatch");
  require(bias.shape()[0] == out, "linear: bias size mismatch");

  Tensor y = Tensor::zeros({batch, out});
  {
    auto xv = x.values();
    auto wv = w.values();
    auto bv = bias.values();
    auto yv = y.values();
    for (int b = 0; b < batch; ++b)
      for (int o = 0; o < out; ++o) {
        const float* xr = xv.data() + static_cast<std::size_t>(b) * feat;
        const float* wr = wv.data() + static_cast<std::size_t>(o) * feat;
        float acc = bv[o];
        for (int f = 0; f < feat; ++f) acc += wr[f] * xr[f];
        yv[static_cast<std::size_t>(b) * out + o] = acc;
      }
  }
  check_finite(y, "linear");
  bool needs = x.requires_grad() || w.requires_grad() || bias.requires_grad();
  record(needs, y, [xi = x.impl(), wi = w.impl(), bi = bias.impl(), yi = y.impl(),
                    need_x = x.requires_grad(), need_w = w.requires_grad(),
                    need_b = bias.requires_grad(), batch, feat, out]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    if (need_b) {
      accumulate(bi->grad, bi->values.size());
      for (int b = 0; b < batch; ++b)
        for (int o = 0; o < out; ++o)
          bi->grad[o] += dy[static_cast<std::size_t>(b) * out + o];
    }
    if (need_w) {
      accumulate(wi->grad, wi->values.size());
      for (int b = 0; b < batch; ++b)
        for (int o = 0; o < out; ++o) {
          float g = dy[static_cast<std::size_t>(b) * out + o];
          const float* xr = xi->values.data() + static_cast<std::size_t>(b) * feat;
          float* wg = wi->grad.data() + static_cast<std::size_t>(o) * feat;
          for (int f = 0; f < feat; ++f) wg[f] += g * xr[f];
        }
    }
    if (need_x) {
      accumulate(xi->grad, xi->values.size());
      for (int b = 0; b < batch; ++b)
        for (int o = 0; o < out; ++o) {
          float g = dy[static_cast<std::size_t>(b) * out + o];
          const float* wr = wi->values.data() + static_cast<std::size_t>(o) * feat;
          float* xg = xi->grad.data() + static_cast<std::size_t>(b) * feat;
          for (int f = 0; f < feat; ++f) xg[f] += g * wr[f];
        }
    }
  });
  return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 3 && b.shape().size() == 3,
          "concat_channels: inputs must be [B,C,L]");
  require(a.shape()[0] == b.shape()[0] && a.shape()[2] == b.shape()[2],
          "concat_channels: batch/length mismatch between " + shape_str(a.shape()) +
              " and " + shape_str(b.shape()));
  const int batch = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1],
            len = a.shape()[2];
  Tensor y = Tensor::zeros({batch, ca + cb, len});
  auto av = a.values();
  auto bv = b.values();
  auto yv = y.values();
  const std::size_t arow = static_cast<std::size_t>(ca) * len;
  const std::size_t brow = static_cast<std::size_t>(cb) * len;
  for (int i = 0; i < batch; ++i) {
    std::memcpy(yv.data() + i * (arow + brow), av.data() + i * arow,
                arow * sizeof(float));
    std::memcpy(yv.data() + i * (arow + brow) + arow, bv.data() + i * brow,
                brow * sizeof(float));
  }
  check_finite(y, "concat_channels");
  record(a.requires_grad() || b.requires_grad(), y,
         [ai = a.impl(), bi = b.impl(), yi = y.impl(), need_a = a.requires_grad(),
          need_b = b.requires_grad(), batch, arow, brow]() {
           auto dy = out_grad(yi);
           if (dy.empty()) return;
           if (need_a) {
             accumulate(ai->grad, ai->values.size());
             for (int i = 0; i < batch; ++i) {
               const float* g = dy.data() + i * (arow + brow);
               float* dst = ai->grad.data() + i * arow;
               for (std::size_t k = 0; k < arow; ++k) dst[k] += g[k];
             }
           }
           if (need_b) {
             accumulate(bi->grad, bi->values.size());
             for (int i = 0; i < batch; ++i) {
               const float* g = dy.data() + i * (arow + brow) + arow;
               float* dst = bi->grad.data() + i * brow;
               for (std::size_t k = 0; k < brow; ++k) dst[k] += g[k];
             }
           }
         });
  return y;
}

namespace {

template <typename Fwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                 std::function<void(std::shared_ptr<TensorImpl>, std::shared_ptr<TensorImpl>,
                                    std::shared_ptr<TensorImpl>)>
                     push_bwd) {
  require(a.shape() == b.shape(), std::string(name) + ": shape mismatch between " +
                                      shape_str(a.shape()) + " and " + shape_str(b.shape()));
  Tensor y = Tensor::zeros(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto yv = y.values();
  for (std::size_t k = 0; k < av.size(); ++k) yv[k] = fwd(av[k], bv[k]);
  check_finite(y, name);
  if ((a.requires_grad() || b.requires_grad()) && Tape::active().recording()) {
    y.set_requires_grad(true);
    push_bwd(a.impl(), b.impl(), y.impl());
  }
  return y;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](float x, float yv) { return x + yv; },
      [](auto ai, auto bi, auto yi) {
        Tape::active().push([ai, bi, yi, na = ai->requires_grad,
                             nb = bi->requires_grad]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          if (na) {
            accumulate(ai->grad, ai->values.size());
            for (std::size_t k = 0; k < dy.size(); ++k) ai->grad[k] += dy[k];
          }
          if (nb) {
            accumulate(bi->grad, bi->values.size());
            for (std::size_t k = 0; k < dy.size(); ++k) bi->grad[k] += dy[k];
          }
        });
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](float x, float yv) { return x - yv; },
      [](auto ai, auto bi, auto yi) {
        Tape::active().push([ai, bi, yi, na = ai->requires_grad,
                             nb = bi->requires_grad]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          if (na) {
            accumulate(ai->grad, ai->values.size());
            for (std::size_t k = 0; k < dy.size(); ++k) ai->grad[k] += dy[k];
          }
          if (nb) {
            accumulate(bi->grad, bi->values.size());
            for (std::size_t k = 0; k < dy.size(); ++k) bi->grad[k] -= dy[k];
          }
        });
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](float x, float yv) { return x * yv; },
      [](auto ai, auto bi, auto yi) {
        Tape::active().push([ai, bi, yi, na = ai->requires_grad,
                             nb = bi->requires_grad]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          if (na) {
            accumulate(ai->grad, ai->values.size());
            for (std::size_t k = 0; k < dy.size(); ++k)
              ai->grad[k] += dy[k] * bi->values[k];
          }
          if (nb) {
            accumulate(bi->grad, bi->values.size());
            for (std::size_t k = 0; k < dy.size(); ++k)
              bi->grad[k] += dy[k] * ai->values[k];
          }
        });
      });
}

Tensor scale(const Tensor& x, float c) {
  return unary_op(
      x, "scale", [c](float v) { return v * c; },
      [c](std::shared_ptr<TensorImpl> xi, std::shared_ptr<TensorImpl> yi) {
        return [xi, yi, c]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          accumulate(xi->grad, xi->values.size());
          for (std::size_t k = 0; k < dy.size(); ++k) xi->grad[k] += dy[k] * c;
        };
      });
}

Tensor add_scalar(const Tensor& x, float c) {
  return unary_op(
      x, "add_scalar", [c](float v) { return v + c; },
      [](std::shared_ptr<TensorImpl> xi, std::shared_ptr<TensorImpl> yi) {
        return [xi, yi]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          accumulate(xi->grad, xi->values.size());
          for (std::size_t k = 0; k < dy.size(); ++k) xi->grad[k] += dy[k];
        };
      });
}

Tensor elementwise_power(const Tensor& x, int q) {
  if (q < 1) throw ParameterError("elementwise_power: exponent must be >= 1");
  auto powi = [q](float v) {
    float r = v;
    for (int i = 1; i < q; ++i) r *= v;
    return r;
  };
  return unary_op(
      x, "elementwise_power", powi,
      [q](std::shared_ptr<TensorImpl> xi, std::shared_ptr<TensorImpl> yi) {
        return [xi, yi, q]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          accumulate(xi->grad, xi->values.size());
          for (std::size_t k = 0; k < dy.size(); ++k) {
            float v = xi->values[k];
            float p = 1.0f;
            for (int i = 1; i < q; ++i) p *= v;
            xi->grad[k] += dy[k] * static_cast<float>(q) * p;
          }
        };
      });
}

Tensor clamp_min(const Tensor& x, float floor) {
  return unary_op(
      x, "clamp_min", [floor](float v) { return v > floor ? v : floor; },
      [floor](std::shared_ptr<TensorImpl> xi, std::shared_ptr<TensorImpl> yi) {
        return [xi, yi, floor]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          accumulate(xi->grad, xi->values.size());
          for (std::size_t k = 0; k < dy.size(); ++k)
            if (xi->values[k] > floor) xi->grad[k] += dy[k];
        };
      });
}

Tensor log10(const Tensor& x) {
  for (float v : x.values())
    if (v <= 0.0f)
      throw NumericError("log10: input must be strictly positive");
  constexpr float kInvLn10 = 0.4342944819032518f;
  return unary_op(
      x, "log10", [](float v) { return std::log10(v); },
      [](std::shared_ptr<TensorImpl> xi, std::shared_ptr<TensorImpl> yi) {
        return [xi, yi]() {
          auto dy = out_grad(yi);
          if (dy.empty()) return;
          accumulate(xi->grad, xi->values.size());
          for (std::size_t k = 0; k < dy.size(); ++k)
            xi->grad[k] += dy[k] * kInvLn10 / xi->values[k];
        };
      });
}

Tensor mean_all(const Tensor& x) {
  Tensor y = Tensor::zeros({1});
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  y.values()[0] = static_cast<float>(acc / static_cast<double>(x.numel()));
  check_finite(y, "mean_all");
  record(x.requires_grad(), y, [xi = x.impl(), yi = y.impl()]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    accumulate(xi->grad, xi->values.size());
    const float g = dy[0] / static_cast<float>(xi->values.size());
    for (std::size_t k = 0; k < xi->values.size(); ++k) xi->grad[k] += g;
  });
  return y;
}

Tensor mean_per_item(const Tensor& x) {
  require(x.shape().size() >= 2, "mean_per_item: input must have a batch dimension");
  const int batch = x.shape()[0];
  const std::size_t inner = static_cast<std::size_t>(x.numel()) / batch;
  Tensor y = Tensor::zeros({batch});
  auto xv = x.values();
  auto yv = y.values();
  for (int b = 0; b < batch; ++b) {
    double acc = 0.0;
    const float* row = xv.data() + b * inner;
    for (std::size_t k = 0; k < inner; ++k) acc += row[k];
    yv[b] = static_cast<float>(acc / static_cast<double>(inner));
  }
  check_finite(y, "mean_per_item");
  record(x.requires_grad(), y, [xi = x.impl(), yi = y.impl(), batch, inner]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    accumulate(xi->grad, xi->values.size());
    for (int b = 0; b < batch; ++b) {
      const float g = dy[b] / static_cast<float>(inner);
      float* dst = xi->grad.data() + b * inner;
      for (std::size_t k = 0; k < inner; ++k) dst[k] += g;
    }
  });
  return y;
}

Tensor reshape(const Tensor& x, Shape shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  require(n == static_cast<std::size_t>(x.numel()),
          "reshape: element count mismatch for " + shape_str(shape));
  Tensor y = Tensor::from_values(std::move(shape),
                                 {x.values().begin(), x.values().end()});
  record(x.requires_grad(), y, [xi = x.impl(), yi = y.impl()]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    accumulate(xi->grad, xi->values.size());
    for (std::size_t k = 0; k < dy.size(); ++k) xi->grad[k] += dy[k];
  });
  return y;
}

Tensor detach(const Tensor& x) {
  return Tensor::from_values(x.shape(), {x.values().begin(), x.values().end()});
}

Tensor stft_magnitude(const Tensor& x, const StftPlan& plan) {
  require(x.shape().size() == 3 && x.shape()[1] == 2,
          "stft_magnitude: input must be [B,2,L]");
  const int batch = x.shape()[0], len = x.shape()[2];
  const int frames = plan.frames_for(len);
  require(frames > 0, "stft_magnitude: signal shorter than the analysis window");
  const int bins = plan.bins();

  Tensor y = Tensor::zeros({batch, frames, bins});
  auto xv = x.values();
  auto yv = y.values();
  const std::size_t grid = static_cast<std::size_t>(frames) * bins;
  for (int b = 0; b < batch; ++b) {
    const float* xi = xv.data() + static_cast<std::size_t>(b) * 2 * len;
    const float* xq = xi + len;
    stft_magnitude_grid(plan, xi, xq, len, yv.data() + b * grid);
  }
  check_finite(y, "stft_magnitude");

  record(x.requires_grad(), y, [xi = x.impl(), yi = y.impl(), &plan, batch, len,
                                frames, bins, grid]() {
    auto dy = out_grad(yi);
    if (dy.empty()) return;
    accumulate(xi->grad, xi->values.size());
    const int w = plan.window_len;
    for (int b = 0; b < batch; ++b) {
      const float* si = xi->values.data() + static_cast<std::size_t>(b) * 2 * len;
      const float* sq = si + len;
      float* gi = xi->grad.data() + static_cast<std::size_t>(b) * 2 * len;
      float* gq = gi + len;
      for (int f = 0; f < frames; ++f) {
        const int t0 = f * plan.hop;
        for (int m = 0; m < bins; ++m) {
          const float g = dy[b * grid + static_cast<std::size_t>(f) * bins + m];
          if (g == 0.0f) continue;
          const float* ct = &plan.cos_table[static_cast<std::size_t>(m) * w];
          const float* st = &plan.sin_table[static_cast<std::size_t>(m) * w];
          // Recompute the frame bin; magnitudes alone do not determine phase.
          float re = 0.0f, im = 0.0f;
          for (int k = 0; k < w; ++k) {
            float wi = plan.window[k] * si[t0 + k];
            float wq = plan.window[k] * sq[t0 + k];
            re += wi * ct[k] + wq * st[k];
            im += wq * ct[k] - wi * st[k];
          }
          const float mag = yi->values[b * grid + static_cast<std::size_t>(f) * bins + m];
          const float gre = g * re / mag;
          const float gim = g * im / mag;
          for (int k = 0; k < w; ++k) {
            const float win = plan.window[k];
            gi[t0 + k] += win * (ct[k] * gre - st[k] * gim);
            gq[t0 + k] += win * (st[k] * gre + ct[k] * gim);
          }
        }
      }
    }
  });
  return y;
}

}  // namespace corenet::ad
