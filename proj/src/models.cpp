#include "corenet/models.hpp"

#include <cmath>
#include <stdexcept>

#include "corenet/error.hpp"
#include "corenet/rng.hpp"

namespace corenet {

namespace {

using ad::Tensor;

Tensor xavier_conv(int q, int cout, int cin, int kernel, Rng& rng) {
  // Each power slice gets its own fan-in/fan-out bound so higher-order terms
  // start at the same scale as the linear one.
  const double a =
      std::sqrt(6.0 / (static_cast<double>(cin) * kernel + static_cast<double>(cout) * kernel));
  std::vector<float> vals(static_cast<std::size_t>(q) * cout * cin * kernel);
  for (float& v : vals) v = static_cast<float>(rng.uniform(-a, a));
  return Tensor::from_values({q, cout, cin, kernel}, std::move(vals), true);
}

Tensor xavier_linear(int out, int feat, Rng& rng) {
  const double a = std::sqrt(6.0 / (static_cast<double>(feat) + out));
  std::vector<float> vals(static_cast<std::size_t>(out) * feat);
  for (float& v : vals) v = static_cast<float>(rng.uniform(-a, a));
  return Tensor::from_values({out, feat}, std::move(vals), true);
}

void add_res_block(ParamMap& p, const std::string& prefix, int cin, int cout,
                   int q, int kernel, Rng& rng) {
  p.emplace(prefix + ".conv.w", xavier_conv(q, cout, cin, kernel, rng));
  p.emplace(prefix + ".conv.b", Tensor::zeros({cout}, true));
  p.emplace(prefix + ".norm.g", Tensor::full({cout}, 1.0f, true));
  p.emplace(prefix + ".norm.b", Tensor::zeros({cout}, true));
  p.emplace(prefix + ".proj.w", xavier_conv(1, cout, cin, 1, rng));
  p.emplace(prefix + ".proj.b", Tensor::zeros({cout}, true));
}

std::size_t res_block_count(int cin, int cout, int q, int kernel) {
  std::size_t conv = static_cast<std::size_t>(q) * cout * cin * kernel + cout;
  std::size_t norm = 2 * static_cast<std::size_t>(cout);
  std::size_t proj = static_cast<std::size_t>(cout) * cin + cout;
  return conv + norm + proj;
}

// Decoder output widths mirror the encoder: [w[n-2], ..., w[0], w[0]].
std::vector<int> decoder_widths(const std::vector<int>& enc) {
  std::vector<int> out;
  for (std::size_t i = enc.size() - 1; i-- > 0;) out.push_back(enc[i]);
  out.push_back(enc.front());
  return out;
}

const Tensor& at(const ParamMap& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ParameterError("missing parameter: " + name);
  return it->second;
}

Tensor res_down(const ParamMap& p, const std::string& prefix, const Tensor& x,
                float dropout_rate, const RunMode& mode, std::uint64_t ordinal) {
  Tensor h = ad::selfonn_conv1d(x, at(p, prefix + ".conv.w"),
                                at(p, prefix + ".conv.b"), 2, 1);
  h = ad::instance_norm(h, at(p, prefix + ".norm.g"), at(p, prefix + ".norm.b"));
  h = ad::tanh(h);
  h = ad::dropout(h, dropout_rate, mode.train, Rng::mix(mode.seed, ordinal));
  Tensor s = ad::selfonn_conv1d(x, at(p, prefix + ".proj.w"),
                                at(p, prefix + ".proj.b"), 2, 0);
  return ad::add(h, s);
}

Tensor res_up(const ParamMap& p, const std::string& prefix, const Tensor& x,
              float dropout_rate, const RunMode& mode, std::uint64_t ordinal) {
  Tensor h = ad::selfonn_tconv1d(x, at(p, prefix + ".conv.w"),
                                 at(p, prefix + ".conv.b"), 2, 1, 1);
  h = ad::instance_norm(h, at(p, prefix + ".norm.g"), at(p, prefix + ".norm.b"));
  h = ad::tanh(h);
  h = ad::dropout(h, dropout_rate, mode.train, Rng::mix(mode.seed, ordinal));
  Tensor s = ad::selfonn_tconv1d(x, at(p, prefix + ".proj.w"),
                                 at(p, prefix + ".proj.b"), 2, 0, 1);
  return ad::add(h, s);
}

void check_widths(const std::vector<int>& widths, const char* which) {
  if (widths.size() < 2) throw ParameterError(std::string(which) + ": need at least two blocks");
  for (int w : widths)
    if (w < 1) throw ParameterError(std::string(which) + ": widths must be positive");
}

}  // namespace

ParamMap init_apprentice(const ApprenticeConfig& cfg, std::uint64_t seed) {
  check_widths(cfg.encoder_widths, "apprentice");
  Rng rng(Rng::mix(seed, 0xA77E));
  ParamMap p;
  int cin = 2;
  for (std::size_t i = 0; i < cfg.encoder_widths.size(); ++i) {
    add_res_block(p, "ar.enc" + std::to_string(i + 1), cin, cfg.encoder_widths[i],
                  cfg.q, cfg.kernel, rng);
    cin = cfg.encoder_widths[i];
  }
  const auto dec = decoder_widths(cfg.encoder_widths);
  for (std::size_t i = 0; i < dec.size(); ++i) {
    // First decoder block sees the bottleneck alone; later ones also take the
    // mirrored encoder activation through a channel concat.
    int in_ch = (i == 0) ? cfg.encoder_widths.back()
                         : dec[i - 1] + cfg.encoder_widths[cfg.encoder_widths.size() - 1 - i];
    add_res_block(p, "ar.dec" + std::to_string(i + 1), in_ch, dec[i], cfg.q,
                  cfg.kernel, rng);
  }
  p.emplace("ar.head.w", xavier_conv(cfg.q, 2, dec.back(), cfg.kernel, rng));
  p.emplace("ar.head.b", Tensor::zeros({2}, true));
  return p;
}

ParamMap init_master(const MasterConfig& cfg, std::uint64_t seed) {
  check_widths(cfg.widths, "master");
  Rng rng(Rng::mix(seed, 0x3A57));
  ParamMap p;
  int cin = 4;
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    add_res_block(p, "mr.blk" + std::to_string(i + 1), cin, cfg.widths[i], cfg.q,
                  cfg.kernel, rng);
    cin = cfg.widths[i];
  }
  p.emplace("mr.head.w", xavier_linear(1, cfg.widths.back(), rng));
  p.emplace("mr.head.b", Tensor::zeros({1}, true));
  return p;
}

ad::Tensor apprentice_forward(const ParamMap& params, const ApprenticeConfig& cfg,
                              const ad::Tensor& x, const RunMode& mode) {
  if (x.shape().size() != 3 || x.shape()[1] != 2)
    throw DimensionError("apprentice_forward: input must be [B,2,L]");
  const std::size_t n = cfg.encoder_widths.size();
  std::vector<Tensor> enc;
  enc.reserve(n);
  Tensor h = x;
  for (std::size_t i = 0; i < n; ++i) {
    h = res_down(params, "ar.enc" + std::to_string(i + 1), h, cfg.dropout_rate,
                 mode, i + 1);
    enc.push_back(h);
  }
  for (std::size_t i = 0; i < n; ++i) {
    Tensor in = (i == 0) ? h : ad::concat_channels(h, enc[n - 1 - i]);
    h = res_up(params, "ar.dec" + std::to_string(i + 1), in, cfg.dropout_rate,
               mode, n + i + 1);
  }
  Tensor out = ad::selfonn_tconv1d(h, at(params, "ar.head.w"),
                                   at(params, "ar.head.b"), 1, 1, 0);
  return ad::tanh(out);
}

ad::Tensor master_forward(const ParamMap& params, const MasterConfig& cfg,
                          const ad::Tensor& received, const ad::Tensor& candidate,
                          const RunMode& mode) {
  if (received.shape() != candidate.shape())
    throw DimensionError("master_forward: received/candidate shape mismatch");
  Tensor h = ad::concat_channels(received, candidate);
  for (std::size_t i = 0; i < cfg.widths.size(); ++i)
    h = res_down(params, "mr.blk" + std::to_string(i + 1), h, cfg.dropout_rate,
                 mode, 0x100 + i);
  h = ad::adaptive_avg_pool1d(h);
  h = ad::reshape(h, {h.shape()[0], h.shape()[1]});
  h = ad::linear(h, at(params, "mr.head.w"), at(params, "mr.head.b"));
  return ad::sigmoid(h);
}

std::size_t apprentice_param_count(const ApprenticeConfig& cfg) {
  check_widths(cfg.encoder_widths, "apprentice");
  std::size_t total = 0;
  int cin = 2;
  for (int w : cfg.encoder_widths) {
    total += res_block_count(cin, w, cfg.q, cfg.kernel);
    cin = w;
  }
  const auto dec = decoder_widths(cfg.encoder_widths);
  for (std::size_t i = 0; i < dec.size(); ++i) {
    int in_ch = (i == 0) ? cfg.encoder_widths.back()
                         : dec[i - 1] + cfg.encoder_widths[cfg.encoder_widths.size() - 1 - i];
    total += res_block_count(in_ch, dec[i], cfg.q, cfg.kernel);
  }
  total += static_cast<std::size_t>(cfg.q) * 2 * dec.back() * cfg.kernel + 2;
  return total;
}

std::size_t master_param_count(const MasterConfig& cfg) {
  check_widths(cfg.widths, "master");
  std::size_t total = 0;
  int cin = 4;
  for (int w : cfg.widths) {
    total += res_block_count(cin, w, cfg.q, cfg.kernel);
    cin = w;
  }
  total += static_cast<std::size_t>(cfg.widths.back()) + 1;
  return total;
}

std::size_t param_count(const ParamMap& params) {
  std::size_t total = 0;
  for (const auto& [name, t] : params) total += static_cast<std::size_t>(t.numel());
  return total;
}

void set_requires_grad(ParamMap& params, bool enabled) {
  for (auto& [name, t] : params) t.set_requires_grad(enabled);
}

FreezeGuard::FreezeGuard(ParamMap& params) : params_(params) {
  saved_.reserve(params_.size());
  for (auto& [name, t] : params_) {
    saved_.push_back(t.requires_grad());
    t.set_requires_grad(false);
  }
}

FreezeGuard::~FreezeGuard() {
  std::size_t k = 0;
  for (auto& [name, t] : params_) t.set_requires_grad(saved_[k++]);
}

}  // namespace corenet
