#include "corenet/losses.hpp"

#include <cmath>

#include "corenet/error.hpp"
#include "corenet/metrics.hpp"
#include "corenet/rng.hpp"
#include "corenet/signal.hpp"

namespace corenet {

namespace {

using ad::Tensor;

Tensor squeeze_scores(const Tensor& scores) {
  return ad::reshape(scores, {scores.shape()[0]});
}

}  // namespace

ComplexSignal tensor_item_signal(const Tensor& batch, int b) {
  if (batch.shape().size() != 3 || batch.shape()[1] != 2)
    throw DimensionError("tensor_item_signal: tensor must be [B,2,L]");
  if (b < 0 || b >= batch.shape()[0])
    throw DimensionError("tensor_item_signal: item index out of range");
  const int len = batch.shape()[2];
  ComplexSignal s(static_cast<std::size_t>(len));
  auto v = batch.values();
  const float* row = v.data() + static_cast<std::size_t>(b) * 2 * len;
  for (int k = 0; k < len; ++k) s.i[k] = row[k];
  for (int k = 0; k < len; ++k) s.q[k] = row[len + k];
  return s;
}

const StftPlan& loss_stft_plan() {
  static const StftPlan plan(64, 16);
  return plan;
}

ad::Tensor psnr_per_item(const Tensor& pred, const Tensor& reference) {
  if (pred.shape() != reference.shape())
    throw DimensionError("psnr_per_item: shape mismatch");
  if (pred.shape().size() < 2)
    throw DimensionError("psnr_per_item: inputs need a batch dimension");
  const int batch = pred.shape()[0];
  const std::size_t inner = static_cast<std::size_t>(pred.numel()) / batch;

  // Per-item peak of the reference. The reference carries no gradient, so the
  // numerator of the ratio is a constant offset in dB.
  std::vector<float> offset(static_cast<std::size_t>(batch));
  auto rv = reference.values();
  for (int b = 0; b < batch; ++b) {
    const float* row = rv.data() + b * inner;
    float peak = row[0];
    for (std::size_t k = 1; k < inner; ++k) peak = std::max(peak, row[k]);
    double p2 = static_cast<double>(peak) * peak;
    offset[b] = static_cast<float>(10.0 * std::log10(std::max(p2, 1e-12)));
  }
  Tensor offs = Tensor::from_values({batch}, std::move(offset));

  Tensor diff = ad::sub(pred, reference);
  Tensor mse = ad::mean_per_item(ad::mul(diff, diff));
  Tensor lg = ad::log10(ad::clamp_min(mse, 1e-12f));
  return ad::add(offs, ad::scale(lg, -10.0f));
}

std::vector<float> restoration_labels(const Tensor& clean, const Tensor& restored,
                                      float psnr_target_db) {
  if (clean.shape() != restored.shape() || clean.shape().size() != 3)
    throw DimensionError("restoration_labels: inputs must be matching [B,2,L]");
  const int batch = clean.shape()[0];
  std::vector<float> labels(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    ComplexSignal c = tensor_item_signal(clean, b);
    ComplexSignal r = tensor_item_signal(restored, b);
    labels[b] = static_cast<float>(
        restoration_label(c, r, static_cast<double>(psnr_target_db)));
  }
  return labels;
}

ApprenticeLoss loss_apprentice(const ParamMap& apprentice, const ApprenticeConfig& acfg,
                               ParamMap& master, const MasterConfig& mcfg,
                               const Tensor& received, const Tensor& clean,
                               const RunMode& mode, const LossWeights& weights) {
  RunMode ar_mode{mode.train, Rng::mix(mode.seed, 0xA1)};
  RunMode mr_mode{mode.train, Rng::mix(mode.seed, 0xF1)};

  Tensor restored = apprentice_forward(apprentice, acfg, received, ar_mode);

  Tensor scores;
  {
    FreezeGuard freeze(master);
    scores = master_forward(master, mcfg, received, restored, mr_mode);
  }
  Tensor gap = ad::add_scalar(squeeze_scores(scores), -1.0f);
  Tensor fid = ad::mean_all(ad::mul(gap, gap));

  Tensor psnr_t = psnr_per_item(restored, clean);
  Tensor neg_time = ad::scale(ad::mean_all(psnr_t), -1.0f);

  const StftPlan& plan = loss_stft_plan();
  Tensor grid_pred = ad::stft_magnitude(restored, plan);
  Tensor grid_ref = ad::stft_magnitude(clean, plan);
  Tensor psnr_f = psnr_per_item(grid_pred, grid_ref);
  Tensor neg_freq = ad::scale(ad::mean_all(psnr_f), -1.0f);

  Tensor total = ad::add(ad::scale(fid, weights.fidelity),
                         ad::add(ad::scale(neg_time, weights.time),
                                 ad::scale(neg_freq, weights.freq)));

  ApprenticeLoss out;
  out.total = total;
  out.restored = restored;
  out.fidelity_term = fid.item();
  out.time_term = neg_time.item();
  out.freq_term = neg_freq.item();
  return out;
}

MasterLoss loss_master(const ParamMap& master, const MasterConfig& mcfg,
                       const Tensor& received, const Tensor& clean,
                       const Tensor& restored, const RunMode& mode,
                       const LossWeights& weights) {
  if (restored.requires_grad())
    throw ParameterError("loss_master: restored candidate must be detached");
  RunMode real_mode{mode.train, Rng::mix(mode.seed, 0x2E)};
  RunMode rest_mode{mode.train, Rng::mix(mode.seed, 0x2F)};

  Tensor score_real = squeeze_scores(
      master_forward(master, mcfg, received, clean, real_mode));
  Tensor score_rest = squeeze_scores(
      master_forward(master, mcfg, received, restored, rest_mode));

  Tensor gap_real = ad::add_scalar(score_real, -1.0f);
  Tensor mse_real = ad::mean_all(ad::mul(gap_real, gap_real));

  std::vector<float> labels =
      restoration_labels(clean, restored, weights.psnr_target_db);
  Tensor lbl = Tensor::from_values({score_rest.shape()[0]}, std::move(labels));
  Tensor gap_rest = ad::sub(score_rest, lbl);
  Tensor mse_rest = ad::mean_all(ad::mul(gap_rest, gap_rest));

  MasterLoss out;
  out.total = ad::scale(ad::add(mse_real, mse_rest), 0.5f);
  out.real_term = mse_real.item();
  out.restored_term = mse_rest.item();
  return out;
}

}  // namespace corenet
