#include "corenet/training.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "corenet/error.hpp"
#include "corenet/hash.hpp"
#include "corenet/metrics.hpp"
#include "corenet/rng.hpp"
#include "corenet/signal.hpp"

namespace corenet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

using nlohmann::json;

// ---- optimizer ----------------------------------------------------------

AdamOptimizer::AdamOptimizer(const ParamMap& params, AdamConfig cfg)
    : params_(params), cfg_(cfg) {
  if (cfg_.beta1 <= 0.0f || cfg_.beta1 >= 1.0f || cfg_.beta2 <= 0.0f ||
      cfg_.beta2 >= 1.0f || cfg_.eps <= 0.0f)
    throw ParameterError("adam: betas must lie in (0,1) and eps must be positive");
  for (const auto& [name, t] : params_) {
    m_[name].assign(static_cast<std::size_t>(t.numel()), 0.0f);
    v_[name].assign(static_cast<std::size_t>(t.numel()), 0.0f);
  }
}

void AdamOptimizer::step(float lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const float inv_corr1 =
      static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(cfg_.beta1), t)));
  const float inv_corr2 =
      static_cast<float>(1.0 / (1.0 - std::pow(static_cast<double>(cfg_.beta2), t)));
  for (auto& [name, param] : params_) {
    auto vals = param.values();
    auto& m = m_[name];
    auto& v = v_[name];
    const bool has_grad = param.has_grad();
    std::span<const float> g =
        has_grad ? std::span<const float>(param.grad()) : std::span<const float>();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const float gk = has_grad ? g[k] : 0.0f;
      m[k] = cfg_.beta1 * m[k] + (1.0f - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0f - cfg_.beta2) * gk * gk;
      const float mhat = m[k] * inv_corr1;
      const float vhat = v[k] * inv_corr2;
      vals[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& [name, param] : params_) param.zero_grad();
}

void AdamOptimizer::set_state(std::map<std::string, std::vector<float>> m,
                              std::map<std::string, std::vector<float>> v,
                              std::uint64_t steps) {
  for (const auto& [name, param] : params_) {
    auto im = m.find(name);
    auto iv = v.find(name);
    if (im == m.end() || iv == v.end() ||
        im->second.size() != static_cast<std::size_t>(param.numel()) ||
        iv->second.size() != static_cast<std::size_t>(param.numel()))
      throw DataError("adam: restored moment state does not match parameter " + name);
  }
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = steps;
}

float cosine_lr(std::uint64_t t, float lr0, std::uint64_t t_max) {
  if (t_max == 0) throw ParameterError("cosine_lr: period must be positive");
  const double phase = static_cast<double>(t % t_max) / static_cast<double>(t_max);
  return static_cast<float>(0.5 * static_cast<double>(lr0) *
                            (1.0 + std::cos(std::numbers::pi * phase)));
}

// ---- checkpoints ---------------------------------------------------------

ParamMap deep_copy(const ParamMap& params) {
  ParamMap out;
  for (const auto& [name, t] : params)
    out.emplace(name, ad::Tensor::from_values(t.shape(),
                                              {t.values().begin(), t.values().end()},
                                              t.requires_grad()));
  return out;
}

namespace {

constexpr char kCkptMagic[8] = {'C', 'R', 'N', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

json apprentice_config_json(const ApprenticeConfig& c) {
  return json{{"encoder_widths", c.encoder_widths},
              {"q", c.q},
              {"kernel", c.kernel},
              {"dropout_rate", c.dropout_rate}};
}

json master_config_json(const MasterConfig& c) {
  return json{{"widths", c.widths},
              {"q", c.q},
              {"kernel", c.kernel},
              {"dropout_rate", c.dropout_rate}};
}

ApprenticeConfig apprentice_config_from_json(const json& j) {
  ApprenticeConfig c;
  c.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  c.q = j.at("q").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<float>();
  return c;
}

MasterConfig master_config_from_json(const json& j) {
  MasterConfig c;
  c.widths = j.at("widths").get<std::vector<int>>();
  c.q = j.at("q").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<float>();
  return c;
}

struct BlobEntry {
  ad::Shape shape;
  const std::vector<float>* data;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& d) {
  // Entries keyed by name; map order fixes both the table and the blob layout,
  // so identical data always serializes to identical bytes.
  std::map<std::string, BlobEntry> entries;
  std::map<std::string, std::vector<float>> param_storage;
  for (const auto& [name, t] : d.apprentice)
    param_storage["param." + name] = {t.values().begin(), t.values().end()};
  for (const auto& [name, t] : d.master)
    param_storage["param." + name] = {t.values().begin(), t.values().end()};
  for (const auto& [name, t] : d.apprentice)
    entries["param." + name] = {t.shape(), &param_storage["param." + name]};
  for (const auto& [name, t] : d.master)
    entries["param." + name] = {t.shape(), &param_storage["param." + name]};
  for (const auto& [name, vec] : d.adam_m)
    entries["adam.m." + name] = {ad::Shape{static_cast<int>(vec.size())}, &vec};
  for (const auto& [name, vec] : d.adam_v)
    entries["adam.v." + name] = {ad::Shape{static_cast<int>(vec.size())}, &vec};

  json table = json::array();
  std::vector<float> blob;
  for (const auto& [name, e] : entries) {
    table.push_back(json{{"name", name},
                         {"shape", e.shape},
                         {"offset", blob.size()},
                         {"count", e.data->size()}});
    blob.insert(blob.end(), e.data->begin(), e.data->end());
  }

  json header{{"apprentice_config", apprentice_config_json(d.acfg)},
              {"master_config", master_config_json(d.mcfg)},
              {"pass_index", d.pass_index},
              {"val_snr_db", d.val_snr_db},
              {"seed", d.seed},
              {"apprentice_steps", d.apprentice_steps},
              {"master_steps", d.master_steps},
              {"tensors", std::move(table)}};
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  out.write(kCkptMagic, sizeof(kCkptMagic));
  out.write(reinterpret_cast<const char*>(&kCkptVersion), sizeof(kCkptVersion));
  const std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!out) throw DataError("short write while saving checkpoint: " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  if (version != kCkptVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) +
                    " in " + path.string());
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw DataError("truncated checkpoint header: " + path.string());
  json header = json::parse(htext, nullptr, false);
  if (header.is_discarded())
    throw DataError("corrupt checkpoint header: " + path.string());

  std::vector<float> blob;
  {
    std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    if (raw.size() % sizeof(float) != 0)
      throw DataError("checkpoint blob size not a multiple of 4: " + path.string());
    blob.resize(raw.size() / sizeof(float));
    std::memcpy(blob.data(), raw.data(), raw.size());
  }

  CheckpointData d;
  d.acfg = apprentice_config_from_json(header.at("apprentice_config"));
  d.mcfg = master_config_from_json(header.at("master_config"));
  d.pass_index = header.at("pass_index").get<int>();
  d.val_snr_db = header.at("val_snr_db").get<double>();
  d.seed = header.at("seed").get<std::uint64_t>();
  d.apprentice_steps = header.at("apprentice_steps").get<std::uint64_t>();
  d.master_steps = header.at("master_steps").get<std::uint64_t>();

  for (const auto& e : header.at("tensors")) {
    const std::string name = e.at("name").get<std::string>();
    const ad::Shape shape = e.at("shape").get<ad::Shape>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t count = e.at("count").get<std::size_t>();
    if (offset + count > blob.size())
      throw DataError("checkpoint tensor " + name + " exceeds blob bounds");
    std::vector<float> vals(blob.begin() + offset, blob.begin() + offset + count);
    if (name.rfind("param.", 0) == 0) {
      const std::string pname = name.substr(6);
      ad::Tensor t = ad::Tensor::from_values(shape, std::move(vals), true);
      if (pname.rfind("ar.", 0) == 0)
        d.apprentice.emplace(pname, std::move(t));
      else if (pname.rfind("mr.", 0) == 0)
        d.master.emplace(pname, std::move(t));
      else
        throw DataError("checkpoint parameter with unknown owner: " + pname);
    } else if (name.rfind("adam.m.", 0) == 0) {
      d.adam_m.emplace(name.substr(7), std::move(vals));
    } else if (name.rfind("adam.v.", 0) == 0) {
      d.adam_v.emplace(name.substr(7), std::move(vals));
    } else {
      throw DataError("checkpoint entry with unknown kind: " + name);
    }
  }
  return d;
}

// ---- batching and evaluation ----------------------------------------------

void batch_tensors(const std::vector<Record>& records, const std::vector<int>& order,
                   std::size_t begin, std::size_t end, ad::Tensor& received,
                   ad::Tensor& clean) {
  if (end <= begin || end > order.size())
    throw DimensionError("batch_tensors: bad index range");
  const int n = static_cast<int>(end - begin);
  const int len = static_cast<int>(records.at(order[begin]).clean.size());
  std::vector<float> rv(static_cast<std::size_t>(n) * 2 * len);
  std::vector<float> cv(rv.size());
  for (int k = 0; k < n; ++k) {
    const Record& rec = records.at(static_cast<std::size_t>(order[begin + k]));
    NormalizedSignal nr = normalize_segment(rec.corrupted);
    NormalizedSignal nc = normalize_segment(rec.clean);
    float* rrow = rv.data() + static_cast<std::size_t>(k) * 2 * len;
    float* crow = cv.data() + static_cast<std::size_t>(k) * 2 * len;
    std::memcpy(rrow, nr.signal.i.data(), sizeof(float) * len);
    std::memcpy(rrow + len, nr.signal.q.data(), sizeof(float) * len);
    std::memcpy(crow, nc.signal.i.data(), sizeof(float) * len);
    std::memcpy(crow + len, nc.signal.q.data(), sizeof(float) * len);
  }
  received = ad::Tensor::from_values({n, 2, len}, std::move(rv));
  clean = ad::Tensor::from_values({n, 2, len}, std::move(cv));
}

double corrupted_baseline_db(const std::vector<Record>& records) {
  if (records.empty()) throw DataError("corrupted_baseline_db: empty split");
  double acc = 0.0;
  for (const Record& rec : records) {
    NormalizedSignal nc = normalize_segment(rec.clean);
    NormalizedSignal nr = normalize_segment(rec.corrupted);
    acc += snr_db(nc.signal, nr.signal);
  }
  return acc / static_cast<double>(records.size());
}

namespace {

struct ValStats {
  double mean_snr_db = 0.0;
  double mr_mse = 0.0;
};

// Shared evaluation pass: restoration SNR always, master regression MSE when a
// master net is supplied. Per-item results are independent of batch
// partitioning, so the mean is stable for any batch_size.
ValStats evaluate_split(const ParamMap& apprentice, const ApprenticeConfig& acfg,
                        const ParamMap* master, const MasterConfig* mcfg,
                        const LossWeights* weights,
                        const std::vector<Record>& records, int batch_size) {
  if (records.empty()) throw DataError("evaluate_split: empty split");
  if (batch_size < 1) throw ParameterError("evaluate_split: batch_size must be >= 1");
  std::vector<int> order(records.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);

  ad::NoGradGuard guard;
  double snr_acc = 0.0, mse_acc = 0.0;
  const RunMode eval_mode{false, 0};
  for (std::size_t b0 = 0; b0 < records.size(); b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t b1 = std::min(records.size(), b0 + static_cast<std::size_t>(batch_size));
    ad::Tensor received, clean;
    batch_tensors(records, order, b0, b1, received, clean);
    ad::Tensor restored = apprentice_forward(apprentice, acfg, received, eval_mode);
    const int n = static_cast<int>(b1 - b0);
    for (int k = 0; k < n; ++k) {
      ComplexSignal c = tensor_item_signal(clean, k);
      ComplexSignal r = tensor_item_signal(restored, k);
      snr_acc += snr_db(c, r);
    }
    if (master) {
      MasterLoss ml =
          loss_master(*master, *mcfg, received, clean, restored, eval_mode, *weights);
      mse_acc += static_cast<double>(ml.total.item()) * n;
    }
  }
  ValStats out;
  out.mean_snr_db = snr_acc / static_cast<double>(records.size());
  out.mr_mse = mse_acc / static_cast<double>(records.size());
  return out;
}

CheckpointData snapshot(const ApprenticeConfig& acfg, const MasterConfig& mcfg,
                        int pass_index, double val_snr_db, std::uint64_t seed,
                        const ParamMap& ar, const ParamMap& mr,
                        const AdamOptimizer& opt_a, const AdamOptimizer& opt_m) {
  CheckpointData d;
  d.acfg = acfg;
  d.mcfg = mcfg;
  d.pass_index = pass_index;
  d.val_snr_db = val_snr_db;
  d.seed = seed;
  d.apprentice_steps = opt_a.step_count();
  d.master_steps = opt_m.step_count();
  d.apprentice = deep_copy(ar);
  d.master = deep_copy(mr);
  d.adam_m = opt_a.first_moments();
  d.adam_v = opt_a.second_moments();
  for (const auto& [name, vec] : opt_m.first_moments()) d.adam_m[name] = vec;
  for (const auto& [name, vec] : opt_m.second_moments()) d.adam_v[name] = vec;
  return d;
}

std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json train_config_json(const TrainConfig& c) {
  return json{{"max_epochs", c.max_epochs},
              {"batch_size", c.batch_size},
              {"lr_apprentice", c.lr_apprentice},
              {"lr_master", c.lr_master},
              {"t_max", c.t_max},
              {"seed", c.seed},
              {"loss_weights",
               json{{"fidelity", c.weights.fidelity},
                    {"time", c.weights.time},
                    {"freq", c.weights.freq},
                    {"psnr_target_db", c.weights.psnr_target_db}}}};
}

}  // namespace

double validate(const ParamMap& apprentice, const ApprenticeConfig& acfg,
                const std::vector<Record>& records, int batch_size) {
  return evaluate_split(apprentice, acfg, nullptr, nullptr, nullptr, records,
                        batch_size)
      .mean_snr_db;
}

PassResult train_corenet(const std::vector<Record>& train_records,
                         const std::vector<Record>& val_records,
                         const ApprenticeConfig& acfg, const MasterConfig& mcfg,
                         const TrainConfig& tcfg, const ParamMap& apprentice_init,
                         const ParamMap& master_init,
                         const std::filesystem::path& run_dir,
                         const TrainHooks& hooks, int pass_index) {
  if (tcfg.max_epochs < 1 || tcfg.batch_size < 1 || tcfg.t_max < 1)
    throw ParameterError("train: epochs, batch size and scheduler period must be positive");
  if (tcfg.lr_apprentice <= 0.0f || tcfg.lr_master <= 0.0f)
    throw ParameterError("train: learning rates must be positive");
  if (train_records.empty() || val_records.empty())
    throw DataError("train: empty training or validation split");
  if (static_cast<std::size_t>(tcfg.batch_size) > train_records.size())
    throw ParameterError("train: batch size exceeds training set size");

  ParamMap ar = deep_copy(apprentice_init);
  ParamMap mr = deep_copy(master_init);
  AdamOptimizer opt_a(ar), opt_m(mr);

  std::ofstream csv;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    json cfg{{"apprentice", apprentice_config_json(acfg)},
             {"master", master_config_json(mcfg)},
             {"train", train_config_json(tcfg)},
             {"pass_index", pass_index},
             {"train_records", train_records.size()},
             {"val_records", val_records.size()}};
    std::ofstream(run_dir / "config.json") << cfg.dump(2) << "\n";
    csv.open(run_dir / "epochs.csv", std::ios::trunc);
    if (!csv) throw DataError("cannot open epoch log in " + run_dir.string());
    csv << "epoch,loss_apprentice,loss_fidelity,loss_time,loss_freq,"
           "loss_master,val_snr_db,mr_val_mse,lr\n";
  }

  PassResult result;
  std::vector<int> order(train_records.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);

  std::uint64_t iteration = 0;
  bool have_best = false;
  ad::Tape& tape = ad::Tape::active();

  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    const std::uint64_t epoch_seed = Rng::mix(tcfg.seed, 0xE90C00ULL + epoch);
    {
      Rng shuffle_rng(epoch_seed);
      for (std::size_t k = order.size(); k > 1; --k) {
        std::size_t j = shuffle_rng.uniform_int(k);
        std::swap(order[k - 1], order[j]);
      }
    }

    double sum_a = 0.0, sum_fid = 0.0, sum_time = 0.0, sum_freq = 0.0, sum_m = 0.0;
    int steps = 0;
    float epoch_lr = cosine_lr(iteration, tcfg.lr_apprentice, tcfg.t_max);

    for (std::size_t b0 = 0; b0 < order.size();
         b0 += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t b1 =
          std::min(order.size(), b0 + static_cast<std::size_t>(tcfg.batch_size));
      ad::Tensor received, clean;
      batch_tensors(train_records, order, b0, b1, received, clean);

      const float lr_a = cosine_lr(iteration, tcfg.lr_apprentice, tcfg.t_max);
      const float lr_m = cosine_lr(iteration, tcfg.lr_master, tcfg.t_max);
      const RunMode mode{true, Rng::mix(epoch_seed, static_cast<std::uint64_t>(steps))};

      ApprenticeLoss al =
          loss_apprentice(ar, acfg, mr, mcfg, received, clean, mode, tcfg.weights);
      if (!std::isfinite(al.total.item()))
        throw NumericError("non-finite apprentice loss at epoch " +
                           std::to_string(epoch) + " step " + std::to_string(steps) +
                           " (fidelity=" + num17(al.fidelity_term) +
                           ", time=" + num17(al.time_term) +
                           ", freq=" + num17(al.freq_term) + ")");
      tape.backward(al.total);
      tape.clear();
      opt_a.step(lr_a);
      opt_a.zero_grad();
      if (hooks.after_apprentice_step)
        hooks.after_apprentice_step(epoch, steps, ar, mr);

      ad::Tensor restored = ad::detach(al.restored);
      MasterLoss ml =
          loss_master(mr, mcfg, received, clean, restored, mode, tcfg.weights);
      if (!std::isfinite(ml.total.item()))
        throw NumericError("non-finite master loss at epoch " + std::to_string(epoch) +
                           " step " + std::to_string(steps) +
                           " (real=" + num17(ml.real_term) +
                           ", restored=" + num17(ml.restored_term) + ")");
      tape.backward(ml.total);
      tape.clear();
      opt_m.step(lr_m);
      opt_m.zero_grad();
      if (hooks.after_master_step) hooks.after_master_step(epoch, steps, ar, mr);

      sum_a += al.total.item();
      sum_fid += al.fidelity_term;
      sum_time += al.time_term;
      sum_freq += al.freq_term;
      sum_m += ml.total.item();
      ++steps;
      ++iteration;
    }

    ValStats vs = evaluate_split(ar, acfg, &mr, &mcfg, &tcfg.weights, val_records,
                                 tcfg.batch_size);

    EpochStats st;
    st.epoch = epoch;
    st.loss_apprentice = sum_a / steps;
    st.loss_fidelity = sum_fid / steps;
    st.loss_time = sum_time / steps;
    st.loss_freq = sum_freq / steps;
    st.loss_master = sum_m / steps;
    st.val_snr_db = vs.mean_snr_db;
    st.mr_val_mse = vs.mr_mse;
    st.lr = epoch_lr;
    result.epochs.push_back(st);

    if (csv.is_open()) {
      csv << st.epoch << ',' << num17(st.loss_apprentice) << ','
          << num17(st.loss_fidelity) << ',' << num17(st.loss_time) << ','
          << num17(st.loss_freq) << ',' << num17(st.loss_master) << ','
          << num17(st.val_snr_db) << ',' << num17(st.mr_val_mse) << ','
          << num17(static_cast<double>(st.lr)) << '\n';
      csv.flush();
    }
    if (hooks.on_epoch) hooks.on_epoch(st);

    if (!have_best || vs.mean_snr_db > result.best_val_snr_db) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_val_snr_db = vs.mean_snr_db;
      result.best = snapshot(acfg, mcfg, pass_index, vs.mean_snr_db, tcfg.seed, ar,
                             mr, opt_a, opt_m);
      if (!run_dir.empty()) save_checkpoint(run_dir / "best.ckpt", result.best);
    }
  }

  result.last = snapshot(acfg, mcfg, pass_index, result.epochs.back().val_snr_db,
                         tcfg.seed, ar, mr, opt_a, opt_m);
  if (!run_dir.empty()) save_checkpoint(run_dir / "last.ckpt", result.last);
  return result;
}

}  // namespace corenet
