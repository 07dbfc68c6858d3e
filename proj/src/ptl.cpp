#include "corenet/ptl.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "corenet/error.hpp"
#include "corenet/hash.hpp"
#include "corenet/metrics.hpp"
#include "corenet/rng.hpp"
#include "corenet/signal.hpp"

namespace corenet {

using nlohmann::json;

double mean_stored_snr_db(const std::vector<Record>& records) {
  if (records.empty()) throw DataError("mean_stored_snr_db: empty dataset");
  double acc = 0.0;
  for (const Record& rec : records) acc += snr_db(rec.clean, rec.corrupted);
  return acc / static_cast<double>(records.size());
}

std::vector<Record> restore_records(const ParamMap& apprentice,
                                    const ApprenticeConfig& acfg,
                                    const std::vector<Record>& records,
                                    int batch_size) {
  if (batch_size < 1) throw ParameterError("restore_records: batch_size must be >= 1");
  std::vector<Record> out(records);
  std::vector<int> order(records.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = static_cast<int>(k);

  ad::NoGradGuard guard;
  const RunMode eval_mode{false, 0};
  for (std::size_t b0 = 0; b0 < records.size();
       b0 += static_cast<std::size_t>(batch_size)) {
    const std::size_t b1 =
        std::min(records.size(), b0 + static_cast<std::size_t>(batch_size));
    ad::Tensor received, clean;
    batch_tensors(records, order, b0, b1, received, clean);
    ad::Tensor restored = apprentice_forward(apprentice, acfg, received, eval_mode);
    for (std::size_t k = b0; k < b1; ++k) {
      ComplexSignal raw = tensor_item_signal(restored, static_cast<int>(k - b0));
      // Keep the input contract of every pass identical: outputs re-enter the
      // [-1,1] per-channel range before they become the next pass's inputs.
      out[k].corrupted = normalize_segment(raw).signal;
      out[k].achieved_snr_db =
          static_cast<float>(snr_db(out[k].clean, out[k].corrupted));
    }
  }
  return out;
}

ComplexSignal restore_signal(const ParamMap& apprentice, const ApprenticeConfig& acfg,
                             const ComplexSignal& input) {
  ad::NoGradGuard guard;
  NormalizedSignal norm = normalize_segment(input);
  const int len = static_cast<int>(input.size());
  std::vector<float> vals(static_cast<std::size_t>(2) * len);
  std::copy(norm.signal.i.begin(), norm.signal.i.end(), vals.begin());
  std::copy(norm.signal.q.begin(), norm.signal.q.end(), vals.begin() + len);
  ad::Tensor x = ad::Tensor::from_values({1, 2, len}, std::move(vals));
  ad::Tensor y = apprentice_forward(apprentice, acfg, x, RunMode{false, 0});
  return normalize_segment(tensor_item_signal(y, 0)).signal;
}

ComplexSignal restore_chain(const std::vector<std::filesystem::path>& checkpoints,
                            const ComplexSignal& input) {
  if (checkpoints.empty()) throw ParameterError("restore_chain: no checkpoints given");
  ComplexSignal current = input;
  for (const auto& path : checkpoints) {
    CheckpointData ckpt = load_checkpoint(path);
    current = restore_signal(ckpt.apprentice, ckpt.acfg, current);
  }
  return current;
}

namespace {

CheckpointData init_snapshot(const PtlPlan& plan, int pass_index,
                             double init_val_snr_db, std::uint64_t seed,
                             const ParamMap& ar, const ParamMap& mr) {
  CheckpointData d;
  d.acfg = plan.acfg;
  d.mcfg = plan.mcfg;
  d.pass_index = pass_index;
  d.val_snr_db = init_val_snr_db;
  d.seed = seed;
  d.apprentice_steps = 0;
  d.master_steps = 0;
  d.apprentice = deep_copy(ar);
  d.master = deep_copy(mr);
  // Optimizer moments start from zero every pass; only weights transfer.
  for (const auto& [name, t] : ar) {
    d.adam_m[name].assign(static_cast<std::size_t>(t.numel()), 0.0f);
    d.adam_v[name].assign(static_cast<std::size_t>(t.numel()), 0.0f);
  }
  for (const auto& [name, t] : mr) {
    d.adam_m[name].assign(static_cast<std::size_t>(t.numel()), 0.0f);
    d.adam_v[name].assign(static_cast<std::size_t>(t.numel()), 0.0f);
  }
  return d;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::vector<PassArtifacts> run_ptl(const PtlPlan& plan,
                                   const std::vector<Record>& train,
                                   const std::vector<Record>& val,
                                   const std::vector<Record>& test,
                                   const std::filesystem::path& run_dir,
                                   const TrainHooks& hooks) {
  if (plan.num_passes < 1) throw ParameterError("run_ptl: need at least one pass");
  if (train.empty() || val.empty()) throw DataError("run_ptl: empty train or val split");
  std::filesystem::create_directories(run_dir);

  std::vector<Record> r_train = train, r_val = val, r_test = test;
  ParamMap ar = init_apprentice(plan.acfg, Rng::mix(plan.init_seed, 0xAA));
  ParamMap mr = init_master(plan.mcfg, Rng::mix(plan.init_seed, 0x33));

  std::vector<PassArtifacts> artifacts;
  json chain = json::array();

  std::ofstream summary(run_dir / "summary.csv", std::ios::trunc);
  if (!summary) throw DataError("cannot open summary.csv in " + run_dir.string());
  summary << "pass,best_epoch,best_val_snr_db,init_val_snr_db,"
             "restored_train_snr_db,restored_val_snr_db,restored_test_snr_db\n";
  summary.flush();

  for (int k = 0; k < plan.num_passes; ++k) {
    const std::filesystem::path pass_dir = run_dir / ("pass" + std::to_string(k));
    std::filesystem::create_directories(pass_dir);

    TrainConfig tcfg = plan.train;
    tcfg.seed = Rng::mix(plan.train.seed, 0x9A55ULL + static_cast<std::uint64_t>(k));

    const double init_val = validate(ar, plan.acfg, r_val, tcfg.batch_size);
    CheckpointData init = init_snapshot(plan, k, init_val, tcfg.seed, ar, mr);
    save_checkpoint(pass_dir / "init.ckpt", init);

    PassResult res = train_corenet(r_train, r_val, plan.acfg, plan.mcfg, tcfg, ar,
                                   mr, pass_dir, hooks, k);

    std::vector<Record> next_train =
        restore_records(res.best.apprentice, plan.acfg, r_train, tcfg.batch_size);
    std::vector<Record> next_val =
        restore_records(res.best.apprentice, plan.acfg, r_val, tcfg.batch_size);
    std::vector<Record> next_test;
    if (!r_test.empty())
      next_test = restore_records(res.best.apprentice, plan.acfg, r_test, tcfg.batch_size);

    write_records((pass_dir / "restored_train.bin").string(), next_train);
    write_records((pass_dir / "restored_val.bin").string(), next_val);
    if (!next_test.empty())
      write_records((pass_dir / "restored_test.bin").string(), next_test);

    PassArtifacts pa;
    pa.pass_index = k;
    pa.dir = pass_dir;
    pa.best_epoch = res.best_epoch;
    pa.best_val_snr_db = res.best_val_snr_db;
    pa.init_val_snr_db = init_val;
    pa.restored_train_snr_db = mean_stored_snr_db(next_train);
    pa.restored_val_snr_db = mean_stored_snr_db(next_val);
    pa.restored_test_snr_db = next_test.empty()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : mean_stored_snr_db(next_test);
    artifacts.push_back(pa);

    char row[512];
    std::snprintf(row, sizeof(row), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", k,
                  pa.best_epoch, pa.best_val_snr_db, pa.init_val_snr_db,
                  pa.restored_train_snr_db, pa.restored_val_snr_db,
                  pa.restored_test_snr_db);
    summary << row;
    summary.flush();

    json link{{"pass", k},
              {"init_checkpoint", "pass" + std::to_string(k) + "/init.ckpt"},
              {"init_checkpoint_fnv",
               hex64(fnv1a64_file((pass_dir / "init.ckpt").string()))},
              {"best_checkpoint", "pass" + std::to_string(k) + "/best.ckpt"},
              {"best_checkpoint_fnv",
               hex64(fnv1a64_file((pass_dir / "best.ckpt").string()))},
              {"restored_train", "pass" + std::to_string(k) + "/restored_train.bin"},
              {"restored_train_fnv",
               hex64(fnv1a64_file((pass_dir / "restored_train.bin").string()))},
              {"restored_val", "pass" + std::to_string(k) + "/restored_val.bin"},
              {"restored_val_fnv",
               hex64(fnv1a64_file((pass_dir / "restored_val.bin").string()))}};
    if (!next_test.empty()) {
      link["restored_test"] = "pass" + std::to_string(k) + "/restored_test.bin";
      link["restored_test_fnv"] =
          hex64(fnv1a64_file((pass_dir / "restored_test.bin").string()));
    }
    chain.push_back(std::move(link));
    std::ofstream(run_dir / "chain.json") << chain.dump(2) << "\n";

    // Warm start the next pass from this pass's best state.
    ar = deep_copy(res.best.apprentice);
    mr = deep_copy(res.best.master);
    r_train = std::move(next_train);
    r_val = std::move(next_val);
    r_test = std::move(next_test);
  }
  return artifacts;
}

}  // namespace corenet
