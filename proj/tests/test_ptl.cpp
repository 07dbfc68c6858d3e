#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corenet/dataset.hpp"
#include "corenet/error.hpp"
#include "corenet/hash.hpp"
#include "corenet/metrics.hpp"
#include "corenet/models.hpp"
#include "corenet/ptl.hpp"
#include "corenet/rng.hpp"

using namespace corenet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / ("corenet_ptl_" + leaf);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<Record> tiny_split(int split, int count) {
  DatasetConfig cfg;
  cfg.seed = 177;
  cfg.train_val_count = 40;
  cfg.test_per_cell = 1;
  cfg.families = {Modulation::kLfm, Modulation::kFrank};
  cfg.allowed_masks = {1};
  cfg.snr_min_db = 0.0;
  cfg.snr_max_db = 10.0;
  std::vector<Record> out;
  for (int k = 0; k < count; ++k) out.push_back(make_record(cfg, split, k));
  return out;
}

PtlPlan tiny_plan(int passes) {
  PtlPlan plan;
  plan.num_passes = passes;
  plan.acfg.encoder_widths = {4, 4};
  plan.acfg.q = 2;
  plan.mcfg.widths = {4, 4};
  plan.mcfg.q = 2;
  plan.train.max_epochs = 2;
  plan.train.batch_size = 4;
  plan.train.t_max = 10;
  plan.train.seed = 3;
  plan.init_seed = 7;
  return plan;
}

bool same_params(const ParamMap& a, const ParamMap& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape() != t.shape()) return false;
    if (std::memcmp(it->second.values().data(), t.values().data(),
                    sizeof(float) * t.values().size()) != 0)
      return false;
  }
  return true;
}

bool same_signal(const ComplexSignal& a, const ComplexSignal& b) {
  return a.size() == b.size() &&
         std::memcmp(a.i.data(), b.i.data(), sizeof(float) * a.size()) == 0 &&
         std::memcmp(a.q.data(), b.q.data(), sizeof(float) * a.size()) == 0;
}

std::uint64_t parse_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

}  // namespace

TEST_CASE("restore_records rewrites only the corrupted field") {
  std::vector<Record> recs = tiny_split(0, 5);
  ApprenticeConfig acfg = tiny_plan(1).acfg;
  ParamMap ar = init_apprentice(acfg, 901);

  std::vector<Record> out = restore_records(ar, acfg, recs, 64);
  REQUIRE(out.size() == recs.size());
  for (std::size_t k = 0; k < recs.size(); ++k) {
    CHECK(same_signal(out[k].clean, recs[k].clean));
    CHECK(out[k].modulation_tag == recs[k].modulation_tag);
    CHECK(out[k].target_snr_db == recs[k].target_snr_db);
    CHECK_FALSE(same_signal(out[k].corrupted, recs[k].corrupted));
    CHECK(out[k].achieved_snr_db ==
          static_cast<float>(snr_db(out[k].clean, out[k].corrupted)));

    // Outputs re-enter the per-channel [-1,1] contract with pinned extremes.
    auto extent = [](const std::vector<float>& v) {
      auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      return std::pair<float, float>(*lo, *hi);
    };
    auto [ilo, ihi] = extent(out[k].corrupted.i);
    auto [qlo, qhi] = extent(out[k].corrupted.q);
    CHECK(ilo == -1.0f);
    CHECK(ihi == 1.0f);
    CHECK(qlo == -1.0f);
    CHECK(qhi == 1.0f);
  }

  // Restoration is per item: the batch partition cannot change the bytes.
  std::vector<Record> out3 = restore_records(ar, acfg, recs, 3);
  std::vector<Record> out1 = restore_records(ar, acfg, recs, 1);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    CHECK(same_signal(out[k].corrupted, out3[k].corrupted));
    CHECK(same_signal(out[k].corrupted, out1[k].corrupted));
  }

  CHECK_THROWS_AS(restore_records(ar, acfg, recs, 0), ParameterError);
}

TEST_CASE("restore_signal matches the batched path signal for signal") {
  std::vector<Record> recs = tiny_split(1, 4);
  ApprenticeConfig acfg = tiny_plan(1).acfg;
  ParamMap ar = init_apprentice(acfg, 902);

  std::vector<Record> out = restore_records(ar, acfg, recs, 4);
  for (std::size_t k = 0; k < recs.size(); ++k) {
    ComplexSignal single = restore_signal(ar, acfg, recs[k].corrupted);
    CHECK(same_signal(single, out[k].corrupted));
  }
}

TEST_CASE("restore_chain applies saved checkpoints in order") {
  ApprenticeConfig acfg = tiny_plan(1).acfg;
  MasterConfig mcfg = tiny_plan(1).mcfg;
  fs::path dir = fresh_dir("chain");

  CheckpointData c1, c2;
  c1.acfg = c2.acfg = acfg;
  c1.mcfg = c2.mcfg = mcfg;
  c1.apprentice = init_apprentice(acfg, 31);
  c2.apprentice = init_apprentice(acfg, 32);
  c1.master = init_master(mcfg, 33);
  c2.master = init_master(mcfg, 34);
  save_checkpoint(dir / "p0.ckpt", c1);
  save_checkpoint(dir / "p1.ckpt", c2);

  ComplexSignal input = tiny_split(0, 1)[0].corrupted;
  ComplexSignal direct =
      restore_signal(c2.apprentice, acfg, restore_signal(c1.apprentice, acfg, input));
  ComplexSignal chained = restore_chain({dir / "p0.ckpt", dir / "p1.ckpt"}, input);
  CHECK(same_signal(direct, chained));

  CHECK_THROWS_AS(restore_chain({}, input), ParameterError);
}

TEST_CASE("two-pass refinement chain: artifacts, warm starts, manifests") {
  std::vector<Record> train = tiny_split(0, 8);
  std::vector<Record> val = tiny_split(1, 4);
  std::vector<Record> test = tiny_split(2, 2);
  PtlPlan plan = tiny_plan(2);
  fs::path dir = fresh_dir("run2");

  std::vector<PassArtifacts> arts = run_ptl(plan, train, val, test, dir);
  REQUIRE(arts.size() == 2);

  for (int k = 0; k < 2; ++k) {
    CHECK(arts[k].pass_index == k);
    fs::path pd = dir / ("pass" + std::to_string(k));
    CHECK(arts[k].dir == pd);
    for (const char* f : {"init.ckpt", "config.json", "epochs.csv", "best.ckpt",
                          "last.ckpt", "restored_train.bin", "restored_val.bin",
                          "restored_test.bin"})
      CHECK(fs::exists(pd / f));
    CHECK(std::isfinite(arts[k].best_val_snr_db));
    CHECK(std::isfinite(arts[k].restored_test_snr_db));
  }

  // Pass 0 starts from the plan's derived fresh-init seeds.
  CheckpointData init0 = load_checkpoint(dir / "pass0" / "init.ckpt");
  CHECK(same_params(init0.apprentice,
                    init_apprentice(plan.acfg, Rng::mix(plan.init_seed, 0xAA))));
  CHECK(same_params(init0.master,
                    init_master(plan.mcfg, Rng::mix(plan.init_seed, 0x33))));
  CHECK(init0.apprentice_steps == 0);
  for (const auto& [name, vec] : init0.adam_m)
    for (float v : vec) CHECK(v == 0.0f);

  // Pass 1 warm-starts from pass 0's best network, moments reset.
  CheckpointData best0 = load_checkpoint(dir / "pass0" / "best.ckpt");
  CheckpointData init1 = load_checkpoint(dir / "pass1" / "init.ckpt");
  CHECK(same_params(init1.apprentice, best0.apprentice));
  CHECK(same_params(init1.master, best0.master));
  CHECK(init1.master_steps == 0);
  for (const auto& [name, vec] : init1.adam_v)
    for (float v : vec) CHECK(v == 0.0f);

  // The restored datasets on disk are exactly what the best network produces
  // from this pass's inputs, and the summary figures describe them.
  std::vector<Record> redo =
      restore_records(best0.apprentice, plan.acfg, train, plan.train.batch_size);
  fs::path scratch = fresh_dir("redo");
  write_records((scratch / "redo.bin").string(), redo);
  CHECK(fnv1a64_file((scratch / "redo.bin").string()) ==
        fnv1a64_file((dir / "pass0" / "restored_train.bin").string()));

  std::vector<Record> rv = read_records((dir / "pass0" / "restored_val.bin").string());
  CHECK(arts[0].restored_val_snr_db == mean_stored_snr_db(rv));

  // Pass 1 trains on the pass 0 restorations; its warm-start validation score
  // is the warm network measured on that new validation split.
  CHECK(arts[1].init_val_snr_db ==
        validate(best0.apprentice, plan.acfg, rv, plan.train.batch_size));

  // chain.json lists content hashes that match the files on disk.
  json chain = json::parse(std::ifstream(dir / "chain.json"));
  REQUIRE(chain.is_array());
  REQUIRE(chain.size() == 2);
  for (const auto& link : chain) {
    for (const char* key : {"init_checkpoint", "best_checkpoint", "restored_train",
                            "restored_val", "restored_test"}) {
      const std::string rel = link.at(key).get<std::string>();
      const std::uint64_t stated =
          parse_hex(link.at(std::string(key) + "_fnv").get<std::string>());
      CHECK(stated == fnv1a64_file((dir / rel).string()));
    }
  }

  // summary.csv has a header plus one row per pass, keyed by pass index.
  std::ifstream summary(dir / "summary.csv");
  std::string line;
  std::getline(summary, line);
  CHECK(line ==
        "pass,best_epoch,best_val_snr_db,init_val_snr_db,"
        "restored_train_snr_db,restored_val_snr_db,restored_test_snr_db");
  std::getline(summary, line);
  CHECK(line.rfind("0,", 0) == 0);
  std::getline(summary, line);
  CHECK(line.rfind("1,", 0) == 0);
  CHECK_FALSE(std::getline(summary, line));
}

TEST_CASE("single-pass chain equals a direct training run") {
  std::vector<Record> train = tiny_split(0, 8);
  std::vector<Record> val = tiny_split(1, 4);
  PtlPlan plan = tiny_plan(1);
  fs::path dir = fresh_dir("run1");

  std::vector<PassArtifacts> arts = run_ptl(plan, train, val, {}, dir);
  REQUIRE(arts.size() == 1);
  CHECK(std::isnan(arts[0].restored_test_snr_db));
  CHECK_FALSE(fs::exists(dir / "pass0" / "restored_test.bin"));

  json chain = json::parse(std::ifstream(dir / "chain.json"));
  CHECK_FALSE(chain.at(0).contains("restored_test"));

  // Reproduce pass 0 with train_corenet directly: same init, same derived seed.
  ParamMap ar0 = init_apprentice(plan.acfg, Rng::mix(plan.init_seed, 0xAA));
  ParamMap mr0 = init_master(plan.mcfg, Rng::mix(plan.init_seed, 0x33));
  TrainConfig tcfg = plan.train;
  tcfg.seed = Rng::mix(plan.train.seed, 0x9A55ULL);
  fs::path direct = fresh_dir("direct");
  train_corenet(train, val, plan.acfg, plan.mcfg, tcfg, ar0, mr0, direct);

  for (const char* f : {"epochs.csv", "best.ckpt", "last.ckpt"})
    CHECK(fnv1a64_file((dir / "pass0" / f).string()) ==
          fnv1a64_file((direct / f).string()));
}

TEST_CASE("refinement chain is reproducible end to end") {
  std::vector<Record> train = tiny_split(0, 8);
  std::vector<Record> val = tiny_split(1, 4);
  PtlPlan plan = tiny_plan(2);
  fs::path d1 = fresh_dir("repro1");
  fs::path d2 = fresh_dir("repro2");
  run_ptl(plan, train, val, {}, d1);
  run_ptl(plan, train, val, {}, d2);
  CHECK(fnv1a64_file((d1 / "chain.json").string()) ==
        fnv1a64_file((d2 / "chain.json").string()));
  CHECK(fnv1a64_file((d1 / "summary.csv").string()) ==
        fnv1a64_file((d2 / "summary.csv").string()));
}

TEST_CASE("refinement chain argument validation") {
  std::vector<Record> train = tiny_split(0, 4);
  std::vector<Record> val = tiny_split(1, 2);
  PtlPlan plan = tiny_plan(0);
  fs::path dir = fresh_dir("bad");
  CHECK_THROWS_AS(run_ptl(plan, train, val, {}, dir), ParameterError);
  plan.num_passes = 1;
  plan.train.batch_size = 2;
  CHECK_THROWS_AS(run_ptl(plan, {}, val, {}, dir), DataError);
  CHECK_THROWS_AS(run_ptl(plan, train, {}, {}, dir), DataError);
  CHECK_THROWS_AS(mean_stored_snr_db({}), DataError);
}
