// Command-line front end: dataset synthesis, cooperative training, progressive
// multi-pass refinement, restoration and evaluation/plotting.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "corenet/dataset.hpp"
#include "corenet/error.hpp"
#include "corenet/eval.hpp"
#include "corenet/hash.hpp"
#include "corenet/ptl.hpp"
#include "corenet/rng.hpp"
#include "corenet/training.hpp"

namespace {

using corenet::ApprenticeConfig;
using corenet::DatasetConfig;
using corenet::MasterConfig;
using corenet::TrainConfig;
using nlohmann::json;

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw corenet::ParameterError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded())
    throw corenet::ParameterError("config file is not valid JSON: " + path);
  return j;
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

DatasetConfig parse_dataset_config(const json& j) {
  DatasetConfig cfg;
  maybe(j, "seed", cfg.seed);
  maybe(j, "train_val_count", cfg.train_val_count);
  maybe(j, "test_per_cell", cfg.test_per_cell);
  maybe(j, "snr_min_db", cfg.snr_min_db);
  maybe(j, "snr_max_db", cfg.snr_max_db);
  if (j.contains("allowed_masks"))
    cfg.allowed_masks = j.at("allowed_masks").get<std::vector<unsigned>>();
  if (j.contains("families")) {
    cfg.families.clear();
    for (const auto& name : j.at("families")) {
      const std::string want = name.get<std::string>();
      bool found = false;
      for (std::uint32_t m = 0; m < corenet::kModulationCount; ++m) {
        if (want == corenet::modulation_name(static_cast<corenet::Modulation>(m))) {
          cfg.families.push_back(static_cast<corenet::Modulation>(m));
          found = true;
          break;
        }
      }
      if (!found)
        throw corenet::ParameterError("unknown modulation family: " + want);
    }
  }
  return cfg;
}

ApprenticeConfig parse_apprentice_config(const json& j) {
  ApprenticeConfig cfg;
  if (j.contains("encoder_widths"))
    cfg.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  maybe(j, "q", cfg.q);
  maybe(j, "kernel", cfg.kernel);
  maybe(j, "dropout_rate", cfg.dropout_rate);
  return cfg;
}

MasterConfig parse_master_config(const json& j) {
  MasterConfig cfg;
  if (j.contains("widths")) cfg.widths = j.at("widths").get<std::vector<int>>();
  maybe(j, "q", cfg.q);
  maybe(j, "kernel", cfg.kernel);
  maybe(j, "dropout_rate", cfg.dropout_rate);
  return cfg;
}

TrainConfig parse_train_config(const json& j) {
  TrainConfig cfg;
  maybe(j, "max_epochs", cfg.max_epochs);
  maybe(j, "batch_size", cfg.batch_size);
  maybe(j, "lr_apprentice", cfg.lr_apprentice);
  maybe(j, "lr_master", cfg.lr_master);
  maybe(j, "t_max", cfg.t_max);
  maybe(j, "seed", cfg.seed);
  if (j.contains("loss_weights")) {
    const json& w = j.at("loss_weights");
    maybe(w, "fidelity", cfg.weights.fidelity);
    maybe(w, "time", cfg.weights.time);
    maybe(w, "freq", cfg.weights.freq);
    maybe(w, "psnr_target_db", cfg.weights.psnr_target_db);
  }
  return cfg;
}

void print_epoch(const corenet::EpochStats& st) {
  std::printf("epoch %d: loss_a=%.6g loss_m=%.6g val_snr=%.4f dB mr_val_mse=%.6g\n",
              st.epoch, st.loss_apprentice, st.loss_master, st.val_snr_db,
              st.mr_val_mse);
  std::fflush(stdout);
}

std::vector<corenet::Record> load_split(const std::filesystem::path& path) {
  return corenet::read_records(path.string());
}

// The kernels are sequential; the only recognized environment control is
// validated and capped at one worker.
void check_thread_env() {
  if (const char* env = std::getenv("CORENET_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw corenet::ParameterError("CORENET_THREADS must be a positive integer");
  }
}

int cmd_synth(const std::string& config_path, std::uint64_t seed, bool seed_set,
              double toy_scale, const std::string& out_dir) {
  json j = load_config_file(config_path);
  DatasetConfig cfg = parse_dataset_config(j);
  if (seed_set) cfg.seed = seed;
  if (toy_scale != 1.0) cfg = corenet::scale_config(cfg, toy_scale);
  corenet::build_dataset(cfg, out_dir);
  std::printf("dataset written to %s (train %d, val %d, test %d)\n", out_dir.c_str(),
              corenet::train_count(cfg), corenet::val_count(cfg),
              corenet::test_count(cfg));
  return 0;
}

struct CommonTrainArgs {
  std::string config_path, data_dir, out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_train(const CommonTrainArgs& args) {
  json j = load_config_file(args.config_path);
  ApprenticeConfig acfg = parse_apprentice_config(j.value("apprentice", json::object()));
  MasterConfig mcfg = parse_master_config(j.value("master", json::object()));
  TrainConfig tcfg = parse_train_config(j.value("train", json::object()));
  if (args.seed_set) tcfg.seed = args.seed;
  std::uint64_t init_seed = j.value("init_seed", std::uint64_t{7});

  auto train = load_split(std::filesystem::path(args.data_dir) / "train.bin");
  auto val = load_split(std::filesystem::path(args.data_dir) / "val.bin");

  // Same derivations as the first refinement pass, so a one-pass refinement
  // run and a plain training run produce identical logs and checkpoints.
  corenet::ParamMap ar =
      corenet::init_apprentice(acfg, corenet::Rng::mix(init_seed, 0xAA));
  corenet::ParamMap mr = corenet::init_master(mcfg, corenet::Rng::mix(init_seed, 0x33));
  TrainConfig pass_cfg = tcfg;
  pass_cfg.seed = corenet::Rng::mix(tcfg.seed, 0x9A55ULL);

  corenet::TrainHooks hooks;
  hooks.on_epoch = print_epoch;
  corenet::PassResult res = corenet::train_corenet(train, val, acfg, mcfg, pass_cfg,
                                                   ar, mr, args.out_dir, hooks, 0);
  std::printf("best epoch %d, val_snr %.6f dB (baseline %.6f dB)\n", res.best_epoch,
              res.best_val_snr_db, corenet::corrupted_baseline_db(val));
  return 0;
}

int cmd_ptl(const CommonTrainArgs& args) {
  json j = load_config_file(args.config_path);
  corenet::PtlPlan plan;
  plan.acfg = parse_apprentice_config(j.value("apprentice", json::object()));
  plan.mcfg = parse_master_config(j.value("master", json::object()));
  plan.train = parse_train_config(j.value("train", json::object()));
  maybe(j, "num_passes", plan.num_passes);
  maybe(j, "init_seed", plan.init_seed);
  if (args.seed_set) plan.train.seed = args.seed;

  auto train = load_split(std::filesystem::path(args.data_dir) / "train.bin");
  auto val = load_split(std::filesystem::path(args.data_dir) / "val.bin");
  std::vector<corenet::Record> test;
  const auto test_path = std::filesystem::path(args.data_dir) / "test.bin";
  if (std::filesystem::exists(test_path)) test = load_split(test_path);

  {
    std::filesystem::create_directories(args.out_dir);
    json resolved{{"apprentice", j.value("apprentice", json::object())},
                  {"master", j.value("master", json::object())},
                  {"num_passes", plan.num_passes},
                  {"init_seed", plan.init_seed},
                  {"seed", plan.train.seed},
                  {"data_dir", args.data_dir}};
    std::ofstream(std::filesystem::path(args.out_dir) / "plan.json")
        << resolved.dump(2) << "\n";
  }

  corenet::TrainHooks hooks;
  hooks.on_epoch = print_epoch;
  auto artifacts = corenet::run_ptl(plan, train, val, test, args.out_dir, hooks);
  for (const auto& pa : artifacts)
    std::printf("pass %d: best epoch %d, val_snr %.6f dB, restored val %.6f dB\n",
                pa.pass_index, pa.best_epoch, pa.best_val_snr_db,
                pa.restored_val_snr_db);
  return 0;
}

int cmd_restore(const std::vector<std::string>& checkpoints, const std::string& chain,
                const std::string& input, const std::string& out_dir) {
  std::vector<std::filesystem::path> ckpt_paths;
  if (!chain.empty()) {
    std::ifstream in(chain);
    if (!in) throw corenet::DataError("cannot open chain manifest: " + chain);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_array())
      throw corenet::DataError("chain manifest is not a JSON array: " + chain);
    const auto base = std::filesystem::path(chain).parent_path();
    std::map<int, std::filesystem::path> ordered;
    for (const auto& link : j)
      ordered[link.at("pass").get<int>()] =
          base / link.at("best_checkpoint").get<std::string>();
    for (const auto& [pass, path] : ordered) ckpt_paths.push_back(path);
  }
  for (const auto& c : checkpoints) ckpt_paths.emplace_back(c);
  if (ckpt_paths.empty())
    throw corenet::ParameterError("restore: give --checkpoint and/or --chain");

  auto records = load_split(input);
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t params_total = 0;
  for (const auto& path : ckpt_paths) {
    corenet::CheckpointData ckpt = corenet::load_checkpoint(path);
    params_total += corenet::param_count(ckpt.apprentice);
    records = corenet::restore_records(ckpt.apprentice, ckpt.acfg, records);
  }
  const auto t1 = std::chrono::steady_clock::now();

  std::filesystem::create_directories(out_dir);
  const auto out_path = std::filesystem::path(out_dir) / "restored.bin";
  corenet::write_records(out_path.string(), records);
  {
    json resolved{{"input", input}, {"checkpoints", json::array()}};
    for (const auto& p : ckpt_paths) resolved["checkpoints"].push_back(p.string());
    std::ofstream(std::filesystem::path(out_dir) / "config.json")
        << resolved.dump(2) << "\n";
  }
  const double secs = std::chrono::duration<double>(t1 - t0).count();
  std::printf("restored %zu records through %zu checkpoint(s) to %s\n",
              records.size(), ckpt_paths.size(), out_path.string().c_str());
  std::printf("throughput %.1f signals/s, apprentice parameters %zu\n",
              secs > 0 ? static_cast<double>(records.size()) / secs : 0.0,
              params_total / std::max<std::size_t>(1, ckpt_paths.size()));
  return 0;
}

int cmd_eval(const std::string& input, const std::string& reference,
             const std::string& out_dir, int pass_index) {
  auto evaluated = load_split(input);
  auto ref = load_split(reference);
  corenet::EvalReport rep = corenet::evaluate_datasets(evaluated, ref, pass_index);
  corenet::write_eval_csv(out_dir, rep);
  {
    json resolved{{"input", input}, {"reference", reference}, {"pass_index", pass_index}};
    std::ofstream(std::filesystem::path(out_dir) / "config.json")
        << resolved.dump(2) << "\n";
  }
  std::printf("records %zu, overall mean SNR %.6f dB, baseline %.6f dB, "
              "improvement %.6f dB\n",
              rep.record_count, rep.overall_mean_snr_db, rep.corrupted_baseline_db,
              rep.overall_mean_snr_db - rep.corrupted_baseline_db);
  return 0;
}

int cmd_plot(const std::string& input, const std::string& reference,
             const std::string& out_file, int pass_index) {
  auto evaluated = load_split(input);
  auto ref = load_split(reference);
  corenet::EvalReport rep = corenet::evaluate_datasets(evaluated, ref, pass_index);
  corenet::write_eval_svg(out_file, rep);
  std::printf("plot written to %s\n", out_file.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cooperative radar signal restoration toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, input, reference, chain, out_file;
  std::vector<std::string> checkpoints;
  std::uint64_t seed = 0;
  double toy_scale = 1.0;
  int pass_index = 0;

  auto* synth = app.add_subcommand("synth", "generate a paired signal dataset");
  synth->add_option("--config", config_path, "JSON config");
  auto* synth_seed = synth->add_option("--seed", seed, "override dataset seed");
  synth->add_option("--toy-scale", toy_scale, "shrink dataset by this factor (0,1]");
  synth->add_option("--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "run one cooperative training pass");
  train->add_option("--config", config_path, "JSON config");
  auto* train_seed = train->add_option("--seed", seed, "override training seed");
  train->add_option("--data", data_dir, "dataset directory (train.bin/val.bin)")
      ->required();
  train->add_option("--out", out_dir, "run directory")->required();

  auto* ptl = app.add_subcommand("ptl", "run a multi-pass refinement chain");
  ptl->add_option("--config", config_path, "JSON config");
  auto* ptl_seed = ptl->add_option("--seed", seed, "override training seed");
  ptl->add_option("--data", data_dir, "dataset directory")->required();
  ptl->add_option("--out", out_dir, "chain directory")->required();

  auto* restore = app.add_subcommand("restore", "restore a dataset through checkpoints");
  restore->add_option("--checkpoint", checkpoints, "checkpoint file(s), applied in order");
  restore->add_option("--chain", chain, "chain.json manifest (best checkpoints)");
  restore->add_option("--input", input, "input dataset (.bin)")->required();
  restore->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "score a dataset against its reference");
  eval->add_option("--input", input, "evaluated dataset (.bin)")->required();
  eval->add_option("--reference", reference, "reference dataset (.bin)")->required();
  eval->add_option("--out", out_dir, "report directory")->required();
  eval->add_option("--pass-index", pass_index, "pass index recorded in the report");

  auto* plot = app.add_subcommand("plot", "emit an SVG report plot");
  plot->add_option("--input", input, "evaluated dataset (.bin)")->required();
  plot->add_option("--reference", reference, "reference dataset (.bin)")->required();
  plot->add_option("--out", out_file, "output SVG file")->required();
  plot->add_option("--pass-index", pass_index, "pass index recorded in the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    check_thread_env();
    if (*synth)
      return cmd_synth(config_path, seed, !synth_seed->empty(), toy_scale, out_dir);
    CommonTrainArgs args{config_path, data_dir, out_dir, seed, false};
    if (*train) {
      args.seed_set = !train_seed->empty();
      return cmd_train(args);
    }
    if (*ptl) {
      args.seed_set = !ptl_seed->empty();
      return cmd_ptl(args);
    }
    if (*restore) return cmd_restore(checkpoints, chain, input, out_dir);
    if (*eval) return cmd_eval(input, reference, out_dir, pass_index);
    if (*plot) return cmd_plot(input, reference, out_file, pass_index);
  } catch (const corenet::ParameterError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const corenet::DimensionError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const corenet::NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return 4;
  } catch (const corenet::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
