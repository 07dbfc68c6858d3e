#pragma once

#include <filesystem>
#include <vector>

#include "corenet/training.hpp"

namespace corenet {

// Multi-pass progressive refinement: pass k trains on the signals pass k-1
// restored, warm-starting both networks from pass k-1's best checkpoint.

struct PtlPlan {
  int num_passes = 4;
  ApprenticeConfig acfg;
  MasterConfig mcfg;
  TrainConfig train;          // per-pass settings; the seed is re-derived per pass
  std::uint64_t init_seed = 7;  // fresh-parameter seed for pass 0
};

struct PassArtifacts {
  int pass_index = 0;
  std::filesystem::path dir;
  int best_epoch = 0;
  double best_val_snr_db = 0.0;
  double init_val_snr_db = 0.0;  // validation SNR of the warm-started weights
  // Mean stored-signal SNR of the restored splits this pass produced
  // (the next pass's inputs). Test value is NaN when no test split is given.
  double restored_train_snr_db = 0.0;
  double restored_val_snr_db = 0.0;
  double restored_test_snr_db = 0.0;
};

// Restores every record: the corrupted field is replaced by the re-normalized
// network output; clean signal, ordering, tags and targets are preserved, and
// the achieved field is updated to the restored SNR. Evaluation mode.
std::vector<Record> restore_records(const ParamMap& apprentice,
                                    const ApprenticeConfig& acfg,
                                    const std::vector<Record>& records,
                                    int batch_size = 64);

// Single-signal restoration: normalize, run the network, re-normalize.
ComplexSignal restore_signal(const ParamMap& apprentice, const ApprenticeConfig& acfg,
                             const ComplexSignal& input);

// Applies the saved pass checkpoints in order to one signal. Equivalent to
// following the serialized dataset chain record by record.
ComplexSignal restore_chain(const std::vector<std::filesystem::path>& checkpoints,
                            const ComplexSignal& input);

// Runs the full chain. Per pass k, run_dir/pass{k}/ holds init.ckpt (the
// warm-start state), the training artifacts (config.json, epochs.csv,
// best.ckpt, last.ckpt) and the restored datasets; run_dir gets a chain
// manifest (chain.json, content hashes linking each pass's inputs to the
// checkpoint that produced them) and summary.csv. A failing pass throws and
// leaves all completed artifacts in place. `test` may be empty.
std::vector<PassArtifacts> run_ptl(const PtlPlan& plan,
                                   const std::vector<Record>& train,
                                   const std::vector<Record>& val,
                                   const std::vector<Record>& test,
                                   const std::filesystem::path& run_dir,
                                   const TrainHooks& hooks = {});

// Mean snr_db(clean, corrupted) over stored record fields.
double mean_stored_snr_db(const std::vector<Record>& records);

}  // namespace corenet
