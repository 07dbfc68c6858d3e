#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "corenet/dataset.hpp"

namespace corenet {

// Aggregated restoration quality of one dataset against the reference dataset
// it was derived from. All SNRs are computed from the stored record fields;
// every number is recomputable from the two files alone.
struct EvalReport {
  std::size_t record_count = 0;
  int pass_index = 0;
  double overall_mean_snr_db = 0.0;
  double corrupted_baseline_db = 0.0;  // mean SNR of the reference records
  // Keyed by the nearest even grid level in [-14, 10].
  std::map<int, double> per_level_mean_db;
  std::map<int, double> per_level_reference_db;
  std::map<int, int> per_level_count;
  // Mean per-record improvement over the reference, keyed by family name.
  std::map<std::string, double> per_modulation_improvement_db;
  std::map<std::string, double> per_modulation_mean_db;
  std::map<std::string, int> per_modulation_count;
};

// Records are matched by position; counts and modulation tags must agree.
// Evaluating a dataset against itself yields zero improvement everywhere and
// an overall mean equal to the baseline.
EvalReport evaluate_datasets(const std::vector<Record>& evaluated,
                             const std::vector<Record>& reference,
                             int pass_index = 0);

// Writes overall.csv, per_level.csv and per_modulation.csv into dir.
void write_eval_csv(const std::filesystem::path& dir, const EvalReport& report);

// Two-panel SVG: per-level mean SNR lines (evaluated vs reference) and
// per-modulation improvement bars. Output is deterministic markup.
void write_eval_svg(const std::filesystem::path& file, const EvalReport& report);

// Rounds an arbitrary target to its nearest even grid level in [-14, 10].
int snr_grid_level(float target_snr_db);

}  // namespace corenet
