#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corenet/corruption.hpp"
#include "corenet/signal.hpp"
#include "corenet/waveform.hpp"

namespace corenet {

// One serialized training example. Signals are stored in the synthesis
// domain (pre-normalization); consumers apply per-channel min/max
// normalization when assembling batches, which is idempotent for records
// whose corrupted field already went through a restoration pass.
//
// On-disk layout, little-endian, 16396 bytes per record:
//   u32 modulation tag, f32 target SNR dB, f32 achieved SNR dB,
//   f32 clean_i[1024], f32 clean_q[1024],
//   f32 corrupted_i[1024], f32 corrupted_q[1024]
struct Record {
  std::uint32_t modulation_tag = 0;
  float target_snr_db = 0.0f;
  float achieved_snr_db = 0.0f;
  ComplexSignal clean;
  ComplexSignal corrupted;
};

inline constexpr std::size_t kRecordBytes =
    4 + 4 + 4 + 4u * 4 * ComplexSignal::kSamples;
inline constexpr int kDatasetFormatVersion = 1;

struct DatasetConfig {
  std::uint64_t seed = 1;
  // Train+val pool, split 80/20 in record order.
  int train_val_count = 62400;
  // Test records per (family, SNR level) grid cell.
  int test_per_cell = 150;
  double snr_min_db = -14.0;
  double snr_max_db = 10.0;
  // Grid levels step 2 dB from snr_min to snr_max inclusive.
  std::vector<unsigned> allowed_masks = {1, 2, 3, 4, 5, 6, 7};
  std::vector<Modulation> families = {
      Modulation::kLfm, Modulation::kCostas, Modulation::kBpsk,
      Modulation::kFrank, Modulation::kP1, Modulation::kP2,
      Modulation::kP3, Modulation::kP4, Modulation::kT1,
      Modulation::kT2, Modulation::kT3, Modulation::kT4};
};

// Shrinks a config for desk-scale runs: train_val_count scales linearly and
// the test grid keeps at least 10 records per cell for usable statistics.
DatasetConfig scale_config(DatasetConfig base, double toy_scale);

std::vector<double> snr_grid(const DatasetConfig& cfg);

int train_count(const DatasetConfig& cfg);
int val_count(const DatasetConfig& cfg);
int test_count(const DatasetConfig& cfg);

// Generates one record deterministically from (config, split, index).
// split: 0 = train, 1 = val, 2 = test. Test records follow the fixed grid
// order family-major, then SNR level, then repetition.
Record make_record(const DatasetConfig& cfg, int split, int index);

// Writes train.bin / val.bin / test.bin plus manifest.json into out_dir.
// Deterministic: identical configs produce byte-identical files. Partial
// outputs are removed if generation aborts.
void build_dataset(const DatasetConfig& cfg, const std::string& out_dir);

void write_records(const std::string& path, const std::vector<Record>& records);
std::vector<Record> read_records(const std::string& path);
// Streaming variants used where datasets should not sit in memory twice.
std::size_t record_count(const std::string& path);

}  // namespace corenet
