#include "corenet/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "corenet/error.hpp"
#include "corenet/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "record serialization assumes a little-endian host");

namespace corenet {

namespace fs = std::filesystem;

DatasetConfig scale_config(DatasetConfig base, double toy_scale) {
  if (toy_scale <= 0.0 || toy_scale > 1.0)
    throw ParameterError("dataset: toy scale must be in (0, 1]");
  base.train_val_count =
      static_cast<int>(std::llround(base.train_val_count * toy_scale));
  if (base.train_val_count < 5)
    throw ParameterError("dataset: scaled train+val pool is too small to split");
  base.test_per_cell = std::max(
      10, static_cast<int>(std::llround(base.test_per_cell * toy_scale)));
  return base;
}

std::vector<double> snr_grid(const DatasetConfig& cfg) {
  if (cfg.snr_max_db < cfg.snr_min_db)
    throw ParameterError("dataset: SNR range is inverted");
  std::vector<double> grid;
  for (double v = cfg.snr_min_db; v <= cfg.snr_max_db + 1e-9; v += 2.0)
    grid.push_back(v);
  return grid;
}

int train_count(const DatasetConfig& cfg) {
  return static_cast<int>(std::llround(cfg.train_val_count * 0.8));
}

int val_count(const DatasetConfig& cfg) {
  return cfg.train_val_count - train_count(cfg);
}

int test_count(const DatasetConfig& cfg) {
  return static_cast<int>(cfg.families.size() *
                          snr_grid(cfg).size() * cfg.test_per_cell);
}

Record make_record(const DatasetConfig& cfg, int split, int index) {
  if (cfg.families.empty()) throw ParameterError("dataset: family list is empty");
  if (split < 0 || split > 2) throw ParameterError("dataset: split must be 0, 1 or 2");
  if (index < 0 || (split == 2 && index >= test_count(cfg)))
    throw ParameterError("dataset: record index out of range");
  std::uint64_t rec_seed = Rng::mix(Rng::mix(cfg.seed, 0xD5 + split), index);
  Rng rng(rec_seed);

  Modulation family;
  RecipeOptions opt;
  opt.allowed_masks = cfg.allowed_masks;
  opt.snr_min_db = cfg.snr_min_db;
  opt.snr_max_db = cfg.snr_max_db;
  if (split == 2) {
    auto grid = snr_grid(cfg);
    int per_family = static_cast<int>(grid.size()) * cfg.test_per_cell;
    family = cfg.families[index / per_family];
    opt.fixed_target_db = grid[(index % per_family) / cfg.test_per_cell];
  } else {
    family = cfg.families[rng.uniform_int(cfg.families.size())];
  }

  WaveformSpec spec = random_spec(family, rng);
  ComplexSignal clean = generate_waveform(spec);
  CorruptionRecipe recipe = sample_recipe(rng.next_u64(), opt);
  CorruptedPair pair = compose_corruption(clean, recipe, family);

  Record rec;
  rec.modulation_tag = static_cast<std::uint32_t>(family);
  rec.target_snr_db = static_cast<float>(recipe.target_snr_db);
  rec.achieved_snr_db = static_cast<float>(pair.achieved_snr_db);
  rec.clean = std::move(pair.clean);
  rec.corrupted = std::move(pair.corrupted);
  return rec;
}

namespace {

void write_record(std::ofstream& out, const Record& r) {
  if (r.clean.size() != ComplexSignal::kSamples ||
      r.corrupted.size() != ComplexSignal::kSamples)
    throw DimensionError("dataset: records must hold 1024-sample signals");
  out.write(reinterpret_cast<const char*>(&r.modulation_tag), 4);
  out.write(reinterpret_cast<const char*>(&r.target_snr_db), 4);
  out.write(reinterpret_cast<const char*>(&r.achieved_snr_db), 4);
  auto dump = [&out](const std::vector<float>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  };
  dump(r.clean.i);
  dump(r.clean.q);
  dump(r.corrupted.i);
  dump(r.corrupted.q);
}

Record read_record(std::ifstream& in) {
  Record r;
  r.clean = ComplexSignal(ComplexSignal::kSamples);
  r.corrupted = ComplexSignal(ComplexSignal::kSamples);
  in.read(reinterpret_cast<char*>(&r.modulation_tag), 4);
  in.read(reinterpret_cast<char*>(&r.target_snr_db), 4);
  in.read(reinterpret_cast<char*>(&r.achieved_snr_db), 4);
  auto slurp = [&in](std::vector<float>& v) {
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
  };
  slurp(r.clean.i);
  slurp(r.clean.q);
  slurp(r.corrupted.i);
  slurp(r.corrupted.q);
  if (!in) throw DataError("dataset: truncated record");
  if (r.modulation_tag >= kModulationCount)
    throw DataError("dataset: record carries an unknown modulation tag");
  return r;
}

void write_split(const fs::path& path, const DatasetConfig& cfg, int split,
                 int begin, int end) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("dataset: cannot open " + path.string() + " for writing");
  for (int idx = begin; idx < end; ++idx) write_record(out, make_record(cfg, split, idx));
  out.flush();
  if (!out) throw DataError("dataset: short write to " + path.string());
}

}  // namespace

void write_records(const std::string& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("dataset: cannot open " + path + " for writing");
  for (const Record& r : records) write_record(out, r);
  out.flush();
  if (!out) throw DataError("dataset: short write to " + path);
}

std::vector<Record> read_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("dataset: cannot open " + path);
  in.seekg(0, std::ios::end);
  auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (bytes % kRecordBytes != 0)
    throw DataError("dataset: " + path + " is not a whole number of records");
  std::vector<Record> records;
  records.reserve(bytes / kRecordBytes);
  for (std::size_t k = 0; k < bytes / kRecordBytes; ++k)
    records.push_back(read_record(in));
  return records;
}

std::size_t record_count(const std::string& path) {
  std::error_code ec;
  auto bytes = fs::file_size(path, ec);
  if (ec) throw DataError("dataset: cannot stat " + path);
  if (bytes % kRecordBytes != 0)
    throw DataError("dataset: " + path + " is not a whole number of records");
  return bytes / kRecordBytes;
}

void build_dataset(const DatasetConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const int n_train = train_count(cfg);
  const int n_val = val_count(cfg);
  const int n_test = test_count(cfg);

  std::vector<fs::path> written;
  try {
    write_split(dir / "train.bin", cfg, 0, 0, n_train);
    written.push_back(dir / "train.bin");
    // Validation records continue the train/val pool indexing so the pool is
    // one deterministic sequence split 80/20.
    write_split(dir / "val.bin", cfg, 0, n_train, n_train + n_val);
    written.push_back(dir / "val.bin");
    write_split(dir / "test.bin", cfg, 2, 0, n_test);
    written.push_back(dir / "test.bin");

    nlohmann::json manifest;
    manifest["format_version"] = kDatasetFormatVersion;
    manifest["record_bytes"] = kRecordBytes;
    manifest["layout"] =
        "tag:u32,target_snr_db:f32,achieved_snr_db:f32,clean_i:f32[1024],"
        "clean_q:f32[1024],corrupted_i:f32[1024],corrupted_q:f32[1024]";
    manifest["seed"] = cfg.seed;
    manifest["counts"] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
    manifest["split"] = "80/20 over the train+val pool";
    manifest["snr_db"] = {{"min", cfg.snr_min_db},
                          {"max", cfg.snr_max_db},
                          {"grid", snr_grid(cfg)},
                          {"test_per_cell", cfg.test_per_cell}};
    std::vector<std::string> fam_names;
    for (Modulation m : cfg.families) fam_names.emplace_back(modulation_name(m));
    manifest["families"] = fam_names;
    manifest["artifact_subsets"] = cfg.allowed_masks;
    // Distribution choices that are not derivable from the files themselves.
    manifest["sampling"] = {
        {"artifact_subset", "uniform over listed subsets"},
        {"active_weights", "Uniform(0.1, 1.0)"},
        {"echo_delay", "uniform integer [32, 512]"},
        {"train_snr", "Uniform(min, max) dB"},
        {"interference", "random spec from the same family set, independent stream"}};
    manifest["normalization"] =
        "records store pre-normalization signals; consumers apply per-channel "
        "min/max normalization to [-1, 1] (idempotent on restored records)";
    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << "\n";
    if (!mf) throw DataError("dataset: cannot write manifest");
    written.push_back(dir / "manifest.json");
  } catch (...) {
    for (const auto& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    throw;
  }
}

}  // namespace corenet
