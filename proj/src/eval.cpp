#include "corenet/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "corenet/error.hpp"
#include "corenet/metrics.hpp"
#include "corenet/waveform.hpp"

namespace corenet {

int snr_grid_level(float target_snr_db) {
  long level = std::lround(static_cast<double>(target_snr_db) / 2.0) * 2;
  if (level < -14) level = -14;
  if (level > 10) level = 10;
  return static_cast<int>(level);
}

EvalReport evaluate_datasets(const std::vector<Record>& evaluated,
                             const std::vector<Record>& reference,
                             int pass_index) {
  if (evaluated.size() != reference.size())
    throw DataError("evaluate_datasets: record counts differ (" +
                    std::to_string(evaluated.size()) + " vs " +
                    std::to_string(reference.size()) + ")");
  if (evaluated.empty()) throw DataError("evaluate_datasets: empty datasets");

  EvalReport rep;
  rep.record_count = evaluated.size();
  rep.pass_index = pass_index;

  std::map<int, double> level_sum, level_ref_sum;
  std::map<std::string, double> mod_sum, mod_gain_sum;
  double total = 0.0, total_ref = 0.0;

  for (std::size_t k = 0; k < evaluated.size(); ++k) {
    const Record& e = evaluated[k];
    const Record& r = reference[k];
    if (e.modulation_tag != r.modulation_tag)
      throw DataError("evaluate_datasets: modulation mismatch at record " +
                      std::to_string(k));
    const double snr_e = snr_db(e.clean, e.corrupted);
    const double snr_r = snr_db(r.clean, r.corrupted);
    total += snr_e;
    total_ref += snr_r;

    const int level = snr_grid_level(r.target_snr_db);
    level_sum[level] += snr_e;
    level_ref_sum[level] += snr_r;
    rep.per_level_count[level] += 1;

    const std::string family =
        modulation_name(static_cast<Modulation>(e.modulation_tag));
    mod_sum[family] += snr_e;
    mod_gain_sum[family] += snr_e - snr_r;
    rep.per_modulation_count[family] += 1;
  }

  const double n = static_cast<double>(evaluated.size());
  rep.overall_mean_snr_db = total / n;
  rep.corrupted_baseline_db = total_ref / n;
  for (const auto& [level, sum] : level_sum) {
    rep.per_level_mean_db[level] = sum / rep.per_level_count[level];
    rep.per_level_reference_db[level] = level_ref_sum[level] / rep.per_level_count[level];
  }
  for (const auto& [family, sum] : mod_sum) {
    rep.per_modulation_mean_db[family] = sum / rep.per_modulation_count[family];
    rep.per_modulation_improvement_db[family] =
        mod_gain_sum[family] / rep.per_modulation_count[family];
  }
  return rep;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string svg_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

void write_eval_csv(const std::filesystem::path& dir, const EvalReport& rep) {
  std::filesystem::create_directories(dir);

  {
    std::ofstream out(dir / "overall.csv", std::ios::trunc);
    if (!out) throw DataError("cannot write overall.csv in " + dir.string());
    out << "schema_version,record_count,pass_index,overall_mean_snr_db,"
           "corrupted_baseline_db,improvement_db\n";
    out << 1 << ',' << rep.record_count << ',' << rep.pass_index << ','
        << num(rep.overall_mean_snr_db) << ',' << num(rep.corrupted_baseline_db)
        << ',' << num(rep.overall_mean_snr_db - rep.corrupted_baseline_db) << "\n";
  }
  {
    std::ofstream out(dir / "per_level.csv", std::ios::trunc);
    if (!out) throw DataError("cannot write per_level.csv in " + dir.string());
    out << "schema_version,snr_level_db,count,mean_snr_db,reference_mean_snr_db\n";
    for (const auto& [level, mean] : rep.per_level_mean_db)
      out << 1 << ',' << level << ',' << rep.per_level_count.at(level) << ','
          << num(mean) << ',' << num(rep.per_level_reference_db.at(level)) << "\n";
  }
  {
    std::ofstream out(dir / "per_modulation.csv", std::ios::trunc);
    if (!out) throw DataError("cannot write per_modulation.csv in " + dir.string());
    out << "schema_version,modulation,count,mean_snr_db,improvement_db\n";
    for (const auto& [family, mean] : rep.per_modulation_mean_db)
      out << 1 << ',' << family << ',' << rep.per_modulation_count.at(family) << ','
          << num(mean) << ',' << num(rep.per_modulation_improvement_db.at(family))
          << "\n";
  }
}

void write_eval_svg(const std::filesystem::path& file, const EvalReport& rep) {
  // Fixed 900x380 canvas: per-level lines on the left, per-family bars on the
  // right. Pure markup, so identical reports emit identical bytes.
  const double W = 900, H = 380;
  const double lx0 = 60, lx1 = 420, ly0 = 40, ly1 = 320;
  const double rx0 = 500, rx1 = 870, ry0 = 40, ry1 = 320;

  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& [level, mean] : rep.per_level_mean_db) {
    const double ref = rep.per_level_reference_db.at(level);
    if (first) {
      lo = std::min(mean, ref);
      hi = std::max(mean, ref);
      first = false;
    }
    lo = std::min({lo, mean, ref});
    hi = std::max({hi, mean, ref});
  }
  if (first) {
    lo = -1.0;
    hi = 1.0;
  }
  if (hi - lo < 1.0) hi = lo + 1.0;
  lo -= 0.05 * (hi - lo);
  hi += 0.05 * (hi - lo);

  auto ly = [&](double v) { return ly1 - (v - lo) / (hi - lo) * (ly1 - ly0); };
  const int min_level = rep.per_level_mean_db.empty()
                            ? -14
                            : rep.per_level_mean_db.begin()->first;
  const int max_level = rep.per_level_mean_db.empty()
                            ? 10
                            : rep.per_level_mean_db.rbegin()->first;
  auto lx = [&](int level) {
    if (max_level == min_level) return (lx0 + lx1) / 2.0;
    return lx0 + (static_cast<double>(level - min_level) / (max_level - min_level)) *
                     (lx1 - lx0);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_coord(W) +
         "\" height=\"" + svg_coord(H) + "\" viewBox=\"0 0 " + svg_coord(W) + " " +
         svg_coord(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + svg_coord((lx0 + lx1) / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">Mean SNR per input level (dB)</text>\n";
  svg += "<text x=\"" + svg_coord((rx0 + rx1) / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">Improvement per modulation (dB)</text>\n";

  svg += "<line x1=\"" + svg_coord(lx0) + "\" y1=\"" + svg_coord(ly1) + "\" x2=\"" +
         svg_coord(lx1) + "\" y2=\"" + svg_coord(ly1) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<line x1=\"" + svg_coord(lx0) + "\" y1=\"" + svg_coord(ly0) + "\" x2=\"" +
         svg_coord(lx0) + "\" y2=\"" + svg_coord(ly1) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n";

  auto polyline = [&](const std::map<int, double>& series, const char* color) {
    if (series.empty()) return;
    std::string pts;
    for (const auto& [level, mean] : series)
      pts += svg_coord(lx(level)) + "," + svg_coord(ly(mean)) + " ";
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    for (const auto& [level, mean] : series)
      svg += "<circle cx=\"" + svg_coord(lx(level)) + "\" cy=\"" +
             svg_coord(ly(mean)) + "\" r=\"3\" fill=\"" + std::string(color) +
             "\"/>\n";
  };
  polyline(rep.per_level_reference_db, "#888888");
  polyline(rep.per_level_mean_db, "#1f6fb2");

  for (const auto& [level, mean] : rep.per_level_mean_db) {
    svg += "<text x=\"" + svg_coord(lx(level)) + "\" y=\"" + svg_coord(ly1 + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
           std::to_string(level) + "</text>\n";
    (void)mean;
  }
  svg += "<text x=\"" + svg_coord(lx0 - 8) + "\" y=\"" + svg_coord(ly(lo) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
         svg_coord(lo) + "</text>\n";
  svg += "<text x=\"" + svg_coord(lx0 - 8) + "\" y=\"" + svg_coord(ly(hi) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" +
         svg_coord(hi) + "</text>\n";

  if (!rep.per_modulation_improvement_db.empty()) {
    double bmax = 0.0, bmin = 0.0;
    for (const auto& [family, gain] : rep.per_modulation_improvement_db) {
      bmax = std::max(bmax, gain);
      bmin = std::min(bmin, gain);
    }
    if (bmax - bmin < 1e-9) bmax = bmin + 1.0;
    auto ry = [&](double v) { return ry1 - (v - bmin) / (bmax - bmin) * (ry1 - ry0); };
    const double zero_y = ry(std::max(0.0, bmin));
    const std::size_t nbar = rep.per_modulation_improvement_db.size();
    const double bw = (rx1 - rx0) / static_cast<double>(nbar);
    std::size_t idx = 0;
    for (const auto& [family, gain] : rep.per_modulation_improvement_db) {
      const double x = rx0 + idx * bw + 0.15 * bw;
      const double top = std::min(ry(gain), zero_y);
      const double height = std::fabs(ry(gain) - zero_y);
      svg += "<rect x=\"" + svg_coord(x) + "\" y=\"" + svg_coord(top) +
             "\" width=\"" + svg_coord(0.7 * bw) + "\" height=\"" +
             svg_coord(height) + "\" fill=\"#2a9d5c\"/>\n";
      svg += "<text x=\"" + svg_coord(x + 0.35 * bw) + "\" y=\"" +
             svg_coord(ry1 + 14) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"8\">" +
             family + "</text>\n";
      ++idx;
    }
    svg += "<line x1=\"" + svg_coord(rx0) + "\" y1=\"" + svg_coord(zero_y) +
           "\" x2=\"" + svg_coord(rx1) + "\" y2=\"" + svg_coord(zero_y) +
           "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  }
  svg += "</svg>\n";

  std::ofstream out(file, std::ios::trunc);
  if (!out) throw DataError("cannot write plot: " + file.string());
  out << svg;
}

}  // namespace corenet
