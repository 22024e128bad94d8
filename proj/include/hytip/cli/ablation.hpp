#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hytip/cli/evaluate.hpp"
#include "hytip/cli/experiment.hpp"
#include "hytip/cli/report.hpp"
#include "hytip/tempbuf/buffer.hpp"
#include "hytip/trainer/train.hpp"

namespace hytip::cli {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct AblationRow {
  AblationEntry entry;
  double motion_maps = 0, inter_maps = 0, total_maps = 0, system_maps = 0;
  bool failed = false;
  std::string error;
  std::vector<trainer::PhaseReport> phases;
  std::vector<evalkit::FrameRecord> records;
  std::vector<evalkit::RDPoint> curve;
  double bd_psnr = kNaN, bd_ms_ssim = kNaN;
  std::string bd_note;
  std::map<std::string, double> bd_per_sequence;
  double seconds = 0;
};

struct SequenceComplexity {
  std::string name;
  double score = 0;
};

struct AblationReport {
  std::string anchor;
  std::vector<AblationRow> rows;
  std::vector<SequenceComplexity> order;  // ascending motion score

  const AblationRow* find(const std::string& name) const {
    for (const auto& r : rows)
      if (r.entry.name == name) return &r;
    return nullptr;
  }
};

inline codec::ModelConfig config_for(const ExperimentConfig& exp, const AblationEntry& e) {
  auto cfg = exp.model_config();
  cfg.buffer = tempbuf::BufferConfig::parse(e.motion, e.inter, cfg.buffer.entropy_extra);
  cfg.sync();
  cfg.validate();
  return cfg;
}

/// Codes every dataset sequence at every configured rate point.
inline std::vector<evalkit::FrameRecord> evaluate_dataset(const codec::Model<float>& model, const ExperimentConfig& exp,
                                                          const std::vector<pixelio::RawSequence>& data) {
  std::vector<evalkit::FrameRecord> out;
  for (int li : exp.eval.lambda_indices)
    for (const auto& s : data) {
      auto r = code_sequence(model, exp.dataset.name, s, li, exp.eval.intra_period);
      out.insert(out.end(), r.records.begin(), r.records.end());
    }
  return out;
}

/// Trains one buffering configuration with the experiment's seeds and budget,
/// then evaluates it. Exceptions propagate; the harness turns them into a
/// failed row.
inline AblationRow train_and_evaluate(const ExperimentConfig& exp, const AblationEntry& e,
                                      const std::vector<pixelio::RawSequence>& data,
                                      const trainer::TrainingData& pool, const std::string& checkpoint_dir,
                                      const std::function<void(const std::string&)>& log) {
  const auto t0 = std::chrono::steady_clock::now();
  AblationRow row;
  row.entry = e;
  const auto cfg = config_for(exp, e);
  row.motion_maps = cfg.buffer.motion_equivalents();
  row.inter_maps = cfg.buffer.inter_equivalents();
  row.total_maps = tempbuf::buffer_equivalents(cfg.buffer, false);
  row.system_maps = tempbuf::system_buffer_total(cfg.buffer);
  codec::Model<float> model(cfg, exp.seeds.model);
  auto opt = exp.train_options();
  opt.checkpoint_dir = checkpoint_dir;
  if (log) opt.log = [&](const std::string& s) { log(e.name + ": " + s); };
  if (!checkpoint_dir.empty()) fs::create_directories(checkpoint_dir);
  row.phases = trainer::run_schedule(model, exp.phases(), pool, opt);
  row.records = evaluate_dataset(model, exp, data);
  row.curve = curve_for(row.records);
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

inline double safe_bd(const std::vector<evalkit::RDPoint>& a, const std::vector<evalkit::RDPoint>& t,
                      evalkit::QualityAxis axis, std::string* note) {
  try {
    return evalkit::bd_rate(a, t, axis);
  } catch (const std::exception& ex) {
    if (note && note->empty()) *note = ex.what();
    return kNaN;
  }
}

inline std::vector<evalkit::RDPoint> sequence_curve(const std::vector<evalkit::FrameRecord>& rows,
                                                    const std::string& seq) {
  std::vector<evalkit::FrameRecord> keep;
  for (const auto& r : rows)
    if (r.sequence == seq) keep.push_back(r);
  return evalkit::dataset_curve(keep);
}

/// BD-rates of every finished row against the anchor, overall and per
/// sequence.
inline void fill_bd_rates(AblationReport& rep) {
  const AblationRow* anchor = rep.find(rep.anchor);
  for (auto& r : rep.rows) {
    if (r.failed) continue;
    if (!anchor || anchor->failed) {
      r.bd_note = "anchor unavailable";
      continue;
    }
    r.bd_psnr = safe_bd(anchor->curve, r.curve, evalkit::QualityAxis::kPsnr, &r.bd_note);
    r.bd_ms_ssim = safe_bd(anchor->curve, r.curve, evalkit::QualityAxis::kMsSsim, &r.bd_note);
    for (const auto& s : rep.order)
      r.bd_per_sequence[s.name] =
          safe_bd(sequence_curve(anchor->records, s.name), sequence_curve(r.records, s.name),
                  evalkit::QualityAxis::kPsnr, nullptr);
  }
}

/// Runs the configurations on `workers` threads; each worker owns its model
/// and generators, and a failing configuration is recorded without stopping
/// the others.
inline AblationReport run_ablation(const ExperimentConfig& exp, const std::vector<AblationEntry>& entries,
                                   const std::vector<pixelio::RawSequence>& data, const trainer::TrainingData& pool,
                                   const std::string& checkpoint_root = "",
                                   std::function<void(const std::string&)> log = nullptr) {
  AblationReport rep;
  rep.anchor = exp.ablation.anchor;
  rep.rows.resize(entries.size());
  std::mutex log_mu;
  auto safe_log = [&](const std::string& s) {
    if (!log) return;
    std::lock_guard<std::mutex> lk(log_mu);
    log(s);
  };
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      const auto& e = entries[i];
      const std::string dir = checkpoint_root.empty() ? "" : (fs::path(checkpoint_root) / e.name).string();
      try {
        rep.rows[i] = train_and_evaluate(exp, e, data, pool, dir, log ? std::function(safe_log) : nullptr);
        safe_log(e.name + ": done in " + fmt(rep.rows[i].seconds, 1) + " s");
      } catch (const std::exception& ex) {
        AblationRow& r = rep.rows[i];
        r = AblationRow{};
        r.entry = e;
        r.failed = true;
        r.error = ex.what();
        try {
          const auto b = tempbuf::BufferConfig::parse(e.motion, e.inter);
          r.motion_maps = b.motion_equivalents();
          r.inter_maps = b.inter_equivalents();
          r.total_maps = tempbuf::buffer_equivalents(b, false);
        } catch (const std::exception&) {
        }
        safe_log(e.name + ": FAILED: " + r.error);
      }
    }
  };
  const int n = std::max(1, std::min<int>(exp.ablation.workers, static_cast<int>(entries.size())));
  std::vector<std::thread> pool_threads;
  for (int k = 0; k < n; ++k) pool_threads.emplace_back(worker);
  for (auto& t : pool_threads) t.join();

  codec::Model<float> probe(exp.model_config(), exp.seeds.model);
  for (const auto& s : data) rep.order.push_back({s.name, motion_score(probe, s)});
  std::stable_sort(rep.order.begin(), rep.order.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  fill_bd_rates(rep);
  return rep;
}

// ---------------------------------------------------------------- output

inline std::string ablation_markdown(const AblationReport& rep) {
  std::vector<std::vector<std::string>> body;
  for (const auto& r : rep.rows) {
    const std::string status = r.failed ? "FAILED: " + r.error : (r.bd_note.empty() ? "ok" : "ok (" + r.bd_note + ")");
    body.push_back({r.entry.name, r.entry.motion + " (" + fmt(r.motion_maps, 4) + ")",
                    r.entry.inter + " (" + fmt(r.inter_maps, 4) + ")", fmt(r.total_maps, 4),
                    r.failed ? "n/a" : fmt(r.bd_psnr, 2), r.failed ? "n/a" : fmt(r.bd_ms_ssim, 2), status});
  }
  std::string md = "BD-rate (%) against the " + rep.anchor + " anchor; negative means fewer bits.\n\n";
  md += markdown_table({"config", "motion (e+i)", "inter (e+i)", "buffer total", "BD-rate PSNR", "BD-rate MS-SSIM", "status"},
                       body);
  std::vector<std::string> head{"config"};
  for (const auto& s : rep.order) head.push_back(s.name + " (" + fmt(s.score, 2) + ")");
  std::vector<std::vector<std::string>> per;
  for (const auto& r : rep.rows) {
    if (r.failed) continue;
    std::vector<std::string> line{r.entry.name};
    for (const auto& s : rep.order) {
      const auto it = r.bd_per_sequence.find(s.name);
      line.push_back(it == r.bd_per_sequence.end() ? "n/a" : fmt(it->second, 2));
    }
    per.push_back(line);
  }
  md += "\nPer-sequence BD-rate (PSNR), columns ordered by mean motion magnitude in pixels per frame. The motion "
        "score is a proxy for temporal complexity.\n\n";
  md += markdown_table(head, per);
  return md;
}

inline void write_ablation(const AblationReport& rep, const RunDirs& dirs) {
  {
    std::ofstream f(dirs.reports / "ablation.csv");
    f << "config,motion,inter,motion_maps,inter_maps,buffer_total,system_total,bd_rate_psnr,bd_rate_ms_ssim,status\n";
    for (const auto& r : rep.rows)
      f << r.entry.name << "," << r.entry.motion << "," << r.entry.inter << "," << r.motion_maps << ","
        << r.inter_maps << "," << r.total_maps << "," << r.system_maps << "," << fmt(r.bd_psnr, 4) << ","
        << fmt(r.bd_ms_ssim, 4) << "," << (r.failed ? "failed" : "ok") << "\n";
  }
  {
    std::ofstream f(dirs.reports / "ablation_per_sequence.csv");
    f << "config,sequence,motion_score,bd_rate_psnr\n";
    for (const auto& r : rep.rows)
      for (const auto& s : rep.order) {
        const auto it = r.bd_per_sequence.find(s.name);
        f << r.entry.name << "," << s.name << "," << s.score << ","
          << (it == r.bd_per_sequence.end() ? "n/a" : fmt(it->second, 4)) << "\n";
      }
  }
  {
    std::ofstream f(dirs.reports / "training.csv");
    f << "config,phase,skipped,steps,initial_loss,final_loss,ratio,seconds\n";
    for (const auto& r : rep.rows)
      for (const auto& p : r.phases)
        f << r.entry.name << "," << p.name << "," << p.skipped << "," << p.steps << "," << p.initial_loss << ","
          << p.final_loss << "," << (p.skipped ? std::string("n/a") : fmt(p.ratio(), 4)) << "," << p.seconds << "\n";
  }
  write_text((dirs.reports / "ablation.md").string(), ablation_markdown(rep));
  std::vector<PlotSeries> series;
  for (const auto& r : rep.rows) {
    if (r.failed) continue;
    write_rd_csv((dirs.reports / ("rd_" + r.entry.name + ".csv")).string(), r.records);
    series.push_back({r.entry.name, r.curve});
  }
  write_text((dirs.plots / "ablation_psnr.svg").string(), svg_rd_plot("Buffering strategies", series));
  write_text((dirs.plots / "ablation_ms_ssim.svg").string(),
             svg_rd_plot("Buffering strategies", series, evalkit::QualityAxis::kMsSsim));
}

}  // namespace hytip::cli
