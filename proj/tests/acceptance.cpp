// Acceptance run: one PASS/FAIL line per criterion, then details.
//
//   hytip_acceptance [--steps N] [--allow-fail 8,...] [--report FILE] [--workdir DIR]
//
// Exit status is nonzero when a criterion fails that is not listed in
// --allow-fail. Criterion 9 is soft and reports WARN instead of FAIL.

#include <unistd.h>

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "hand_count.hpp"
#include "hytip/cli/ablation.hpp"
#include "hytip/codec/analysis.hpp"
#include "hytip/entropy/density.hpp"
#include "hytip/evalkit/gop.hpp"
#include "hytip/trainer/gradcheck.hpp"

using namespace hytip;
namespace fs = std::filesystem;

namespace {

enum class Verdict { kPass, kFail, kWarn };

struct Line {
  int id;
  std::string title;
  Verdict verdict;
  std::string summary;
  std::string details;
  double seconds;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Line c1_buffer_accounting() {
  const auto t0 = Clock::now();
  struct Case {
    std::string text;
    bool motion;
    double expect;
  };
  const std::vector<Case> cases{{"2+0", true, 2.0},      {"3+0", false, 3.0},   {"0+4", true, 4.0},
                                {"0+2.125", true, 2.125}, {"2+4", true, 6.0},     {"2+0.125", true, 2.125},
                                {"0+51", false, 51.0},   {"0+5", false, 5.0},   {"3+48", false, 51.0},
                                {"3+2", false, 5.0}};
  int exact = 0;
  std::ostringstream d;
  for (const auto& c : cases) {
    const auto b = c.motion ? tempbuf::BufferConfig::parse(c.text, "3+0") : tempbuf::BufferConfig::parse("2+0", c.text);
    const double got = c.motion ? b.motion_equivalents() : b.inter_equivalents();
    exact += got == c.expect;
    d << "  " << (c.motion ? "motion " : "inter  ") << c.text << " -> " << got << " (expected " << c.expect << ")\n";
  }
  const double system = tempbuf::system_buffer_total(codec::ModelConfig::defaults().buffer);
  d << "  system total for 2+0.125 / 3+2 with the entropy term: " << system << "\n";
  const bool ok = exact == static_cast<int>(cases.size()) && system == 7.875;
  const double s = since(t0);
  return {1, "Buffer-accounting exactness", ok && s < 1.0 ? Verdict::kPass : Verdict::kFail,
          std::to_string(exact) + "/" + std::to_string(cases.size()) + " values exact, system total " +
              cli::fmt(system, 3),
          d.str(), s};
}

Line c2_masked_residual() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    nn::Tensor<float> x({1, 3, 4, 4}), xc({1, 3, 4, 4}), m({1, 3, 4, 4});
    for (auto* t : {&x, &xc, &m})
      for (auto& v : t->span()) v = u(rng);
    const auto r = intercodec::masked_residual(nn::Var<float>::constant(x), nn::Var<float>::constant(xc),
                                               nn::Var<float>::constant(m))
                       .value();
    for (std::size_t i = 0; i < r.size(); ++i) {
      const float rhs = (1.0f - m[i]) * x[i] + m[i] * (x[i] - xc[i]);
      worst = std::max(worst, static_cast<double>(std::abs(r[i] - rhs)));
    }
  }
  // Masks from the generator: range and channel sharing, including extreme
  // inputs that saturate the sigmoid.
  codec::Model<float> model(codec::ModelConfig::tiny(), 3);
  int masks = 0, bad = 0;
  for (double scale : {0.1, 1.0, 10.0, 1000.0})
    for (int k = 0; k < 25; ++k) {
      std::normal_distribution<float> g(0.0f, static_cast<float>(scale));
      nn::Tensor<float> flow({1, 2, 16, 16}), xc({1, 3, 16, 16});
      for (auto& v : flow.span()) v = g(rng);
      for (auto& v : xc.span()) v = u(rng);
      const auto mv = model.mask_generator()(nn::Var<float>::constant(flow), nn::Var<float>::constant(xc)).value();
      ++masks;
      bool ok = mv.shape().c == 3;
      for (int y = 0; y < 16 && ok; ++y)
        for (int x = 0; x < 16 && ok; ++x) {
          const float a = mv.at(0, 0, y, x);
          ok = a >= 0.0f && a <= 1.0f && mv.at(0, 1, y, x) == a && mv.at(0, 2, y, x) == a;
        }
      bad += !ok;
    }
  // And the masks produced inside real coding.
  const auto seq = pixelio::synth_sequence("global-translation:dx=1,dy=0.5", 4, 32, 32, 5);
  std::ostringstream dbg;
  model.encode_sequence(seq.frames, 1, 32, {}, &dbg);
  std::istringstream in(dbg.str());
  std::string row;
  std::getline(in, row);
  int coded = 0, coded_bad = 0;
  while (std::getline(in, row)) {
    std::vector<double> v;
    std::stringstream ss(row);
    for (std::string c; std::getline(ss, c, ',');) v.push_back(std::stod(c));
    ++coded;
    coded_bad += !(v[4] >= 0 && v[5] <= 1);  // mask_min, mask_max
  }
  const bool ok = worst <= 1e-6 && bad == 0 && coded_bad == 0;
  std::ostringstream d;
  d << "  1000 random triples, max |lhs - rhs| = " << worst << "\n  generator masks checked: " << masks
    << ", out of range or not channel-shared: " << bad << "\n  masks from coded P frames: " << coded
    << ", out of range: " << coded_bad << "\n";
  return {2, "Masked-residual identity", ok ? Verdict::kPass : Verdict::kFail,
          "max error " + cli::fmt(worst * 1e6, 3) + "e-6 over 1000 triples, " + std::to_string(masks + coded) +
              " masks in [0,1] and shared",
          d.str(), since(t0)};
}

Line c3_bitstream(const codec::Model<float>& model, const std::string& which) {
  const auto t0 = Clock::now();
  const auto seq = pixelio::synth_sequence("global-translation:dx=1.25,dy=-0.75", 96, 64, 64, 33);
  const auto coded = model.encode_sequence(seq.frames, 2, 32);
  const auto bytes = coded.stream.serialize();
  const auto parsed = entropy::Bitstream::parse(bytes);
  const auto dec = model.decode_sequence(parsed);
  int identical = 0, within = 0;
  double worst_gap = 0;
  std::vector<int> intra;
  for (std::size_t t = 0; t < dec.size(); ++t) {
    identical += dec[t].size() == coded.recon[t].size() &&
                 std::memcmp(dec[t].span().data(), coded.recon[t].span().data(), dec[t].size() * sizeof(float)) == 0;
    const auto& f = coded.frames[t];
    const double gap = std::abs(static_cast<double>(f.actual_bits) - f.estimated_bits);
    const double allow = 0.02 * f.estimated_bits + 64;
    within += gap <= allow;
    worst_gap = std::max(worst_gap, gap / allow);
    if (parsed.frames[t].type == entropy::FrameType::kIntra) intra.push_back(static_cast<int>(t));
  }
  const bool types_ok = intra == std::vector<int>{0, 32, 64};
  const bool ok = dec.size() == 96 && identical == 96 && within == 96 && types_ok;
  std::ostringstream d;
  d << "  model: " << which << "; 96 frames 64x64, " << bytes.size() << " bytes\n  I frames at:";
  for (int i : intra) d << " " << i;
  d << "\n  bit-identical frames: " << identical << "/96; rate within 2% + 64 bits: " << within
    << "/96 (worst gap " << cli::fmt(100 * worst_gap, 1) << "% of the allowance)\n";
  return {3, "Bitstream soundness", ok ? Verdict::kPass : Verdict::kFail,
          std::to_string(identical) + "/96 bit-identical, " + std::to_string(within) + "/96 within rate bound, I at " +
              (types_ok ? "{0,32,64}" : "wrong positions"),
          d.str(), since(t0)};
}

Line c4_range_coder() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  std::vector<std::vector<std::uint32_t>> tables;
  for (double sigma : {0.11, 0.5, 2.0, 12.0, 90.0}) tables.push_back(entropy::gaussian_table(sigma).cdf);
  std::vector<int> symbols;
  std::vector<std::vector<std::uint32_t>> cdfs;
  for (int i = 0; i < 10000; ++i) {
    const auto& cdf = tables[rng() % tables.size()];
    cdfs.push_back(cdf);
    symbols.push_back(static_cast<int>(rng() % (cdf.size() - 1)));
  }
  const bool mixed_ok = entropy::range_decode(entropy::range_encode(symbols, cdfs), cdfs) == symbols;
  const std::vector<double> pmf(255, 1.0 / 256);
  const auto uni = entropy::pmf_to_cdf(pmf, 1.0 / 256);
  std::vector<int> bytes_in;
  for (int i = 0; i < 10000; ++i) bytes_in.push_back(static_cast<int>(rng() % 256));
  std::vector<std::vector<std::uint32_t>> ucdfs(bytes_in.size(), uni);
  const auto coded = entropy::range_encode(bytes_in, ucdfs);
  const bool uni_ok = entropy::range_decode(coded, ucdfs) == bytes_in;
  const long excess = static_cast<long>(coded.size()) - 10000;
  const bool ok = mixed_ok && uni_ok && excess <= 6;
  std::ostringstream d;
  d << "  10^4 mixed-table symbols round trip: " << (mixed_ok ? "exact" : "MISMATCH") << "\n  10^4 uniform bytes -> "
    << coded.size() << " bytes (bound 10000, excess " << excess << "), round trip "
    << (uni_ok ? "exact" : "MISMATCH") << "\n";
  return {4, "Range-coder losslessness and near-optimality", ok ? Verdict::kPass : Verdict::kFail,
          std::string(mixed_ok && uni_ok ? "round trips exact" : "round trip failed") + ", uniform excess " +
              std::to_string(excess) + " bytes",
          d.str(), since(t0)};
}

Line c5_gradients() {
  const auto t0 = Clock::now();
  const auto r = trainer::gradient_check(codec::ModelConfig::defaults());
  std::set<std::string> paths(r.paths_covered.begin(), r.paths_covered.end());
  const bool cover = paths == std::set<std::string>{"motion", "mask", "inter", "entropy"};
  const bool ok = r.entries.size() >= 50 && r.failures == 0 && cover;
  std::ostringstream d;
  d << "  " << r.entries.size() << " parameters sampled, " << r.failures << " above 1e-3, max rel. error "
    << r.max_rel_error << "\n  samples replaced because +-h crossed a kink: " << r.kink_rejections
    << "\n  paths:";
  for (const auto& p : r.paths_covered) d << " " << p;
  d << "\n";
  return {5, "Gradient correctness", ok ? Verdict::kPass : Verdict::kFail,
          std::to_string(r.entries.size()) + " samples, max rel. error " + cli::fmt(r.max_rel_error * 1e6, 2) +
              "e-6, paths " + (cover ? "motion/mask/inter/entropy" : "incomplete"),
          d.str(), since(t0)};
}

Line c6_bd_rate() {
  const auto t0 = Clock::now();
  auto curve = [](std::vector<double> bpp, std::vector<double> psnr) {
    std::vector<evalkit::RDPoint> c(bpp.size());
    for (std::size_t i = 0; i < bpp.size(); ++i) c[i].bpp = bpp[i], c[i].psnr_rgb = psnr[i];
    return c;
  };
  const auto a = curve({0.05, 0.10, 0.20, 0.40, 0.80}, {30.0, 32.6, 35.1, 37.3, 39.2});
  auto off = a;
  for (auto& p : off) p.bpp *= 0.9;
  const auto t = curve({0.04, 0.09, 0.21, 0.45, 0.95}, {29.5, 32.4, 35.3, 37.6, 39.8});
  const double self = evalkit::bd_rate(a, a), ten = evalkit::bd_rate(a, off), cross = evalkit::bd_rate(a, t);
  const double oracle = -2.626672236;  // tests/oracles/bd_rate_reference.py
  const double rel = std::abs(cross - oracle) / std::abs(oracle);
  const bool ok = self == 0.0 && std::abs(ten + 10.0) <= 0.01 && rel <= 5e-4;
  std::ostringstream d;
  d << std::setprecision(10) << "  identity " << self << "\n  0.9x rates " << ten << "\n  crossing " << cross
    << " vs oracle " << oracle << " (relative error " << rel << ")\n";
  return {6, "BD-rate oracle", ok ? Verdict::kPass : Verdict::kFail,
          "identity " + cli::fmt(self, 6) + ", offset " + cli::fmt(ten, 4) + "%, crossing off by " +
              cli::fmt(rel * 100, 4) + "%",
          d.str(), since(t0)};
}

Line c7_epa() {
  const auto t0 = Clock::now();
  codec::Model<float> m(codec::ModelConfig::tiny(), 9);
  const auto seq = pixelio::synth_sequence("global-translation:dx=1,dy=0", 5, 32, 32, 6);
  std::vector<nn::Var<float>> clip;
  for (const auto& f : seq.frames) clip.push_back(nn::Var<float>::constant(f));
  double norms[2] = {0, 0};
  for (int k = 0; k < 2; ++k) {
    std::mt19937_64 rng(2);
    codec::ForwardOptions opt;
    opt.rng = &rng;
    opt.epa = k == 0;
    const auto r = m.forward_clip(clip, 500.0, opt);
    r.recon[0].retain_grad();
    nn::backward(r.frame_losses[3]);
    for (float v : r.recon[0].grad().span()) norms[k] += std::abs(v);
    auto ps = m.parameters();
    nn::zero_grad(ps);
  }
  const bool ok = norms[0] > 0 && norms[1] == 0.0;
  std::ostringstream d;
  d << "  |d loss_4 / d recon_1|_1 with epa: " << norms[0] << ", without: " << norms[1] << "\n";
  return {7, "EPA structural check", ok ? Verdict::kPass : Verdict::kFail,
          "with EPA " + cli::fmt(norms[0], 6) + ", without " + cli::fmt(norms[1], 6), d.str(), since(t0)};
}

Line c8_training(const cli::AblationRow& row, double budget_s) {
  int ran = 0, met = 0;
  std::ostringstream d;
  d << "  phase                          ratio   steps  initial -> final\n";
  for (const auto& p : row.phases) {
    if (p.skipped) {
      d << "  " << std::left << std::setw(30) << p.name << " skipped (no parameters)\n";
      continue;
    }
    ++ran;
    met += p.ratio() <= 0.7;
    d << "  " << std::left << std::setw(30) << p.name << " " << std::setw(7) << cli::fmt(p.ratio(), 3) << " "
      << std::setw(6) << p.steps << " " << cli::fmt(p.initial_loss, 3) << " -> " << cli::fmt(p.final_loss, 3)
      << (p.ratio() <= 0.7 ? "" : "   (< 30% reduction)") << "\n";
  }
  d << std::right;
  const bool finite = !row.failed;
  const bool ok = finite && met == ran && ran > 0 && row.seconds <= budget_s;
  if (row.failed) d << "  training aborted: " << row.error << "\n";
  return {8, "Training smoke test", ok ? Verdict::kPass : Verdict::kFail,
          std::to_string(met) + "/" + std::to_string(ran) + " phases reduced loss by >= 30%, " +
              (finite ? "no non-finite events" : "aborted") + ", " + cli::fmt(row.seconds, 0) + " s",
          d.str(), row.seconds};
}

Line c9_trend(const cli::AblationReport& rep, double seconds) {
  const auto* h = rep.find("hytip");
  const auto* e = rep.find("explicit");
  std::ostringstream d;
  d << cli::ablation_markdown(rep);
  for (const auto* r : {e, h}) {
    d << "\n  " << r->entry.name << " RD points:\n";
    for (const auto& p : r->curve)
      d << "    lambda " << p.lambda_idx << ": " << cli::fmt(p.bpp, 4) << " bpp, " << cli::fmt(p.psnr_rgb, 2)
        << " dB, MS-SSIM " << cli::fmt(p.ms_ssim, 4) << "\n";
  }
  const bool have = h && e && !h->failed && !e->failed && std::isfinite(h->bd_psnr);
  const bool ok = have && h->bd_psnr <= 0;
  return {9, "Buffering-strategy trend (soft)", ok ? Verdict::kPass : Verdict::kWarn,
          have ? "hybrid vs explicit BD-rate " + cli::fmt(h->bd_psnr, 2) + "% (PSNR), " + cli::fmt(h->bd_ms_ssim, 2) +
                     "% (MS-SSIM)"
               : "BD-rate unavailable: " + (h ? h->bd_note + h->error : std::string("missing row")),
          d.str(), seconds};
}

Line c10_complexity() {
  const auto t0 = Clock::now();
  evalkit::LayerInfo l{"c", "conv", 16, 32, 3, 1, 1, 1};
  const double one = evalkit::kmacs_per_pixel(evalkit::count_macs({l}, 64, 64), 64, 64);
  l.stride = 2;
  const double two = evalkit::kmacs_per_pixel(evalkit::count_macs({l}, 64, 64), 64, 64);
  codec::Model<float> m(codec::ModelConfig::defaults(), 1);
  std::vector<evalkit::LayerInfo> enc, dec;
  m.p_frame_layers(enc, dec);
  bool counts = true;
  std::ostringstream d;
  for (int s : {64, 256, 1024}) {
    const auto hc = testutil::hand_count_default(s);
    const auto e = evalkit::count_macs(enc, s, s), dd = evalkit::count_macs(dec, s, s);
    counts = counts && e == hc.enc && dd == hc.dec && enc.size() == hc.layers;
    d << "  " << s << "x" << s << ": enc " << e << " (hand " << hc.enc << "), dec " << dd << " (hand " << hc.dec
      << ")\n";
  }
  const auto rep = codec::model_complexity(m, 1920, 1024);
  d << "  default model at 1920x1024: " << cli::fmt(rep.enc_kmacs_per_pixel, 3) << " / "
    << cli::fmt(rep.dec_kmacs_per_pixel, 3) << " kMACs/pixel enc/dec, " << cli::fmt(rep.params_millions, 4)
    << " M P-frame parameters\n";
  const bool ok = one == 4.608 && two == 1.152 && counts;
  return {10, "Complexity accounting", ok ? Verdict::kPass : Verdict::kFail,
          "single layer " + cli::fmt(one, 3) + " / " + cli::fmt(two, 3) + " kMACs/px, default model " +
              (counts ? "matches the hand count" : "differs from the hand count"),
          d.str(), since(t0)};
}

Line c11_protocol() {
  const auto t0 = Clock::now();
  auto dims = [](int w, int h) {
    const auto f = pixelio::crop_to_multiple(pixelio::Frame({1, 3, h, w}), 64);
    return std::pair{f.w(), f.h()};
  };
  const bool crop = dims(1920, 1080) == std::pair{1920, 1024} && dims(416, 240) == std::pair{384, 192};
  // Matrix selection against the scalar definition.
  bool matrix = true;
  for (auto [s, kr, kb] : {std::tuple{pixelio::ColorStandard::kBT601, 0.299, 0.114},
                           std::tuple{pixelio::ColorStandard::kBT709, 0.2126, 0.0722}}) {
    const double Y = 120, U = 100, V = 150, yp = (Y - 16) / 219, pb = (U - 128) / 224, pr = (V - 128) / 224;
    const double r = yp + 2 * (1 - kr) * pr, b = yp + 2 * (1 - kb) * pb, g = (yp - kr * r - kb * b) / (1 - kr - kb);
    const auto got = pixelio::ColorMatrix::make(s).to_rgb(Y, U, V);
    matrix = matrix && std::abs(got[0] - r) < 1e-9 && std::abs(got[1] - g) < 1e-9 && std::abs(got[2] - b) < 1e-9;
  }
  matrix = matrix && pixelio::parse_color_standard("bt601") == pixelio::ColorStandard::kBT601 &&
           pixelio::parse_color_standard("bt709") == pixelio::ColorStandard::kBT709;
  // Flat per-frame mean over sequences of unequal length.
  std::vector<evalkit::FrameRecord> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({"d", "long", i, 0, 0.1, 30.0, 0.9});
  for (int i = 0; i < 2; ++i) rows.push_back({"d", "short", i, 0, 1.3, 42.0, 0.3});
  const auto p = evalkit::dataset_rd_point(rows);
  const bool flat = std::abs(p.bpp - 0.3) < 1e-12 && std::abs(p.psnr_rgb - 32.0) < 1e-12 &&
                    std::abs(p.ms_ssim - 0.8) < 1e-12;
  const bool ok = crop && matrix && flat;
  std::ostringstream d;
  d << "  crop 1920x1080 -> " << dims(1920, 1080).first << "x" << dims(1920, 1080).second << ", 416x240 -> "
    << dims(416, 240).first << "x" << dims(416, 240).second << "\n  BT.601/BT.709 conversion matches the scalar form: "
    << (matrix ? "yes" : "no") << "\n  flat frame mean bpp " << p.bpp << " (per-sequence mean would be 0.7)\n";
  return {11, "Evaluation protocol conformance", ok ? Verdict::kPass : Verdict::kFail,
          std::string(crop ? "crop ok" : "crop wrong") + ", " + (matrix ? "matrices ok" : "matrices wrong") + ", " +
              (flat ? "flat frame mean" : "mean wrong"),
          d.str(), since(t0)};
}

const char* tag(Verdict v) { return v == Verdict::kPass ? "PASS" : v == Verdict::kWarn ? "WARN" : "FAIL"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance run"};
  int steps = 40;
  std::vector<int> allow_fail;
  std::string report, workdir;
  double budget_min = 30;
  app.add_option("--steps", steps, "Optimizer steps per desk epoch")->capture_default_str();
  app.add_option("--allow-fail", allow_fail, "Criteria whose failure does not change the exit status")->delimiter(',');
  app.add_option("--report", report, "Also write the report here");
  app.add_option("--workdir", workdir, "Scratch directory for checkpoints");
  app.add_option("--budget-min", budget_min, "Training wall-clock budget for criterion 8")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const fs::path work = workdir.empty() ? fs::temp_directory_path() / ("hytip_accept_" + std::to_string(::getpid()))
                                        : fs::path(workdir);
  fs::create_directories(work);
  std::vector<Line> lines;
  auto progress = [](const Line& l) {
    std::cerr << "criterion " << l.id << ": " << tag(l.verdict) << " (" << cli::fmt(l.seconds, 1) << " s)" << std::endl;
  };
  for (auto f : {c1_buffer_accounting, c2_masked_residual, c4_range_coder, c6_bd_rate, c7_epa, c10_complexity,
                 c11_protocol, c5_gradients}) {
    lines.push_back(f());
    progress(lines.back());
  }

  // Smoke fixture: the default schedule at desk scale for the hybrid model and
  // the explicit anchor, same seeds and budget, trained in parallel.
  auto exp = cli::default_experiment();
  exp.training.steps_per_epoch = steps;
  exp.ablation.workers = 2;
  const auto t0 = Clock::now();
  const auto data = cli::load_dataset(exp);
  const auto pool = trainer::make_training_pool(exp.pool.sequences, exp.pool.frames, exp.pool.size, exp.seeds.data);
  const std::vector<cli::AblationEntry> entries{{"explicit", "2+0", "3+0"}, {"hytip", "2+0.125", "3+2"}};
  const auto rep = cli::run_ablation(exp, entries, data, pool, (work / "checkpoints").string(),
                                     [](const std::string& s) {
                                       if (s.find("epoch") == std::string::npos) std::cerr << s << std::endl;
                                     });
  const double fixture_s = since(t0);
  const auto* hy = rep.find("hytip");
  lines.push_back(c8_training(*hy, budget_min * 60));
  progress(lines.back());
  lines.push_back(c9_trend(rep, fixture_s));
  progress(lines.back());

  const auto ck = work / "checkpoints" / "hytip" / "latest.hyck";
  if (!hy->failed && fs::exists(ck)) {
    const auto model = trainer::load_checkpoint<float>(ck.string());
    lines.push_back(c3_bitstream(model, "trained smoke-fixture checkpoint"));
  } else {
    const codec::Model<float> model(codec::ModelConfig::tiny(), 1);
    lines.push_back(c3_bitstream(model, "untrained tiny model (fixture unavailable)"));
  }
  progress(lines.back());

  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  std::ostringstream out;
  int blocking = 0;
  for (const auto& l : lines) {
    const bool allowed = std::find(allow_fail.begin(), allow_fail.end(), l.id) != allow_fail.end();
    if (l.verdict == Verdict::kFail && !allowed) ++blocking;
    out << "[" << tag(l.verdict) << "] " << l.id << ". " << l.title << ": " << l.summary
        << (l.verdict == Verdict::kFail && allowed ? " (known failure, allowed)" : "") << "\n";
  }
  out << "\n";
  for (const auto& l : lines) out << "--- " << l.id << ". " << l.title << " (" << cli::fmt(l.seconds, 1) << " s)\n" << l.details << "\n";
  std::cout << out.str();
  if (!report.empty()) std::ofstream(report) << out.str();
  if (workdir.empty()) fs::remove_all(work);
  return blocking == 0 ? 0 : 1;
}
