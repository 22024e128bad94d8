#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hytip/cli/ablation.hpp"
#include "hytip/cli/evaluate.hpp"
#include "hytip/cli/experiment.hpp"
#include "hytip/cli/report.hpp"
#include "hytip/codec/analysis.hpp"
#include "hytip/trainer/checkpoint.hpp"

using namespace hytip;
namespace fs = std::filesystem;

namespace {

void log_line(const std::string& s) { std::cerr << s << std::endl; }

/// Input video options shared by encode and eval.
struct Source {
  std::string input, synth, format = "image-dir", scene_cuts, name;
  int width = 0, height = 0, frames = 0, crop = 64;

  void add(CLI::App* c) {
    c->add_option("--input", input, "Sequence: image directory or raw I420 file");
    c->add_option("--synth", synth, "Synthetic sequence spec, e.g. global-translation:dx=1,dy=0");
    c->add_option("--format", format, "image-dir or yuv420-raw")->check(CLI::IsMember({"image-dir", "yuv420-raw"}));
    c->add_option("--width", width, "Frame width (yuv420-raw, synth)");
    c->add_option("--height", height, "Frame height (yuv420-raw, synth)");
    c->add_option("--scene-cuts", scene_cuts, "Scene-cut sidecar file");
    c->add_option("--crop", crop, "Crop to a multiple of this (0 disables)");
    c->add_option("--name", name, "Sequence name for reports");
  }

  pixelio::RawSequence load(std::uint64_t seed, const std::string& color) const {
    if (input.empty() == synth.empty()) throw std::invalid_argument("give exactly one of --input or --synth");
    cli::DatasetSpec d;
    d.color_matrix = color;
    d.crop_multiple = crop;
    cli::SequenceSource s;
    s.synth = synth;
    s.path = input;
    s.format = format;
    s.frames = frames;
    s.width = width > 0 ? width : 64;
    s.height = height > 0 ? height : 64;
    s.scene_cuts = scene_cuts;
    s.seed = seed;
    s.name = !name.empty() ? name : !input.empty() ? fs::path(input).filename().string() : std::string("synthetic");
    if (!synth.empty() && frames < 1) throw std::invalid_argument("--synth needs --frames");
    if (!input.empty() && format == "yuv420-raw" && (width < 1 || height < 1 || frames < 1))
      throw std::invalid_argument("yuv420-raw input needs --width, --height and --frames");
    return cli::load_source(d, s, fs::current_path());
  }
};

/// Raw float32 frame dump: u32 count, c, h, w, then samples (little-endian
/// on every supported host). Used to compare reconstructions bit for bit.
void write_f32(const std::string& path, const std::vector<nn::Tensor<float>>& frames) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const auto& s = frames.at(0).shape();
  const std::uint32_t hdr[4] = {static_cast<std::uint32_t>(frames.size()), static_cast<std::uint32_t>(s.c),
                                static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  f.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  for (const auto& t : frames)
    f.write(reinterpret_cast<const char*>(t.span().data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}

pixelio::RawSequence as_sequence(const std::string& name, const std::vector<nn::Tensor<float>>& frames) {
  pixelio::RawSequence s;
  s.name = name;
  s.frames = frames;
  s.height = frames.at(0).h();
  s.width = frames.at(0).w();
  return s;
}

codec::Model<float> load_model(const std::string& checkpoint) {
  if (checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
  if (!fs::exists(checkpoint)) throw std::runtime_error("checkpoint not found: " + checkpoint);
  return trainer::load_checkpoint<float>(checkpoint);
}

std::string stem_of(const std::string& name) {
  std::string s = name;
  for (auto& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-buffered learned video codec: synthesis, training, coding and evaluation"};
  app.require_subcommand(1);

  std::string config, checkpoint, out, color = "bt601", bitstream, recon, anchor_csv, test_csv, dataset, metric = "psnr",
                                       preset = "default", only, debug_csv;
  std::optional<std::uint64_t> seed;
  int lambda_idx = 0, frames = 0, intra_period = 32, workers = 0, synth_w = 64, synth_h = 64, cx_w = 1920, cx_h = 1024;
  bool save_recon = false;
  std::string eval_dataset = "custom";
  Source src;

  auto add_color = [&](CLI::App* c) {
    c->add_option("--color-matrix", color, "YUV matrix for raw input/output")->check(CLI::IsMember({"bt601", "bt709"}));
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic test sequence");
  std::string synth_spec = "global-translation:dx=1,dy=0.5", synth_format = "image-dir";
  synth->add_option("spec", synth_spec, "Pattern spec");
  synth->add_option("--frames", frames, "Frame count")->required();
  synth->add_option("--width", synth_w, "Width")->capture_default_str();
  synth->add_option("--height", synth_h, "Height")->capture_default_str();
  synth->add_option("--seed", seed, "Texture seed");
  synth->add_option("--format", synth_format)->check(CLI::IsMember({"image-dir", "yuv420-raw"}));
  synth->add_option("--out", out, "Output directory or .yuv file")->required();
  add_color(synth);

  // train
  auto* train = app.add_subcommand("train", "Run the training schedule");
  train->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Run directory (default: config output_dir)");
  train->add_option("--seed", seed, "Override the training seed");
  train->add_option("--checkpoint", checkpoint, "Resume from a schedule checkpoint");

  // encode
  auto* encode = app.add_subcommand("encode", "Encode a sequence to a bitstream and an RD CSV");
  encode->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  encode->add_option("--out", out, "Run directory")->required();
  encode->add_option("--lambda-idx", lambda_idx, "Rate point 0..3")->check(CLI::Range(0, 3));
  encode->add_option("--frames", frames, "Frames to code");
  encode->add_option("--intra-period", intra_period, "Intra period")->check(CLI::Range(1, 255));
  encode->add_option("--seed", seed, "Seed for --synth");
  encode->add_option("--debug-csv", debug_csv, "Dump per-frame predictor, mask and context summaries");
  encode->add_option("--dataset", dataset, "Dataset label for the RD CSV");
  encode->add_flag("--save-recon", save_recon, "Also write encoder-side reconstructions");
  src.add(encode);
  add_color(encode);

  // decode
  auto* decode = app.add_subcommand("decode", "Reconstruct frames from a bitstream");
  decode->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  decode->add_option("bitstream", bitstream, "Bitstream file")->required()->check(CLI::ExistingFile);
  decode->add_option("--out", out, "Output directory for PNG frames and recon.f32")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Metrics between reconstructions and the source");
  eval->add_option("--recon", recon, "Reconstructed PNG directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--bitstream", bitstream, "Bitstream the reconstructions came from")->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", eval_dataset, "Dataset label")->capture_default_str();
  eval->add_option("--out", out, "RD CSV path (default: stdout)");
  eval->add_option("--frames", frames, "Source frames (synth, yuv420-raw)");
  eval->add_option("--seed", seed, "Seed for --synth");
  src.add(eval);
  add_color(eval);

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate the buffering configurations");
  ablate->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", out, "Run directory (default: config output_dir)");
  ablate->add_option("--seed", seed, "Override the training seed");
  ablate->add_option("--workers", workers, "Parallel workers");
  ablate->add_option("--only", only, "Comma-separated subset of config names (the anchor is always added)");

  // bdrate
  auto* bdrate = app.add_subcommand("bdrate", "BD-rate between two RD CSVs");
  bdrate->add_option("anchor", anchor_csv, "Anchor RD CSV")->required()->check(CLI::ExistingFile);
  bdrate->add_option("test", test_csv, "Test RD CSV")->required()->check(CLI::ExistingFile);
  bdrate->add_option("--dataset", dataset, "Restrict to one dataset");
  bdrate->add_option("--metric", metric, "psnr or ms_ssim")->check(CLI::IsMember({"psnr", "ms_ssim"}));
  bdrate->add_option("--out", out, "Also write an RD plot (SVG)");

  // complexity
  auto* complexity = app.add_subcommand("complexity", "Parameter count, kMACs/pixel and buffer size");
  complexity->add_option("--config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  complexity->add_option("--checkpoint", checkpoint, "Model checkpoint");
  complexity->add_option("--preset", preset, "Model preset when no config/checkpoint")
      ->check(CLI::IsMember({"default", "tiny"}));
  complexity->add_option("--width", cx_w, "Frame width")->capture_default_str();
  complexity->add_option("--height", cx_h, "Frame height")->capture_default_str();
  complexity->add_option("--out", out, "Write the report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      auto s = pixelio::synth_sequence(synth_spec, frames, synth_h, synth_w, seed.value_or(1));
      if (synth_format == "image-dir")
        pixelio::save_image_dir(s, out);
      else
        pixelio::save_yuv420(s, out, pixelio::parse_color_standard(color));
      std::cout << "wrote " << s.size() << " frames (" << s.width << "x" << s.height << ") to " << out << "\n";
      if (std::isfinite(s.mean_motion())) std::cout << "mean motion " << s.mean_motion() << " px/frame\n";
      return 0;
    }

    if (*train) {
      auto exp = cli::load_experiment(config);
      if (seed) exp.seeds.train = *seed;
      const cli::RunDirs dirs(out.empty() ? exp.resolve(exp.output_dir) : fs::path(out));
      dirs.create();
      cli::save_experiment(exp, (dirs.root / "config.json").string());
      const auto schedule = exp.phases();
      const auto pool = trainer::make_training_pool(exp.pool.sequences, exp.pool.frames, exp.pool.size, exp.seeds.data);
      std::size_t first = 0;
      codec::Model<float> model;
      if (!checkpoint.empty()) {
        nlohmann::json meta;
        model = trainer::load_checkpoint<float>(checkpoint, &meta);
        first = trainer::resume_phase(meta);
        log_line("resuming at phase " + std::to_string(first));
      } else {
        model = codec::Model<float>(exp.model_config(), exp.seeds.model);
      }
      auto opt = exp.train_options();
      opt.checkpoint_dir = dirs.checkpoints.string();
      opt.log = log_line;
      const auto reps = trainer::run_schedule(model, schedule, pool, opt, first);
      std::ofstream f(dirs.reports / "training.csv");
      f << "phase,skipped,steps,initial_loss,final_loss,ratio,seconds\n";
      for (const auto& r : reps)
        f << r.name << "," << r.skipped << "," << r.steps << "," << r.initial_loss << "," << r.final_loss << ","
          << (r.skipped ? std::string("n/a") : cli::fmt(r.ratio(), 4)) << "," << r.seconds << "\n";
      trainer::save_checkpoint((dirs.checkpoints / "final.hyck").string(), model,
                               {{"next_phase", schedule.size()}, {"seed", exp.seeds.train}});
      std::cout << "checkpoint " << (dirs.checkpoints / "final.hyck").string() << "\n";
      return 0;
    }

    if (*encode) {
      const auto model = load_model(checkpoint);
      src.frames = frames;
      auto seq = src.load(seed.value_or(1), color);
      if (frames > 0 && static_cast<int>(seq.size()) > frames) seq.frames.resize(frames);
      std::vector<int> cuts;
      for (int c : seq.scene_cuts)
        if (c < static_cast<int>(seq.size())) cuts.push_back(c);
      seq.scene_cuts = cuts;
      const cli::RunDirs dirs(out);
      dirs.create();
      std::ofstream dbg;
      if (!debug_csv.empty()) dbg.open(debug_csv);
      const auto coded =
          model.encode_sequence(seq.frames, lambda_idx, intra_period, seq.scene_cuts, debug_csv.empty() ? nullptr : &dbg);
      const std::string stem = stem_of(seq.name) + "_l" + std::to_string(lambda_idx);
      const auto bs_path = dirs.bitstreams / (stem + ".hytp");
      coded.stream.save(bs_path.string());
      const auto rows = cli::measure(dataset.empty() ? "custom" : dataset, seq, coded.recon, coded.stream, lambda_idx);
      cli::write_rd_csv((dirs.reports / (stem + "_rd.csv")).string(), rows);
      {
        std::ofstream f(dirs.reports / (stem + "_frames.csv"));
        f << "frame,type,estimated_bits,actual_bits\n";
        for (std::size_t t = 0; t < coded.frames.size(); ++t)
          f << t << "," << (coded.frames[t].type == entropy::FrameType::kIntra ? "I" : "P") << ","
            << coded.frames[t].estimated_bits << "," << coded.frames[t].actual_bits << "\n";
      }
      if (save_recon) {
        pixelio::save_image_dir(as_sequence(seq.name, coded.recon), (dirs.root / "recon_encoder").string());
        write_f32((dirs.root / "recon_encoder" / "recon.f32").string(), coded.recon);
      }
      const auto p = evalkit::dataset_rd_point(rows);
      std::cout << bs_path.string() << ": " << seq.size() << " frames, " << cli::fmt(p.bpp, 4) << " bpp, "
                << cli::fmt(p.psnr_rgb, 2) << " dB, MS-SSIM " << cli::fmt(p.ms_ssim, 4) << "\n";
      return 0;
    }

    if (*decode) {
      const auto model = load_model(checkpoint);
      const auto bs = entropy::Bitstream::load(bitstream);
      const auto frames_out = model.decode_sequence(bs);
      pixelio::save_image_dir(as_sequence(fs::path(bitstream).stem().string(), frames_out), out);
      write_f32((fs::path(out) / "recon.f32").string(), frames_out);
      std::cout << "decoded " << frames_out.size() << " frames to " << out << "\n";
      return 0;
    }

    if (*eval) {
      src.frames = frames;
      auto seq = src.load(seed.value_or(1), color);
      const auto bs = entropy::Bitstream::load(bitstream);
      if (seq.size() > bs.frames.size()) seq.frames.resize(bs.frames.size());
      pixelio::LoadOptions lo;
      lo.crop_multiple = 0;
      auto rec = pixelio::load_sequence(recon, lo);
      const auto rows = cli::measure(eval_dataset, seq, rec.frames, bs, bs.header.lambda_index);
      if (out.empty())
        cli::write_rd_csv(std::cout, rows);
      else
        cli::write_rd_csv(out, rows);
      const auto p = evalkit::dataset_rd_point(rows);
      std::cerr << seq.size() << " frames: " << cli::fmt(p.bpp, 4) << " bpp, " << cli::fmt(p.psnr_rgb, 2)
                << " dB, MS-SSIM " << cli::fmt(p.ms_ssim, 4) << "\n";
      return 0;
    }

    if (*ablate) {
      auto exp = cli::load_experiment(config);
      if (seed) exp.seeds.train = *seed;
      if (workers > 0) exp.ablation.workers = workers;
      auto entries = exp.ablation.configs;
      if (!only.empty()) {
        std::vector<std::string> keep;
        std::stringstream ss(only);
        for (std::string n; std::getline(ss, n, ',');) keep.push_back(n);
        keep.push_back(exp.ablation.anchor);
        std::erase_if(entries, [&](const auto& e) { return std::find(keep.begin(), keep.end(), e.name) == keep.end(); });
      }
      const cli::RunDirs dirs(out.empty() ? exp.resolve(exp.output_dir) : fs::path(out));
      dirs.create();
      cli::save_experiment(exp, (dirs.root / "config.json").string());
      const auto data = cli::load_dataset(exp);
      const auto pool = trainer::make_training_pool(exp.pool.sequences, exp.pool.frames, exp.pool.size, exp.seeds.data);
      const auto rep = cli::run_ablation(exp, entries, data, pool, dirs.checkpoints.string(), log_line);
      cli::write_ablation(rep, dirs);
      std::cout << cli::ablation_markdown(rep);
      for (const auto& r : rep.rows)
        if (r.failed) return 2;
      return 0;
    }

    if (*bdrate) {
      const auto a = cli::curve_for(cli::read_rd_csv(anchor_csv), dataset);
      const auto t = cli::curve_for(cli::read_rd_csv(test_csv), dataset);
      double v = evalkit::bd_rate(a, t, evalkit::parse_quality_axis(metric));
      if (v == 0.0) v = 0.0;  // no "-0.0"
      std::printf("BD-rate (%s): %.4f%%\n", metric.c_str(), v);
      if (!out.empty())
        cli::write_text(out, cli::svg_rd_plot("RD curves", {{fs::path(anchor_csv).stem().string(), a},
                                                            {fs::path(test_csv).stem().string(), t}},
                                              evalkit::parse_quality_axis(metric)));
      return 0;
    }

    if (*complexity) {
      codec::Model<float> model;
      if (!checkpoint.empty())
        model = load_model(checkpoint);
      else if (!config.empty())
        model = codec::Model<float>(cli::load_experiment(config).model_config(), 1);
      else
        model = codec::Model<float>(preset == "tiny" ? codec::ModelConfig::tiny() : codec::ModelConfig::defaults(), 1);
      const auto r = codec::model_complexity(model, cx_w, cx_h);
      const nlohmann::json j{{"width", r.width},
                             {"height", r.height},
                             {"params_millions", r.params_millions},
                             {"intra_params_millions", r.intra_params_millions},
                             {"enc_kmacs_per_pixel", r.enc_kmacs_per_pixel},
                             {"dec_kmacs_per_pixel", r.dec_kmacs_per_pixel},
                             {"buffer_codecs", r.buffer_codecs},
                             {"buffer_system", r.buffer_system}};
      std::cout << j.dump(2) << "\n";
      if (!out.empty()) cli::write_text(out, j.dump(2) + "\n");
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "hytip: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
