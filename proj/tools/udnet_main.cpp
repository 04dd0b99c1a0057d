// udnet: unsupervised underwater-image-enhancement toolkit.
// Subcommands: refgen, colourfix, train, enhance, score, inspect.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "udnet/colourcorr.hpp"
#include "udnet/image_io.hpp"
#include "udnet/inference.hpp"
#include "udnet/metrics.hpp"
#include "udnet/refgen.hpp"
#include "udnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace udnet;

namespace {

constexpr const char* kVersion = "1.0.0";

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no images in " + dir.string());
  return files;
}

int run_refgen(const std::string& in_dir, const std::string& out_dir, int labels,
               std::uint64_t seed, bool no_colour) {
  fs::create_directories(out_dir);
  RefGenParams params;
  params.num_labels = labels;
  int count = 0;
  for (const auto& f : list_images(in_dir)) {
    try {
      ImageTensor img = load_image(f);
      auto set = generate_reference_set(img, params, !no_colour,
                                        trainer::mix_seed(seed, count));
      for (size_t i = 0; i < set.refs.size(); ++i)
        save_image(set.refs[i],
                   fs::path(out_dir) / (f.stem().string() + "_ref" + std::to_string(i) + ".png"));
      ++count;
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
    }
  }
  if (count == 0) throw Error("refgen: no image could be processed");
  std::cout << "generated references for " << count << " images\n";
  return 0;
}

int run_colourfix(const std::string& in_dir, const std::string& out_dir, double p_low,
                  double p_high) {
  fs::create_directories(out_dir);
  StretchParams sp{p_low, p_high};
  int count = 0;
  for (const auto& f : list_images(in_dir)) {
    try {
      save_image(colour_correct(load_image(f), sp),
                 fs::path(out_dir) / (f.stem().string() + ".png"));
      ++count;
    } catch (const Error& e) {
      std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
    }
  }
  if (count == 0) throw Error("colourfix: no image could be processed");
  std::cout << "colour-corrected " << count << " images\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"udnet - unsupervised underwater image enhancement toolkit"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "print toolkit and checkpoint-format versions");

  // refgen
  auto* c_refgen = app.add_subcommand("refgen", "generate enhanced reference maps");
  std::string rg_in, rg_out;
  int rg_labels = 3;
  std::uint64_t rg_seed = 0;
  bool rg_no_colour = false;
  c_refgen->add_option("--in", rg_in, "input image directory")->required();
  c_refgen->add_option("--out", rg_out, "output directory")->required();
  c_refgen->add_option("--labels", rg_labels, "reference maps per image");
  c_refgen->add_option("--seed", rg_seed, "random seed");
  c_refgen->add_flag("--no-colour", rg_no_colour, "skip colour correction of the maps");

  // colourfix
  auto* c_colour = app.add_subcommand("colourfix", "statistically guided colour correction");
  std::string cf_in, cf_out;
  double cf_plow = 0.5, cf_phigh = 99.5;
  c_colour->add_option("--in", cf_in, "input image directory")->required();
  c_colour->add_option("--out", cf_out, "output directory")->required();
  c_colour->add_option("--p-low", cf_plow, "lower stretch percentile");
  c_colour->add_option("--p-high", cf_phigh, "upper stretch percentile");

  // train
  auto* c_train = app.add_subcommand("train", "train the enhancer");
  std::string tr_data, tr_out, tr_config, tr_resume;
  std::optional<std::uint64_t> tr_seed;
  std::optional<int> tr_epochs, tr_batch, tr_crop, tr_labels;
  std::optional<double> tr_lr, tr_wf;
  std::optional<std::string> tr_colour_mode;
  bool tr_no_perceptual = false;
  c_train->add_option("--data", tr_data, "training image directory")->required();
  c_train->add_option("--out", tr_out, "output directory")->required();
  c_train->add_option("--config", tr_config, "key=value config file");
  c_train->add_option("--resume", tr_resume, "checkpoint to resume from");
  c_train->add_option("--seed", tr_seed, "random seed");
  c_train->add_option("--epochs", tr_epochs, "training epochs");
  c_train->add_option("--batch", tr_batch, "batch size");
  c_train->add_option("--crop", tr_crop, "crop size (divisible by 8)");
  c_train->add_option("--labels", tr_labels, "reference maps per image");
  c_train->add_option("--lr", tr_lr, "learning rate");
  c_train->add_option("--width-factor", tr_wf, "channel width factor");
  c_train->add_option("--colour-mode", tr_colour_mode, "labels_only|all_inputs|off");
  c_train->add_flag("--no-perceptual", tr_no_perceptual, "disable the perceptual loss");

  // enhance
  auto* c_enh = app.add_subcommand("enhance", "enhance images from a checkpoint");
  std::string en_in, en_out, en_ckpt, en_mode = "map";
  int en_samples = 1;
  std::uint64_t en_seed = 0;
  c_enh->add_option("--in", en_in, "input image or directory")->required();
  c_enh->add_option("--out", en_out, "output image or directory")->required();
  c_enh->add_option("--ckpt", en_ckpt, "checkpoint file")->required();
  c_enh->add_option("--mode", en_mode, "map|sample")->check(CLI::IsMember({"map", "sample"}));
  c_enh->add_option("--samples", en_samples, "samples per image (sample mode)");
  c_enh->add_option("--seed", en_seed, "random seed");

  // score
  auto* c_score = app.add_subcommand("score", "compute quality metrics");
  std::string sc_pred, sc_ref, sc_out;
  c_score->add_option("--pred", sc_pred, "directory of images to score")->required();
  c_score->add_option("--ref", sc_ref, "reference directory (optional)");
  c_score->add_option("--out", sc_out, "output CSV path")->required();

  // inspect
  auto* c_inspect = app.add_subcommand("inspect", "print checkpoint metadata");
  std::string in_ckpt;
  c_inspect->add_option("--ckpt", in_ckpt, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (show_version) {
      std::cout << "udnet " << kVersion << " (checkpoint format v"
                << trainer::kCheckpointVersion << ")\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 1;
    }
    if (*c_refgen) return run_refgen(rg_in, rg_out, rg_labels, rg_seed, rg_no_colour);
    if (*c_colour) return run_colourfix(cf_in, cf_out, cf_plow, cf_phigh);
    if (*c_train) {
      trainer::TrainConfig cfg;
      if (!tr_config.empty()) cfg = trainer::load_config_file(tr_config);
      if (tr_seed) cfg.seed = *tr_seed;
      if (tr_epochs) cfg.epochs = *tr_epochs;
      if (tr_batch) cfg.batch_size = *tr_batch;
      if (tr_crop) cfg.crop_size = *tr_crop;
      if (tr_labels) cfg.num_labels = *tr_labels;
      if (tr_lr) cfg.learning_rate = *tr_lr;
      if (tr_wf) cfg.width_factor = *tr_wf;
      if (tr_colour_mode) {
        if (*tr_colour_mode == "labels_only") cfg.colour_mode = trainer::ColourMode::labels_only;
        else if (*tr_colour_mode == "all_inputs") cfg.colour_mode = trainer::ColourMode::all_inputs;
        else if (*tr_colour_mode == "off") cfg.colour_mode = trainer::ColourMode::off;
        else throw Error("unknown colour mode: " + *tr_colour_mode);
      }
      if (tr_no_perceptual) cfg.use_perceptual = false;
      auto final_ckpt = trainer::train(cfg, tr_data, tr_out, tr_resume);
      std::cout << "final checkpoint: " << final_ckpt.string() << "\n";
      return 0;
    }
    if (*c_enh) {
      auto loaded = trainer::load_checkpoint(en_ckpt);
      auto mode = en_mode == "sample" ? inference::Mode::sample : inference::Mode::map;
      if (fs::is_directory(en_in)) {
        int n = inference::enhance_dir(en_in, en_out, *loaded.model, mode, en_samples, en_seed);
        std::cout << "enhanced " << n << " images\n";
      } else {
        ImageTensor img = load_image(en_in);
        auto res = inference::enhance(img, *loaded.model, mode, en_samples, en_seed);
        if (res.images.size() == 1) {
          save_image(res.images[0], en_out);
        } else {
          fs::path base(en_out);
          fs::path dir = base.parent_path();
          for (size_t i = 0; i < res.images.size(); ++i) {
            fs::path p = dir / (base.stem().string() + "_" + std::to_string(i) +
                                base.extension().string());
            save_image(res.images[i], p);
          }
        }
      }
      return 0;
    }
    if (*c_score) {
      auto report = metrics::score(sc_pred, sc_ref, sc_out);
      std::cout << "scored " << report.rows.size() << " images -> " << sc_out << "\n";
      if (report.mean_psnr)
        std::cout << "mean psnr=" << *report.mean_psnr << " ssim=" << *report.mean_ssim
                  << " gmsd=" << *report.mean_gmsd << "\n";
      std::cout << "mean uiqm=" << report.mean_uiqm << "\n";
      return 0;
    }
    if (*c_inspect) {
      auto loaded = trainer::load_checkpoint(in_ckpt);
      const auto& arch = loaded.model->arch;
      auto w = arch.widths();
      std::cout << "checkpoint format: v" << trainer::kCheckpointVersion << "\n"
                << "architecture: latent_dim=" << arch.latent_dim
                << " base_width=" << arch.base_width << " width_factor=" << arch.width_factor
                << " widths=[" << w[0] << "," << w[1] << "," << w[2] << "," << w[3] << "]"
                << " softplus_scale=" << arch.softplus_scale
                << " colour_module=" << loaded.model->colour_trainable << "\n"
                << "parameters: " << loaded.model->store.total_size() << "\n"
                << "step: " << loaded.step << "\n"
                << "run_seed: " << loaded.run_seed << "\n"
                << "config:\n" << trainer::config_to_text(loaded.config);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
