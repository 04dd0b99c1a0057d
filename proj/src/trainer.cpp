#include "udnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "udnet/colourcorr.hpp"
#include "udnet/image_io.hpp"
#include "udnet/serial.hpp"

namespace udnet::trainer {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// config

void TrainConfig::validate() const {
  if (learning_rate <= 0) throw Error("config: learning_rate must be positive");
  if (batch_size < 1) throw Error("config: batch_size must be >= 1");
  if (crop_size < 8 || crop_size % 8 != 0) throw Error("config: crop_size must be divisible by 8");
  if (epochs < 1) throw Error("config: epochs must be >= 1");
  if (num_labels < 1) throw Error("config: num_labels must be >= 1");
  if (width_factor <= 0) throw Error("config: width_factor must be positive");
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "learning_rate=" << c.learning_rate << "\n"
     << "batch_size=" << c.batch_size << "\n"
     << "epochs=" << c.epochs << "\n"
     << "crop_size=" << c.crop_size << "\n"
     << "seed=" << c.seed << "\n"
     << "lambda=" << c.loss_weights.lambda << "\n"
     << "beta=" << c.loss_weights.beta << "\n"
     << "kl_warmup_steps=" << c.loss_weights.kl_warmup_steps << "\n"
     << "kl_direction="
     << (c.loss_weights.kl_direction == losses::KlDirection::prior_to_posterior
             ? "prior_to_posterior"
             : "posterior_to_prior")
     << "\n"
     << "colour_mode="
     << (c.colour_mode == ColourMode::labels_only
             ? "labels_only"
             : c.colour_mode == ColourMode::all_inputs ? "all_inputs" : "off")
     << "\n"
     << "num_labels=" << c.num_labels << "\n"
     << "use_perceptual=" << (c.use_perceptual ? 1 : 0) << "\n"
     << "width_factor=" << c.width_factor << "\n"
     << "adam_beta1=" << c.adam_beta1 << "\n"
     << "adam_beta2=" << c.adam_beta2 << "\n"
     << "adam_eps=" << c.adam_eps << "\n"
     << "checkpoint_every_epochs=" << c.checkpoint_every_epochs << "\n"
     << "randomize_refs=" << (c.randomize_refs ? 1 : 0) << "\n"
     << "colour_trainable=" << (c.colour_trainable ? 1 : 0) << "\n"
     << "feature_weights_file=" << c.feature_weights_file << "\n";
  return os.str();
}

TrainConfig config_from_text(const std::string& text) {
  TrainConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config: bad line '" + line + "'");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "learning_rate") c.learning_rate = std::stod(val);
      else if (key == "batch_size") c.batch_size = std::stoi(val);
      else if (key == "epochs") c.epochs = std::stoi(val);
      else if (key == "crop_size") c.crop_size = std::stoi(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else if (key == "lambda") c.loss_weights.lambda = std::stod(val);
      else if (key == "beta") c.loss_weights.beta = std::stod(val);
      else if (key == "kl_warmup_steps") c.loss_weights.kl_warmup_steps = std::stol(val);
      else if (key == "kl_direction")
        c.loss_weights.kl_direction = val == "posterior_to_prior"
                                          ? losses::KlDirection::posterior_to_prior
                                          : losses::KlDirection::prior_to_posterior;
      else if (key == "colour_mode")
        c.colour_mode = val == "all_inputs" ? ColourMode::all_inputs
                        : val == "off"      ? ColourMode::off
                                            : ColourMode::labels_only;
      else if (key == "num_labels") c.num_labels = std::stoi(val);
      else if (key == "use_perceptual") c.use_perceptual = std::stoi(val) != 0;
      else if (key == "width_factor") c.width_factor = std::stod(val);
      else if (key == "adam_beta1") c.adam_beta1 = std::stod(val);
      else if (key == "adam_beta2") c.adam_beta2 = std::stod(val);
      else if (key == "adam_eps") c.adam_eps = std::stod(val);
      else if (key == "checkpoint_every_epochs") c.checkpoint_every_epochs = std::stoi(val);
      else if (key == "randomize_refs") c.randomize_refs = std::stoi(val) != 0;
      else if (key == "colour_trainable") c.colour_trainable = std::stoi(val) != 0;
      else if (key == "feature_weights_file") c.feature_weights_file = val;
      else throw Error("config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw Error("config: bad value for '" + key + "'");
    }
  }
  return c;
}

TrainConfig load_config_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("unreadable config file: " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_text(ss.str());
}

// ---------------------------------------------------------------------------
// dataset and augmentation

const ImageTensor& ImageRecord::image() const {
  if (!cached) cached = load_image(path);
  return *cached;
}

std::vector<ImageRecord> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("dataset: not a directory: " + dir.string());
  std::vector<fs::path> candidates;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
    if (ext == ".png" || ext == ".ppm") candidates.push_back(e.path());
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  std::vector<ImageRecord> records;
  for (const auto& p : candidates) {
    try {
      (void)load_image(p);  // validate now, decode again lazily later
      records.push_back({p, std::nullopt});
    } catch (const Error& e) {
      std::cerr << "warning: skipping unreadable image " << p << ": " << e.what() << "\n";
    }
  }
  if (records.empty()) throw Error("dataset: no readable images in " + dir.string());
  return records;
}

ImageTensor flip_horizontal(const ImageTensor& img) {
  ImageTensor out = img;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

ImageTensor flip_vertical(const ImageTensor& img) {
  ImageTensor out = img;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, img.height - 1 - y, x);
  return out;
}

ImageTensor rotate90(const ImageTensor& img, int quarter_turns) {
  int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return img;
  ImageTensor src = img;
  for (int t = 0; t < k; ++t) {
    ImageTensor out(src.channels, src.width, src.height, src.space);
    for (int c = 0; c < src.channels; ++c)
      for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x)
          out.at(c, x, src.height - 1 - y) = src.at(c, y, x);  // 90 deg clockwise
    src = std::move(out);
  }
  return src;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  // splitmix64 over a simple combination
  std::uint64_t z = a ^ (b * 0x9E3779B97F4A7C15ull) ^ (c * 0xBF58476D1CE4E5B9ull);
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

ImageTensor augment(const ImageTensor& img, std::uint64_t seed, int crop_size) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> quarter(0, 3);

  ImageTensor out = img;
  if (coin(rng)) out = flip_horizontal(out);
  if (coin(rng)) out = flip_vertical(out);
  out = rotate90(out, quarter(rng));

  // scale shortest side to crop_size
  if (std::min(out.height, out.width) != crop_size) {
    double scale = static_cast<double>(crop_size) / std::min(out.height, out.width);
    int nh = std::max(crop_size, static_cast<int>(std::lround(out.height * scale)));
    int nw = std::max(crop_size, static_cast<int>(std::lround(out.width * scale)));
    out = resize_bilinear(out, nh, nw);
  }
  std::uniform_int_distribution<int> oy(0, out.height - crop_size);
  std::uniform_int_distribution<int> ox(0, out.width - crop_size);
  int y0 = oy(rng), x0 = ox(rng);
  if (y0 == 0 && x0 == 0 && out.height == crop_size && out.width == crop_size) return out;
  ImageTensor crop(out.channels, crop_size, crop_size, out.space);
  for (int c = 0; c < out.channels; ++c)
    for (int y = 0; y < crop_size; ++y)
      for (int x = 0; x < crop_size; ++x) crop.at(c, y, x) = out.at(c, y0 + y, x0 + x);
  return crop;
}

// ---------------------------------------------------------------------------
// optimizer

void AdamState::init(const nn::ParamStore<float>& store) {
  m.clear();
  v.clear();
  for (const auto& e : store.entries()) {
    m.push_back(ad::Array<float>::Zero(e.var.size()));
    v.push_back(ad::Array<float>::Zero(e.var.size()));
  }
  t = 0;
}

void adam_step(nn::ParamStore<float>& store, AdamState& state, const TrainConfig& cfg) {
  auto& entries = store.entries();
  if (state.m.size() != entries.size()) throw Error("adam: state/store mismatch");
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& g = entries[i].var.node()->grad;
    if (g.size() != entries[i].var.size()) continue;  // parameter unused this step
    if (!g.allFinite()) throw Error("adam: NaN gradient in " + entries[i].name + "; aborting step");
  }
  ++state.t;
  const float b1 = static_cast<float>(cfg.adam_beta1);
  const float b2 = static_cast<float>(cfg.adam_beta2);
  const float corr1 = 1.0f - std::pow(b1, static_cast<float>(state.t));
  const float corr2 = 1.0f - std::pow(b2, static_cast<float>(state.t));
  const float lr = static_cast<float>(cfg.learning_rate);
  const float eps = static_cast<float>(cfg.adam_eps);
  for (size_t i = 0; i < entries.size(); ++i) {
    auto node = entries[i].var.node();
    if (node->grad.size() != node->value.size()) continue;
    state.m[i] = b1 * state.m[i] + (1.0f - b1) * node->grad;
    state.v[i] = b2 * state.v[i] + (1.0f - b2) * node->grad.square();
    node->value -= lr * (state.m[i] / corr1) / ((state.v[i] / corr2).sqrt() + eps);
  }
}

// ---------------------------------------------------------------------------
// checkpoint

void save_checkpoint(const fs::path& path, const nn::Model<float>& model, const AdamState& adam,
                     const TrainConfig& cfg, long step, std::uint64_t run_seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("unwritable path: " + path.string());
  using namespace serial;
  write_u32(os, kCheckpointMagic);
  write_u32(os, kCheckpointVersion);
  // architecture descriptor
  write_u32(os, static_cast<std::uint32_t>(model.arch.latent_dim));
  write_u32(os, static_cast<std::uint32_t>(model.arch.base_width));
  std::uint64_t wf_bits;
  static_assert(sizeof(double) == 8);
  std::memcpy(&wf_bits, &model.arch.width_factor, 8);
  write_u64(os, wf_bits);
  write_u32(os, model.arch.softplus_scale ? 1 : 0);
  write_u32(os, model.colour_trainable ? 1 : 0);
  write_string(os, config_to_text(cfg));
  write_u64(os, static_cast<std::uint64_t>(step));
  write_u64(os, run_seed);
  const auto& entries = model.store.entries();
  write_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    write_string(os, e.name);
    write_u32(os, static_cast<std::uint32_t>(e.var.shape().size()));
    for (auto d : e.var.shape()) write_u64(os, static_cast<std::uint64_t>(d));
    write_f32_array(os, e.var.value());
  }
  write_u64(os, static_cast<std::uint64_t>(adam.t));
  for (size_t i = 0; i < entries.size(); ++i) {
    write_f32_array(os, adam.m[i]);
    write_f32_array(os, adam.v[i]);
  }
  if (!os) throw Error("checkpoint write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("unreadable checkpoint: " + path.string());
  using namespace serial;
  if (read_u32(is) != kCheckpointMagic) throw Error("corrupt checkpoint (bad magic/length)");
  if (read_u32(is) != kCheckpointVersion) throw Error("unsupported checkpoint version");
  nn::ArchDescriptor arch;
  arch.latent_dim = static_cast<int>(read_u32(is));
  arch.base_width = static_cast<int>(read_u32(is));
  std::uint64_t wf_bits = read_u64(is);
  std::memcpy(&arch.width_factor, &wf_bits, 8);
  arch.softplus_scale = read_u32(is) != 0;
  bool colour_trainable = read_u32(is) != 0;

  LoadedCheckpoint out;
  out.config = config_from_text(read_string(is));
  out.step = static_cast<long>(read_u64(is));
  out.run_seed = read_u64(is);
  out.model = std::make_unique<nn::Model<float>>(arch, /*init_seed=*/0, colour_trainable);

  std::uint32_t count = read_u32(is);
  auto& entries = out.model->store.entries();
  if (count != entries.size()) throw Error("checkpoint/architecture mismatch (parameter count)");
  for (auto& e : entries) {
    std::string name = read_string(is);
    if (name != e.name) throw Error("checkpoint/architecture mismatch at " + e.name);
    std::uint32_t nd = read_u32(is);
    ad::Shape shape(nd);
    for (auto& d : shape) d = static_cast<Eigen::Index>(read_u64(is));
    if (shape != e.var.shape()) throw Error("checkpoint/architecture mismatch at " + e.name);
    read_f32_array(is, e.var.node()->value);
  }
  out.adam.init(out.model->store);
  out.adam.t = static_cast<long>(read_u64(is));
  for (size_t i = 0; i < entries.size(); ++i) {
    read_f32_array(is, out.adam.m[i]);
    read_f32_array(is, out.adam.v[i]);
  }
  if (!is) throw Error("corrupt checkpoint (bad magic/length)");
  return out;
}

// ---------------------------------------------------------------------------
// training loop

namespace {

using FloatVar = ad::Var<float>;

ad::Array<float> image_to_array(const ImageTensor& img) {
  return img.data.cast<float>();
}

/// Batch [B,3,S,S] constant from per-sample images.
FloatVar batch_constant(const std::vector<ImageTensor>& images) {
  const auto B = static_cast<Eigen::Index>(images.size());
  const Eigen::Index per = images[0].size();
  ad::Array<float> v(B * per);
  for (Eigen::Index i = 0; i < B; ++i) v.segment(i * per, per) = image_to_array(images[i]);
  return FloatVar::constant({B, 3, images[0].height, images[0].width}, std::move(v));
}

/// Trainable colour path: closed-form balance/stretch results enter as
/// constants, the identity-initialised merge convolutions carry the gradient.
FloatVar colour_correct_trainable(const nn::Model<float>& model,
                                  const std::vector<ImageTensor>& images) {
  std::vector<ImageTensor> gw, wp;
  for (const auto& img : images) {
    gw.push_back(gray_world_balance(img));
    wp.push_back(white_patch_balance(img));
  }
  auto dsb = ad::add(model.colour_gw(batch_constant(gw)), model.colour_wp(batch_constant(wp)));
  // stretch stages are sort-based and carry no gradient; decompose on values
  std::vector<ImageTensor> rs, hs, ls;
  const Eigen::Index per = images[0].size();
  StretchParams sp;
  for (size_t i = 0; i < images.size(); ++i) {
    ImageTensor d(3, images[0].height, images[0].width, ColourSpace::RGB);
    d.data = dsb.value().segment(static_cast<Eigen::Index>(i) * per, per).cast<double>().cwiseMin(1.0).cwiseMax(0.0);
    ImageTensor r = d;
    for (int c = 0; c < 3; ++c)
      r.channel(c) = stretch_channel(d.channel(c), sp.p_low, sp.p_high, 0.0, 1.0);
    rs.push_back(std::move(r));
    hs.push_back(hsi_to_rgb(stretch_hsi(rgb_to_hsi(d), sp)));
    ImageTensor lab = rgb_to_lab(d);
    lab.channel(0) = stretch_channel(lab.channel(0), sp.p_low, sp.p_high, 0.0, 100.0);
    ls.push_back(lab_to_rgb(lab));
  }
  auto merged = ad::add(ad::add(model.colour_r(batch_constant(rs)), model.colour_h(batch_constant(hs))),
                        model.colour_l(batch_constant(ls)));
  return ad::clamp(merged, 0.0f, 1.0f);
}

}  // namespace

fs::path train(const TrainConfig& cfg_in, const fs::path& data_dir, const fs::path& out_dir,
               const fs::path& resume, const TrainHooks& hooks) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  fs::create_directories(out_dir);

  auto records = load_dataset(data_dir);
  const int n = static_cast<int>(records.size());

  std::unique_ptr<nn::Model<float>> model;
  AdamState adam;
  long step = 0;
  std::uint64_t run_seed = cfg.seed;
  if (!resume.empty()) {
    auto loaded = load_checkpoint(resume);
    model = std::move(loaded.model);
    adam = std::move(loaded.adam);
    step = loaded.step;
    run_seed = loaded.run_seed;
    cfg = loaded.config;  // resumed runs keep their original configuration...
    cfg.epochs = cfg_in.epochs;  // ...except the epoch budget, which may extend
    cfg.validate();
  } else {
    nn::ArchDescriptor arch;
    arch.width_factor = cfg.width_factor;
    model = std::make_unique<nn::Model<float>>(arch, mix_seed(run_seed, 0x1A17u), cfg.colour_trainable);
    adam.init(model->store);
  }

  const int batch = std::min(cfg.batch_size, n);
  const long steps_per_epoch = std::max(1, n / batch);
  const long total_steps = static_cast<long>(cfg.epochs) * steps_per_epoch;

  nn::FeatureNet<float> feature_net =
      cfg.feature_weights_file.empty() ? nn::FeatureNet<float>::from_seed()
                                       : serial::load_feature_net<float>(cfg.feature_weights_file);
  const nn::FeatureNet<float>* fnet = cfg.use_perceptual ? &feature_net : nullptr;
  if (!cfg.use_perceptual) cfg.loss_weights.lambda = 0.0;

  std::ofstream log(out_dir / "loss_log.csv");
  log << "step,l_mse,l_perc,l_m,l_s,total\n";
  log.precision(10);

  RefGenParams ref_params;
  ref_params.num_labels = cfg.num_labels;
  ref_params.randomize = cfg.randomize_refs;

  double best_loss = std::numeric_limits<double>::infinity();
  const int S = cfg.crop_size;
  const int latent = model->arch.latent_dim;

  for (; step < total_steps; ++step) {
    const long epoch = step / steps_per_epoch;
    const long pos = step % steps_per_epoch;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix_seed(run_seed, 0x5BFF1Eu, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    std::vector<ImageTensor> xs, refs;
    for (int j = 0; j < batch; ++j) {
      const int idx = order[(pos * batch + j) % n];
      const std::uint64_t base = mix_seed(run_seed, static_cast<std::uint64_t>(step),
                                          static_cast<std::uint64_t>(j));
      ImageTensor img = augment(records[idx].image(), mix_seed(base, 1), S);
      ReferenceSet set = generate_reference_set(img, ref_params, /*colour_correct_refs=*/false,
                                                mix_seed(base, 2));
      std::mt19937_64 pick_rng(mix_seed(base, 3));
      std::uniform_int_distribution<int> pick(0, cfg.num_labels - 1);
      ImageTensor ref = set.refs[static_cast<size_t>(pick(pick_rng))];
      if (cfg.colour_mode != ColourMode::off && !cfg.colour_trainable) {
        ref = colour_correct(ref);
        if (hooks.on_colour_correct) hooks.on_colour_correct();
      }
      if (cfg.colour_mode == ColourMode::all_inputs && !cfg.colour_trainable) {
        img = colour_correct(img);
        if (hooks.on_colour_correct) hooks.on_colour_correct();
      }
      xs.push_back(std::move(img));
      refs.push_back(std::move(ref));
    }

    FloatVar x, y_ref;
    if (cfg.colour_trainable && cfg.colour_mode != ColourMode::off) {
      y_ref = colour_correct_trainable(*model, refs);
      if (hooks.on_colour_correct) hooks.on_colour_correct();
      x = cfg.colour_mode == ColourMode::all_inputs ? colour_correct_trainable(*model, xs)
                                                    : batch_constant(xs);
    } else {
      x = batch_constant(xs);
      y_ref = batch_constant(refs);
    }

    // reparameterisation noise
    std::mt19937_64 eps_rng(mix_seed(run_seed, static_cast<std::uint64_t>(step), 0xE95u));
    std::normal_distribution<float> normal(0.0f, 1.0f);
    ad::Array<float> ea(batch * latent), eb(batch * latent);
    for (Eigen::Index i = 0; i < ea.size(); ++i) ea[i] = normal(eps_rng);
    for (Eigen::Index i = 0; i < eb.size(); ++i) eb[i] = normal(eps_rng);
    auto eps_a = FloatVar::constant({batch, latent}, std::move(ea));
    auto eps_b = FloatVar::constant({batch, latent}, std::move(eb));

    auto fw = model->forward_train(x, y_ref, eps_a, eps_b);
    auto loss = losses::total_loss(fw.y_hat, y_ref, fw.posterior_m, fw.posterior_s, fw.prior_m,
                                   fw.prior_s, cfg.loss_weights, step, fnet);

    model->store.zero_grads();
    ad::backward(loss.total);
    adam_step(model->store, adam, cfg);

    StepLog sl{step,
               static_cast<double>(loss.l_mse.value()[0]),
               static_cast<double>(loss.l_perc.value()[0]),
               static_cast<double>(loss.l_m.value()[0]),
               static_cast<double>(loss.l_s.value()[0]),
               static_cast<double>(loss.total.value()[0])};
    log << sl.step << "," << sl.l_mse << "," << sl.l_perc << "," << sl.l_m << "," << sl.l_s << ","
        << sl.total << "\n";
    log.flush();
    if (hooks.on_step) hooks.on_step(sl);

    const bool epoch_end = pos == steps_per_epoch - 1;
    if (sl.total < best_loss) {
      best_loss = sl.total;
      save_checkpoint(out_dir / "ckpt_best.udnk", *model, adam, cfg, step + 1, run_seed);
    }
    if (epoch_end && cfg.checkpoint_every_epochs > 0 &&
        (epoch + 1) % cfg.checkpoint_every_epochs == 0) {
      save_checkpoint(out_dir / ("ckpt_epoch_" + std::to_string(epoch + 1) + ".udnk"), *model,
                      adam, cfg, step + 1, run_seed);
    }
  }

  fs::path final_path = out_dir / "ckpt_final.udnk";
  save_checkpoint(final_path, *model, adam, cfg, step, run_seed);
  return final_path;
}

}  // namespace udnet::trainer
