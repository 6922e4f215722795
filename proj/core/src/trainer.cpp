#include "xdecode/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "xdecode/config.hpp"
#include "xdecode/error.hpp"
#include "xdecode/image_io.hpp"
#include "xdecode/imaging.hpp"

namespace xdecode {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(Errc::invalid_config, "epochs must be >= 1");
  if (batch_size < 1) throw Error(Errc::invalid_config, "batch_size must be >= 1");
  if (lr <= 0) throw Error(Errc::invalid_config, "lr must be positive");
  if (loss_scale <= 0) throw Error(Errc::invalid_config, "loss_scale must be positive");
  if (base_width < 1) throw Error(Errc::invalid_config, "base_width must be >= 1");
  BlurLevel::checked(blur_floor);
  schedule.validate();
  mixing.validate();
  weights.validate();
  // Also catches non-power-of-two image sizes.
  (void)GeneratorConfig::for_image(image_size, base_width);
}

TrainConfig TrainConfig::desk_profile() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.image_size = 64;
  cfg.base_width = 16;
  cfg.thin_features = true;
  return cfg;
}

TrainConfig TrainConfig::paper_profile() { return TrainConfig{}; }

double lr_schedule(LrMode mode, int t, const TrainConfig& cfg) {
  if (t < 0) throw Error(Errc::invalid_epoch, "lr_schedule: negative epoch");
  if (mode == LrMode::fixed) return cfg.lr;
  const int half = cfg.epochs / 2;
  if (t < half) return cfg.lr;
  const int span = cfg.epochs - half;
  return cfg.lr * static_cast<double>(cfg.epochs - t) / span;
}

TrainState::TrainState(const TrainConfig& c) : cfg(c), rng(c.seed) {
  cfg.validate();
  const GeneratorConfig gcfg = GeneratorConfig::for_image(cfg.image_size, cfg.base_width);
  DiscriminatorConfig dcfg;
  dcfg.base_width = cfg.base_width;

  // Weight init draws from a child stream so the training stream
  // (shuffles, mixing, kernels) is independent of model size.
  Rng winit = rng.child(0x57a7);
  generator = std::make_unique<UNetGenerator>(gcfg, winit);
  discriminator = std::make_unique<PatchDiscriminator>(dcfg, winit);
  features = std::make_unique<FeatureExtractor>(
      cfg.thin_features ? FeatureExtractorConfig::thin() : FeatureExtractorConfig{});
  opt_g = std::make_unique<nn::Adam>(generator->params());
  opt_d = std::make_unique<nn::Adam>(discriminator->params());

  if (cfg.mixed_precision) {
    generator->set_half(true);
    discriminator->set_half(true);
    // The frozen feature net stays fp32; it is a fixed metric, not a
    // trained component.
  }
}

PackedBatch pack_pairs(const std::vector<PairSample>& pairs) {
  if (pairs.empty()) throw Error(Errc::empty_batch, "pack_pairs: empty batch");
  const ImageTensor& first = pairs.front().input;
  const int n = static_cast<int>(pairs.size());
  PackedBatch batch;
  batch.input = Tensor(n, first.channels, first.height, first.width);
  batch.target = Tensor(n, first.channels, first.height, first.width);
  batch.kernels.reserve(pairs.size());
  for (int i = 0; i < n; ++i) {
    const PairSample& p = pairs[i];
    if (!p.input.same_shape(first) || !p.target.same_shape(first))
      throw Error(Errc::empty_batch, "pack_pairs: mixed image shapes in batch");
    std::memcpy(batch.input.image(i), p.input.data.data(),
                batch.input.image_size() * sizeof(float));
    std::memcpy(batch.target.image(i), p.target.data.data(),
                batch.target.image_size() * sizeof(float));
    batch.kernels.push_back(p.kernel_used);
  }
  // Networks run in signed range.
  for (float& v : batch.input.v) v = v * 2.f - 1.f;
  for (float& v : batch.target.v) v = v * 2.f - 1.f;
  return batch;
}

namespace {

void scale_grad(Tensor& t, double s) {
  if (s == 1.0) return;
  const float f = static_cast<float>(s);
  for (float& v : t.v) v *= f;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw Error(Errc::non_finite_loss, std::string("non-finite ") + what);
}

}  // namespace

LossReport train_step(TrainState& state, const PackedBatch& batch, double lr) {
  const TrainConfig& cfg = state.cfg;
  const bool hinge = cfg.adversarial == AdvLoss::hinge;
  const double scale = cfg.mixed_precision ? cfg.loss_scale : 1.0;
  UNetGenerator& G = *state.generator;
  PatchDiscriminator& D = *state.discriminator;

  // One generator forward serves both updates.
  const Tensor fake = G.forward(batch.input);
  const Tensor real_pair = concat_channels(batch.input, batch.target);
  const Tensor fake_pair = concat_channels(batch.input, fake);

  // Discriminator update. Real and fake pairs are stacked into one
  // batch so a single forward/backward covers both terms.
  D.zero_grad();
  const Tensor scores = D.forward(concat_batch(real_pair, fake_pair));
  Tensor s_real, s_fake;
  split_batch(scores, batch.input.n, s_real, s_fake);
  Tensor dreal, dfake_scores;
  const double loss_d =
      hinge ? hinge_d_grad(s_real, s_fake, dreal, dfake_scores)
            : bce_adversarial_grad(s_real, s_fake, AdvSide::d, dreal, dfake_scores);
  require_finite(loss_d, "discriminator loss");
  scale_grad(dreal, scale);
  scale_grad(dfake_scores, scale);
  D.backward(concat_batch(dreal, dfake_scores));
  if (cfg.mixed_precision) {
    state.opt_d->step_scaled(lr, scale);
  } else {
    state.opt_d->step(lr);
  }

  // Generator update: adversarial gradient through a frozen D, plus
  // the perceptual and L1 terms.
  G.zero_grad();
  const Tensor s_fake2 = D.forward(fake_pair);
  Tensor dscore, dreal_unused;
  const double adv_g =
      hinge ? hinge_g_grad(s_fake2, dscore)
            : bce_adversarial_grad(s_fake2, s_fake2, AdvSide::g, dreal_unused, dscore);
  require_finite(adv_g, "generator adversarial loss");
  scale_grad(dscore, scale);
  nn::BackwardOpts frozen;
  frozen.param_grads = false;
  const Tensor dpair = D.backward(dscore, frozen);
  Tensor dcond_unused, dfake_adv;
  split_channels(dpair, batch.input.c, dcond_unused, dfake_adv);

  Tensor dperc, dl1;
  const double perc = perceptual_loss_grad(fake, batch.target, *state.features, dperc);
  const double l1v = l1_loss_grad(fake, batch.target, dl1);
  require_finite(perc, "perceptual loss");
  require_finite(l1v, "l1 loss");

  Tensor dfake_total(fake.n, fake.c, fake.h, fake.w);
  const float wg = static_cast<float>(cfg.weights.lambda_g);
  const float wp = static_cast<float>(cfg.weights.lambda_perc * scale);
  const float wl = static_cast<float>(cfg.weights.lambda_l1 * scale);
  for (size_t i = 0; i < dfake_total.size(); ++i)
    dfake_total.v[i] = wg * dfake_adv.v[i] + wp * dperc.v[i] + wl * dl1.v[i];

  G.backward(dfake_total);
  if (cfg.mixed_precision) {
    state.opt_g->step_scaled(lr, scale);
  } else {
    state.opt_g->step(lr);
  }

  return make_report(perc, l1v, adv_g, loss_d, cfg.weights);
}

namespace {

constexpr char kTrainLogHeader[] = "step,epoch,perc,l1,hinge_g,hinge_d,total_g";
constexpr char kEpochLogHeader[] = "epoch,blur_cap,lr,perc,l1,hinge_g,hinge_d,total_g";

std::string epoch_checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d.ckpt", epoch);
  return buf;
}

void write_report_row(std::ostream& os, const LossReport& r) {
  os.precision(10);
  os << r.perc << "," << r.l1 << "," << r.hinge_g << "," << r.hinge_d << ","
     << r.total_g;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetSpec& corpus,
                  const fs::path& out_dir,
                  const std::optional<fs::path>& resume) {
  std::error_code ec;
  fs::create_directories(out_dir / "checkpoints", ec);
  if (ec)
    throw Error(Errc::write_failed, "cannot create " + (out_dir / "checkpoints").string());

  std::unique_ptr<TrainState> state;
  bool resumed = false;
  if (resume) {
    state = load_checkpoint(*resume);
    // A resumed run may extend the horizon but not change the nets.
    if (state->cfg.image_size != cfg.image_size ||
        state->cfg.base_width != cfg.base_width)
      throw Error(Errc::checkpoint_mismatch,
                  "resume config changes the architecture (image_size/base_width)");
    state->cfg.epochs = cfg.epochs;
    resumed = true;
  } else {
    state = std::make_unique<TrainState>(cfg);
  }
  const TrainConfig& c = state->cfg;

  // The corpus is loaded once up front; curriculum blurring happens
  // per batch so every epoch sees fresh degradations.
  std::vector<ImageTensor> images;
  for (const fs::path& f : scan_corpus(corpus))
    images.push_back(preprocess(load_image(f), corpus));
  for (const ImageTensor& img : images) {
    if (img.height != c.image_size || img.width != c.image_size)
      throw Error(Errc::invalid_config,
                  "corpus images are " + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + " after preprocessing, config wants " +
                      std::to_string(c.image_size));
  }
  const int n_images = static_cast<int>(images.size());
  const int num_batches = std::max(1, n_images / c.batch_size);

  const fs::path log_path = out_dir / "train_log.csv";
  const fs::path epoch_log_path = out_dir / "epoch_log.csv";
  std::ofstream log, epoch_log;
  if (resumed && fs::exists(log_path)) {
    log.open(log_path, std::ios::app);
    epoch_log.open(epoch_log_path, std::ios::app);
  } else {
    log.open(log_path);
    epoch_log.open(epoch_log_path);
    log << kTrainLogHeader << "\n";
    epoch_log << kEpochLogHeader << "\n";
  }
  if (!log || !epoch_log)
    throw Error(Errc::write_failed, "cannot write training logs under " + out_dir.string());

  TrainResult result;
  result.log_path = log_path;

  const BlurLevel floor = BlurLevel::checked(c.blur_floor);
  fs::path prev_checkpoint;

  for (int t = state->epoch; t < c.epochs; ++t) {
    const CurriculumState cur = curriculum_state_at(c.schedule, t);
    const double lr = lr_schedule(c.lr_mode, t, c);

    EpochStats stats;
    stats.epoch = t;
    stats.blur_cap = cur.cap.value;
    stats.lr = lr;

    std::vector<int> order(n_images);
    std::iota(order.begin(), order.end(), 0);
    for (int i = n_images - 1; i > 0; --i) {
      const int j = static_cast<int>(state->rng.below(static_cast<uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    LossReport sum;
    for (int bi = 0; bi < num_batches; ++bi) {
      const int start = bi * c.batch_size;
      const int count = std::min(c.batch_size, n_images - start);
      std::vector<ImageTensor> sharp;
      sharp.reserve(count);
      for (int j = 0; j < count; ++j) sharp.push_back(images[order[start + j]]);

      const std::vector<PairSample> pairs =
          make_batch(sharp, cur, c.mixing, floor, state->rng);
      for (const PairSample& p : pairs)
        if (p.kernel_used) stats.kernels_used.push_back(p.kernel_used->value);

      const PackedBatch packed = pack_pairs(pairs);
      LossReport r;
      try {
        r = train_step(*state, packed, lr);
      } catch (const Error& e) {
        if (e.code() == Errc::non_finite_loss) {
          // Leave evidence behind; the weights that diverged are worth
          // more than the run.
          try {
            save_checkpoint(out_dir / "checkpoints" / "abort_diagnostic.ckpt", *state);
          } catch (...) {
          }
        }
        throw;
      }

      ++state->global_step;
      ++stats.steps;
      log << state->global_step << "," << t << ",";
      write_report_row(log, r);
      log << "\n";

      sum.perc += r.perc;
      sum.l1 += r.l1;
      sum.hinge_g += r.hinge_g;
      sum.hinge_d += r.hinge_d;
      sum.total_g += r.total_g;
    }

    const double inv = 1.0 / static_cast<double>(stats.steps);
    stats.mean.perc = sum.perc * inv;
    stats.mean.l1 = sum.l1 * inv;
    stats.mean.hinge_g = sum.hinge_g * inv;
    stats.mean.hinge_d = sum.hinge_d * inv;
    stats.mean.total_g = sum.total_g * inv;

    epoch_log << t << "," << stats.blur_cap << "," << lr << ",";
    write_report_row(epoch_log, stats.mean);
    epoch_log << "\n";
    log.flush();
    epoch_log.flush();
    if (!log || !epoch_log)
      throw Error(Errc::write_failed, "training log write failed (disk full?)");

    state->epoch = t + 1;
    const fs::path ck = out_dir / "checkpoints" / epoch_checkpoint_name(t + 1);
    save_checkpoint(ck, *state);
    if (!c.keep_all_checkpoints && !prev_checkpoint.empty())
      fs::remove(prev_checkpoint, ec);
    prev_checkpoint = ck;
    result.checkpoint_path = ck;
    result.epochs.push_back(std::move(stats));
  }

  if (result.checkpoint_path.empty()) {
    // Nothing left to run (resume at or past the horizon); point at
    // the checkpoint we were given.
    if (resume) result.checkpoint_path = *resume;
  }
  result.total_steps = state->global_step;
  return result;
}

namespace {

constexpr char kMagic[4] = {'X', 'D', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_string(std::ostream& os, const std::string& s) {
  const uint64_t len = s.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(s.data(), static_cast<std::streamsize>(len));
}

std::string read_string(std::istream& is) {
  uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!is || len > (1ull << 32))
    throw Error(Errc::checkpoint_io, "corrupt string block in checkpoint");
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  return s;
}

struct CheckpointHeader {
  TrainConfig config;
  int64_t epoch = 0;
  int64_t global_step = 0;
};

CheckpointHeader read_header(std::istream& is, const fs::path& path) {
  char magic[4];
  uint32_t version = 0;
  is.read(magic, 4);
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(Errc::checkpoint_mismatch, path.string() + " is not a checkpoint");
  if (version != kVersion)
    throw Error(Errc::checkpoint_mismatch,
                "checkpoint version " + std::to_string(version) + " unsupported");
  CheckpointHeader h;
  h.config = train_config_from_json(read_string(is));
  is.read(reinterpret_cast<char*>(&h.epoch), sizeof(h.epoch));
  is.read(reinterpret_cast<char*>(&h.global_step), sizeof(h.global_step));
  if (!is) throw Error(Errc::checkpoint_io, "truncated checkpoint header");
  return h;
}

}  // namespace

void save_checkpoint(const fs::path& path, const TrainState& state) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(Errc::checkpoint_io, "cannot write " + tmp.string());
    os.write(kMagic, 4);
    os.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    write_string(os, train_config_to_json(state.cfg));
    const int64_t epoch = state.epoch;
    os.write(reinterpret_cast<const char*>(&epoch), sizeof(epoch));
    os.write(reinterpret_cast<const char*>(&state.global_step), sizeof(state.global_step));
    write_string(os, state.rng.state_string());
    nn::write_params(os, const_cast<TrainState&>(state).generator->params());
    nn::write_params(os, const_cast<TrainState&>(state).discriminator->params());
    state.opt_g->save(os);
    state.opt_d->save(os);
    if (!os.flush()) throw Error(Errc::checkpoint_io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::checkpoint_io, "cannot move checkpoint into place: " + path.string());
}

std::unique_ptr<TrainState> load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::checkpoint_io, "cannot open checkpoint " + path.string());
  const CheckpointHeader h = read_header(is, path);

  auto state = std::make_unique<TrainState>(h.config);
  state->epoch = static_cast<int>(h.epoch);
  state->global_step = h.global_step;
  state->rng.restore_state(read_string(is));
  nn::read_params(is, state->generator->params());
  nn::read_params(is, state->discriminator->params());
  state->opt_g->load(is);
  state->opt_d->load(is);
  return state;
}

CheckpointInfo peek_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::checkpoint_io, "cannot open checkpoint " + path.string());
  const CheckpointHeader h = read_header(is, path);
  CheckpointInfo info;
  info.config = h.config;
  info.epoch = static_cast<int>(h.epoch);
  info.global_step = h.global_step;
  return info;
}

const char* to_string(LrMode mode) {
  return mode == LrMode::fixed ? "fixed" : "scheduled";
}

const char* to_string(AdvLoss loss) { return loss == AdvLoss::hinge ? "hinge" : "bce"; }

LrMode lr_mode_from_string(const std::string& s) {
  if (s == "fixed") return LrMode::fixed;
  if (s == "scheduled") return LrMode::scheduled;
  throw Error(Errc::type_mismatch, "lr_mode must be \"fixed\" or \"scheduled\", got \"" + s + "\"");
}

AdvLoss adv_loss_from_string(const std::string& s) {
  if (s == "hinge") return AdvLoss::hinge;
  if (s == "bce") return AdvLoss::bce;
  throw Error(Errc::type_mismatch, "adversarial must be \"hinge\" or \"bce\", got \"" + s + "\"");
}

}  // namespace xdecode
