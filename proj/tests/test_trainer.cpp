// Training loop pieces: lr schedule, batch packing, single GAN steps
// (descent smoke, mixed precision, overflow skip), the full train()
// loop with curriculum caps, determinism, resume, and checkpoints.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "doctest.h"
#include "support.hpp"
#include "xdecode/config.hpp"
#include "xdecode/datapipe.hpp"
#include "xdecode/imaging.hpp"
#include "xdecode/trainer.hpp"

using namespace xdecode;
using xdecode::testing::TempDir;

namespace {

// Smallest config the networks accept: the discriminator needs 32 px
// before its score map has any area.
TrainConfig small_cfg() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.image_size = 32;
  cfg.base_width = 4;
  cfg.thin_features = true;
  cfg.seed = 11;
  return cfg;
}

std::vector<PairSample> blurred_pairs(int n, int size, int kernel, uint64_t seed) {
  Rng rng(seed);
  std::vector<PairSample> pairs;
  for (int i = 0; i < n; ++i) {
    PairSample p;
    p.target = testing::toy_image(rng, size);
    p.input = box_blur(p.target, BlurLevel::checked(kernel));
    p.kernel_used = BlurLevel::checked(kernel);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<PairSample> sharp_pairs(int n, int size, uint64_t seed) {
  Rng rng(seed);
  std::vector<PairSample> pairs;
  for (int i = 0; i < n; ++i) {
    PairSample p;
    p.target = testing::toy_image(rng, size);
    p.input = p.target;
    p.is_sharp_pair = true;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<std::vector<float>> snapshot_params(TrainState& state) {
  std::vector<std::vector<float>> all;
  for (nn::Param* p : state.generator->params()) all.push_back(p->value);
  for (nn::Param* p : state.discriminator->params()) all.push_back(p->value);
  return all;
}

bool params_equal(TrainState& a, TrainState& b) {
  const auto pa = snapshot_params(a);
  const auto pb = snapshot_params(b);
  return pa == pb;
}

DatasetSpec toy_corpus(const TempDir& dir, int n, int size, uint64_t seed) {
  testing::make_toy_corpus(dir.path(), n, size, seed);
  return DatasetSpec::with_defaults(dir.path(), DatasetKind::flat_folder,
                                    Split::train, size);
}

std::string slurp_binary(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("lr stays fixed or decays linearly over the second half") {
  TrainConfig cfg;
  cfg.epochs = 100;
  cfg.lr = 2e-4;

  for (int t : {0, 1, 50, 99, 500})
    CHECK(lr_schedule(LrMode::fixed, t, cfg) == 2e-4);

  CHECK(lr_schedule(LrMode::scheduled, 0, cfg) == 2e-4);
  CHECK(lr_schedule(LrMode::scheduled, 49, cfg) == 2e-4);
  // t = 50 is the first decayed epoch but the ramp still starts at full rate.
  CHECK(lr_schedule(LrMode::scheduled, 50, cfg) == doctest::Approx(2e-4));
  CHECK(lr_schedule(LrMode::scheduled, 75, cfg) == doctest::Approx(1e-4));
  CHECK(lr_schedule(LrMode::scheduled, 99, cfg) == doctest::Approx(4e-6));

  // Odd horizon: decay spans epochs - epochs/2 steps.
  cfg.epochs = 5;
  CHECK(lr_schedule(LrMode::scheduled, 1, cfg) == 2e-4);
  CHECK(lr_schedule(LrMode::scheduled, 2, cfg) == doctest::Approx(2e-4));
  CHECK(lr_schedule(LrMode::scheduled, 4, cfg) == doctest::Approx(2e-4 / 3.0));

  CHECK_THROWS_WITH_AS(lr_schedule(LrMode::fixed, -1, cfg), "lr_schedule: negative epoch",
                       Error);
}

TEST_CASE("pack_pairs stacks batches and moves them to signed range") {
  std::vector<PairSample> pairs = blurred_pairs(2, 8, 3, 22);
  pairs.push_back(sharp_pairs(1, 8, 23).front());

  const PackedBatch batch = pack_pairs(pairs);
  CHECK(batch.input.n == 3);
  CHECK(batch.input.c == 3);
  CHECK(batch.input.h == 8);
  CHECK(batch.input.w == 8);
  REQUIRE(batch.kernels.size() == 3);
  CHECK(batch.kernels[0] == BlurLevel::checked(3));
  CHECK(!batch.kernels[2].has_value());

  // Spot-check the range map v -> 2v - 1 element for element.
  const ImageTensor& src = pairs[1].target;
  for (int i = 0; i < 16; ++i) {
    const float u = src.data[static_cast<size_t>(i) * 7 % src.data.size()];
    const float s = batch.target.image(1)[static_cast<size_t>(i) * 7 % src.data.size()];
    CHECK(s == u * 2.f - 1.f);
  }
  for (float v : batch.input.v) {
    CHECK(v >= -1.f);
    CHECK(v <= 1.f);
  }

  CHECK_THROWS_WITH_AS(pack_pairs({}), "pack_pairs: empty batch", Error);

  std::vector<PairSample> mixed = blurred_pairs(1, 8, 3, 24);
  mixed.push_back(blurred_pairs(1, 16, 3, 25).front());
  try {
    pack_pairs(mixed);
    FAIL("mixed shapes must be rejected");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_batch);
  }
}

TEST_CASE("discriminator loss falls over repeated steps on one batch") {
  TrainState state(small_cfg());
  const PackedBatch batch = pack_pairs(blurred_pairs(4, 32, 9, 31));

  std::vector<double> d_losses;
  for (int i = 0; i < 10; ++i) d_losses.push_back(train_step(state, batch, 1e-3).hinge_d);

  CHECK(d_losses.front() > 0.5);  // near-chance scores at init
  CHECK(d_losses.back() < d_losses.front());
  CHECK(state.opt_d->steps() == 10);
  CHECK(state.opt_g->steps() == 10);
}

TEST_CASE("pure l1 objective drives the generator toward identity") {
  TrainConfig cfg = small_cfg();
  cfg.weights.lambda_g = 0.0;
  cfg.weights.lambda_perc = 0.0;
  cfg.weights.lambda_l1 = 1.0;
  TrainState state(cfg);
  const PackedBatch batch = pack_pairs(sharp_pairs(4, 32, 32));

  std::vector<double> l1s;
  for (int i = 0; i < 15; ++i) l1s.push_back(train_step(state, batch, 1e-3).l1);

  CHECK(l1s.front() > 0.0);
  CHECK(l1s.back() < l1s.front());
}

TEST_CASE("mixed precision step tracks the fp32 step closely at init") {
  TrainConfig cfg = small_cfg();
  TrainState fp32(cfg);
  cfg.mixed_precision = true;
  TrainState mp(cfg);
  REQUIRE(params_equal(fp32, mp));  // same seed, same init

  const PackedBatch batch = pack_pairs(blurred_pairs(4, 32, 5, 41));
  const LossReport r32 = train_step(fp32, batch, 2e-4);
  const LossReport rmp = train_step(mp, batch, 2e-4);

  for (double v : {rmp.perc, rmp.l1, rmp.hinge_g, rmp.hinge_d, rmp.total_g})
    CHECK(std::isfinite(v));
  CHECK(rmp.perc == doctest::Approx(r32.perc).epsilon(0.05));
  CHECK(rmp.l1 == doctest::Approx(r32.l1).epsilon(0.05));
  CHECK(rmp.hinge_g == doctest::Approx(r32.hinge_g).epsilon(0.05));
  CHECK(rmp.hinge_d == doctest::Approx(r32.hinge_d).epsilon(0.05));
  CHECK(mp.opt_g->steps() == 1);
  CHECK(mp.opt_d->steps() == 1);
}

TEST_CASE("overflowing scaled gradients skip the update instead of poisoning it") {
  TrainConfig cfg = small_cfg();
  cfg.mixed_precision = true;
  // Past float range the cast alone turns every scaled gradient
  // non-finite, so both optimizers must refuse the step.
  cfg.loss_scale = 1e39;
  TrainState state(cfg);
  const auto before = snapshot_params(state);

  const PackedBatch batch = pack_pairs(blurred_pairs(4, 32, 5, 51));
  const LossReport r = train_step(state, batch, 2e-4);

  CHECK(std::isfinite(r.total_g));  // losses themselves are unscaled
  CHECK(state.opt_g->steps() == 0);
  CHECK(state.opt_d->steps() == 0);
  CHECK(snapshot_params(state) == before);
}

TEST_CASE("non-finite activations surface as a training error") {
  TrainState state(small_cfg());
  PackedBatch batch = pack_pairs(blurred_pairs(4, 32, 5, 61));
  batch.input.v[7] = std::numeric_limits<float>::quiet_NaN();
  try {
    train_step(state, batch, 2e-4);
    FAIL("NaN input must not train silently");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::non_finite_loss);
  }
}

TEST_CASE("one epoch writes logs, stats and a checkpoint") {
  TempDir corpus_dir("corpus"), out("run");
  const DatasetSpec corpus = toy_corpus(corpus_dir, 8, 32, 71);

  TrainConfig cfg = small_cfg();
  cfg.schedule.kind = ScheduleKind::fixed;

  const TrainResult res = train(cfg, corpus, out.path());
  REQUIRE(res.epochs.size() == 1);
  const EpochStats& s = res.epochs.front();
  CHECK(s.epoch == 0);
  CHECK(s.blur_cap == 29);
  CHECK(s.lr == cfg.lr);
  CHECK(s.steps == 2);  // 8 images / batch 4
  CHECK(res.total_steps == 2);
  for (int k : s.kernels_used) {
    CHECK(k % 2 == 1);
    CHECK(k >= 3);
    CHECK(k <= 29);
  }
  CHECK(std::isfinite(s.mean.total_g));

  const std::string log = testing::read_text_file(out.path() / "train_log.csv");
  CHECK(log.rfind("step,epoch,perc,l1,hinge_g,hinge_d,total_g\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 3);  // header + 2 steps
  const std::string epoch_log = testing::read_text_file(out.path() / "epoch_log.csv");
  CHECK(epoch_log.rfind("epoch,blur_cap,lr,", 0) == 0);

  CHECK(res.checkpoint_path == out.path() / "checkpoints" / "epoch_0001.ckpt");
  CHECK(std::filesystem::exists(res.checkpoint_path));
  const CheckpointInfo info = peek_checkpoint(res.checkpoint_path);
  CHECK(info.epoch == 1);
  CHECK(info.global_step == 2);
  CHECK(info.config.image_size == 32);
}

TEST_CASE("linear curriculum lifts the per-epoch cap and kernels respect it") {
  TempDir corpus_dir("corpus"), out("run");
  const DatasetSpec corpus = toy_corpus(corpus_dir, 8, 32, 72);

  TrainConfig cfg = small_cfg();
  cfg.epochs = 3;
  cfg.schedule.kind = ScheduleKind::linear;

  const TrainResult res = train(cfg, corpus, out.path());
  REQUIRE(res.epochs.size() == 3);
  const int want_caps[3] = {3, 5, 7};
  for (int t = 0; t < 3; ++t) {
    const EpochStats& s = res.epochs[static_cast<size_t>(t)];
    CHECK(s.epoch == t);
    CHECK(s.blur_cap == want_caps[t]);
    CHECK(!s.kernels_used.empty());
    for (int k : s.kernels_used) {
      CHECK(k >= 3);
      CHECK(k <= s.blur_cap);
      CHECK(k % 2 == 1);
    }
  }
  // Only the newest checkpoint is kept by default.
  CHECK(!std::filesystem::exists(out.path() / "checkpoints" / "epoch_0002.ckpt"));
  CHECK(std::filesystem::exists(out.path() / "checkpoints" / "epoch_0003.ckpt"));
}

TEST_CASE("identical configs produce byte-identical logs and checkpoints") {
  TempDir corpus_dir("corpus"), out_a("a"), out_b("b");
  const DatasetSpec corpus = toy_corpus(corpus_dir, 8, 32, 73);

  TrainConfig cfg = small_cfg();
  cfg.epochs = 2;

  const TrainResult ra = train(cfg, corpus, out_a.path());
  const TrainResult rb = train(cfg, corpus, out_b.path());

  CHECK(testing::read_text_file(out_a.path() / "train_log.csv") ==
        testing::read_text_file(out_b.path() / "train_log.csv"));
  CHECK(testing::read_text_file(out_a.path() / "epoch_log.csv") ==
        testing::read_text_file(out_b.path() / "epoch_log.csv"));
  CHECK(slurp_binary(ra.checkpoint_path) == slurp_binary(rb.checkpoint_path));
}

TEST_CASE("resume reproduces an uninterrupted run exactly") {
  TempDir corpus_dir("corpus"), out_full("full"), out_split("split");
  const DatasetSpec corpus = toy_corpus(corpus_dir, 8, 32, 74);

  TrainConfig cfg = small_cfg();
  cfg.epochs = 2;
  const TrainResult full = train(cfg, corpus, out_full.path());

  TrainConfig first = cfg;
  first.epochs = 1;
  const TrainResult head = train(first, corpus, out_split.path());
  // Resume with the horizon extended; epochs counts the total, not extras.
  const TrainResult tail = train(cfg, corpus, out_split.path(), head.checkpoint_path);

  CHECK(tail.epochs.size() == 1);
  CHECK(tail.epochs.front().epoch == 1);
  CHECK(slurp_binary(full.checkpoint_path) == slurp_binary(tail.checkpoint_path));
  CHECK(testing::read_text_file(out_full.path() / "train_log.csv") ==
        testing::read_text_file(out_split.path() / "train_log.csv"));
}

TEST_CASE("resume at or past the horizon is a no-op pointing at the input") {
  TempDir corpus_dir("corpus"), out("run");
  const DatasetSpec corpus = toy_corpus(corpus_dir, 8, 32, 75);

  TrainConfig cfg = small_cfg();
  const TrainResult first = train(cfg, corpus, out.path());
  const TrainResult again = train(cfg, corpus, out.path(), first.checkpoint_path);
  CHECK(again.epochs.empty());
  CHECK(again.checkpoint_path == first.checkpoint_path);
}

TEST_CASE("resume rejects a config that changes the architecture") {
  TempDir corpus_dir("corpus"), out("run");
  const DatasetSpec corpus = toy_corpus(corpus_dir, 8, 32, 76);

  TrainConfig cfg = small_cfg();
  const TrainResult first = train(cfg, corpus, out.path());

  TrainConfig wider = cfg;
  wider.epochs = 2;
  wider.base_width = 8;
  try {
    train(wider, corpus, out.path(), first.checkpoint_path);
    FAIL("architecture change on resume must fail");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::checkpoint_mismatch);
  }
}

TEST_CASE("corpus size must match the configured image size") {
  TempDir corpus_dir("corpus"), out("run");
  testing::make_toy_corpus(corpus_dir.path(), 4, 32, 77);
  // Preprocessing leaves these at 32 px but the config wants 64.
  const DatasetSpec corpus = DatasetSpec::with_defaults(
      corpus_dir.path(), DatasetKind::flat_folder, Split::train, 32);
  TrainConfig cfg = small_cfg();
  cfg.image_size = 64;
  try {
    train(cfg, corpus, out.path());
    FAIL("mismatched corpus must be rejected");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_config);
  }
}

TEST_CASE("checkpoints round-trip weights, counters, rng and config") {
  TrainState state(small_cfg());
  const PackedBatch batch = pack_pairs(blurred_pairs(4, 32, 5, 81));
  train_step(state, batch, 2e-4);  // give the optimizer some history
  state.epoch = 1;
  state.global_step = 1;

  TempDir dir("ckpt");
  const std::filesystem::path path = dir.path() / "state.ckpt";
  save_checkpoint(path, state);

  const std::unique_ptr<TrainState> loaded = load_checkpoint(path);
  CHECK(params_equal(state, *loaded));
  CHECK(loaded->epoch == 1);
  CHECK(loaded->global_step == 1);
  CHECK(loaded->rng.state_string() == state.rng.state_string());
  CHECK(loaded->opt_g->steps() == 1);
  CHECK(loaded->opt_d->steps() == 1);
  CHECK(train_config_to_json(loaded->cfg) == train_config_to_json(state.cfg));

  const CheckpointInfo info = peek_checkpoint(path);
  CHECK(info.epoch == 1);
  CHECK(info.global_step == 1);
  CHECK(train_config_to_json(info.config) == train_config_to_json(state.cfg));
}

TEST_CASE("corrupt or missing checkpoints fail with distinct errors") {
  TempDir dir("ckpt");
  try {
    load_checkpoint(dir.path() / "absent.ckpt");
    FAIL("missing file must fail");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::checkpoint_io);
  }

  // Wrong magic: not a checkpoint at all.
  const std::filesystem::path junk = dir.path() / "junk.ckpt";
  std::ofstream(junk, std::ios::binary) << "derpderpderpderp";
  try {
    load_checkpoint(junk);
    FAIL("junk must be rejected");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::checkpoint_mismatch);
  }

  // Valid prefix, truncated body.
  TrainState state(small_cfg());
  const std::filesystem::path full = dir.path() / "full.ckpt";
  save_checkpoint(full, state);
  const std::string bytes = slurp_binary(full);
  const std::filesystem::path cut = dir.path() / "cut.ckpt";
  std::ofstream(cut, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(cut), Error);
}

TEST_CASE("mode and loss names round-trip, unknown names throw") {
  CHECK(lr_mode_from_string("fixed") == LrMode::fixed);
  CHECK(lr_mode_from_string("scheduled") == LrMode::scheduled);
  CHECK(std::string(to_string(LrMode::scheduled)) == "scheduled");
  CHECK(adv_loss_from_string("hinge") == AdvLoss::hinge);
  CHECK(adv_loss_from_string("bce") == AdvLoss::bce);
  CHECK(std::string(to_string(AdvLoss::bce)) == "bce");
  CHECK_THROWS_AS(lr_mode_from_string("warmup"), Error);
  CHECK_THROWS_AS(adv_loss_from_string("wasserstein"), Error);
}

}  // TEST_SUITE
