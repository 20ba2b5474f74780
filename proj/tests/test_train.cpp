#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "core/train.hpp"

using namespace lb;

namespace {

RunConfig tiny_run() {
  RunConfig c;
  c.model.image_size = 8;
  c.model.patch = 2;
  c.model.dim = 12;
  c.model.heads = 1;
  c.model.mm_blocks = 1;
  c.model.single_blocks = 1;
  c.model.ev_list = {-2.0, 0.0};
  c.model.text_len = 4;
  c.model.vocab = 16;
  c.model.lora_rank = 2;
  c.model.lora_alpha = 4.0;
  c.model.mod_dim = 12;
  c.model.mod_heads = 1;
  c.model.time_fourier = 8;
  c.model.mod_fourier = 8;
  c.data.scenes = 8;
  c.data.seed = 31;
  c.train.batch = 2;
  c.train.pretrain_steps = 3;
  c.train.finetune_steps = 3;
  c.seed = 7;
  return c;
}

std::vector<double> snapshot(const ParamStore& ps) {
  std::vector<double> all;
  for (const auto& name : ps.names) {
    const Tensor& t = ps.at(name);
    all.insert(all.end(), t.data(), t.data() + t.numel());
  }
  return all;
}

}  // namespace

TEST_CASE("training_scenes yields the requested count, no held-out records") {
  DataParams d;
  d.scenes = 10;
  d.seed = 5;
  auto train = training_scenes(d, {-2.0, 0.0}, 8);
  REQUIRE((int)train.size() == 10);
  for (const auto& r : train) CHECK_FALSE(r.held_out);
  // deterministic and prefix-stable
  DataParams d2 = d;
  d2.scenes = 6;
  auto shorter = training_scenes(d2, {-2.0, 0.0}, 8);
  for (int i = 0; i < 6; ++i) CHECK(shorter[i].seed == train[i].seed);
  d2.scenes = 0;
  CHECK_THROWS(training_scenes(d2, {-2.0, 0.0}, 8));
}

TEST_CASE("zero learning rate leaves every parameter bit-identical") {
  RunConfig cfg = tiny_run();
  cfg.train.lr_base = cfg.train.lr_lora = cfg.train.lr_mod = 0.0;
  Trainer tr(cfg);
  auto before = snapshot(tr.model().params());
  for (int s = 0; s < 4; ++s) tr.train_step();  // crosses the phase boundary
  auto after = snapshot(tr.model().params());
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i) REQUIRE(before[i] == after[i]);
}

TEST_CASE("training is deterministic per seed") {
  RunConfig cfg = tiny_run();
  Trainer a(cfg), b(cfg);
  for (int s = 0; s < 4; ++s) {
    LossRecord ra = a.train_step(), rb = b.train_step();
    CHECK(ra.total == rb.total);
    CHECK(ra.l_img == rb.l_img);
    CHECK(ra.l_rad == rb.l_rad);
  }
  auto pa = snapshot(a.model().params()), pb = snapshot(b.model().params());
  for (size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i] == pb[i]);

  Trainer c([&] { RunConfig r = tiny_run(); r.seed = 8; return r; }());
  bool any_diff = false;
  c.train_step();
  auto pc = snapshot(c.model().params());
  for (size_t i = 0; i < pa.size(); ++i) any_diff |= pa[i] != pc[i];
  CHECK(any_diff);
}

TEST_CASE("phase groups: only the phase's own parameters move") {
  RunConfig cfg = tiny_run();
  Trainer tr(cfg);
  const auto& names = tr.model().params().names;

  auto at_init = snapshot(tr.model().params());
  for (int s = 0; s < cfg.train.pretrain_steps; ++s) tr.train_step();
  auto after_a = snapshot(tr.model().params());

  size_t off = 0;
  bool base_moved = false;
  for (const auto& name : names) {
    const Tensor& t = tr.model().params().at(name);
    const bool frozen_in_a = param_group(name) != ParamGroup::Base;
    for (int64_t i = 0; i < t.numel(); ++i) {
      if (frozen_in_a)
        REQUIRE(after_a[off + i] == at_init[off + i]);
      else
        base_moved |= after_a[off + i] != at_init[off + i];
    }
    off += (size_t)t.numel();
  }
  CHECK(base_moved);

  for (int s = 0; s < cfg.train.finetune_steps; ++s) tr.train_step();
  auto after_b = snapshot(tr.model().params());
  off = 0;
  bool tuned_moved = false;
  for (const auto& name : names) {
    const Tensor& t = tr.model().params().at(name);
    for (int64_t i = 0; i < t.numel(); ++i) {
      if (param_group(name) == ParamGroup::Base)
        REQUIRE(after_b[off + i] == after_a[off + i]);
      else
        tuned_moved |= after_b[off + i] != after_a[off + i];
    }
    off += (size_t)t.numel();
  }
  CHECK(tuned_moved);
}

TEST_CASE("loss records decompose as documented") {
  RunConfig cfg = tiny_run();
  Trainer tr(cfg);
  LossRecord a = tr.train_step();
  CHECK(a.phase == Phase::Pretrain);
  CHECK(a.l_rad == 0.0);
  CHECK(a.l_bracket == 0.0);
  CHECK(a.total == doctest::Approx(a.l_img).epsilon(1e-12));
  CHECK(a.l_img > 0.0);

  for (int s = 1; s < cfg.train.pretrain_steps; ++s) tr.train_step();
  LossRecord b = tr.train_step();
  CHECK(b.phase == Phase::Finetune);
  CHECK(b.l_rad > 0.0);
  CHECK(std::abs(b.total - (b.l_img + cfg.train.lambda_rad * b.l_rad +
                            cfg.train.lambda_bracket * b.l_bracket)) < 1e-12);

  const std::string line = loss_csv_line(b);
  const std::string header = loss_csv_header();
  CHECK(line.rfind(std::to_string(b.step) + ",", 0) == 0);
  CHECK(std::count(line.begin(), line.end(), ',') == 4);
  CHECK(std::count(header.begin(), header.end(), ',') == 4);
}

TEST_CASE("checkpoint resume continues bit-identically") {
  RunConfig cfg = tiny_run();
  Trainer full(cfg);
  for (int s = 0; s < 2; ++s) full.train_step();

  Checkpoint ck = full.checkpoint();
  const std::string path =
      (std::filesystem::temp_directory_path() / "train_resume.bin").string();
  checkpoint_write(path, ck);

  Trainer resumed(cfg);
  resumed.restore(checkpoint_read(path));
  CHECK(resumed.step_count() == 2);

  for (int s = 0; s < 3; ++s) {  // crosses into the finetune phase
    LossRecord ra = full.train_step(), rb = resumed.train_step();
    REQUIRE(ra.total == rb.total);
  }
  auto pa = snapshot(full.model().params()), pb = snapshot(resumed.model().params());
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i] == pb[i]);
}

TEST_CASE("restore rejects foreign checkpoints") {
  RunConfig cfg = tiny_run();
  Trainer tr(cfg);
  Checkpoint ck = tr.checkpoint();

  RunConfig other = cfg;
  other.train.lr_base = 9.0;
  Trainer tr2(other);
  CHECK_THROWS(tr2.restore(ck));  // config echo differs

  Checkpoint short_ck = ck;
  short_ck.tensors.pop_back();
  CHECK_THROWS(tr.restore(short_ck));

  Checkpoint renamed = tr.checkpoint();
  renamed.tensors[0].first = "no.such.param";
  CHECK_THROWS(tr.restore(renamed));
}

TEST_CASE("pretrain loss falls on a short run") {
  RunConfig cfg = tiny_run();
  cfg.data.scenes = 4;
  cfg.train.pretrain_steps = 40;
  cfg.train.finetune_steps = 0;
  Trainer tr(cfg);
  double early = 0.0, late = 0.0;
  for (int s = 0; s < 40; ++s) {
    const double t = tr.train_step().total;
    if (s < 5) early += t / 5.0;
    if (s >= 35) late += t / 5.0;
  }
  CHECK(late < early);
}

TEST_CASE("poisoned parameters abort the step") {
  RunConfig cfg = tiny_run();
  Trainer tr(cfg);
  Tensor& w = tr.model().params().at(tr.model().params().names.front());
  w.data()[0] = std::nan("");
  CHECK_THROWS(tr.train_step());
}
