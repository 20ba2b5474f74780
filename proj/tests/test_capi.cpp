#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "linbracket/linbracket.h"

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// tiny but fully wired model, cheap enough for a unit test
lb_config* tiny_config() {
  lb_config* cfg = nullptr;
  REQUIRE(lb_config_create(&cfg) == LB_OK);
  const char* kv[][2] = {
      {"model.image_size", "8"}, {"model.patch", "2"},   {"model.dim", "12"},
      {"model.heads", "1"},      {"model.mm_blocks", "1"}, {"model.single_blocks", "1"},
      {"model.ev", "-2,0"},      {"model.text_len", "4"}, {"model.lora_rank", "2"},
      {"model.lora_alpha", "4"}, {"model.mod_dim", "12"}, {"model.mod_heads", "1"},
      {"model.time_fourier", "8"}, {"model.mod_fourier", "8"},
      {"data.scenes", "8"},      {"data.seed", "31"},     {"train.batch", "2"},
      {"train.pretrain_steps", "2"}, {"train.finetune_steps", "2"}, {"seed", "7"},
  };
  for (const auto& p : kv) REQUIRE(lb_config_set(cfg, p[0], p[1]) == LB_OK);
  return cfg;
}

}  // namespace

TEST_CASE("version and error strings are always available") {
  CHECK(lb_version() != nullptr);
  CHECK(std::strlen(lb_version()) > 0);
  CHECK(lb_last_error() != nullptr);
}

TEST_CASE("config: set, serialize, validate, reject unknown keys") {
  lb_config* cfg = nullptr;
  REQUIRE(lb_config_create(&cfg) == LB_OK);
  CHECK(lb_config_validate(cfg) == LB_OK);
  CHECK(lb_config_set(cfg, "model.dim", "12") == LB_OK);
  CHECK(lb_config_set(cfg, "model.depth", "3") == LB_ERR_INVALID_ARGUMENT);
  CHECK(std::string(lb_last_error()).find("model.depth") != std::string::npos);
  CHECK(lb_config_set(nullptr, "a", "b") == LB_ERR_INVALID_ARGUMENT);

  char* echo = nullptr;
  REQUIRE(lb_config_serialize(cfg, &echo) == LB_OK);
  CHECK(std::string(echo).find("model.dim = 12\n") != std::string::npos);
  lb_string_free(echo);

  char* value = nullptr;
  REQUIRE(lb_config_get(cfg, "model.dim", &value) == LB_OK);
  CHECK(std::string(value) == "12");
  lb_string_free(value);
  CHECK(lb_config_get(cfg, "model.depth", &value) == LB_ERR_INVALID_ARGUMENT);
  lb_config_destroy(cfg);
}

TEST_CASE("config: load from file, errors surface as LB_ERR_IO") {
  const std::string path = tmp_path("capi_cfg.txt");
  std::ofstream(path) << "model.dim = 27\nmodel.patch = 3\n";
  lb_config* cfg = nullptr;
  REQUIRE(lb_config_load(&cfg, path.c_str()) == LB_OK);
  char* echo = nullptr;
  REQUIRE(lb_config_serialize(cfg, &echo) == LB_OK);
  CHECK(std::string(echo).find("model.patch = 3\n") != std::string::npos);
  lb_string_free(echo);
  lb_config_destroy(cfg);

  lb_config* bad = nullptr;
  CHECK(lb_config_load(&bad, tmp_path("capi_missing.txt").c_str()) == LB_ERR_IO);
  CHECK(bad == nullptr);
}

TEST_CASE("image: create, accessors, pfm roundtrip") {
  std::vector<double> rgb(2 * 3 * 3);
  for (size_t i = 0; i < rgb.size(); ++i) rgb[i] = (double)(float)(0.1 * (double)i);
  lb_image* img = nullptr;
  REQUIRE(lb_image_create(&img, 3, 2, rgb.data()) == LB_OK);
  int w = 0, h = 0;
  REQUIRE(lb_image_size(img, &w, &h) == LB_OK);
  CHECK(w == 3);
  CHECK(h == 2);

  const std::string path = tmp_path("capi_rt.pfm");
  REQUIRE(lb_image_write_pfm(img, path.c_str()) == LB_OK);
  lb_image* back = nullptr;
  REQUIRE(lb_image_read_pfm(&back, path.c_str()) == LB_OK);
  const double* data = nullptr;
  int64_t count = 0;
  REQUIRE(lb_image_data(back, &data, &count) == LB_OK);
  REQUIRE(count == (int64_t)rgb.size());
  for (int64_t i = 0; i < count; ++i) CHECK(data[i] == rgb[(size_t)i]);

  CHECK(lb_image_read_pfm(&back, tmp_path("capi_missing.pfm").c_str()) == LB_ERR_IO);
  CHECK(lb_image_create(&img, 0, 2, rgb.data()) == LB_ERR_INVALID_ARGUMENT);
  lb_image_destroy(img);
  lb_image_destroy(back);
}

TEST_CASE("synthetic scene: brackets, fusion, metrics through the C surface") {
  const double ev[4] = {-4.0, -2.0, 0.0, 2.0};
  lb_image* linear = nullptr;
  lb_bracket_set* bs = nullptr;
  double s_l = 0.0;
  int caption[3] = {0, 0, 0};
  int held = -1;
  REQUIRE(lb_synth_scene(2024, 0, ev, 4, 16, &linear, &bs, &s_l, caption, &held) == LB_OK);
  CHECK(held == 0);
  CHECK(s_l >= -6.0);
  CHECK(s_l <= 4.0);
  CHECK(caption[0] >= 0);
  CHECK(caption[0] < lb_vocab_size());
  CHECK(lb_vocab_word(caption[0]) != nullptr);
  CHECK(lb_vocab_word(-1) == nullptr);
  CHECK(lb_vocab_word(lb_vocab_size()) == nullptr);

  int n = 0;
  REQUIRE(lb_bracket_set_count(bs, &n) == LB_OK);
  REQUIRE(n == 4);
  double ev0 = 0.0;
  REQUIRE(lb_bracket_set_ev(bs, 0, &ev0) == LB_OK);
  CHECK(ev0 == -4.0);
  CHECK(lb_bracket_set_ev(bs, 4, &ev0) == LB_ERR_INVALID_ARGUMENT);

  // fuse and return to the linear domain: matches the source image closely
  lb_config* cfg = nullptr;
  REQUIRE(lb_config_create(&cfg) == LB_OK);
  lb_image* fused = nullptr;
  double ratios[9] = {0};
  int fallbacks = -1;
  REQUIRE(lb_fuse(bs, cfg, &fused, ratios, &fallbacks) == LB_OK);
  CHECK(fallbacks >= 0);
  for (int i = 0; i < 9; ++i) CHECK(ratios[i] == doctest::Approx(4.0).epsilon(0.01));
  lb_image* recon = nullptr;
  REQUIRE(lb_to_linear(fused, 2.0, &recon) == LB_OK);

  const double *a = nullptr, *b = nullptr;
  int64_t ca = 0, cb = 0;
  REQUIRE(lb_image_data(linear, &a, &ca) == LB_OK);
  REQUIRE(lb_image_data(recon, &b, &cb) == LB_OK);
  REQUIRE(ca == cb);
  double num = 0.0, den = 0.0;
  for (int64_t i = 0; i < ca; ++i) {
    num += std::abs(a[i] - b[i]);
    den += std::abs(a[i]);
  }
  CHECK(num / den < 1e-2);

  double ls = 0.0, mono = 0.0, cons = -1.0;
  REQUIRE(lb_metric_luminance_scale(bs, &ls) == LB_OK);
  REQUIRE(lb_metric_monotonicity(bs, &mono) == LB_OK);
  REQUIRE(lb_metric_bracket_consistency(bs, &cons) == LB_OK);
  CHECK(ls >= 1.0);
  CHECK(mono == 1.0);
  CHECK(cons >= 0.0);

  // frame accessor hands out [0,1] data suitable for ppm16
  lb_image* frame = nullptr;
  REQUIRE(lb_bracket_set_frame(bs, 3, &frame) == LB_OK);
  const std::string ppm = tmp_path("capi_frame.ppm");
  REQUIRE(lb_image_write_ppm16(frame, ppm.c_str()) == LB_OK);
  lb_image* frame_back = nullptr;
  REQUIRE(lb_image_read_ppm16(&frame_back, ppm.c_str()) == LB_OK);

  // rebuild a bracket set from individual frames
  std::vector<lb_image*> frames(4);
  for (int i = 0; i < 4; ++i) REQUIRE(lb_bracket_set_frame(bs, i, &frames[i]) == LB_OK);
  lb_bracket_set* rebuilt = nullptr;
  REQUIRE(lb_bracket_set_create((const lb_image* const*)frames.data(), ev, 4, &rebuilt) == LB_OK);
  double ls2 = 0.0;
  REQUIRE(lb_metric_luminance_scale(rebuilt, &ls2) == LB_OK);
  CHECK(ls2 == ls);

  lb_image* toned = nullptr;
  REQUIRE(lb_tonemap(recon, 2.2, &toned) == LB_OK);
  double s = 0.0;
  REQUIRE(lb_radiance_scale(linear, &s) == LB_OK);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-9));  // synth scenes are pre-normalized

  for (auto* f : frames) lb_image_destroy(f);
  lb_bracket_set_destroy(rebuilt);
  lb_image_destroy(frame);
  lb_image_destroy(frame_back);
  lb_image_destroy(toned);
  lb_image_destroy(recon);
  lb_image_destroy(fused);
  lb_image_destroy(linear);
  lb_bracket_set_destroy(bs);
  lb_config_destroy(cfg);
}

TEST_CASE("trainer: steps, checkpoint save/restore, sampling") {
  lb_config* cfg = tiny_config();
  lb_trainer* tr = nullptr;
  REQUIRE(lb_trainer_create(cfg, &tr) == LB_OK);
  uint64_t total = 0;
  REQUIRE(lb_trainer_total_steps(tr, &total) == LB_OK);
  CHECK(total == 4);

  uint64_t step = 99;
  double li = 0, lrad = 0, lbr = 0, lt = 0;
  REQUIRE(lb_trainer_step(tr, &step, &li, &lrad, &lbr, &lt) == LB_OK);
  CHECK(step == 0);
  CHECK(li > 0.0);
  CHECK(lt == doctest::Approx(li).epsilon(1e-12));

  const std::string ck = tmp_path("capi_ck.bin");
  REQUIRE(lb_trainer_save(tr, ck.c_str()) == LB_OK);

  // the checkpoint carries its exact configuration
  lb_config* ck_cfg = nullptr;
  REQUIRE(lb_config_from_checkpoint(&ck_cfg, ck.c_str()) == LB_OK);
  char *e1 = nullptr, *e2 = nullptr;
  REQUIRE(lb_config_serialize(cfg, &e1) == LB_OK);
  REQUIRE(lb_config_serialize(ck_cfg, &e2) == LB_OK);
  CHECK(std::string(e1) == std::string(e2));
  lb_string_free(e1);
  lb_string_free(e2);
  lb_config_destroy(ck_cfg);

  lb_trainer* tr2 = nullptr;
  REQUIRE(lb_trainer_create(cfg, &tr2) == LB_OK);
  REQUIRE(lb_trainer_restore(tr2, ck.c_str()) == LB_OK);
  uint64_t c1 = 0, c2 = 0;
  REQUIRE(lb_trainer_step_count(tr, &c1) == LB_OK);
  REQUIRE(lb_trainer_step_count(tr2, &c2) == LB_OK);
  CHECK(c1 == c2);

  double lt1 = 0, lt2 = 0;
  REQUIRE(lb_trainer_step(tr, nullptr, nullptr, nullptr, nullptr, &lt1) == LB_OK);
  REQUIRE(lb_trainer_step(tr2, nullptr, nullptr, nullptr, nullptr, &lt2) == LB_OK);
  CHECK(lt1 == lt2);

  CHECK(lb_trainer_restore(tr2, tmp_path("capi_no_ck.bin").c_str()) == LB_ERR_IO);

  lb_bracket_set* sampled = nullptr;
  double s_l_pred = 99.0;
  REQUIRE(lb_sample(tr, "night lamps", 5, 2, &sampled, &s_l_pred) == LB_OK);
  CHECK(std::isfinite(s_l_pred));
  int n = 0;
  REQUIRE(lb_bracket_set_count(sampled, &n) == LB_OK);
  CHECK(n == 2);
  lb_image* f0 = nullptr;
  REQUIRE(lb_bracket_set_frame(sampled, 0, &f0) == LB_OK);
  const double* data = nullptr;
  int64_t count = 0;
  REQUIRE(lb_image_data(f0, &data, &count) == LB_OK);
  for (int64_t i = 0; i < count; ++i) {
    REQUIRE(data[i] >= 0.0);
    REQUIRE(data[i] <= 1.0);
  }

  // identical (prompt, seed, steps) reproduces bit-identically
  lb_bracket_set* sampled2 = nullptr;
  REQUIRE(lb_sample(tr, "night lamps", 5, 2, &sampled2, nullptr) == LB_OK);
  lb_image* g0 = nullptr;
  REQUIRE(lb_bracket_set_frame(sampled2, 0, &g0) == LB_OK);
  const double* data2 = nullptr;
  int64_t count2 = 0;
  REQUIRE(lb_image_data(g0, &data2, &count2) == LB_OK);
  REQUIRE(count2 == count);
  for (int64_t i = 0; i < count; ++i) REQUIRE(data2[i] == data[i]);

  CHECK(lb_sample(tr, "no such words", 5, 2, &sampled2, nullptr) == LB_ERR_INVALID_ARGUMENT);
  CHECK(lb_sample(tr, "night", 5, 0, &sampled2, nullptr) == LB_ERR_INVALID_ARGUMENT);

  lb_image_destroy(f0);
  lb_image_destroy(g0);
  lb_bracket_set_destroy(sampled);
  lb_bracket_set_destroy(sampled2);
  lb_trainer_destroy(tr);
  lb_trainer_destroy(tr2);
  lb_config_destroy(cfg);
}
