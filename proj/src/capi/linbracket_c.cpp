#include "linbracket/linbracket.h"

#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>

#include "core/config.hpp"
#include "core/fusion.hpp"
#include "core/io.hpp"
#include "core/metrics.hpp"
#include "core/synth.hpp"
#include "core/train.hpp"

struct lb_config {
  lb::RunConfig cfg;
};
struct lb_image {
  lb::Image img;
};
struct lb_bracket_set {
  lb::BracketSet bs;
};
struct lb_trainer {
  lb::Trainer tr;
  explicit lb_trainer(const lb::RunConfig& cfg) : tr(cfg) {}
};

namespace {

thread_local std::string g_last_error = "no error";

template <typename Fn>
lb_status guard(lb_status on_error, Fn&& fn) {
  try {
    fn();
    return LB_OK;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return on_error;
  } catch (...) {
    g_last_error = "unknown error";
    return on_error;
  }
}

lb_status invalid(const char* msg) {
  g_last_error = msg;
  return LB_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* lb_version(void) { return lb::tool_version(); }

const char* lb_last_error(void) { return g_last_error.c_str(); }

void lb_string_free(char* s) { delete[] s; }

/* ---- configuration ------------------------------------------------------ */

lb_status lb_config_create(lb_config** out) {
  if (!out) return invalid("lb_config_create: out is NULL");
  return guard(LB_ERR_STATE, [&] { *out = new lb_config(); });
}

lb_status lb_config_load(lb_config** out, const char* path) {
  if (!out || !path) return invalid("lb_config_load: NULL argument");
  return guard(LB_ERR_IO, [&] {
    auto c = std::make_unique<lb_config>();
    c->cfg.apply_pairs(lb::parse_config_file(path));
    *out = c.release();
  });
}

lb_status lb_config_from_checkpoint(lb_config** out, const char* checkpoint_path) {
  if (!out || !checkpoint_path) return invalid("lb_config_from_checkpoint: NULL argument");
  return guard(LB_ERR_IO, [&] {
    auto c = std::make_unique<lb_config>();
    c->cfg.apply_pairs(lb::parse_config_text(lb::checkpoint_read(checkpoint_path).config_echo));
    *out = c.release();
  });
}

lb_status lb_config_set(lb_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return invalid("lb_config_set: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] { cfg->cfg.apply(key, value); });
}

namespace {

lb_status copy_string_out(const std::string& s, char** out) {
  char* buf = new char[s.size() + 1];
  std::memcpy(buf, s.c_str(), s.size() + 1);
  *out = buf;
  return LB_OK;
}

}  // namespace

lb_status lb_config_get(const lb_config* cfg, const char* key, char** out) {
  if (!cfg || !key || !out) return invalid("lb_config_get: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] { copy_string_out(cfg->cfg.get(key), out); });
}

lb_status lb_config_serialize(const lb_config* cfg, char** out) {
  if (!cfg || !out) return invalid("lb_config_serialize: NULL argument");
  return guard(LB_ERR_STATE, [&] { copy_string_out(cfg->cfg.serialize(), out); });
}

lb_status lb_config_validate(const lb_config* cfg) {
  if (!cfg) return invalid("lb_config_validate: cfg is NULL");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] { cfg->cfg.validate(); });
}

void lb_config_destroy(lb_config* cfg) { delete cfg; }

/* ---- images and bracket sets -------------------------------------------- */

lb_status lb_image_create(lb_image** out, int width, int height, const double* rgb) {
  if (!out || !rgb) return invalid("lb_image_create: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] {
    if (width <= 0 || height <= 0) throw std::runtime_error("lb_image_create: empty size");
    auto im = std::make_unique<lb_image>();
    im->img = lb::Image::create(width, height);
    std::memcpy(im->img.rgb.data(), rgb, (size_t)im->img.values() * sizeof(double));
    im->img.validate("lb_image_create");
    *out = im.release();
  });
}

lb_status lb_image_size(const lb_image* img, int* width, int* height) {
  if (!img || !width || !height) return invalid("lb_image_size: NULL argument");
  *width = img->img.width;
  *height = img->img.height;
  return LB_OK;
}

lb_status lb_image_data(const lb_image* img, const double** data, int64_t* count) {
  if (!img || !data || !count) return invalid("lb_image_data: NULL argument");
  *data = img->img.rgb.data();
  *count = img->img.values();
  return LB_OK;
}

void lb_image_destroy(lb_image* img) { delete img; }

lb_status lb_image_read_pfm(lb_image** out, const char* path) {
  if (!out || !path) return invalid("lb_image_read_pfm: NULL argument");
  return guard(LB_ERR_IO, [&] { *out = new lb_image{lb::pfm_read(path)}; });
}

lb_status lb_image_write_pfm(const lb_image* img, const char* path) {
  if (!img || !path) return invalid("lb_image_write_pfm: NULL argument");
  return guard(LB_ERR_IO, [&] { lb::pfm_write(path, img->img); });
}

lb_status lb_image_read_ppm16(lb_image** out, const char* path) {
  if (!out || !path) return invalid("lb_image_read_ppm16: NULL argument");
  return guard(LB_ERR_IO, [&] { *out = new lb_image{lb::ppm16_read(path)}; });
}

lb_status lb_image_write_ppm16(const lb_image* img, const char* path) {
  if (!img || !path) return invalid("lb_image_write_ppm16: NULL argument");
  return guard(LB_ERR_IO, [&] { lb::ppm16_write(path, img->img); });
}

lb_status lb_tonemap(const lb_image* linear, double gamma, lb_image** out) {
  if (!linear || !out) return invalid("lb_tonemap: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT,
               [&] { *out = new lb_image{lb::tonemap_display(linear->img, gamma)}; });
}

lb_status lb_radiance_scale(const lb_image* radiance, double* s) {
  if (!radiance || !s) return invalid("lb_radiance_scale: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT,
               [&] { *s = lb::compute_radiance_scale(radiance->img); });
}

lb_status lb_brackets_from_linear(const lb_image* linear, const double* ev, int count,
                                  lb_bracket_set** out) {
  if (!linear || !ev || !out) return invalid("lb_brackets_from_linear: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] {
    if (count < 1) throw std::runtime_error("lb_brackets_from_linear: count < 1");
    const std::vector<double> evs(ev, ev + count);
    *out = new lb_bracket_set{lb::bracket_decompose(linear->img, evs)};
  });
}

lb_status lb_bracket_set_create(const lb_image* const* frames, const double* ev, int count,
                                lb_bracket_set** out) {
  if (!frames || !ev || !out) return invalid("lb_bracket_set_create: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] {
    if (count < 1) throw std::runtime_error("lb_bracket_set_create: count < 1");
    lb::BracketSet bs;
    bs.ev_list.assign(ev, ev + count);
    for (int i = 0; i < count; ++i) {
      if (!frames[i]) throw std::runtime_error("lb_bracket_set_create: NULL frame");
      bs.frames.push_back(frames[i]->img);
    }
    bs.validate("lb_bracket_set_create");
    *out = new lb_bracket_set{std::move(bs)};
  });
}

lb_status lb_bracket_set_count(const lb_bracket_set* bs, int* count) {
  if (!bs || !count) return invalid("lb_bracket_set_count: NULL argument");
  *count = (int)bs->bs.frames.size();
  return LB_OK;
}

lb_status lb_bracket_set_ev(const lb_bracket_set* bs, int index, double* ev) {
  if (!bs || !ev) return invalid("lb_bracket_set_ev: NULL argument");
  if (index < 0 || index >= (int)bs->bs.ev_list.size())
    return invalid("lb_bracket_set_ev: index out of range");
  *ev = bs->bs.ev_list[index];
  return LB_OK;
}

lb_status lb_bracket_set_frame(const lb_bracket_set* bs, int index, lb_image** out) {
  if (!bs || !out) return invalid("lb_bracket_set_frame: NULL argument");
  if (index < 0 || index >= (int)bs->bs.frames.size())
    return invalid("lb_bracket_set_frame: index out of range");
  return guard(LB_ERR_STATE, [&] { *out = new lb_image{bs->bs.frames[index]}; });
}

void lb_bracket_set_destroy(lb_bracket_set* bs) { delete bs; }

lb_status lb_fuse(const lb_bracket_set* bs, const lb_config* cfg, lb_image** fused,
                  double* ratios_out, int* fallback_count) {
  if (!bs || !cfg || !fused) return invalid("lb_fuse: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] {
    lb::FusionResult res = lb::fuse(bs->bs, cfg->cfg.fusion);
    if (ratios_out)
      for (size_t p = 0; p < res.ratios.size(); ++p)
        for (int c = 0; c < 3; ++c) ratios_out[3 * p + c] = res.ratios[p].r[c];
    if (fallback_count) *fallback_count = res.fallback_count;
    *fused = new lb_image{std::move(res.fused)};
  });
}

lb_status lb_to_linear(const lb_image* fused, double ev_max, lb_image** out) {
  if (!fused || !out) return invalid("lb_to_linear: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT,
               [&] { *out = new lb_image{lb::to_linear(fused->img, ev_max)}; });
}

/* ---- metrics -------------------------------------------------------------- */

lb_status lb_metric_luminance_scale(const lb_bracket_set* bs, double* ls) {
  if (!bs || !ls) return invalid("lb_metric_luminance_scale: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] { *ls = lb::luminance_scale(bs->bs); });
}

lb_status lb_metric_monotonicity(const lb_bracket_set* bs, double* rate) {
  if (!bs || !rate) return invalid("lb_metric_monotonicity: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] { *rate = lb::exposure_monotonicity(bs->bs); });
}

lb_status lb_metric_bracket_consistency(const lb_bracket_set* bs, double* err) {
  if (!bs || !err) return invalid("lb_metric_bracket_consistency: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] { *err = lb::bracket_consistency_error(bs->bs); });
}

/* ---- synthetic scenes ----------------------------------------------------- */

int lb_vocab_size(void) { return (int)lb::vocab().size(); }

const char* lb_vocab_word(int id) {
  const auto& words = lb::vocab();
  if (id < 0 || id >= (int)words.size()) return nullptr;
  return words[(size_t)id].c_str();
}

lb_status lb_synth_scene(uint64_t dataset_seed, uint64_t index, const double* ev, int count,
                         int image_size, lb_image** linear, lb_bracket_set** brackets,
                         double* s_l, int* caption_out, int* held_out) {
  if (!ev) return invalid("lb_synth_scene: ev is NULL");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] {
    if (count < 1) throw std::runtime_error("lb_synth_scene: count < 1");
    const std::vector<double> evs(ev, ev + count);
    lb::DatasetRecord rec = lb::generate_scene(lb::make_spec(dataset_seed, index), evs, image_size);
    if (s_l) *s_l = rec.s_l;
    if (held_out) *held_out = index % 5 == 4 ? 1 : 0;
    if (caption_out) {
      for (int i = 0; i < 3; ++i)
        caption_out[i] = i < (int)rec.caption.size() ? rec.caption[i] : -1;
    }
    if (linear) *linear = new lb_image{std::move(rec.image)};
    if (brackets) *brackets = new lb_bracket_set{std::move(rec.brackets)};
  });
}

/* ---- training and sampling ------------------------------------------------ */

lb_status lb_trainer_create(const lb_config* cfg, lb_trainer** out) {
  if (!cfg || !out) return invalid("lb_trainer_create: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] { *out = new lb_trainer(cfg->cfg); });
}

lb_status lb_trainer_restore(lb_trainer* tr, const char* checkpoint_path) {
  if (!tr || !checkpoint_path) return invalid("lb_trainer_restore: NULL argument");
  return guard(LB_ERR_IO, [&] { tr->tr.restore(lb::checkpoint_read(checkpoint_path)); });
}

lb_status lb_trainer_save(const lb_trainer* tr, const char* checkpoint_path) {
  if (!tr || !checkpoint_path) return invalid("lb_trainer_save: NULL argument");
  return guard(LB_ERR_IO, [&] { lb::checkpoint_write(checkpoint_path, tr->tr.checkpoint()); });
}

lb_status lb_trainer_step(lb_trainer* tr, uint64_t* step, double* l_img, double* l_rad,
                          double* l_bracket, double* total) {
  if (!tr) return invalid("lb_trainer_step: trainer is NULL");
  return guard(LB_ERR_NUMERIC, [&] {
    const lb::LossRecord r = tr->tr.train_step();
    if (step) *step = r.step;
    if (l_img) *l_img = r.l_img;
    if (l_rad) *l_rad = r.l_rad;
    if (l_bracket) *l_bracket = r.l_bracket;
    if (total) *total = r.total;
  });
}

lb_status lb_trainer_step_count(const lb_trainer* tr, uint64_t* count) {
  if (!tr || !count) return invalid("lb_trainer_step_count: NULL argument");
  *count = tr->tr.step_count();
  return LB_OK;
}

lb_status lb_trainer_total_steps(const lb_trainer* tr, uint64_t* count) {
  if (!tr || !count) return invalid("lb_trainer_total_steps: NULL argument");
  *count = tr->tr.total_steps();
  return LB_OK;
}

void lb_trainer_destroy(lb_trainer* tr) { delete tr; }

lb_status lb_sample(const lb_trainer* tr, const char* prompt, uint64_t seed, int steps,
                    lb_bracket_set** out, double* s_l_pred) {
  if (!tr || !prompt || !out) return invalid("lb_sample: NULL argument");
  return guard(LB_ERR_INVALID_ARGUMENT, [&] {
    auto res = lb::sample_prompt(tr->tr.model(), lb::parse_prompt(prompt), seed, steps);
    if (s_l_pred) *s_l_pred = res.s_l_pred;
    *out = new lb_bracket_set{std::move(res.brackets)};
  });
}

}  // extern "C"
