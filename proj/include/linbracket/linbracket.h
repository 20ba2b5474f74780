#ifndef LINBRACKET_H
#define LINBRACKET_H

/* C surface over the bracket-diffusion core: opaque handles, integer status
 * codes, and a thread-local last-error message. Every function returns
 * LB_OK (0) on success; on failure the out-parameters are left untouched
 * and lb_last_error() describes what went wrong. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lb_status {
  LB_OK = 0,
  LB_ERR_INVALID_ARGUMENT = 1,
  LB_ERR_IO = 2,
  LB_ERR_NUMERIC = 3,
  LB_ERR_STATE = 4
} lb_status;

const char* lb_version(void);
/* Message for the most recent failure on this thread; never NULL. */
const char* lb_last_error(void);
void lb_string_free(char* s);

/* ---- configuration ------------------------------------------------------ */

typedef struct lb_config lb_config;

lb_status lb_config_create(lb_config** out);
lb_status lb_config_load(lb_config** out, const char* path); /* defaults + file */
/* Rebuilds the exact configuration echoed into a training checkpoint. */
lb_status lb_config_from_checkpoint(lb_config** out, const char* checkpoint_path);
lb_status lb_config_set(lb_config* cfg, const char* key, const char* value);
/* Current value of one knob; free with lb_string_free. */
lb_status lb_config_get(const lb_config* cfg, const char* key, char** out);
/* Full echo, one "key = value" line per knob; free with lb_string_free. */
lb_status lb_config_serialize(const lb_config* cfg, char** out);
lb_status lb_config_validate(const lb_config* cfg);
void lb_config_destroy(lb_config* cfg);

/* ---- images and bracket sets -------------------------------------------- */

typedef struct lb_image lb_image;
typedef struct lb_bracket_set lb_bracket_set;

lb_status lb_image_create(lb_image** out, int width, int height, const double* rgb);
lb_status lb_image_size(const lb_image* img, int* width, int* height);
/* Borrowed pointer into the image; valid until the image is destroyed. */
lb_status lb_image_data(const lb_image* img, const double** data, int64_t* count);
void lb_image_destroy(lb_image* img);

lb_status lb_image_read_pfm(lb_image** out, const char* path);
lb_status lb_image_write_pfm(const lb_image* img, const char* path);
lb_status lb_image_read_ppm16(lb_image** out, const char* path);
lb_status lb_image_write_ppm16(const lb_image* img, const char* path);

/* Reinhard display mapping x -> (x/(1+x))^(1/gamma). */
lb_status lb_tonemap(const lb_image* linear, double gamma, lb_image** out);
/* s = max(P50/0.18, P90/0.8) over all channel values of the radiance map. */
lb_status lb_radiance_scale(const lb_image* radiance, double* s);

/* Clipped exposure ladder I_k = clip(I * 2^ev_k, 0, 1). ev must be strictly
 * increasing and contain 0. */
lb_status lb_brackets_from_linear(const lb_image* linear, const double* ev, int count,
                                  lb_bracket_set** out);
lb_status lb_bracket_set_create(const lb_image* const* frames, const double* ev, int count,
                                lb_bracket_set** out);
lb_status lb_bracket_set_count(const lb_bracket_set* bs, int* count);
lb_status lb_bracket_set_ev(const lb_bracket_set* bs, int index, double* ev);
lb_status lb_bracket_set_frame(const lb_bracket_set* bs, int index, lb_image** out);
void lb_bracket_set_destroy(lb_bracket_set* bs);

/* Exposure fusion: darker frames replace the saturated regions of brighter
 * ones under estimated per-channel gains. ratios_out takes 3*(count-1)
 * doubles (RGB per adjacent pair, darkest pair first); it and
 * fallback_count may be NULL. */
lb_status lb_fuse(const lb_bracket_set* bs, const lb_config* cfg, lb_image** fused,
                  double* ratios_out, int* fallback_count);
/* Rescale a fused stack from the brightest frame's exposure back to EV0. */
lb_status lb_to_linear(const lb_image* fused, double ev_max, lb_image** out);

/* ---- metrics -------------------------------------------------------------- */

lb_status lb_metric_luminance_scale(const lb_bracket_set* bs, double* ls);
lb_status lb_metric_monotonicity(const lb_bracket_set* bs, double* rate);
lb_status lb_metric_bracket_consistency(const lb_bracket_set* bs, double* err);

/* ---- synthetic scenes ----------------------------------------------------- */

int lb_vocab_size(void);
/* Borrowed static string; NULL for out-of-range ids. */
const char* lb_vocab_word(int id);

/* Record `index` of the deterministic dataset stream for `dataset_seed`.
 * caption_out needs room for 3 ids; unused tail is set to -1. held_out is
 * 1 on every fifth record (the evaluation split). Outputs may be NULL. */
lb_status lb_synth_scene(uint64_t dataset_seed, uint64_t index, const double* ev, int count,
                         int image_size, lb_image** linear, lb_bracket_set** brackets,
                         double* s_l, int* caption_out, int* held_out);

/* ---- training and sampling ------------------------------------------------ */

typedef struct lb_trainer lb_trainer;

/* Builds the model and materializes the training scenes for cfg. */
lb_status lb_trainer_create(const lb_config* cfg, lb_trainer** out);
lb_status lb_trainer_restore(lb_trainer* tr, const char* checkpoint_path);
lb_status lb_trainer_save(const lb_trainer* tr, const char* checkpoint_path);
lb_status lb_trainer_step(lb_trainer* tr, uint64_t* step, double* l_img, double* l_rad,
                          double* l_bracket, double* total);
lb_status lb_trainer_step_count(const lb_trainer* tr, uint64_t* count);
lb_status lb_trainer_total_steps(const lb_trainer* tr, uint64_t* count);
void lb_trainer_destroy(lb_trainer* tr);

/* Samples brackets for a space-separated prompt of vocabulary words and
 * decodes the predicted log10 radiance scale. s_l_pred may be NULL. */
lb_status lb_sample(const lb_trainer* tr, const char* prompt, uint64_t seed, int steps,
                    lb_bracket_set** out, double* s_l_pred);

#ifdef __cplusplus
}
#endif

#endif /* LINBRACKET_H */
