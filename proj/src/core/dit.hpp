#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/codec.hpp"
#include "core/image.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace lb {

enum class RopeMode { k2D, k2DLayerEmbed, k3D, k3DLayerEmbed };
enum class Phase { Pretrain, Finetune };

RopeMode rope_mode_from_string(const std::string& s);
std::string rope_mode_to_string(RopeMode m);

struct ModelConfig {
  int image_size = 32;
  int patch = 4;
  int dim = 48;  // must equal patch*patch*3: tokens are the latent itself
  int heads = 4;
  int mm_blocks = 2;
  int single_blocks = 4;
  std::vector<double> ev_list = {-4.0, -2.0, 0.0, 2.0};
  int text_len = 4;
  int vocab = 16;
  int lora_rank = 8;
  double lora_alpha = 16.0;
  int mod_dim = 24;  // exposure-modulation inner dimension
  int mod_heads = 2;
  RopeMode rope_mode = RopeMode::k3D;
  bool modulation = true;
  bool modulation_on_mm = false;  // ablation: also run the branch in MM blocks
  int time_fourier = 32;
  int mod_fourier = 16;

  int grid() const { return image_size / patch; }
  int tokens_per_frame() const { return grid() * grid(); }
  int brackets() const { return (int)ev_list.size(); }
  int head_dim() const { return dim / heads; }
  int mod_head_dim() const { return mod_dim / mod_heads; }
  int bracket_tokens(Phase phase) const {
    return phase == Phase::Pretrain ? tokens_per_frame() : brackets() * tokens_per_frame();
  }
  int base_bracket() const;  // index of ev == 0
  bool layer_embed() const {
    return rope_mode == RopeMode::k2DLayerEmbed || rope_mode == RopeMode::k3DLayerEmbed;
  }
  void validate() const;
};

// Named parameter registry; iteration order is insertion order so
// serialization and optimizer updates are deterministic.
struct ParamStore {
  std::vector<std::string> names;
  std::unordered_map<std::string, Tensor> map;

  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return map.count(name) != 0; }
};

enum class ParamGroup { Base, Modulation, Adapter };
// base weights vs the two fine-tune groups (modulation branch vs LoRA+codec)
ParamGroup param_group(const std::string& name);
bool trainable_in_phase(const std::string& name, Phase phase);

// Sequence layout: [bracket tokens | radiance token (fine-tune only) | text].
struct SeqLayout {
  int bracket_tokens = 0;
  bool has_rad = false;
  int text_len = 0;
  int rad_index() const { return bracket_tokens; }
  int text_start() const { return bracket_tokens + (has_rad ? 1 : 0); }
  int total() const { return text_start() + text_len; }
};

SeqLayout seq_layout(const ModelConfig& cfg, Phase phase);

// (index, i, j) per token; radiance gets no rotation (flagged by index -1).
struct TokenPositions {
  std::vector<int> index, i, j;
  std::vector<bool> rotate;
};
TokenPositions build_positions(const ModelConfig& cfg, Phase phase);

// Additive attention mask: 0 where allowed, -1e30 where forbidden. The
// forbidden logits underflow to probability exactly 0, which is what makes
// the radiance-isolation invariant bit-exact.
Tensor build_mask(const ModelConfig& cfg, Phase phase);

// cos/sin tables [S, head_dim] for a given head partition width.
struct RopeTables {
  Tensor cos_t, sin_t;
};
RopeTables build_rope_tables(const ModelConfig& cfg, Phase phase, int head_dim);

class FlowDiT {
 public:
  FlowDiT(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  RadianceCodec& codec() { return codec_; }
  const RadianceCodec& codec() const { return codec_; }

  Tensor text_embed(const std::vector<int>& caption) const;  // [T, d]
  Tensor pooled_text(const std::vector<int>& caption) const;  // [d]

  struct VelocityOut {
    Tensor img;  // [bracket_tokens, d]
    Tensor rad;  // [1, d]; undefined in pretrain
  };
  // z_t: [bracket_tokens, d]; rad_t: [1, d] or undefined in pretrain.
  VelocityOut forward_velocity(const Tensor& z_t, const Tensor& rad_t,
                               const std::vector<int>& caption, double t, Phase phase) const;

  // exposure-modulation FiLM table: [K, 2d] rows (scale_k | shift_k)
  Tensor modulation_film(int single_block, const std::vector<double>& ev_list) const;
  Tensor modulation_film_named(const std::string& prefix,
                               const std::vector<double>& ev_list) const;

  struct SampleOut {
    BracketSet brackets;
    double s_l_pred = 0.0;
    Tensor z0;       // final latent [K*L, d]
    Tensor rad0;     // final radiance token [1, d]
  };
  SampleOut sample(const std::vector<int>& caption, int steps, Rng& img_noise,
                   Rng& rad_noise) const;

  // W' = W + (alpha/r) * A * B on every adapted projection; LoRA B zeroed so
  // the merged model's forward equals the adapter forward.
  FlowDiT lora_merge() const;

  std::vector<std::string> lora_target_prefixes() const;

 private:
  friend struct DiTForward;
  ModelConfig cfg_;
  ParamStore params_;
  RadianceCodec codec_;
  // per-phase constant tables, built once
  struct Tables {
    Tensor mask;
    RopeTables main;
    RopeTables mod;
  };
  Tables tables_[2];
  const Tables& tables(Phase phase) const { return tables_[(int)phase]; }
};

// ---- losses ----------------------------------------------------------------

Tensor loss_img(const Tensor& u_pred, const Tensor& u_target);
Tensor loss_rad(const Tensor& u_pred, const Tensor& u_target);
// z0_hat: [K*L, d]; sum over k of mean-L1 of (frame_k / 2^ev_k - frame_base)
Tensor loss_bracket(const Tensor& z0_hat, const ModelConfig& cfg);
Tensor total_loss(const Tensor& l_img, const Tensor* l_rad, const Tensor* l_bracket,
                  double lambda_rad, double lambda_bracket);

// ---- flow path --------------------------------------------------------------

inline double flow_interp(double z0, double z1, double t) { return (1.0 - t) * z0 + t * z1; }
Tensor flow_interpolate(const Tensor& z0, const Tensor& z1, double t);  // (1-t) z0 + t z1
Tensor flow_denoised(const Tensor& z_t, const Tensor& u, double t);     // z_t - t u

// Euler integration from t=1 to t=0 in uniform steps over a list of states.
using VelocityFn =
    std::function<std::vector<Tensor>(const std::vector<Tensor>&, double t)>;
std::vector<Tensor> euler_integrate(const VelocityFn& fn, std::vector<Tensor> state, int steps);

Tensor detach(const Tensor& t);

}  // namespace lb
