#include "core/dit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lb {

namespace {

constexpr double kMaskOff = -1e30;

Tensor constant(std::vector<int> shape, std::vector<double> values) {
  return Tensor::from_data(std::move(shape), std::move(values), false);
}

RadianceCodec make_codec(int dim, uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x10adc0de);
  return RadianceCodec(dim, rng);
}

}  // namespace

RopeMode rope_mode_from_string(const std::string& s) {
  if (s == "2d") return RopeMode::k2D;
  if (s == "2d+le") return RopeMode::k2DLayerEmbed;
  if (s == "3d") return RopeMode::k3D;
  if (s == "3d+le") return RopeMode::k3DLayerEmbed;
  throw std::runtime_error("rope mode: expected one of 2d, 2d+le, 3d, 3d+le, got '" + s + "'");
}

std::string rope_mode_to_string(RopeMode m) {
  switch (m) {
    case RopeMode::k2D: return "2d";
    case RopeMode::k2DLayerEmbed: return "2d+le";
    case RopeMode::k3D: return "3d";
    case RopeMode::k3DLayerEmbed: return "3d+le";
  }
  throw std::runtime_error("rope mode: bad enum value");
}

int ModelConfig::base_bracket() const {
  for (size_t k = 0; k < ev_list.size(); ++k)
    if (ev_list[k] == 0.0) return (int)k;
  throw std::runtime_error("config: ev_list has no base exposure 0");
}

void ModelConfig::validate() const {
  if (image_size <= 0 || patch <= 0 || image_size % patch != 0)
    throw std::runtime_error("config: image size must be a positive multiple of patch");
  if (dim != patch * patch * 3)
    throw std::runtime_error("config: dim must equal patch*patch*3 (invertible latent)");
  if (heads <= 0 || dim % heads != 0)
    throw std::runtime_error("config: dim must divide into heads");
  const bool three_axis = rope_mode == RopeMode::k3D || rope_mode == RopeMode::k3DLayerEmbed;
  const int hd = head_dim();
  if (three_axis && hd % 6 != 0)
    throw std::runtime_error("config: 3d rope needs head_dim divisible by 6");
  if (!three_axis && hd % 4 != 0)
    throw std::runtime_error("config: 2d rope needs head_dim divisible by 4");
  if (mod_dim <= 0 || mod_heads <= 0 || mod_dim % mod_heads != 0)
    throw std::runtime_error("config: mod_dim must divide into mod_heads");
  const int mhd = mod_head_dim();
  if (three_axis ? mhd % 6 != 0 : mhd % 4 != 0)
    throw std::runtime_error("config: modulation head_dim incompatible with rope mode");
  if (brackets() < 2) throw std::runtime_error("config: need K >= 2 exposures");
  for (size_t k = 1; k < ev_list.size(); ++k)
    if (!(ev_list[k] > ev_list[k - 1]))
      throw std::runtime_error("config: ev_list not strictly increasing");
  (void)base_bracket();
  if (mm_blocks < 0 || single_blocks <= 0)
    throw std::runtime_error("config: need at least one single block");
  if (text_len <= 0 || vocab <= 0) throw std::runtime_error("config: empty text space");
  if (lora_rank <= 0 || lora_alpha <= 0.0) throw std::runtime_error("config: bad lora setup");
  if (time_fourier % 2 != 0 || mod_fourier % 2 != 0)
    throw std::runtime_error("config: fourier widths must be even");
}

// ---- param store -------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (map.count(name)) throw std::runtime_error("params: duplicate name " + name);
  names.push_back(name);
  return map.emplace(name, std::move(t)).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = map.find(name);
  if (it == map.end()) throw std::runtime_error("params: unknown name " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = map.find(name);
  if (it == map.end()) throw std::runtime_error("params: unknown name " + name);
  return it->second;
}

ParamGroup param_group(const std::string& name) {
  if (name.find(".mod.") != std::string::npos || name.rfind("le.", 0) == 0)
    return ParamGroup::Modulation;
  if (name.find(".lora.") != std::string::npos || name.rfind("codec.", 0) == 0 ||
      name.rfind("rad.", 0) == 0)
    return ParamGroup::Adapter;
  return ParamGroup::Base;
}

bool trainable_in_phase(const std::string& name, Phase phase) {
  const ParamGroup g = param_group(name);
  return phase == Phase::Pretrain ? g == ParamGroup::Base : g != ParamGroup::Base;
}

// ---- layout / positions / mask / rope -----------------------------------------

SeqLayout seq_layout(const ModelConfig& cfg, Phase phase) {
  SeqLayout lay;
  lay.bracket_tokens = cfg.bracket_tokens(phase);
  lay.has_rad = phase == Phase::Finetune;
  lay.text_len = cfg.text_len;
  return lay;
}

TokenPositions build_positions(const ModelConfig& cfg, Phase phase) {
  const SeqLayout lay = seq_layout(cfg, phase);
  const int G = cfg.grid();
  const int K = phase == Phase::Pretrain ? 1 : cfg.brackets();
  TokenPositions pos;
  pos.index.assign(lay.total(), 0);
  pos.i.assign(lay.total(), 0);
  pos.j.assign(lay.total(), 0);
  pos.rotate.assign(lay.total(), true);
  int n = 0;
  for (int k = 0; k < K; ++k)
    for (int i = 0; i < G; ++i)
      for (int j = 0; j < G; ++j) {
        pos.index[n] = k;
        pos.i[n] = i;
        pos.j[n] = j;
        ++n;
      }
  if (lay.has_rad) {
    pos.rotate[n] = false;  // radiance token is never rotated
    ++n;
  }
  for (int s = 0; s < lay.text_len; ++s) {
    // reserved ids outside the bracket grid
    pos.index[n] = cfg.brackets();
    pos.i[n] = G;
    pos.j[n] = s;
    ++n;
  }
  return pos;
}

Tensor build_mask(const ModelConfig& cfg, Phase phase) {
  const SeqLayout lay = seq_layout(cfg, phase);
  const int S = lay.total();
  std::vector<double> m((size_t)S * S, 0.0);
  if (lay.has_rad) {
    const int rad = lay.rad_index();
    const int L = cfg.tokens_per_frame();
    const int b0 = cfg.base_bracket();
    // nothing reads the radiance token
    for (int r = 0; r < S; ++r) m[(size_t)r * S + rad] = kMaskOff;
    // the radiance token reads only text and the base bracket
    for (int c = 0; c < S; ++c) {
      const bool text_col = c >= lay.text_start();
      const bool base_col = c >= b0 * L && c < (b0 + 1) * L;
      m[(size_t)rad * S + c] = (text_col || base_col) ? 0.0 : kMaskOff;
    }
  }
  return constant({S, S}, std::move(m));
}

RopeTables build_rope_tables(const ModelConfig& cfg, Phase phase, int head_dim) {
  const TokenPositions pos = build_positions(cfg, phase);
  const int S = (int)pos.index.size();
  const bool three_axis =
      cfg.rope_mode == RopeMode::k3D || cfg.rope_mode == RopeMode::k3DLayerEmbed;
  const int axes = three_axis ? 3 : 2;
  const int group = head_dim / axes;
  const int pairs = group / 2;
  std::vector<double> cs((size_t)S * head_dim, 1.0);
  std::vector<double> sn((size_t)S * head_dim, 0.0);
  for (int tok = 0; tok < S; ++tok) {
    if (!pos.rotate[tok]) continue;
    for (int a = 0; a < axes; ++a) {
      const int coord = three_axis ? (a == 0 ? pos.index[tok] : (a == 1 ? pos.i[tok] : pos.j[tok]))
                                   : (a == 0 ? pos.i[tok] : pos.j[tok]);
      for (int p = 0; p < pairs; ++p) {
        const double freq = std::pow(10000.0, -(double)p / (double)pairs);
        const double angle = (double)coord * freq;
        const size_t at = (size_t)tok * head_dim + a * group + 2 * p;
        cs[at] = cs[at + 1] = std::cos(angle);
        sn[at] = sn[at + 1] = std::sin(angle);
      }
    }
  }
  RopeTables t;
  t.cos_t = constant({S, head_dim}, std::move(cs));
  t.sin_t = constant({S, head_dim}, std::move(sn));
  return t;
}

// ---- model construction --------------------------------------------------------

namespace {

Tensor init_linear(Rng& rng, int in, int out) {
  return Tensor::randn({in, out}, rng, 1.0 / std::sqrt((double)in), true);
}

}  // namespace

FlowDiT::FlowDiT(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg), codec_(make_codec(cfg.dim, seed)) {
  cfg_.validate();
  Rng rng = Rng::stream(seed, 0x1417);
  const int d = cfg_.dim;
  const int hd = cfg_.head_dim();
  auto lin = [&](const std::string& prefix, int in, int out, bool lora) {
    params_.add(prefix + ".w", init_linear(rng, in, out));
    params_.add(prefix + ".b", Tensor::zeros({out}, true));
    if (lora) {
      params_.add(prefix + ".lora.a",
                  Tensor::randn({in, cfg_.lora_rank}, rng, 1.0 / std::sqrt((double)in), true));
      params_.add(prefix + ".lora.b", Tensor::zeros({cfg_.lora_rank, out}, true));
    }
  };
  auto modulation_branch = [&](const std::string& prefix) {
    params_.add(prefix + ".mod.mlp1.w", init_linear(rng, cfg_.mod_fourier, 2 * cfg_.mod_fourier));
    params_.add(prefix + ".mod.mlp1.b", Tensor::zeros({2 * cfg_.mod_fourier}, true));
    // zero so the FiLM transform starts as identity
    params_.add(prefix + ".mod.mlp2.w", Tensor::zeros({2 * cfg_.mod_fourier, 2 * d}, true));
    params_.add(prefix + ".mod.mlp2.b", Tensor::zeros({2 * d}, true));
    lin(prefix + ".mod.qkv", d, 3 * cfg_.mod_dim, false);
    lin(prefix + ".mod.out", cfg_.mod_dim, d, false);
    params_.add(prefix + ".mod.gate", Tensor::zeros({d}, true));
  };

  params_.add("text.embed", Tensor::randn({cfg_.vocab + 1, d}, rng, 0.1, true));
  lin("time.mlp1", cfg_.time_fourier, d, false);
  lin("time.mlp2", d, d, false);

  for (int b = 0; b < cfg_.mm_blocks; ++b)
    for (const char* s : {"img", "txt"}) {
      const std::string pre = "mm" + std::to_string(b) + "." + s;
      lin(pre + ".qkv", d, 3 * d, true);
      params_.add(pre + ".qnorm", Tensor::full({hd}, 1.0, true));
      params_.add(pre + ".knorm", Tensor::full({hd}, 1.0, true));
      lin(pre + ".proj", d, d, true);
      lin(pre + ".mlp1", d, 4 * d, true);
      lin(pre + ".mlp2", 4 * d, d, true);
      params_.add(pre + ".adaln.w", Tensor::zeros({d, 6 * d}, true));
      params_.add(pre + ".adaln.b", Tensor::zeros({6 * d}, true));
      if (cfg_.modulation && cfg_.modulation_on_mm && std::string(s) == "img")
        modulation_branch(pre);
    }
  for (int b = 0; b < cfg_.single_blocks; ++b) {
    const std::string pre = "sg" + std::to_string(b);
    lin(pre + ".qkv", d, 3 * d, true);
    params_.add(pre + ".qnorm", Tensor::full({hd}, 1.0, true));
    params_.add(pre + ".knorm", Tensor::full({hd}, 1.0, true));
    lin(pre + ".mlp_in", d, 4 * d, true);
    lin(pre + ".out", 5 * d, d, true);
    params_.add(pre + ".adaln.w", Tensor::zeros({d, 3 * d}, true));
    params_.add(pre + ".adaln.b", Tensor::zeros({3 * d}, true));
    if (cfg_.modulation) modulation_branch(pre);
  }
  params_.add("final.adaln.w", Tensor::zeros({d, 2 * d}, true));
  params_.add("final.adaln.b", Tensor::zeros({2 * d}, true));
  params_.add("final.w", Tensor::zeros({d, d}, true));
  params_.add("final.b", Tensor::zeros({d}, true));
  params_.add("rad.w", Tensor::zeros({d, d}, true));
  params_.add("rad.b", Tensor::zeros({d}, true));
  if (cfg_.layer_embed())
    params_.add("le.embed", Tensor::zeros({cfg_.brackets(), d}, true));
  // codec tensors registered under shared storage
  params_.add("codec.w", codec_.W);
  params_.add("codec.head.w", codec_.head_w);
  params_.add("codec.head.b", codec_.head_b);

  for (int ph = 0; ph < 2; ++ph) {
    const Phase phase = (Phase)ph;
    tables_[ph].mask = build_mask(cfg_, phase);
    tables_[ph].main = build_rope_tables(cfg_, phase, hd);
    tables_[ph].mod = build_rope_tables(cfg_, phase, cfg_.mod_head_dim());
  }
}

std::vector<std::string> FlowDiT::lora_target_prefixes() const {
  std::vector<std::string> out;
  for (int b = 0; b < cfg_.mm_blocks; ++b)
    for (const char* s : {"img", "txt"}) {
      const std::string pre = "mm" + std::to_string(b) + "." + s;
      for (const char* leaf : {".qkv", ".proj", ".mlp1", ".mlp2"}) out.push_back(pre + leaf);
    }
  for (int b = 0; b < cfg_.single_blocks; ++b) {
    const std::string pre = "sg" + std::to_string(b);
    for (const char* leaf : {".qkv", ".mlp_in", ".out"}) out.push_back(pre + leaf);
  }
  return out;
}

// ---- forward --------------------------------------------------------------------

struct DiTForward {
  const FlowDiT& m;
  const ModelConfig& cfg;
  Phase phase;
  SeqLayout lay;
  const FlowDiT::Tables& tab;
  bool lora;

  DiTForward(const FlowDiT& model, Phase ph)
      : m(model),
        cfg(model.cfg_),
        phase(ph),
        lay(seq_layout(model.cfg_, ph)),
        tab(model.tables(ph)),
        lora(ph == Phase::Finetune) {}

  const Tensor& P(const std::string& name) const { return m.params_.at(name); }

  Tensor linear(const std::string& prefix, const Tensor& x) const {
    Tensor y = add_rowvec(matmul(x, P(prefix + ".w")), P(prefix + ".b"));
    if (lora && m.params_.has(prefix + ".lora.a")) {
      Tensor delta = matmul(matmul(x, P(prefix + ".lora.a")), P(prefix + ".lora.b"));
      y = add(y, lb::scale(delta, cfg.lora_alpha / (double)cfg.lora_rank));
    }
    return y;
  }

  // per-head RMS norm with a learned scale shared across heads
  Tensor head_norm(const Tensor& x, const Tensor& gain, int heads) const {
    const int hd = x.dim(1) / heads;
    std::vector<Tensor> outs;
    outs.reserve((size_t)heads);
    for (int h = 0; h < heads; ++h)
      outs.push_back(mul_rowvec(rms_normalize(slice_cols(x, h * hd, hd)), gain));
    return concat_cols(outs);
  }

  Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                   const Tensor& mask, const RopeTables* rope) const {
    const int d = q.dim(1);
    const int hd = d / heads;
    std::vector<Tensor> outs;
    outs.reserve((size_t)heads);
    for (int h = 0; h < heads; ++h) {
      Tensor qh = slice_cols(q, h * hd, hd);
      Tensor kh = slice_cols(k, h * hd, hd);
      Tensor vh = slice_cols(v, h * hd, hd);
      if (rope) {
        qh = rope_rotate(qh, rope->cos_t, rope->sin_t);
        kh = rope_rotate(kh, rope->cos_t, rope->sin_t);
      }
      Tensor scores = lb::scale(matmul_nt(qh, kh), 1.0 / std::sqrt((double)hd));
      scores = add(scores, mask);
      outs.push_back(matmul(softmax(scores), vh));
    }
    return concat_cols(outs);
  }

  Tensor adaln(const std::string& prefix, const Tensor& evec) const {
    return add_rowvec(matmul(evec, P(prefix + ".adaln.w")), P(prefix + ".adaln.b"));
  }

  Tensor chunk(const Tensor& a, int which) const {
    return reshape(slice_cols(a, which * cfg.dim, cfg.dim), {cfg.dim});
  }

  Tensor film_modulate(const Tensor& x, const Tensor& scale_vec, const Tensor& shift_vec) const {
    return add_rowvec(mul_rowvec(x, add_scalar(scale_vec, 1.0)), shift_vec);
  }

  // exposure-modulation branch over bracket rows; returns the updated sequence
  Tensor modulation_branch(const std::string& prefix, const Tensor& x) const {
    const int KL = lay.bracket_tokens;
    const int L = cfg.tokens_per_frame();
    const int K = cfg.brackets();
    Tensor h = rms_normalize(slice_rows(x, 0, KL));
    Tensor film = m.modulation_film_named(prefix, cfg.ev_list);  // [K, 2d]
    std::vector<Tensor> rows;
    rows.reserve((size_t)K);
    for (int k = 0; k < K; ++k) {
      Tensor fr = slice_rows(film, k, 1);
      Tensor fs = reshape(slice_cols(fr, 0, cfg.dim), {cfg.dim});
      Tensor fsh = reshape(slice_cols(fr, cfg.dim, cfg.dim), {cfg.dim});
      rows.push_back(film_modulate(slice_rows(h, k * L, L), fs, fsh));
    }
    Tensor hb = concat_rows(rows);
    Tensor qkv = linear(prefix + ".mod.qkv", hb);
    const int md = cfg.mod_dim;
    Tensor q = slice_cols(qkv, 0, md);
    Tensor k = slice_cols(qkv, md, md);
    Tensor v = slice_cols(qkv, 2 * md, md);
    // bracket rows only: rope rows [0, KL), mask all-allowed
    RopeTables rt;
    rt.cos_t = slice_rows(tab.mod.cos_t, 0, KL);
    rt.sin_t = slice_rows(tab.mod.sin_t, 0, KL);
    Tensor mask = Tensor::zeros({KL, KL});
    Tensor attn = attention(q, k, v, cfg.mod_heads, mask, &rt);
    Tensor aux = linear(prefix + ".mod.out", attn);
    Tensor gated = mul_rowvec(aux, P(prefix + ".mod.gate"));
    Tensor updated = add(slice_rows(x, 0, KL), gated);
    const int rest = lay.total() - KL;
    return concat_rows({updated, slice_rows(x, KL, rest)});
  }

  Tensor mm_block(int b, const Tensor& x, const Tensor& evec) const {
    const std::string pre = "mm" + std::to_string(b);
    const int I = lay.text_start();  // image-stream rows: brackets + radiance
    const int T = lay.text_len;
    Tensor ximg = slice_rows(x, 0, I);
    Tensor xtxt = slice_rows(x, I, T);

    struct Stream {
      Tensor q, k, v, x;
      Tensor s2, sh2, g1, g2;
    };
    auto run_stream = [&](const std::string& sp, const Tensor& xs) {
      Stream st;
      st.x = xs;
      Tensor ada = adaln(sp, evec);
      Tensor s1 = chunk(ada, 0);
      Tensor sh1 = chunk(ada, 1);
      st.g1 = chunk(ada, 2);
      st.s2 = chunk(ada, 3);
      st.sh2 = chunk(ada, 4);
      st.g2 = chunk(ada, 5);
      Tensor modded = film_modulate(rms_normalize(xs), s1, sh1);
      Tensor qkv = linear(sp + ".qkv", modded);
      st.q = head_norm(slice_cols(qkv, 0, cfg.dim), P(sp + ".qnorm"), cfg.heads);
      st.k = head_norm(slice_cols(qkv, cfg.dim, cfg.dim), P(sp + ".knorm"), cfg.heads);
      st.v = slice_cols(qkv, 2 * cfg.dim, cfg.dim);
      return st;
    };
    Stream img = run_stream(pre + ".img", ximg);
    Stream txt = run_stream(pre + ".txt", xtxt);

    Tensor q = concat_rows({img.q, txt.q});
    Tensor k = concat_rows({img.k, txt.k});
    Tensor v = concat_rows({img.v, txt.v});
    Tensor attn = attention(q, k, v, cfg.heads, tab.mask, &tab.main);

    auto finish_stream = [&](const std::string& sp, Stream& st, const Tensor& attn_rows) {
      Tensor xs = add(st.x, mul_rowvec(linear(sp + ".proj", attn_rows), st.g1));
      Tensor modded = film_modulate(rms_normalize(xs), st.s2, st.sh2);
      Tensor hidden = silu(linear(sp + ".mlp1", modded));
      return add(xs, mul_rowvec(linear(sp + ".mlp2", hidden), st.g2));
    };
    Tensor yimg = finish_stream(pre + ".img", img, slice_rows(attn, 0, I));
    Tensor ytxt = finish_stream(pre + ".txt", txt, slice_rows(attn, I, T));
    Tensor y = concat_rows({yimg, ytxt});
    if (cfg.modulation && cfg.modulation_on_mm && phase == Phase::Finetune)
      y = modulation_branch(pre + ".img", y);
    return y;
  }

  Tensor single_block(int b, const Tensor& x0, const Tensor& evec) const {
    const std::string pre = "sg" + std::to_string(b);
    Tensor x = x0;
    if (cfg.modulation && phase == Phase::Finetune) x = modulation_branch(pre, x);
    Tensor ada = adaln(pre, evec);
    Tensor s = chunk(ada, 0);
    Tensor sh = chunk(ada, 1);
    Tensor g = chunk(ada, 2);
    Tensor modded = film_modulate(rms_normalize(x), s, sh);
    Tensor qkv = linear(pre + ".qkv", modded);
    Tensor q = head_norm(slice_cols(qkv, 0, cfg.dim), P(pre + ".qnorm"), cfg.heads);
    Tensor k = head_norm(slice_cols(qkv, cfg.dim, cfg.dim), P(pre + ".knorm"), cfg.heads);
    Tensor v = slice_cols(qkv, 2 * cfg.dim, cfg.dim);
    Tensor attn = attention(q, k, v, cfg.heads, tab.mask, &tab.main);
    Tensor hidden = silu(linear(pre + ".mlp_in", modded));
    Tensor out = linear(pre + ".out", concat_cols({attn, hidden}));
    return add(x, mul_rowvec(out, g));
  }

  Tensor time_vec(double t) const {
    const int tf = cfg.time_fourier;
    std::vector<double> feats((size_t)tf);
    for (int p = 0; p < tf / 2; ++p) {
      const double angle = t * 1000.0 * std::pow(10000.0, -(double)p / (double)(tf / 2));
      feats[(size_t)2 * p] = std::sin(angle);
      feats[(size_t)2 * p + 1] = std::cos(angle);
    }
    Tensor f = constant({1, tf}, std::move(feats));
    Tensor h = silu(add_rowvec(matmul(f, P("time.mlp1.w")), P("time.mlp1.b")));
    Tensor tv = add_rowvec(matmul(h, P("time.mlp2.w")), P("time.mlp2.b"));
    return silu(tv);  // [1, d]
  }
};

Tensor FlowDiT::modulation_film_named(const std::string& prefix,
                                      const std::vector<double>& ev_list) const {
  const int K = (int)ev_list.size();
  const int mf = cfg_.mod_fourier;
  std::vector<double> feats((size_t)K * mf);
  for (int k = 0; k < K; ++k)
    for (int p = 0; p < mf / 2; ++p) {
      const double freq = 0.25 * std::exp2((double)p);
      feats[(size_t)k * mf + 2 * p] = std::sin(ev_list[(size_t)k] * freq);
      feats[(size_t)k * mf + 2 * p + 1] = std::cos(ev_list[(size_t)k] * freq);
    }
  Tensor f = constant({K, mf}, std::move(feats));
  Tensor h = silu(add_rowvec(matmul(f, params_.at(prefix + ".mod.mlp1.w")),
                             params_.at(prefix + ".mod.mlp1.b")));
  return add_rowvec(matmul(h, params_.at(prefix + ".mod.mlp2.w")),
                    params_.at(prefix + ".mod.mlp2.b"));
}

Tensor FlowDiT::modulation_film(int single_block, const std::vector<double>& ev_list) const {
  return modulation_film_named("sg" + std::to_string(single_block), ev_list);
}

Tensor FlowDiT::text_embed(const std::vector<int>& caption) const {
  if ((int)caption.size() > cfg_.text_len)
    throw std::runtime_error("text_embed: caption longer than text_len");
  const Tensor& table = params_.at("text.embed");
  std::vector<Tensor> rows;
  rows.reserve((size_t)cfg_.text_len);
  for (int s = 0; s < cfg_.text_len; ++s) {
    int id = s < (int)caption.size() ? caption[(size_t)s] : cfg_.vocab;  // pad row
    if (id < 0 || id > cfg_.vocab)
      throw std::runtime_error("text_embed: token id out of range");
    rows.push_back(slice_rows(table, id, 1));
  }
  return concat_rows(rows);
}

Tensor FlowDiT::pooled_text(const std::vector<int>& caption) const {
  return mean_rows(text_embed(caption));
}

FlowDiT::VelocityOut FlowDiT::forward_velocity(const Tensor& z_t, const Tensor& rad_t,
                                               const std::vector<int>& caption, double t,
                                               Phase phase) const {
  DiTForward fw(*this, phase);
  const SeqLayout& lay = fw.lay;
  if (z_t.ndim() != 2 || z_t.dim(0) != lay.bracket_tokens || z_t.dim(1) != cfg_.dim)
    throw std::runtime_error("forward_velocity: bad latent shape");
  if (lay.has_rad && (!rad_t.defined() || rad_t.dim(0) != 1 || rad_t.dim(1) != cfg_.dim))
    throw std::runtime_error("forward_velocity: radiance token required in fine-tune phase");
  if (!(t >= 0.0 && t <= 1.0)) throw std::runtime_error("forward_velocity: t outside [0,1]");

  Tensor zin = z_t;
  if (cfg_.layer_embed() && phase == Phase::Finetune) {
    const int L = cfg_.tokens_per_frame();
    const Tensor& le = params_.at("le.embed");
    std::vector<Tensor> rows;
    rows.reserve((size_t)cfg_.brackets());
    for (int k = 0; k < cfg_.brackets(); ++k)
      rows.push_back(
          add_rowvec(slice_rows(zin, k * L, L), reshape(slice_rows(le, k, 1), {cfg_.dim})));
    zin = concat_rows(rows);
  }

  std::vector<Tensor> parts{zin};
  if (lay.has_rad) parts.push_back(rad_t);
  parts.push_back(text_embed(caption));
  Tensor x = concat_rows(parts);

  Tensor evec = fw.time_vec(t);
  for (int b = 0; b < cfg_.mm_blocks; ++b) x = fw.mm_block(b, x, evec);
  for (int b = 0; b < cfg_.single_blocks; ++b) x = fw.single_block(b, x, evec);

  Tensor ada = fw.adaln("final", evec);
  Tensor modded = fw.film_modulate(rms_normalize(x), fw.chunk(ada, 0), fw.chunk(ada, 1));
  Tensor out = add_rowvec(matmul(modded, params_.at("final.w")), params_.at("final.b"));

  VelocityOut vo;
  vo.img = slice_rows(out, 0, lay.bracket_tokens);
  if (lay.has_rad) {
    Tensor rad_feat = slice_rows(modded, lay.rad_index(), 1);
    vo.rad = add_rowvec(matmul(rad_feat, params_.at("rad.w")), params_.at("rad.b"));
  }
  return vo;
}

FlowDiT::SampleOut FlowDiT::sample(const std::vector<int>& caption, int steps, Rng& img_noise,
                                   Rng& rad_noise) const {
  if (steps < 1) throw std::runtime_error("sample: steps must be >= 1");
  const int KL = cfg_.brackets() * cfg_.tokens_per_frame();
  Tensor z = Tensor::randn({KL, cfg_.dim}, img_noise);
  Tensor rad = Tensor::randn({1, cfg_.dim}, rad_noise);
  VelocityFn fn = [&](const std::vector<Tensor>& state, double t) -> std::vector<Tensor> {
    VelocityOut out = forward_velocity(state[0], state[1], caption, t, Phase::Finetune);
    return {out.img, out.rad};
  };
  std::vector<Tensor> fin = euler_integrate(fn, {z, rad}, steps);

  SampleOut so;
  so.z0 = fin[0];
  so.rad0 = fin[1];
  so.brackets.ev_list = cfg_.ev_list;
  const int L = cfg_.tokens_per_frame();
  for (int k = 0; k < cfg_.brackets(); ++k) {
    Tensor frame = unpatchify(slice_rows(fin[0], k * L, L), cfg_.image_size, cfg_.image_size,
                              cfg_.patch);
    Image img = Image::create(cfg_.image_size, cfg_.image_size);
    for (int64_t i = 0; i < frame.numel(); ++i)
      img.rgb[(size_t)i] = std::clamp(frame.data()[i], 0.0, 1.0);
    so.brackets.frames.push_back(std::move(img));
  }
  so.brackets.validate("sample");
  so.s_l_pred = codec_.decode_with_text(fin[1], pooled_text(caption));
  return so;
}

FlowDiT FlowDiT::lora_merge() const {
  FlowDiT merged(cfg_, 0);
  // copy every parameter value, then fold LoRA deltas into the dense weights
  for (const auto& name : params_.names) {
    const Tensor& src = params_.at(name);
    Tensor& dst = merged.params_.at(name);
    std::copy(src.data(), src.data() + src.numel(), dst.data());
  }
  const double coeff = cfg_.lora_alpha / (double)cfg_.lora_rank;
  for (const auto& prefix : lora_target_prefixes()) {
    Tensor& w = merged.params_.at(prefix + ".w");
    const Tensor& a = merged.params_.at(prefix + ".lora.a");
    Tensor& bmat = merged.params_.at(prefix + ".lora.b");
    const int in = a.dim(0), r = a.dim(1), out = bmat.dim(1);
    if (w.dim(0) != in || w.dim(1) != out)
      throw std::runtime_error("lora_merge: rank mismatch on " + prefix);
    for (int i = 0; i < in; ++i)
      for (int p = 0; p < r; ++p) {
        const double av = a.data()[(size_t)i * r + p] * coeff;
        for (int o = 0; o < out; ++o)
          w.data()[(size_t)i * out + o] += av * bmat.data()[(size_t)p * out + o];
      }
    std::fill(bmat.data(), bmat.data() + bmat.numel(), 0.0);
  }
  return merged;
}

// ---- losses ---------------------------------------------------------------------

Tensor loss_img(const Tensor& u_pred, const Tensor& u_target) {
  return l2_loss(u_pred, u_target);
}

Tensor loss_rad(const Tensor& u_pred, const Tensor& u_target) {
  return l2_loss(u_pred, u_target);
}

Tensor loss_bracket(const Tensor& z0_hat, const ModelConfig& cfg) {
  const int L = cfg.tokens_per_frame();
  const int K = cfg.brackets();
  if (z0_hat.ndim() != 2 || z0_hat.dim(0) != K * L || z0_hat.dim(1) != cfg.dim)
    throw std::runtime_error("loss_bracket: bad latent shape");
  std::vector<Tensor> frames;
  frames.reserve((size_t)K);
  for (int k = 0; k < K; ++k)
    frames.push_back(
        unpatchify(slice_rows(z0_hat, k * L, L), cfg.image_size, cfg.image_size, cfg.patch));
  const Tensor& base = frames[(size_t)cfg.base_bracket()];
  Tensor total;
  for (int k = 0; k < K; ++k) {
    Tensor term = l1_loss(scale(frames[(size_t)k], std::exp2(-cfg.ev_list[(size_t)k])), base);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Tensor total_loss(const Tensor& l_img, const Tensor* l_rad, const Tensor* l_bracket,
                  double lambda_rad, double lambda_bracket) {
  Tensor total = l_img;
  if (l_rad) total = add(total, scale(*l_rad, lambda_rad));
  if (l_bracket) total = add(total, scale(*l_bracket, lambda_bracket));
  return total;
}

// ---- flow path --------------------------------------------------------------------

Tensor flow_interpolate(const Tensor& z0, const Tensor& z1, double t) {
  return add(scale(z0, 1.0 - t), scale(z1, t));
}

Tensor flow_denoised(const Tensor& z_t, const Tensor& u, double t) {
  return sub(z_t, scale(u, t));
}

std::vector<Tensor> euler_integrate(const VelocityFn& fn, std::vector<Tensor> state, int steps) {
  if (steps < 1) throw std::runtime_error("euler_integrate: steps must be >= 1");
  const double dt = 1.0 / (double)steps;
  for (int s = 0; s < steps; ++s) {
    const double t = 1.0 - (double)s * dt;
    std::vector<Tensor> vel = fn(state, t);
    if (vel.size() != state.size())
      throw std::runtime_error("euler_integrate: velocity arity mismatch");
    for (size_t i = 0; i < state.size(); ++i) state[i] = sub(state[i], scale(vel[i], dt));
  }
  return state;
}

Tensor detach(const Tensor& t) {
  return Tensor::from_data(t.shape(), std::vector<double>(t.data(), t.data() + t.numel()),
                           false);
}

}  // namespace lb
