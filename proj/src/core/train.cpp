#include "core/train.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace lb {

namespace {

// rng stream sites; every draw is keyed (seed, site, step, sample)
constexpr uint64_t kSitePerm = 0x7065726d;
constexpr uint64_t kSiteTime = 0x74696d65;
constexpr uint64_t kSiteImgNoise = 0x696d676e;
constexpr uint64_t kSiteRadNoise = 0x7261646e;
constexpr uint64_t kSiteSampleImg = 0x73696d67;
constexpr uint64_t kSiteSampleRad = 0x73726164;

std::string fmt_f64(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

Tensor frame_tokens(const Image& img, int patch) {
  Tensor t = Tensor::from_data({img.height, img.width, 3}, img.rgb);
  return patchify(t, patch);
}

const ModelConfig& validated_model(const RunConfig& cfg) {
  cfg.validate();
  return cfg.model;
}

}  // namespace

std::string loss_csv_header() { return "step,l_img,l_rad,l_bracket,total"; }

std::string loss_csv_line(const LossRecord& r) {
  return std::to_string(r.step) + "," + fmt_f64(r.l_img) + "," + fmt_f64(r.l_rad) + "," +
         fmt_f64(r.l_bracket) + "," + fmt_f64(r.total);
}

std::vector<DatasetRecord> training_scenes(const DataParams& data,
                                           const std::vector<double>& ev_list, int image_size) {
  data.validate();
  // every 5th stream record is held out, so g full groups of 5 contribute 4
  const int g = data.scenes / 4, rem = data.scenes % 4;
  auto records = dataset_iter(g * 5 + rem, data.seed, ev_list, image_size);
  std::vector<DatasetRecord> train;
  train.reserve(data.scenes);
  for (auto& r : records)
    if (!r.held_out) train.push_back(std::move(r));
  if ((int)train.size() != data.scenes)
    throw std::runtime_error("training_scenes: stream split mismatch");
  return train;
}

Trainer::Trainer(const RunConfig& cfg)
    : cfg_(cfg),
      model_(validated_model(cfg), cfg.seed),
      train_set_(training_scenes(cfg.data, cfg.model.ev_list, cfg.model.image_size)) {
  for (const auto& name : model_.params().names) {
    const Tensor& p = model_.params().at(name);
    moments_.add("m." + name, Tensor::zeros(p.shape()));
    moments_.add("v." + name, Tensor::zeros(p.shape()));
  }
}

uint64_t Trainer::total_steps() const {
  return (uint64_t)cfg_.train.pretrain_steps + (uint64_t)cfg_.train.finetune_steps;
}

Phase Trainer::phase() const {
  return step_ < (uint64_t)cfg_.train.pretrain_steps ? Phase::Pretrain : Phase::Finetune;
}

LossRecord Trainer::train_step() {
  const Phase ph = phase();
  const uint64_t phase_step =
      ph == Phase::Pretrain ? step_ : step_ - (uint64_t)cfg_.train.pretrain_steps;
  const uint64_t phase_word = ph == Phase::Pretrain ? 0xa : 0xb;
  const int B = cfg_.train.batch;
  const int N = (int)train_set_.size();
  const int base_k = cfg_.model.base_bracket();
  const int patch = cfg_.model.patch;

  LossRecord rec;
  rec.step = step_;
  rec.phase = ph;

  for (int b = 0; b < B; ++b) {
    // sample without replacement within each pass over the training set
    const uint64_t q = phase_step * (uint64_t)B + (uint64_t)b;
    const auto perm = Rng::stream(cfg_.seed, kSitePerm ^ (phase_word << 32), q / N).permutation(N);
    const DatasetRecord& ex = train_set_[perm[q % N]];

    const double t = Rng::stream(cfg_.seed, kSiteTime, step_, b).uniform();
    Rng img_rng = Rng::stream(cfg_.seed, kSiteImgNoise, step_, b);

    Tape tape;
    Tensor loss, li, lr, lb;
    if (ph == Phase::Pretrain) {
      Tensor z0 = frame_tokens(ex.brackets.frames[base_k], patch);
      Tensor z1 = Tensor::randn(z0.shape(), img_rng);
      Tensor z_t = flow_interpolate(z0, z1, t);
      auto out = model_.forward_velocity(z_t, Tensor(), ex.caption, t, ph);
      li = loss_img(out.img, sub(z1, z0));
      loss = total_loss(li, nullptr, nullptr, cfg_.train.lambda_rad, cfg_.train.lambda_bracket);
    } else {
      std::vector<Tensor> frames;
      for (const Image& f : ex.brackets.frames) frames.push_back(frame_tokens(f, patch));
      Tensor z0 = concat_rows(frames);
      Tensor z1 = Tensor::randn(z0.shape(), img_rng);
      Tensor z_t = flow_interpolate(z0, z1, t);

      Rng rad_rng = Rng::stream(cfg_.seed, kSiteRadNoise, step_, b);
      Tensor rad0 = model_.codec().embed(ex.s_l);  // tracked: codec W trains via the input side
      Tensor rad1 = Tensor::randn({1, cfg_.model.dim}, rad_rng);
      Tensor rad_t = flow_interpolate(rad0, rad1, t);

      auto out = model_.forward_velocity(z_t, rad_t, ex.caption, t, ph);
      li = loss_img(out.img, sub(z1, z0));
      lr = loss_rad(out.rad, sub(rad1, detach(rad0)));
      lb = loss_bracket(flow_denoised(z_t, out.img, t), cfg_.model);
      loss = total_loss(li, &lr, &lb, cfg_.train.lambda_rad, cfg_.train.lambda_bracket);
    }
    if (!std::isfinite(loss.item()))
      throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step_));
    rec.l_img += li.item() / B;
    rec.l_rad += lr.defined() ? lr.item() / B : 0.0;
    rec.l_bracket += lb.defined() ? lb.item() / B : 0.0;
    rec.total += loss.item() / B;
    tape.backward(loss, 1.0 / B);
  }

  // decoupled-weight-decay adaptive-moment update on the phase's live groups
  const double b1 = cfg_.train.beta1, b2 = cfg_.train.beta2;
  const double bc1 = 1.0 - std::pow(b1, (double)(phase_step + 1));
  const double bc2 = 1.0 - std::pow(b2, (double)(phase_step + 1));
  for (const auto& name : model_.params().names) {
    Tensor& p = model_.params().at(name);
    if (!trainable_in_phase(name, ph)) {
      p.zero_grad();
      continue;
    }
    double lr_g = 0.0;
    switch (param_group(name)) {
      case ParamGroup::Base: lr_g = cfg_.train.lr_base; break;
      case ParamGroup::Modulation: lr_g = cfg_.train.lr_mod; break;
      case ParamGroup::Adapter: lr_g = cfg_.train.lr_lora; break;
    }
    Tensor& m = moments_.at("m." + name);
    Tensor& v = moments_.at("v." + name);
    const double* g = static_cast<const Tensor&>(p).grad();
    double* pd = p.data();
    double* md = m.data();
    double* vd = v.data();
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = g ? g[i] : 0.0;
      md[i] = b1 * md[i] + (1.0 - b1) * gi;
      vd[i] = b2 * vd[i] + (1.0 - b2) * gi * gi;
      pd[i] -= lr_g * ((md[i] / bc1) / (std::sqrt(vd[i] / bc2) + cfg_.train.eps) +
                       cfg_.train.weight_decay * pd[i]);
    }
    p.zero_grad();
  }

  ++step_;
  return rec;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.phase = (uint32_t)phase();
  ck.step = step_;
  ck.config_echo = cfg_.serialize();
  for (const auto& name : model_.params().names)
    ck.tensors.emplace_back(name, model_.params().at(name));
  for (const auto& name : moments_.names) ck.tensors.emplace_back(name, moments_.at(name));
  return ck;
}

std::vector<int> parse_prompt(const std::string& prompt) {
  std::vector<int> ids;
  std::string word;
  for (size_t i = 0; i <= prompt.size(); ++i) {
    const char ch = i < prompt.size() ? prompt[i] : ' ';
    if (ch == ' ' || ch == '\t') {
      if (!word.empty()) ids.push_back(word_id(word));
      word.clear();
    } else {
      word += ch;
    }
  }
  if (ids.empty()) throw std::runtime_error("parse_prompt: empty prompt");
  return ids;
}

FlowDiT::SampleOut sample_prompt(const FlowDiT& model, const std::vector<int>& caption,
                                 uint64_t seed, int steps) {
  Rng img_noise = Rng::stream(seed, kSiteSampleImg);
  Rng rad_noise = Rng::stream(seed, kSiteSampleRad);
  return model.sample(caption, steps, img_noise, rad_noise);
}

void Trainer::restore(const Checkpoint& ck) {
  if (ck.config_echo != cfg_.serialize())
    throw std::runtime_error("restore: checkpoint config does not match this run's config");
  if (ck.tensors.size() != model_.params().names.size() + moments_.names.size())
    throw std::runtime_error("restore: checkpoint tensor count mismatch");
  for (const auto& [name, src] : ck.tensors) {
    const bool is_moment = name.rfind("m.", 0) == 0 || name.rfind("v.", 0) == 0;
    ParamStore& store = is_moment ? moments_ : model_.params();
    if (!store.has(name)) throw std::runtime_error("restore: unknown tensor '" + name + "'");
    Tensor& dst = store.at(name);
    if (src.shape() != dst.shape())
      throw std::runtime_error("restore: shape mismatch for '" + name + "'");
    std::memcpy(dst.data(), src.data(), (size_t)src.numel() * sizeof(double));
    dst.zero_grad();
  }
  step_ = ck.step;
  if ((uint32_t)phase() != ck.phase)
    throw std::runtime_error("restore: phase marker disagrees with step counter");
}

}  // namespace lb
