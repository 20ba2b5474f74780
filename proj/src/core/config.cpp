#include "core/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace lb {

const char* tool_version() { return "linbracket 0.1.0"; }

void TrainParams::validate() const {
  if (!(lr_base >= 0.0) || !(lr_lora >= 0.0) || !(lr_mod >= 0.0))
    throw std::runtime_error("train: learning rates must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::runtime_error("train: betas must lie in [0,1)");
  if (!(eps > 0.0)) throw std::runtime_error("train: eps must be > 0");
  if (weight_decay < 0.0) throw std::runtime_error("train: weight_decay must be >= 0");
  if (lambda_rad < 0.0 || lambda_bracket < 0.0)
    throw std::runtime_error("train: loss weights must be >= 0");
  if (pretrain_steps < 0 || finetune_steps < 0)
    throw std::runtime_error("train: step counts must be >= 0");
  if (batch < 1) throw std::runtime_error("train: batch must be >= 1");
}

void DataParams::validate() const {
  if (scenes < 1) throw std::runtime_error("data: scenes must be >= 1");
}

namespace {

std::string fmt_f64(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_f64(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::runtime_error("config: " + key + ": not a number: '" + s + "'");
  return v;
}

int parse_int(const std::string& key, const std::string& s) {
  int v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::runtime_error("config: " + key + ": not an integer: '" + s + "'");
  return v;
}

uint64_t parse_u64(const std::string& key, const std::string& s) {
  uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::runtime_error("config: " + key + ": not an unsigned integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::runtime_error("config: " + key + ": expected true/false: '" + s + "'");
}

std::vector<double> parse_ev(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) out.push_back(parse_f64(key, item));
  if (out.empty()) throw std::runtime_error("config: " + key + ": empty list");
  return out;
}

std::string fmt_ev(const std::vector<double>& ev) {
  std::string out;
  for (size_t i = 0; i < ev.size(); ++i) {
    if (i) out += ",";
    out += fmt_f64(ev[i]);
  }
  return out;
}

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    auto add = [&](const char* key, auto setter, auto getter) {
      t.push_back({key,
                   [key, setter](RunConfig& c, const std::string& v) { setter(c, key, v); },
                   getter});
    };
#define LB_F64(KEY, FIELD)                                                              \
  add(KEY, [](RunConfig& c, const char* k, const std::string& v) { c.FIELD = parse_f64(k, v); }, \
      [](const RunConfig& c) { return fmt_f64(c.FIELD); })
#define LB_INT(KEY, FIELD)                                                              \
  add(KEY, [](RunConfig& c, const char* k, const std::string& v) { c.FIELD = parse_int(k, v); }, \
      [](const RunConfig& c) { return std::to_string(c.FIELD); })
#define LB_U64(KEY, FIELD)                                                              \
  add(KEY, [](RunConfig& c, const char* k, const std::string& v) { c.FIELD = parse_u64(k, v); }, \
      [](const RunConfig& c) { return std::to_string(c.FIELD); })
#define LB_BOOL(KEY, FIELD)                                                             \
  add(KEY, [](RunConfig& c, const char* k, const std::string& v) { c.FIELD = parse_bool(k, v); }, \
      [](const RunConfig& c) { return c.FIELD ? std::string("true") : std::string("false"); })

    LB_INT("model.image_size", model.image_size);
    LB_INT("model.patch", model.patch);
    LB_INT("model.dim", model.dim);
    LB_INT("model.heads", model.heads);
    LB_INT("model.mm_blocks", model.mm_blocks);
    LB_INT("model.single_blocks", model.single_blocks);
    add("model.ev",
        [](RunConfig& c, const char* k, const std::string& v) { c.model.ev_list = parse_ev(k, v); },
        [](const RunConfig& c) { return fmt_ev(c.model.ev_list); });
    LB_INT("model.text_len", model.text_len);
    LB_INT("model.vocab", model.vocab);
    LB_INT("model.lora_rank", model.lora_rank);
    LB_F64("model.lora_alpha", model.lora_alpha);
    LB_INT("model.mod_dim", model.mod_dim);
    LB_INT("model.mod_heads", model.mod_heads);
    add("model.rope",
        [](RunConfig& c, const char*, const std::string& v) {
          c.model.rope_mode = rope_mode_from_string(v);
        },
        [](const RunConfig& c) { return rope_mode_to_string(c.model.rope_mode); });
    LB_BOOL("model.modulation", model.modulation);
    LB_BOOL("model.modulation_on_mm", model.modulation_on_mm);
    LB_INT("model.time_fourier", model.time_fourier);
    LB_INT("model.mod_fourier", model.mod_fourier);

    LB_F64("fusion.saturation_hi", fusion.saturation_hi);
    LB_F64("fusion.feather_lo", fusion.feather_lo);
    LB_F64("fusion.feather_hi", fusion.feather_hi);
    LB_INT("fusion.blur_radius", fusion.blur_radius);
    LB_F64("fusion.min_valid_fraction", fusion.min_valid_fraction);

    LB_F64("train.lr_base", train.lr_base);
    LB_F64("train.lr_lora", train.lr_lora);
    LB_F64("train.lr_mod", train.lr_mod);
    LB_F64("train.beta1", train.beta1);
    LB_F64("train.beta2", train.beta2);
    LB_F64("train.eps", train.eps);
    LB_F64("train.weight_decay", train.weight_decay);
    LB_F64("train.lambda_rad", train.lambda_rad);
    LB_F64("train.lambda_bracket", train.lambda_bracket);
    LB_INT("train.pretrain_steps", train.pretrain_steps);
    LB_INT("train.finetune_steps", train.finetune_steps);
    LB_INT("train.batch", train.batch);

    LB_INT("data.scenes", data.scenes);
    LB_U64("data.seed", data.seed);

    LB_U64("seed", seed);
    LB_INT("sample_steps", sample_steps);
    LB_F64("tonemap.gamma", tonemap_gamma);
#undef LB_F64
#undef LB_INT
#undef LB_U64
#undef LB_BOOL
    return t;
  }();
  return table;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  for (const auto& e : registry())
    if (key == e.key) {
      e.set(*this, value);
      return;
    }
  throw std::runtime_error("config: unknown key '" + key + "'");
}

void RunConfig::apply_pairs(const std::vector<std::pair<std::string, std::string>>& kv) {
  for (const auto& [k, v] : kv) apply(k, v);
}

std::string RunConfig::get(const std::string& key) const {
  for (const auto& e : registry())
    if (key == e.key) return e.get(*this);
  throw std::runtime_error("config: unknown key '" + key + "'");
}

std::string RunConfig::serialize() const {
  std::string out = "# ";
  out += tool_version();
  out += "\n";
  for (const auto& e : registry()) {
    out += e.key;
    out += " = ";
    out += e.get(*this);
    out += "\n";
  }
  return out;
}

void RunConfig::validate() const {
  model.validate();
  fusion.validate();
  train.validate();
  data.validate();
  if (sample_steps < 1) throw std::runtime_error("config: sample_steps must be >= 1");
  if (!(tonemap_gamma > 0.0)) throw std::runtime_error("config: tonemap.gamma must be > 0");
}

std::vector<std::string> known_config_keys() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.emplace_back(e.key);
  return out;
}

}  // namespace lb
