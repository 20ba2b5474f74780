// Command-line surface over the shared library. Every subcommand is a thin
// composition of lb_* calls; all randomness is named by (config, seed), so
// re-running a command reproduces its artifacts byte for byte.

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "linbracket/linbracket.h"

namespace {

void check(lb_status rc) {
  if (rc != LB_OK) throw std::runtime_error(lb_last_error());
}

using ConfigPtr = std::unique_ptr<lb_config, decltype(&lb_config_destroy)>;
using ImagePtr = std::unique_ptr<lb_image, decltype(&lb_image_destroy)>;
using BracketsPtr = std::unique_ptr<lb_bracket_set, decltype(&lb_bracket_set_destroy)>;
using TrainerPtr = std::unique_ptr<lb_trainer, decltype(&lb_trainer_destroy)>;

ImagePtr read_pfm(const std::string& path) {
  lb_image* p = nullptr;
  check(lb_image_read_pfm(&p, path.c_str()));
  return {p, lb_image_destroy};
}

ImagePtr read_ppm(const std::string& path) {
  lb_image* p = nullptr;
  check(lb_image_read_ppm16(&p, path.c_str()));
  return {p, lb_image_destroy};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string config_value(const lb_config* cfg, const char* key) {
  char* v = nullptr;
  check(lb_config_get(cfg, key, &v));
  std::string out(v);
  lb_string_free(v);
  return out;
}

std::vector<double> parse_ev_csv(const std::string& s) {
  std::vector<double> ev;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    ev.push_back(std::stod(item, &used));
    if (used != item.size()) throw std::runtime_error("bad ev value '" + item + "'");
  }
  if (ev.empty()) throw std::runtime_error("empty ev list");
  return ev;
}

// --config file, then --set overrides, then dedicated flags
struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value configuration file");
    cmd->add_option("--set", sets, "override one knob, e.g. --set model.dim=48")
        ->type_name("KEY=VALUE");
  }

  ConfigPtr load() const {
    lb_config* p = nullptr;
    if (file.empty())
      check(lb_config_create(&p));
    else
      check(lb_config_load(&p, file.c_str()));
    ConfigPtr cfg(p, lb_config_destroy);
    for (const std::string& kv : sets) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("--set expects KEY=VALUE, got '" + kv + "'");
      check(lb_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    check(lb_config_validate(cfg.get()));
    return cfg;
  }
};

ConfigPtr config_of_checkpoint(const std::string& path) {
  lb_config* p = nullptr;
  check(lb_config_from_checkpoint(&p, path.c_str()));
  return {p, lb_config_destroy};
}

// provenance: the full config echo (first line carries the tool version)
void write_echo(const lb_config* cfg, const std::string& path) {
  char* echo = nullptr;
  check(lb_config_serialize(cfg, &echo));
  std::ofstream f(path, std::ios::binary);
  f << echo;
  lb_string_free(echo);
  if (!f) throw std::runtime_error("cannot write " + path);
}

std::string out_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
  return dir;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

BracketsPtr sample_brackets(const lb_trainer* tr, const std::string& prompt, uint64_t seed,
                            int steps, double* s_l_pred) {
  lb_bracket_set* bs = nullptr;
  check(lb_sample(tr, prompt.c_str(), seed, steps, &bs, s_l_pred));
  return {bs, lb_bracket_set_destroy};
}

struct FusedLinear {
  ImagePtr linear{nullptr, lb_image_destroy};
  std::vector<double> ratios;
  int fallbacks = 0;
};

// fuse the stack and rescale the brightest-frame reference back to EV0
FusedLinear fuse_to_linear(const lb_bracket_set* bs, const lb_config* cfg) {
  int count = 0;
  check(lb_bracket_set_count(bs, &count));
  FusedLinear out;
  out.ratios.resize(count > 1 ? 3 * (count - 1) : 0);
  lb_image* fused = nullptr;
  check(lb_fuse(bs, cfg, &fused, out.ratios.data(), &out.fallbacks));
  ImagePtr fused_ptr(fused, lb_image_destroy);
  double ev_max = 0.0;
  check(lb_bracket_set_ev(bs, count - 1, &ev_max));
  lb_image* linear = nullptr;
  check(lb_to_linear(fused_ptr.get(), ev_max, &linear));
  out.linear = ImagePtr(linear, lb_image_destroy);
  return out;
}

void write_preview(const lb_image* linear, const lb_config* cfg, const std::string& path) {
  lb_image* toned = nullptr;
  check(lb_tonemap(linear, std::stod(config_value(cfg, "tonemap.gamma")), &toned));
  ImagePtr t(toned, lb_image_destroy);
  check(lb_image_write_ppm16(t.get(), path.c_str()));
}

// ---- subcommands -----------------------------------------------------------

int cmd_synth_data(const ConfigArgs& cargs, const std::string& dir, int count) {
  ConfigPtr cfg = cargs.load();
  const uint64_t data_seed = std::stoull(config_value(cfg.get(), "data.seed"));
  const auto ev = parse_ev_csv(config_value(cfg.get(), "model.ev"));
  const int image_size = std::stoi(config_value(cfg.get(), "model.image_size"));

  out_dir(dir);
  std::ofstream manifest(join_path(dir, "manifest.csv"), std::ios::binary);
  manifest << "index,held_out,s_l,caption\n";
  for (int i = 0; i < count; ++i) {
    lb_image* linear = nullptr;
    double s_l = 0.0;
    int caption[3] = {0};
    int held = 0;
    check(lb_synth_scene(data_seed, (uint64_t)i, ev.data(), (int)ev.size(), image_size, &linear,
                         nullptr, &s_l, caption, &held));
    ImagePtr img(linear, lb_image_destroy);
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d.pfm", i);
    check(lb_image_write_pfm(img.get(), join_path(dir, name).c_str()));
    manifest << i << "," << held << "," << fmt(s_l) << ",";
    for (int w = 0; w < 3 && caption[w] >= 0; ++w)
      manifest << (w ? " " : "") << lb_vocab_word(caption[w]);
    manifest << "\n";
  }
  if (!manifest) throw std::runtime_error("cannot write manifest.csv");
  manifest.close();
  write_echo(cfg.get(), join_path(dir, "config.txt"));
  std::printf("scenes = %d\nmanifest = %s\n", count, join_path(dir, "manifest.csv").c_str());
  return 0;
}

int cmd_train(const ConfigArgs& cargs, const std::string& dir, const std::string& resume) {
  ConfigPtr cfg = cargs.load();
  lb_trainer* traw = nullptr;
  check(lb_trainer_create(cfg.get(), &traw));
  TrainerPtr tr(traw, lb_trainer_destroy);
  if (!resume.empty()) check(lb_trainer_restore(tr.get(), resume.c_str()));

  uint64_t done = 0, total = 0;
  check(lb_trainer_step_count(tr.get(), &done));
  check(lb_trainer_total_steps(tr.get(), &total));

  out_dir(dir);
  std::ofstream csv(join_path(dir, "loss.csv"), std::ios::binary);
  csv << "step,l_img,l_rad,l_bracket,total\n";
  while (done < total) {
    uint64_t step = 0;
    double li = 0, lr = 0, lb = 0, lt = 0;
    check(lb_trainer_step(tr.get(), &step, &li, &lr, &lb, &lt));
    csv << step << "," << fmt(li) << "," << fmt(lr) << "," << fmt(lb) << "," << fmt(lt) << "\n";
    check(lb_trainer_step_count(tr.get(), &done));
  }
  if (!csv) throw std::runtime_error("cannot write loss.csv");
  csv.close();

  const std::string ck = join_path(dir, "checkpoint.bin");
  check(lb_trainer_save(tr.get(), ck.c_str()));
  write_echo(cfg.get(), join_path(dir, "config.txt"));
  std::printf("steps = %" PRIu64 "\ncheckpoint = %s\n", done, ck.c_str());
  return 0;
}

int cmd_generate(const std::string& checkpoint, const std::string& prompt, uint64_t seed,
                 int steps, const std::string& dir) {
  ConfigPtr cfg = config_of_checkpoint(checkpoint);
  lb_trainer* traw = nullptr;
  check(lb_trainer_create(cfg.get(), &traw));
  TrainerPtr tr(traw, lb_trainer_destroy);
  check(lb_trainer_restore(tr.get(), checkpoint.c_str()));

  if (steps <= 0) steps = std::stoi(config_value(cfg.get(), "sample_steps"));
  double s_l_pred = 0.0;
  BracketsPtr bs = sample_brackets(tr.get(), prompt, seed, steps, &s_l_pred);

  out_dir(dir);
  int count = 0;
  check(lb_bracket_set_count(bs.get(), &count));
  for (int k = 0; k < count; ++k) {
    lb_image* frame = nullptr;
    check(lb_bracket_set_frame(bs.get(), k, &frame));
    ImagePtr f(frame, lb_image_destroy);
    double ev = 0.0;
    check(lb_bracket_set_ev(bs.get(), k, &ev));
    char name[32];
    std::snprintf(name, sizeof(name), "bracket_ev%g.ppm", ev);
    check(lb_image_write_ppm16(f.get(), join_path(dir, name).c_str()));
  }

  FusedLinear fused = fuse_to_linear(bs.get(), cfg.get());
  check(lb_image_write_pfm(fused.linear.get(), join_path(dir, "linear.pfm").c_str()));
  write_preview(fused.linear.get(), cfg.get(), join_path(dir, "preview.ppm"));
  write_echo(cfg.get(), join_path(dir, "config.txt"));
  std::printf("s_l_pred = %s\nfusion_fallbacks = %d\nlinear = %s\n", fmt(s_l_pred).c_str(),
              fused.fallbacks, join_path(dir, "linear.pfm").c_str());
  return 0;
}

int cmd_fuse(const ConfigArgs& cargs, const std::vector<std::string>& frames,
             const std::string& ev_csv, const std::string& out) {
  ConfigArgs with_ev = cargs;
  with_ev.sets.push_back("model.ev=" + ev_csv);  // echoed for provenance
  ConfigPtr cfg = with_ev.load();
  const auto ev = parse_ev_csv(ev_csv);
  if (ev.size() != frames.size())
    throw std::runtime_error("fuse: " + std::to_string(frames.size()) + " frames but " +
                             std::to_string(ev.size()) + " ev values");

  std::vector<ImagePtr> imgs;
  std::vector<const lb_image*> raw;
  for (const auto& path : frames) {
    imgs.push_back(read_ppm(path));
    raw.push_back(imgs.back().get());
  }
  lb_bracket_set* bsr = nullptr;
  check(lb_bracket_set_create(raw.data(), ev.data(), (int)ev.size(), &bsr));
  BracketsPtr bs(bsr, lb_bracket_set_destroy);

  FusedLinear fused = fuse_to_linear(bs.get(), cfg.get());
  check(lb_image_write_pfm(fused.linear.get(), out.c_str()));
  write_echo(cfg.get(), out + ".config.txt");
  std::string ratios;
  for (size_t i = 0; i < fused.ratios.size(); ++i)
    ratios += (i ? "," : "") + fmt(fused.ratios[i]);
  std::printf("ratios = %s\nfallbacks = %d\nlinear = %s\n", ratios.c_str(), fused.fallbacks,
              out.c_str());
  return 0;
}

int cmd_brackets(const ConfigArgs& cargs, const std::string& in, const std::string& ev_csv,
                 const std::string& prefix) {
  ConfigArgs with_ev = cargs;
  with_ev.sets.push_back("model.ev=" + ev_csv);
  ConfigPtr cfg = with_ev.load();
  const auto ev = parse_ev_csv(ev_csv);

  ImagePtr linear = read_pfm(in);
  lb_bracket_set* bsr = nullptr;
  check(lb_brackets_from_linear(linear.get(), ev.data(), (int)ev.size(), &bsr));
  BracketsPtr bs(bsr, lb_bracket_set_destroy);

  if (auto dir = std::filesystem::path(prefix).parent_path(); !dir.empty())
    std::filesystem::create_directories(dir);
  for (size_t k = 0; k < ev.size(); ++k) {
    lb_image* frame = nullptr;
    check(lb_bracket_set_frame(bs.get(), (int)k, &frame));
    ImagePtr f(frame, lb_image_destroy);
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "_ev%g.ppm", ev[k]);
    const std::string path = prefix + suffix;
    check(lb_image_write_ppm16(f.get(), path.c_str()));
    std::printf("frame = %s\n", path.c_str());
  }
  write_echo(cfg.get(), prefix + ".config.txt");
  return 0;
}

int cmd_tonemap(const ConfigArgs& cargs, const std::string& in, const std::string& out,
                double gamma) {
  ConfigArgs with_gamma = cargs;
  if (gamma > 0.0) with_gamma.sets.push_back("tonemap.gamma=" + fmt(gamma));
  ConfigPtr cfg = with_gamma.load();
  ImagePtr linear = read_pfm(in);
  write_preview(linear.get(), cfg.get(), out);
  write_echo(cfg.get(), out + ".config.txt");
  std::printf("display = %s\n", out.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dir, int scenes, int steps) {
  ConfigPtr cfg = config_of_checkpoint(checkpoint);
  lb_trainer* traw = nullptr;
  check(lb_trainer_create(cfg.get(), &traw));
  TrainerPtr tr(traw, lb_trainer_destroy);
  check(lb_trainer_restore(tr.get(), checkpoint.c_str()));

  const uint64_t data_seed = std::stoull(config_value(cfg.get(), "data.seed"));
  const auto ev = parse_ev_csv(config_value(cfg.get(), "model.ev"));
  const int image_size = std::stoi(config_value(cfg.get(), "model.image_size"));
  if (steps <= 0) steps = std::stoi(config_value(cfg.get(), "sample_steps"));

  out_dir(dir);
  std::ofstream csv(join_path(dir, "eval.csv"), std::ios::binary);
  csv << "index,s_l,s_l_pred,abs_err,ls,monotonicity,bracket_l1\n";
  double mae = 0.0, mean_ls = 0.0, mean_mono = 0.0;
  for (int j = 0; j < scenes; ++j) {
    const uint64_t index = 5ull * (uint64_t)j + 4;  // the held-out split
    double s_l = 0.0;
    int caption[3] = {0};
    check(lb_synth_scene(data_seed, index, ev.data(), (int)ev.size(), image_size, nullptr,
                         nullptr, &s_l, caption, nullptr));
    std::string prompt;
    for (int w = 0; w < 3 && caption[w] >= 0; ++w) {
      if (w) prompt += " ";
      prompt += lb_vocab_word(caption[w]);
    }
    double s_l_pred = 0.0;
    BracketsPtr bs = sample_brackets(tr.get(), prompt, index, steps, &s_l_pred);
    double ls = 0.0, mono = 0.0, cons = 0.0;
    check(lb_metric_luminance_scale(bs.get(), &ls));
    check(lb_metric_monotonicity(bs.get(), &mono));
    check(lb_metric_bracket_consistency(bs.get(), &cons));
    const double err = std::abs(s_l_pred - s_l);
    csv << index << "," << fmt(s_l) << "," << fmt(s_l_pred) << "," << fmt(err) << "," << fmt(ls)
        << "," << fmt(mono) << "," << fmt(cons) << "\n";
    mae += err / scenes;
    mean_ls += ls / scenes;
    mean_mono += mono / scenes;
  }
  if (!csv) throw std::runtime_error("cannot write eval.csv");
  csv.close();

  std::ostringstream summary;
  summary << "scenes = " << scenes << "\nradiance_mae = " << fmt(mae)
          << "\nmean_ls = " << fmt(mean_ls) << "\nmean_monotonicity = " << fmt(mean_mono) << "\n";
  std::ofstream sf(join_path(dir, "summary.txt"), std::ios::binary);
  sf << summary.str();
  write_echo(cfg.get(), join_path(dir, "config.txt"));
  std::fputs(summary.str().c_str(), stdout);
  return 0;
}

int cmd_radscale(const std::string& in) {
  ImagePtr img = read_pfm(in);
  double s = 0.0;
  check(lb_radiance_scale(img.get(), &s));
  std::printf("s = %s\nlog10_s = %s\n", fmt(s).c_str(), fmt(std::log10(s)).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string(lb_version()) +
               " - text-conditioned exposure-bracket synthesis and HDR fusion"};
  app.require_subcommand(1);

  ConfigArgs synth_cfg, train_cfg, fuse_cfg, brackets_cfg, tonemap_cfg;
  std::string dir, in, out, prefix, checkpoint, resume, prompt, ev_csv;
  std::vector<std::string> frames;
  uint64_t seed = 0;
  int count = 16, steps = 0, scenes = 50;
  double gamma = 0.0;
  int rc = 0;

  auto* synth = app.add_subcommand("synth-data", "write dataset scenes and a manifest");
  synth_cfg.attach(synth);
  synth->add_option("--out", dir, "output directory")->required();
  synth->add_option("--count", count, "stream records to write (default 16)");
  synth->callback([&] { rc = cmd_synth_data(synth_cfg, dir, count); });

  auto* train = app.add_subcommand("train", "run the two-phase training loop");
  train_cfg.attach(train);
  train->add_option("--out", dir, "output directory")->required();
  train->add_option("--resume", resume, "continue from a checkpoint");
  train->callback([&] { rc = cmd_train(train_cfg, dir, resume); });

  auto* gen = app.add_subcommand("generate", "sample brackets for a prompt and fuse them");
  gen->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  gen->add_option("--prompt", prompt, "space-separated vocabulary words")->required();
  gen->add_option("--seed", seed, "sampling seed (default 0)");
  gen->add_option("--steps", steps, "Euler steps (default: config sample_steps)");
  gen->add_option("--out", dir, "output directory")->required();
  gen->callback([&] { rc = cmd_generate(checkpoint, prompt, seed, steps, dir); });

  auto* fuse = app.add_subcommand("fuse", "merge bracket PPM frames into a linear PFM");
  fuse_cfg.attach(fuse);
  fuse->add_option("frames", frames, "bracket frames, darkest first")->required();
  fuse->add_option("--ev", ev_csv, "comma-separated EV per frame")->required();
  fuse->add_option("--out", out, "fused linear PFM path")->required();
  fuse->callback([&] { rc = cmd_fuse(fuse_cfg, frames, ev_csv, out); });

  auto* brackets = app.add_subcommand("brackets", "expose a linear PFM into clipped PPM frames");
  brackets_cfg.attach(brackets);
  brackets->add_option("--in", in, "linear PFM image")->required();
  brackets->add_option("--ev", ev_csv, "comma-separated EV list")->required();
  brackets->add_option("--out", prefix, "output path prefix")->required();
  brackets->callback([&] { rc = cmd_brackets(brackets_cfg, in, ev_csv, prefix); });

  auto* tonemap = app.add_subcommand("tonemap", "Reinhard-map a linear PFM to a display PPM");
  tonemap_cfg.attach(tonemap);
  tonemap->add_option("--in", in, "linear PFM image")->required();
  tonemap->add_option("--out", out, "display PPM path")->required();
  tonemap->add_option("--gamma", gamma, "display gamma (default: config tonemap.gamma)");
  tonemap->callback([&] { rc = cmd_tonemap(tonemap_cfg, in, out, gamma); });

  auto* eval = app.add_subcommand("eval", "sample held-out prompts and score the metrics");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval->add_option("--out", dir, "output directory")->required();
  eval->add_option("--scenes", scenes, "held-out scenes to score (default 50)");
  eval->add_option("--steps", steps, "Euler steps (default: config sample_steps)");
  eval->callback([&] { rc = cmd_eval(checkpoint, dir, scenes, steps); });

  auto* radscale = app.add_subcommand("radscale", "print the radiance scale of a PFM image");
  radscale->add_option("--in", in, "radiance PFM image")->required();
  radscale->callback([&] { rc = cmd_radscale(in); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
