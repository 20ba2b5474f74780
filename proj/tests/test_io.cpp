#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/io.hpp"
#include "core/rng.hpp"

using namespace lb;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) { return read_text_file(path); }

Image random_image(int w, int h, uint64_t seed, double lo, double hi) {
  Image img = Image::create(w, h);
  Rng rng = Rng::stream(seed, 0x10);
  for (double& v : img.rgb) v = rng.uniform(lo, hi);
  return img;
}

}  // namespace

TEST_CASE("pfm roundtrip is bit-identical at float precision") {
  // Values already representable as float roundtrip exactly through f64.
  Image img = random_image(7, 5, 11, -3.0, 40.0);
  for (double& v : img.rgb) v = (double)(float)v;
  const std::string path = tmp_path("io_rt.pfm");
  pfm_write(path, img);
  Image back = pfm_read(path);
  REQUIRE(back.width == 7);
  REQUIRE(back.height == 5);
  for (size_t i = 0; i < img.rgb.size(); ++i) CHECK(back.rgb[i] == img.rgb[i]);

  // write(read(write(x))) produces byte-identical files
  const std::string path2 = tmp_path("io_rt2.pfm");
  pfm_write(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("pfm endianness variants decode identically") {
  Image img = random_image(3, 4, 17, 0.0, 2.0);
  for (double& v : img.rgb) v = (double)(float)v;
  const std::string le = tmp_path("io_le.pfm");
  const std::string be = tmp_path("io_be.pfm");
  pfm_write(le, img, true);
  pfm_write(be, img, false);
  CHECK(slurp(le) != slurp(be));  // headers differ (-1.0 vs 1.0)
  Image a = pfm_read(le);
  Image b = pfm_read(be);
  for (size_t i = 0; i < img.rgb.size(); ++i) {
    CHECK(a.rgb[i] == img.rgb[i]);
    CHECK(b.rgb[i] == img.rgb[i]);
  }
}

TEST_CASE("pfm layout oracle: header text, bottom row first, little-endian floats") {
  // 1x2 image: top row (y=0) = (1,2,3), bottom row (y=1) = (4,5,6).
  Image img = Image::create(1, 2);
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 1.0 + c;
    img.at(1, 0, c) = 4.0 + c;
  }
  const std::string path = tmp_path("io_layout.pfm");
  pfm_write(path, img);
  const std::string bytes = slurp(path);
  const std::string header = "PF\n1 2\n-1.0\n";
  REQUIRE(bytes.size() == header.size() + 24);
  CHECK(bytes.substr(0, header.size()) == header);
  // bottom row (4,5,6) comes first; 4.0f little-endian = 00 00 80 40
  const unsigned char* p = (const unsigned char*)bytes.data() + header.size();
  const unsigned char four[4] = {0x00, 0x00, 0x80, 0x40};
  for (int i = 0; i < 4; ++i) CHECK(p[i] == four[i]);
  float v;
  std::memcpy(&v, p + 12, 4);  // first float of the second stored row = top row
  CHECK(v == 1.0f);
}

TEST_CASE("pfm write rejects NaN and empty images") {
  Image img = Image::create(2, 2, 0.5);
  img.at(0, 1, 2) = std::nan("");
  CHECK_THROWS(pfm_write(tmp_path("io_nan.pfm"), img));
  Image empty;
  CHECK_THROWS(pfm_write(tmp_path("io_empty.pfm"), empty));
}

TEST_CASE("pfm read rejects malformed input") {
  const std::string path = tmp_path("io_bad.pfm");
  write_text_file(path, "P5\n2 2\n-1.0\n");
  CHECK_THROWS(pfm_read(path));
  write_text_file(path, "PF\n0 2\n-1.0\n");
  CHECK_THROWS(pfm_read(path));
  write_text_file(path, "PF\n2 2\n-1.0\nshort");
  CHECK_THROWS(pfm_read(path));
  CHECK_THROWS(pfm_read(tmp_path("io_does_not_exist.pfm")));
}

TEST_CASE("ppm16 quantization endpoints and half-even rounding") {
  // 0 -> 0, 1 -> 65535, 0.5 -> 32768 (32767.5 rounds to the even value).
  Image img = Image::create(3, 1);
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 0.0;
    img.at(0, 1, c) = 0.5;
    img.at(0, 2, c) = 1.0;
  }
  const std::string path = tmp_path("io_q.ppm");
  ppm16_write(path, img);
  const std::string bytes = slurp(path);
  const std::string header = "P6\n3 1\n65535\n";
  REQUIRE(bytes.size() == header.size() + 18);
  CHECK(bytes.substr(0, header.size()) == header);
  const unsigned char* p = (const unsigned char*)bytes.data() + header.size();
  auto sample = [&](int i) { return (int)((p[2 * i] << 8) | p[2 * i + 1]); };
  CHECK(sample(0) == 0);      // pixel 0, R
  CHECK(sample(3) == 32768);  // pixel 1, R
  CHECK(sample(8) == 65535);  // pixel 2, B
}

TEST_CASE("ppm16 roundtrip through own reader") {
  Image img = random_image(5, 3, 23, 0.0, 1.0);
  const std::string path = tmp_path("io_rt.ppm");
  ppm16_write(path, img);
  Image back = ppm16_read(path);
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 3);
  // quantization error bounded by half a step
  for (size_t i = 0; i < img.rgb.size(); ++i)
    CHECK(std::abs(back.rgb[i] - img.rgb[i]) <= 0.5 / 65535.0 + 1e-12);
  // re-encoding the decoded image is byte-identical
  const std::string path2 = tmp_path("io_rt2.ppm");
  ppm16_write(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("ppm16 rejects out-of-range values and foreign headers") {
  Image img = Image::create(2, 2, 0.5);
  img.at(1, 1, 0) = 1.0001;
  CHECK_THROWS(ppm16_write(tmp_path("io_oor.ppm"), img));
  img.at(1, 1, 0) = -0.0001;
  CHECK_THROWS(ppm16_write(tmp_path("io_oor.ppm"), img));
  const std::string path = tmp_path("io_bad.ppm");
  write_text_file(path, "P6\n2 2\n255\n0123456789ab");
  CHECK_THROWS(ppm16_read(path));
}

TEST_CASE("config text parsing") {
  const std::string text =
      "# run settings\n"
      "model.dim = 96\n"
      "\n"
      "data.seed=7   # trailing comment\n"
      "  train.lr_base =  3e-3  \n";
  auto kv = parse_config_text(text);
  REQUIRE(kv.size() == 3);
  CHECK(kv[0].first == "model.dim");
  CHECK(kv[0].second == "96");
  CHECK(kv[1].first == "data.seed");
  CHECK(kv[1].second == "7");
  CHECK(kv[2].first == "train.lr_base");
  CHECK(kv[2].second == "3e-3");

  CHECK_THROWS(parse_config_text("model.dim = 96\nmodel.dim = 128\n"));
  CHECK_THROWS(parse_config_text("just a bare line\n"));
  CHECK_THROWS(parse_config_text("= value without key\n"));
  CHECK(parse_config_text("# only comments\n\n").empty());
}

TEST_CASE("config file parsing matches text parsing") {
  const std::string path = tmp_path("io_cfg.txt");
  write_text_file(path, "a = 1\nb = two\n");
  auto kv = parse_config_file(path);
  REQUIRE(kv.size() == 2);
  CHECK(kv[1].second == "two");
  CHECK_THROWS(parse_config_file(tmp_path("io_cfg_missing.txt")));
}

TEST_CASE("checkpoint roundtrip preserves everything exactly") {
  Rng rng = Rng::stream(99, 0x11);
  Checkpoint ck;
  ck.phase = 2;
  ck.step = 12345678901234ull;
  ck.config_echo = "model.dim = 96\ndata.seed = 7\n";
  ck.tensors.emplace_back("w", Tensor::randn({4, 3}, rng));
  ck.tensors.emplace_back("b.m", Tensor::randn({3}, rng, 1e-8));
  ck.tensors.emplace_back("scalar", Tensor::randn({1}, rng));

  const std::string path = tmp_path("io_ck.bin");
  checkpoint_write(path, ck);
  Checkpoint back = checkpoint_read(path);
  CHECK(back.phase == ck.phase);
  CHECK(back.step == ck.step);
  CHECK(back.config_echo == ck.config_echo);
  REQUIRE(back.tensors.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    const Tensor& a = ck.tensors[i].second;
    const Tensor& b = back.tensors[i].second;
    REQUIRE(b.ndim() == a.ndim());
    for (int d = 0; d < a.ndim(); ++d) REQUIRE(b.dim(d) == a.dim(d));
    for (int64_t j = 0; j < a.numel(); ++j) CHECK(b.data()[j] == a.data()[j]);
  }

  // rewriting what was read is byte-identical
  const std::string path2 = tmp_path("io_ck2.bin");
  checkpoint_write(path2, back);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("checkpoint read rejects corruption") {
  const std::string path = tmp_path("io_ck_bad.bin");
  write_text_file(path, "NOPE");
  CHECK_THROWS(checkpoint_read(path));
  write_text_file(path, "LB");
  CHECK_THROWS(checkpoint_read(path));

  // valid file truncated mid-tensor
  Checkpoint ck;
  ck.config_echo = "x = 1\n";
  Rng rng = Rng::stream(5, 0x12);
  ck.tensors.emplace_back("w", Tensor::randn({8, 8}, rng));
  const std::string good = tmp_path("io_ck_good.bin");
  checkpoint_write(good, ck);
  const std::string all = slurp(good);
  std::ofstream trunc(path, std::ios::binary);
  trunc.write(all.data(), (std::streamsize)(all.size() - 17));
  trunc.close();
  CHECK_THROWS(checkpoint_read(path));
}
