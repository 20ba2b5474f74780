#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "core/image.hpp"
#include "core/rng.hpp"

using namespace lb;

namespace {

Image random_image(int w, int h, uint64_t seed, double lo = 0.0, double hi = 2.0) {
  Rng rng(seed);
  Image img = Image::create(w, h);
  for (auto& v : img.rgb) v = rng.uniform(lo, hi);
  return img;
}

// independent percentile oracle: nearest-pair interpolation written from the
// definition, on a copy sorted with a different comparator path
double percentile_oracle(std::vector<double> v, double q) {
  std::stable_sort(v.begin(), v.end(), [](double a, double b) { return a < b; });
  const double r = q * (double)(v.size() - 1);
  const auto lo = (size_t)std::floor(r);
  const auto hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (r - std::floor(r)) * (v[hi] - v[lo]);
}

}  // namespace

TEST_CASE("invert_exposure evaluates the inversion coefficient") {
  Image sig = Image::create(2, 1, 0.18);
  SensorMeta ident{1.0, 1.0, 1.0, 0.0};
  CHECK(invert_exposure(sig, ident).rgb[0] == doctest::Approx(0.18).epsilon(1e-15));

  Image sig2 = Image::create(1, 1, 0.1);
  SensorMeta m{0.01, 100.0, 2.0, 0.0};
  CHECK(invert_exposure(sig2, m).rgb[0] == doctest::Approx(0.4).epsilon(1e-12));
  m.ev_comp = 1.0;
  CHECK(invert_exposure(sig2, m).rgb[0] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("invert_exposure rejects invalid sensor parameters") {
  Image sig = Image::create(1, 1, 0.5);
  CHECK_THROWS_AS((void)invert_exposure(sig, SensorMeta{0.0, 100.0, 2.0, 0.0}),
                  std::runtime_error);
  CHECK_THROWS_AS((void)invert_exposure(sig, SensorMeta{0.01, -1.0, 2.0, 0.0}),
                  std::runtime_error);
  CHECK_THROWS_AS((void)invert_exposure(sig, SensorMeta{0.01, 100.0, 0.0, 0.0}),
                  std::runtime_error);
}

TEST_CASE("percentile: interpolated order statistics") {
  CHECK(percentile({1, 2, 3}, 0.5) == doctest::Approx(2.0));
  CHECK(percentile({0, 10}, 0.9) == doctest::Approx(9.0));
  CHECK(percentile({7, 7, 7, 7}, 0.33) == doctest::Approx(7.0));
  CHECK_THROWS_AS((void)percentile({}, 0.5), std::runtime_error);
  CHECK_THROWS_AS((void)percentile({1.0}, 1.5), std::runtime_error);

  Rng rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<double> v(37);
    for (auto& x : v) x = rng.uniform(-5.0, 5.0);
    const double q = rng.uniform();
    CHECK(percentile(v, q) == doctest::Approx(percentile_oracle(v, q)).epsilon(1e-12));
  }
}

TEST_CASE("radiance scale takes the max of median and highlight candidates") {
  Image mid = Image::create(4, 4, 0.36);
  CHECK(compute_radiance_scale(mid) == doctest::Approx(2.0).epsilon(1e-12));

  Image hot = Image::create(4, 4, 1.6);
  CHECK(compute_radiance_scale(hot) == doctest::Approx(1.6 / 0.18).epsilon(1e-12));

  // crafted so P50 = 0.18 and P90 = 0.8 exactly -> s = 1
  Image img = Image::create(8, 8);
  const size_t n = img.rgb.size();  // 192: rank50 = 95.5, rank90 = 171.9
  for (size_t i = 0; i < n; ++i) {
    if (i < 95) img.rgb[i] = 0.1;
    else if (i < 97) img.rgb[i] = 0.18;
    else if (i < 171) img.rgb[i] = 0.3;
    else img.rgb[i] = 0.8;
  }
  CHECK(percentile_image(img, 0.5) == doctest::Approx(0.18));
  CHECK(percentile_image(img, 0.9) == doctest::Approx(0.8));
  CHECK(compute_radiance_scale(img) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("radiance scale is scale-equivariant") {
  Image img = random_image(6, 5, 23);
  const double s = compute_radiance_scale(img);
  for (double c : {0.25, 3.0, 117.0}) {
    Image scaled = denormalize(img, c);
    CHECK(compute_radiance_scale(scaled) == doctest::Approx(c * s).epsilon(1e-12));
    // hence normalization is invariant to global rescaling
    Image n1 = normalize(img, s);
    Image n2 = normalize(scaled, compute_radiance_scale(scaled));
    for (size_t i = 0; i < n1.rgb.size(); ++i)
      CHECK(n1.rgb[i] == doctest::Approx(n2.rgb[i]).epsilon(1e-12));
  }
}

TEST_CASE("normalized image keeps percentiles at or under the anchors") {
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
    Image img = random_image(9, 7, seed, 0.0, 40.0);
    Image norm = normalize(img, compute_radiance_scale(img));
    const double p50 = percentile_image(norm, 0.5);
    const double p90 = percentile_image(norm, 0.9);
    CHECK(p50 <= 0.18 + 1e-12);
    CHECK(p90 <= 0.8 + 1e-12);
    const bool median_binds = std::fabs(p50 - 0.18) <= 1e-9;
    const bool highlight_binds = std::fabs(p90 - 0.8) <= 1e-9;
    CHECK((median_binds || highlight_binds));
  }
}

TEST_CASE("compute_radiance_scale rejects an all-zero image") {
  Image zero = Image::create(3, 3, 0.0);
  CHECK_THROWS_AS((void)compute_radiance_scale(zero), std::runtime_error);
}

TEST_CASE("normalize round-trips and validates the scale") {
  Image img = random_image(5, 5, 31);
  Image back = denormalize(normalize(img, 2.5), 2.5);
  for (size_t i = 0; i < img.rgb.size(); ++i)
    CHECK(back.rgb[i] == doctest::Approx(img.rgb[i]).epsilon(1e-12));
  CHECK(normalize(Image::create(2, 2, 0.36), 2.0).rgb[0] == doctest::Approx(0.18));
  CHECK_THROWS_AS((void)normalize(img, 0.0), std::runtime_error);
  CHECK_THROWS_AS((void)normalize(img, -1.0), std::runtime_error);
}

TEST_CASE("bracket_decompose applies gain then clips") {
  Image img = Image::create(1, 1, 0.5);
  BracketSet set = bracket_decompose(img, {-2.0, 0.0, 2.0});
  CHECK(set.frames[0].rgb[0] == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(set.frames[1].rgb[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(set.frames[2].rgb[0] == 1.0);
  CHECK(set.base_index() == 1);
}

TEST_CASE("bracket_decompose validates the ev list") {
  Image img = Image::create(2, 2, 0.5);
  CHECK_THROWS_AS((void)bracket_decompose(img, {}), std::runtime_error);
  CHECK_THROWS_AS((void)bracket_decompose(img, {0.0}), std::runtime_error);
  CHECK_THROWS_AS((void)bracket_decompose(img, {-2.0, -2.0, 0.0}), std::runtime_error);
  CHECK_THROWS_AS((void)bracket_decompose(img, {-2.0, 2.0}), std::runtime_error);  // no base
}

TEST_CASE("bracket frames are monotone in ev and ratio-exact when unclipped") {
  Image img = random_image(6, 6, 41, 0.0, 3.0);
  const std::vector<double> evs = {-4.0, -2.0, 0.0, 2.0};
  BracketSet set = bracket_decompose(img, evs);
  for (size_t k = 1; k < evs.size(); ++k)
    for (size_t i = 0; i < img.rgb.size(); ++i) {
      CHECK(set.frames[k].rgb[i] >= set.frames[k - 1].rgb[i]);
      const double brighter = img.rgb[i] * std::exp2(evs[k]);
      if (brighter < 1.0 && img.rgb[i] > 0.0) {
        const double ratio = set.frames[k].rgb[i] / set.frames[k - 1].rgb[i];
        CHECK(ratio == doctest::Approx(std::exp2(evs[k] - evs[k - 1])).epsilon(1e-12));
      }
    }
}

TEST_CASE("tonemap is monotone into [0,1) and matches the scalar form") {
  Image probe = Image::create(1, 1, 1.0);
  const double got = tonemap_display(probe, 2.2).rgb[0];
  CHECK(got == doctest::Approx(std::pow(0.5, 1.0 / 2.2)).epsilon(1e-15));
  CHECK(got == doctest::Approx(0.7297).epsilon(1e-4));

  Image zero = Image::create(1, 1, 0.0);
  CHECK(tonemap_display(zero, 2.2).rgb[0] == 0.0);

  double prev = -1.0;
  for (double x : {0.0, 0.01, 0.1, 0.5, 1.0, 4.0, 100.0, 1e6}) {
    Image im = Image::create(1, 1, x);
    const double y = tonemap_display(im, 2.2).rgb[0];
    CHECK(y > prev);
    CHECK(y < 1.0);
    prev = y;
  }
  CHECK_THROWS_AS((void)tonemap_display(probe, 0.0), std::runtime_error);
}
