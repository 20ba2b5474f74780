#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "core/config.hpp"
#include "core/io.hpp"

using namespace lb;

TEST_CASE("serialize/apply is the identity on defaults") {
  RunConfig a;
  const std::string echo = a.serialize();
  RunConfig b;
  b.apply_pairs(parse_config_text(echo));
  CHECK(b.serialize() == echo);
  CHECK(echo.rfind("# linbracket", 0) == 0);  // provenance line
}

TEST_CASE("apply reaches every section and survives a round trip") {
  RunConfig c;
  c.apply("model.dim", "12");
  c.apply("model.ev", "-2,0");
  c.apply("model.rope", "2d");
  c.apply("model.modulation", "false");
  c.apply("fusion.blur_radius", "3");
  c.apply("train.lr_lora", "0.025");
  c.apply("train.batch", "2");
  c.apply("data.seed", "77");
  c.apply("seed", "5");
  c.apply("sample_steps", "4");
  c.apply("tonemap.gamma", "2.4");
  CHECK(c.model.dim == 12);
  REQUIRE(c.model.ev_list.size() == 2);
  CHECK(c.model.ev_list[0] == -2.0);
  CHECK(c.model.rope_mode == RopeMode::k2D);
  CHECK_FALSE(c.model.modulation);
  CHECK(c.fusion.blur_radius == 3);
  CHECK(c.train.lr_lora == 0.025);
  CHECK(c.train.batch == 2);
  CHECK(c.data.seed == 77);
  CHECK(c.seed == 5);
  CHECK(c.sample_steps == 4);
  CHECK(c.tonemap_gamma == 2.4);
  CHECK(c.get("model.dim") == "12");
  CHECK(c.get("model.ev") == "-2,0");
  CHECK(c.get("model.modulation") == "false");
  CHECK_THROWS(c.get("model.depth"));

  RunConfig back;
  back.apply_pairs(parse_config_text(c.serialize()));
  CHECK(back.serialize() == c.serialize());
}

TEST_CASE("unknown keys and malformed values are rejected") {
  RunConfig c;
  CHECK_THROWS(c.apply("model.depth", "3"));
  CHECK_THROWS(c.apply("modeldim", "3"));
  CHECK_THROWS(c.apply("", "3"));
  CHECK_THROWS(c.apply("model.dim", "twelve"));
  CHECK_THROWS(c.apply("model.dim", "12.5"));
  CHECK_THROWS(c.apply("train.lr_base", "1e"));
  CHECK_THROWS(c.apply("model.modulation", "yes"));
  CHECK_THROWS(c.apply("model.rope", "4d"));
  CHECK_THROWS(c.apply("model.ev", ""));
  CHECK_THROWS(c.apply("model.ev", "-4,,0"));
}

TEST_CASE("registry keys are unique and dotted") {
  auto keys = known_config_keys();
  std::set<std::string> uniq(keys.begin(), keys.end());
  CHECK(uniq.size() == keys.size());
  CHECK(uniq.count("model.dim") == 1);
  CHECK(uniq.count("fusion.saturation_hi") == 1);
  CHECK(uniq.count("train.lambda_bracket") == 1);
  CHECK(uniq.count("data.scenes") == 1);
  CHECK(uniq.count("seed") == 1);
}

TEST_CASE("validate rejects inconsistent settings") {
  RunConfig c;
  c.validate();  // defaults are fine
  RunConfig bad = c;
  bad.apply("train.batch", "0");
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.apply("sample_steps", "0");
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.apply("train.beta1", "1");
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.apply("data.scenes", "0");
  CHECK_THROWS(bad.validate());
  bad = c;
  bad.apply("model.dim", "50");  // not patch*patch*3
  CHECK_THROWS(bad.validate());
}
