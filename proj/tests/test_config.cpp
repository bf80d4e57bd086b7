#include <doctest.h>

#include <string>

#include "din/config.hpp"
#include "din/error.hpp"

using namespace din;

namespace {

std::string message_of(auto&& fn) {
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("profiles carry the reference and desk sizes") {
    const ModelConfig p = ModelConfig::paper();
    CHECK(p.branches == 4);
    CHECK(p.wrdbs_per_branch == 5);
    CHECK(p.rdbs_per_wrdb == 3);
    CHECK(p.convs_per_rdb == 6);
    CHECK(p.growth == 32);
    CHECK(p.base_channels == 64);
    CHECK(p.fusion_mode == FusionMode::Asyca);
    const TrainConfig t = TrainConfig::paper();
    CHECK(t.batch_size == 8);
    CHECK(t.lr_patch == 50);
    CHECK(t.lr0 == 1e-4);
    CHECK(t.lr_halve_every == 200);
    CHECK(t.beta1 == 0.9);
    CHECK(t.beta2 == 0.99);
    CHECK(t.eps == 1e-8);
    CHECK(ModelConfig::profile("desk") == ModelConfig::desk());
    CHECK(TrainConfig::profile("paper") == TrainConfig::paper());
    CHECK_THROWS_AS(ModelConfig::profile("huge"), ConfigError);
    ModelConfig::desk().validate();
    TrainConfig::desk().validate();
}

TEST_CASE("files round-trip through their text form") {
    ModelConfig m = ModelConfig::desk();
    m.scale = 3;
    m.use_dwc = false;
    CHECK(parse_model_config(m.to_text(), "x") == m);
    TrainConfig t = TrainConfig::desk();
    t.lr0 = 3.3e-4;
    t.seed = 18446744073709551615ULL;
    t.precision = "double";
    CHECK(parse_train_config(t.to_text(), "x") == t);
}

TEST_CASE("comments, blanks and spacing are ignored") {
    const auto c = parse_model_config("# header\n\n  scale=4   # trailing\nbranches =3\r\n", "m.cfg");
    CHECK(c.scale == 4);
    CHECK(c.branches == 3);
    CHECK(c.growth == 32);
}

TEST_CASE("errors name the source, line and field") {
    CHECK(message_of([] { (void)parse_model_config("scale = 2\ngrowth = lots\n", "m.cfg"); }) ==
          "m.cfg:2: field 'growth': expected an integer, got 'lots'");
    CHECK(message_of([] { (void)parse_model_config("\n\nwidth = 3\n", "m.cfg"); }) ==
          "m.cfg:3: unknown field 'width'");
    CHECK(message_of([] { (void)parse_model_config("scale = 2\nscale = 3\n", "m.cfg"); }) ==
          "m.cfg:2: field 'scale' set twice");
    CHECK(message_of([] { (void)parse_model_config("scale\n", "m.cfg"); }) ==
          "m.cfg:1: expected 'key = value', got 'scale'");
    CHECK(message_of([] { (void)parse_model_config("scale =\n", "m.cfg"); }) ==
          "m.cfg:1: field 'scale': missing value");
    CHECK(message_of([] { (void)parse_model_config("scale = 5\n", "m.cfg"); }) ==
          "m.cfg: field 'scale': must be 2, 3 or 4");
    CHECK(message_of([] { (void)parse_train_config("augment = maybe\n", "t.cfg"); }).find("t.cfg:1: field 'augment'") == 0);
    CHECK(message_of([] { (void)parse_train_config("precision = half\n", "t.cfg"); }).find("precision") != std::string::npos);
}

TEST_CASE("validation rejects inconsistent attention settings") {
    ModelConfig c = ModelConfig::paper();
    c.attn_reduction = 5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = ModelConfig::paper();
    c.fusion_mode = FusionMode::Sum;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.use_asyca = false;
    c.validate();
}

TEST_CASE("command-line overrides apply one field") {
    ModelConfig m = ModelConfig::paper();
    apply_override(m, "fusion_mode=sum");
    apply_override(m, " use_asyca = false ");
    CHECK(m.fusion_mode == FusionMode::Sum);
    CHECK_FALSE(m.use_asyca);
    TrainConfig t = TrainConfig::paper();
    apply_override(t, "lr0=0.002");
    CHECK(t.lr0 == 0.002);
    CHECK_THROWS_AS(apply_override(t, "lr0"), ConfigError);
    CHECK(message_of([&] { apply_override(t, "nope=1"); }) == "override: unknown field 'nope'");
}

TEST_CASE("the architecture hash ignores initialisation-only fields") {
    ModelConfig a = ModelConfig::paper();
    ModelConfig b = a;
    b.asyca_zero_init = false;
    CHECK(a.hash() == b.hash());
    b.growth = 16;
    CHECK(a.hash() != b.hash());
    ModelConfig c = a;
    c.scale = 3;
    CHECK(a.hash() != c.hash());
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("fusion mode names round-trip") {
    for (FusionMode m : {FusionMode::Asyca, FusionMode::Concat, FusionMode::Sum, FusionMode::Mean}) {
        CHECK(parse_fusion_mode(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_fusion_mode("max"), ConfigError);
}

}  // TEST_SUITE
