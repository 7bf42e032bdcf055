#include <gtest/gtest.h>

#include <string>

#include "kalbucy/harness/config.hpp"

namespace kalbucy::harness {
namespace {

const char* kValid = R"(# comment line
[experiment]
kind = mse_cost
name = smoke

[model]
kind = grid   # trailing comment
k = 3
sigma_signal = 0.5

[filter]
variants = vanilla, deterministic
localization = both
taper = triangular
taper_radius = 2
start_level = 1
epsilons = 0.25, 0.125

[run]
horizon = 2
repeats = 4
seed = 99
)";

int error_line(const std::string& text) {
  try {
    parse_experiment_config(RawConfig::parse(text));
  } catch (const ConfigError& e) {
    return e.line();
  }
  ADD_FAILURE() << "expected a configuration error";
  return -1;
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
  text.replace(text.find(from), from.size(), to);
  return text;
}

TEST(RawConfig, ParsesSectionsKeysAndComments) {
  const RawConfig raw = RawConfig::parse(kValid);
  EXPECT_TRUE(raw.has_section("model"));
  EXPECT_EQ(raw.section_line("model"), 6);
  const RawConfig::Entry* k = raw.find("model", "kind");
  ASSERT_NE(k, nullptr);
  EXPECT_EQ(k->value, "grid");
  EXPECT_EQ(k->line, 7);
  EXPECT_EQ(raw.find("model", "absent"), nullptr);
}

TEST(RawConfig, CanonicalIgnoresLayout) {
  const std::string shuffled = "[run]\nseed=99\n\n[experiment]\n  name   =  smoke\n";
  const std::string plain = "[experiment]\nname = smoke\n[run]\nseed = 99  # x\n";
  EXPECT_EQ(RawConfig::parse(shuffled).canonical(), RawConfig::parse(plain).canonical());
  EXPECT_NE(RawConfig::parse(plain).canonical(),
            RawConfig::parse("[experiment]\nname = other\n[run]\nseed = 99\n").canonical());
}

TEST(RawConfig, SyntaxErrorsCarryLineNumbers) {
  auto line_of = [](const std::string& text) {
    try {
      RawConfig::parse(text);
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(e.line())),
                std::string::npos);
      return e.line();
    }
    return -1;
  };
  EXPECT_EQ(line_of("key = 1\n"), 1);
  EXPECT_EQ(line_of("[a]\nx = 1\nx = 2\n"), 3);
  EXPECT_EQ(line_of("[a]\n[a]\n"), 2);
  EXPECT_EQ(line_of("[a]\nno equals sign\n"), 2);
  EXPECT_EQ(line_of("[a\n"), 1);
  EXPECT_EQ(line_of("[a]\n = 3\n"), 2);
}

TEST(ExperimentConfig, ParsesValidText) {
  const ExperimentConfig cfg = parse_experiment_config(RawConfig::parse(kValid));
  EXPECT_EQ(cfg.kind, ExperimentKind::mse_cost);
  EXPECT_EQ(cfg.name, "smoke");
  EXPECT_EQ(cfg.model.kind, ModelKind::grid);
  EXPECT_EQ(cfg.model.grid.k, 3);
  EXPECT_EQ(cfg.model.grid.sigma_signal, 0.5);
  EXPECT_EQ(cfg.filter.variants, (std::vector<Variant>{Variant::vanilla, Variant::deterministic}));
  EXPECT_EQ(cfg.filter.localization, LocalizationMode::both);
  EXPECT_EQ(cfg.localization_flags(), (std::vector<bool>{false, true}));
  EXPECT_EQ(cfg.filter.taper.kind, TaperKind::triangular);
  EXPECT_EQ(cfg.filter.epsilons, (std::vector<double>{0.25, 0.125}));
  EXPECT_EQ(cfg.run.horizon, 2);
  EXPECT_EQ(cfg.run.repeats, 4);
  EXPECT_EQ(cfg.run.seed, 99u);
  EXPECT_EQ(cfg.build_model().dim_x(), 9);
  EXPECT_NE(cfg.config_hash, 0u);
}

TEST(ExperimentConfig, HashFollowsContent) {
  const auto a = parse_experiment_config(RawConfig::parse(kValid));
  const auto b = parse_experiment_config(RawConfig::parse(replace(kValid, "seed = 99", "seed = 98")));
  EXPECT_NE(a.config_hash, b.config_hash);
  const auto c =
      parse_experiment_config(RawConfig::parse(replace(kValid, "# comment line", "# other")));
  EXPECT_EQ(a.config_hash, c.config_hash);
}

TEST(ExperimentConfig, ValueErrorsPointAtTheLine) {
  EXPECT_EQ(error_line(replace(kValid, "k = 3", "k = 0")), 8);
  EXPECT_EQ(error_line(replace(kValid, "k = 3", "k = three")), 8);
  EXPECT_EQ(error_line(replace(kValid, "epsilons = 0.25, 0.125", "epsilons = 0.25, 1.5")), 17);
  EXPECT_EQ(error_line(replace(kValid, "repeats = 4", "repeats = 0")), 21);
  EXPECT_EQ(error_line(replace(kValid, "sigma_signal = 0.5", "colour = red")), 9);
  EXPECT_EQ(error_line(replace(kValid, "kind = mse_cost", "kind = plot")), 3);
  EXPECT_EQ(error_line(replace(kValid, "variants = vanilla, deterministic", "variants = F9")), 12);
  EXPECT_EQ(error_line(replace(kValid, "[run]", "[runs]")), 19);
}

TEST(ExperimentConfig, MissingSectionIsReported) {
  const std::string text = replace(kValid, "[model]\nkind = grid   # trailing comment\nk = 3\n"
                                           "sigma_signal = 0.5\n", "");
  EXPECT_THROW(parse_experiment_config(RawConfig::parse(text)), ConfigError);
}

TEST(ExperimentConfig, CrossChecks) {
  // Complexity runs need at least one epsilon.
  EXPECT_THROW(parse_experiment_config(
                   RawConfig::parse(replace(kValid, "epsilons = 0.25, 0.125\n", ""))),
               ConfigError);
  // Transport cannot be coupled across levels.
  EXPECT_THROW(parse_experiment_config(RawConfig::parse(
                   replace(kValid, "variants = vanilla, deterministic", "variants = transport"))),
               ConfigError);
}

TEST(ExperimentConfig, ShippedConfigsLoad) {
  for (const char* name : {"variance_decay_grid", "mse_cost_grid", "mse_cost_grid_full",
                           "nc_complexity_scalar", "nc_complexity_grid", "param_est_l96",
                           "param_est_l96_full", "single_run_scalar"}) {
    EXPECT_NO_THROW(load_experiment_config(std::string(KALBUCY_CONFIG_DIR) + "/" + name + ".ini"))
        << name;
  }
  EXPECT_THROW(load_experiment_config("/nonexistent/config.ini"), ConfigError);
}

TEST(Methods, NamesRoundTrip) {
  for (const char* m : {"F1", "L-F1", "F2", "L-F2", "F3"}) {
    const auto [v, loc] = parse_method(m);
    EXPECT_EQ(method_name(v, loc), m);
  }
  EXPECT_THROW(parse_method("L-F7"), std::invalid_argument);
}

}  // namespace
}  // namespace kalbucy::harness
