#include <gtest/gtest.h>

#include <map>
#include <string>

#include "flemvi/config.hpp"

using namespace flemvi;
using nlohmann::json;

namespace {

auto env_from(const std::map<std::string, std::string>& vars) {
  return [vars](const char* key) -> const char* {
    const auto it = vars.find(key);
    return it == vars.end() ? nullptr : it->second.c_str();
  };
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  const RunConfig c;
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(c.dimension(), 1u);
  const auto model = build_model<1>(c);
  EXPECT_EQ(model.observables.size(), 4u);
  EXPECT_EQ(model.kernel.kind(), KernelKind::PaperLLL);
}

TEST(Config, ParsesFullDocument) {
  const auto j = json::parse(R"({
    "domain": {"lower": [0, 0], "upper": [1, 2]},
    "truncation": 32,
    "law": [{"weight": 1, "coefficients": [0.01]}, {"weight": 3, "coefficients": [], "c": 1.5}],
    "kernel": "fixed_h1",
    "n": 50, "n_list": [10, 20], "replicas": 120, "dt": 0.001, "horizon": 0.5,
    "t": 0.1, "beta": 1.5, "t_list": [0, 1], "output_stride": 5,
    "observables": [{"modes": [1]}, {"modes": [1, 2], "phi": [{"coef": 2, "powers": [1, 1]}]}],
    "seed": 99, "jobs": 2, "out": "x"
  })");
  const auto c = parse_config(j);
  EXPECT_EQ(c.dimension(), 2u);
  EXPECT_EQ(c.law.size(), 2u);
  EXPECT_EQ(c.law[1].c, 1.5);
  EXPECT_EQ(c.seed, 99u);
  const auto model = build_model<2>(c);
  EXPECT_EQ(model.law->size(), 2u);
  EXPECT_NEAR((*model.law)[1].weight, 0.75, 1e-15);
  EXPECT_EQ(model.observables[1].modes(), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(model.kernel.kind(), KernelKind::FixedH1);
}

TEST(Config, RejectsUnknownKeysAtEveryLevel) {
  EXPECT_THROW(parse_config(json::parse(R"({"particles": 5})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"domain": {"lower": [0], "upper": [1], "x": 1}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"law": [{"weights": 1}]})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"observables": [{"modes": [1], "phi": [{"coef": 1, "power": [1]}]}]})")),
               ConfigError);
}

TEST(Config, RejectsInvalidValues) {
  EXPECT_THROW(parse_config(json::parse(R"({"n": 0})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"n": -3})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"n": 2.5})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"dt": 0})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"kernel": "nearest"})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"n_list": [100, 25]})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"domain": {"lower": [1], "upper": [0]}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"domain": {"lower": [0, 0, 0], "upper": [1, 1, 1]}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"observables": [{"modes": [0]}]})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"seed": -1})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"t_list": [-0.5]})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/flemvi.json"), ConfigError);
}

TEST(Config, InadmissibleLawIsConfigError) {
  const auto c = parse_config(json::parse(R"({"law": [{"coefficients": [0.05], "c": 2.0}]})"));
  EXPECT_THROW(build_model<1>(c), ConfigError);
  const auto ok = parse_config(json::parse(R"({"law": [{"coefficients": [0.05], "c": 2.7}]})"));
  EXPECT_NO_THROW(build_model<1>(ok));
}

TEST(Config, EnvironmentOverrides) {
  RunConfig c;
  apply_env_overrides(c, env_from({{"FLEMVI_SEED", "7"}, {"FLEMVI_N", "12"}, {"FLEMVI_DT", "0.002"},
                                   {"FLEMVI_KERNEL", "uniform_survivor"}, {"FLEMVI_OUT", "elsewhere"}}));
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.n, 12u);
  EXPECT_DOUBLE_EQ(c.dt, 0.002);
  EXPECT_EQ(c.kernel, "uniform_survivor");
  EXPECT_EQ(c.out, "elsewhere");
  RunConfig d;
  EXPECT_THROW(apply_env_overrides(d, env_from({{"FLEMVI_N", "ten"}})), ConfigError);
  RunConfig e;
  EXPECT_THROW(apply_env_overrides(e, env_from({{"FLEMVI_N", "0"}})), ConfigError);
  RunConfig f;
  EXPECT_THROW(apply_env_overrides(f, env_from({{"FLEMVI_SEED", "-4"}})), ConfigError);
}

TEST(Config, HashIgnoresJobsAndOut) {
  RunConfig a, b;
  b.jobs = 8;
  b.out = "other";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = a.seed + 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  RunConfig c;
  c.dt = 2e-4;
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(parse_config(to_json(a)).n, a.n);
  EXPECT_EQ(config_hash(parse_config(to_json(a))), config_hash(a));
}
