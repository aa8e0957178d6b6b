#include <gtest/gtest.h>

#include <algorithm>

#include "asym/config.hpp"
#include "fixtures.hpp"

using namespace asym;

namespace {

bool has_error(const ConfigResult& r, const std::string& needle) {
  return std::any_of(r.errors.begin(), r.errors.end(),
                     [&](const std::string& e) { return e.find(needle) != std::string::npos; });
}

}  // namespace

TEST(Config, EmptyObjectGivesDefaults) {
  const auto r = validate_config(Json::object());
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.config, RunConfig{});
  EXPECT_EQ(r.config.train.tau, 0.05);
  EXPECT_EQ(r.config.train.mrl_dims, (std::vector<std::size_t>{32, 64, 128}));
}

TEST(Config, RoundTripsThroughJson) {
  auto c = fixture::tiny_config();
  c.judge.noise = 0.25;
  c.align.lr = 1e-3;
  c.positive_grades = {"S"};
  const auto r = validate_config(c.to_json());
  ASSERT_TRUE(r.ok()) << r.errors.front();
  EXPECT_EQ(r.config, c);
  EXPECT_EQ(r.config.align.lr, 1e-3);
}

TEST(Config, ReportsFieldPaths) {
  const auto r = validate_config(Json{{"tau", -1.0}, {"curation", {{"t_doc", 1.5}}}});
  EXPECT_TRUE(has_error(r, "$.tau: must be > 0"));
  EXPECT_TRUE(has_error(r, "$.curation.t_doc"));
}

TEST(Config, RejectsNonAscendingMrlDims) {
  const auto r = validate_config(Json{{"mrl_dims", {64, 32}}});
  EXPECT_TRUE(has_error(r, "$.mrl_dims: must be strictly ascending"));
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  const auto r = validate_config(Json{{"taus", 0.1}, {"data", {{"clusters", "many"}}}});
  EXPECT_TRUE(has_error(r, "$.taus: unknown key"));
  EXPECT_TRUE(has_error(r, "$.data.clusters"));
  EXPECT_FALSE(validate_config(Json::array()).ok());
}

TEST(Config, CrossFieldConstraints) {
  EXPECT_TRUE(has_error(validate_config(Json{{"encoder", {{"teacher_dims", {64, 96}}}}}), "teacher output"));
  EXPECT_TRUE(has_error(validate_config(Json{{"encoder", {{"student_dims", {64, 16}}}}}), "student output"));
  EXPECT_TRUE(has_error(validate_config(Json{{"curation", {{"k", 2}, {"n", 3}}}}), "$.curation.k"));
  EXPECT_TRUE(has_error(validate_config(Json{{"judge", {{"kind", "http"}, {"urls", {"http://a:1"}}}}}),
                        "$.judge.urls"));
  EXPECT_TRUE(validate_config(Json{{"judge", {{"kind", "http"}, {"urls", {"http://a:1", "http://b:2"}}}}}).ok());
}

TEST(Config, StageOverridesApplyOnTopOfSharedSettings) {
  const auto r = validate_config(Json{{"epochs", 4}, {"lr", 0.01}, {"stages", {{"align", {{"epochs", 9}}}}}});
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.config.stage(r.config.align).epochs, 9u);
  EXPECT_EQ(r.config.stage(r.config.align).lr, 0.01);
  EXPECT_EQ(r.config.stage(r.config.pretrain).epochs, 4u);
}

TEST(Config, CurationParamsAndConsensusRule) {
  RunConfig c;
  EXPECT_EQ(c.curation(true).t, c.t_query);
  EXPECT_EQ(c.curation(false).t, c.t_doc);
  c.positive_grades = {"S", "B"};
  const auto rule = c.consensus_rule();
  EXPECT_TRUE(rule.is_positive(Grade::B));
  EXPECT_FALSE(rule.is_positive(Grade::A));
}

TEST(Overrides, DottedPathsAndValueParsing) {
  Json doc = Json::object();
  apply_override(doc, "curation.t_doc=0.8");
  apply_override(doc, "paths.work_dir=out/run1");
  apply_override(doc, "mrl_dims=[8,16]");
  EXPECT_EQ(doc["curation"]["t_doc"], 0.8);
  EXPECT_EQ(doc["paths"]["work_dir"], "out/run1");
  EXPECT_EQ(doc["mrl_dims"], Json({8, 16}));
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "curation..k=1"), ConfigError);
  EXPECT_THROW(apply_override(doc, "mrl_dims.x=1"), ConfigError);
}
