// Exercises the shared library through the C header only.
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "modalgraph/modalgraph.h"

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// ten trusses, a few hundred steps, two epochs: just enough to run every stage
mg_config* tiny(const std::string& out) {
  mg_config* c = nullptr;
  EXPECT_EQ(mg_config_create(1, &c), MG_OK);
  for (const auto& [k, v] : {std::pair{"run.out_dir", out.c_str()}, {"population.count", "10"},
                             {"simulate.steps", "800"}, {"train.epochs", "2"}, {"model.hidden_dim", "16"},
                             {"identify.rdt_min_segments", "1"}})
    EXPECT_EQ(mg_config_set(c, k, v), MG_OK) << k << ": " << mg_last_error();
  EXPECT_EQ(mg_config_validate(c), MG_OK) << mg_last_error();
  return c;
}

void run_until_identify(const mg_config* c) {
  for (const char* s : {"gen-population", "simulate", "sense", "train", "decompose", "identify"})
    ASSERT_EQ(mg_run_stage(c, s, nullptr, nullptr), MG_OK) << s << ": " << mg_last_error();
}

}  // namespace

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STRNE(mg_version(), "");
  EXPECT_STREQ(mg_status_name(MG_OK), "ok");
  EXPECT_STRNE(mg_status_name(MG_FORMAT), mg_status_name(MG_IO));
}

TEST(CApi, ConfigErrorsMapToCodes) {
  mg_config* c = nullptr;
  EXPECT_EQ(mg_config_create(0, nullptr), MG_INVALID_ARGUMENT);
  ASSERT_EQ(mg_config_create(0, &c), MG_OK);
  EXPECT_EQ(mg_config_set(c, "no.such.key", "1"), MG_CONFIG);
  EXPECT_NE(std::string(mg_last_error()).find("no.such.key"), std::string::npos);
  EXPECT_EQ(mg_config_set(c, "train.epochs", "many"), MG_CONFIG);
  EXPECT_EQ(mg_run_stage(c, "not-a-stage", nullptr, nullptr), MG_CONFIG);
  char* json = nullptr;
  ASSERT_EQ(mg_config_to_json(c, &json), MG_OK);
  EXPECT_NE(std::string(json).find("\"train\""), std::string::npos);
  mg_string_free(json);
  mg_config_destroy(c);
}

TEST(CApi, MissingUpstreamArtifactIsConfigError) {
  const auto dir = fs::temp_directory_path() / "modalgraph_c_api_missing";
  fs::remove_all(dir);
  mg_config* c = tiny(dir.string());
  EXPECT_EQ(mg_run_stage(c, "train", nullptr, nullptr), MG_CONFIG);
  EXPECT_NE(std::string(mg_last_error()).find("dataset"), std::string::npos) << mg_last_error();
  mg_config_destroy(c);
}

TEST(CApi, InspectRejectsForeignFile) {
  const auto p = fs::temp_directory_path() / "modalgraph_c_api_junk.mgd";
  std::ofstream(p) << "not an artifact\n";
  char* json = nullptr;
  EXPECT_EQ(mg_inspect(p.c_str(), &json), MG_FORMAT);
  EXPECT_EQ(json, nullptr);
}

TEST(CApi, TinyPipelineIsDeterministicAndReportsLoad) {
  const auto a = fs::temp_directory_path() / "modalgraph_c_api_a";
  const auto b = fs::temp_directory_path() / "modalgraph_c_api_b";
  for (const auto& d : {a, b}) {
    fs::remove_all(d);
    mg_config* c = tiny(d.string());
    run_until_identify(c);
    mg_config_destroy(c);
  }
  for (const char* f : {"dataset.mgd", "decomposition.mgr", "report_proposed.csv"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;

  mg_report* r = nullptr;
  ASSERT_EQ(mg_report_load((a / "report_proposed.json").c_str(), &r), MG_OK) << mg_last_error();
  EXPECT_GT(mg_report_n_target(r), 0);
  mg_stats s{};
  ASSERT_EQ(mg_report_stat(r, "train", MG_METRIC_MAC, 0, &s), MG_OK);
  // two epochs rarely yield a matched mode; only the bookkeeping is checked
  EXPECT_GE(s.count, 0);
  EXPECT_LE(s.count, 8);
  if (s.count > 0) {
    EXPECT_GE(s.mean, 0.0);
    EXPECT_LE(s.mean, 1.0);
  }
  EXPECT_EQ(mg_report_stat(r, "train", MG_METRIC_MAC, 99, &s), MG_INVALID_ARGUMENT);
  char* table = nullptr;
  ASSERT_EQ(mg_report_table(r, &table), MG_OK);
  EXPECT_NE(std::string(table).find("MAC"), std::string::npos);
  mg_string_free(table);
  mg_report_destroy(r);
}
