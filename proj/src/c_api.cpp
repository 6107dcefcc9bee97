#include "modalgraph/modalgraph.h"

#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "modalgraph/graphdata.hpp"
#include "modalgraph/pipeline.hpp"

struct mg_config {
  modalgraph::RunConfig cfg;
};

struct mg_report {
  modalgraph::IdentificationReport report;
};

namespace {

thread_local std::string g_last_error;

mg_status fail(mg_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Every entry point funnels through here so no exception crosses the boundary.
template <class F>
mg_status guarded(F&& body) {
  using namespace modalgraph;
  try {
    body();
    g_last_error.clear();
    return MG_OK;
  } catch (const InvalidArgument& e) {
    return fail(MG_INVALID_ARGUMENT, e.what());
  } catch (const ConfigError& e) {
    return fail(MG_CONFIG, e.what());
  } catch (const NumericalError& e) {
    return fail(MG_NUMERICAL, e.what());
  } catch (const FormatError& e) {
    return fail(MG_FORMAT, e.what());
  } catch (const Error& e) {
    // the remaining library errors are unreadable/unwritable files
    return fail(MG_IO, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(MG_IO, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(MG_FORMAT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MG_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MG_INTERNAL, e.what());
  } catch (...) {
    return fail(MG_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

modalgraph::Progress wrap(mg_progress_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& m) { fn(m.c_str(), user); };
}

#define MG_REQUIRE(cond)                                              \
  do {                                                                \
    if (!(cond)) return fail(MG_INVALID_ARGUMENT, "null argument: " #cond); \
  } while (0)

}  // namespace

extern "C" {

const char* mg_version(void) { return "0.1.0"; }

const char* mg_last_error(void) { return g_last_error.c_str(); }

const char* mg_status_name(mg_status s) {
  switch (s) {
    case MG_OK: return "ok";
    case MG_INVALID_ARGUMENT: return "invalid argument";
    case MG_CONFIG: return "config error";
    case MG_NUMERICAL: return "numerical error";
    case MG_FORMAT: return "format error";
    case MG_IO: return "i/o error";
    case MG_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void mg_string_free(char* s) { std::free(s); }

mg_status mg_config_create(int desk_scale, mg_config** out) {
  MG_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    auto* c = new mg_config;
    if (desk_scale) c->cfg = modalgraph::RunConfig::desk_scale();
    *out = c;
  });
}

void mg_config_destroy(mg_config* cfg) { delete cfg; }

mg_status mg_config_load_ini(mg_config* cfg, const char* path) {
  MG_REQUIRE(cfg && path);
  return guarded([&] { cfg->cfg.apply_ini(path); });
}

mg_status mg_config_set(mg_config* cfg, const char* key, const char* value) {
  MG_REQUIRE(cfg && key && value);
  return guarded([&] { cfg->cfg.set(key, value); });
}

mg_status mg_config_validate(const mg_config* cfg) {
  MG_REQUIRE(cfg);
  return guarded([&] { cfg->cfg.validate(); });
}

mg_status mg_config_to_json(const mg_config* cfg, char** out_json) {
  MG_REQUIRE(cfg && out_json);
  return guarded([&] { *out_json = dup(cfg->cfg.to_json().dump(2)); });
}

mg_status mg_run_stage(const mg_config* cfg, const char* stage, mg_progress_fn progress, void* user) {
  MG_REQUIRE(cfg && stage);
  return guarded([&] {
    modalgraph::Stage s;
    try {
      s = modalgraph::parse_stage(stage);
    } catch (const modalgraph::InvalidArgument& e) {
      throw modalgraph::ConfigError(e.what());
    }
    modalgraph::run_stage(s, cfg->cfg, wrap(progress, user));
  });
}

mg_status mg_run_pipeline(const mg_config* cfg, mg_progress_fn progress, void* user) {
  MG_REQUIRE(cfg);
  return guarded([&] { modalgraph::run_pipeline(cfg->cfg, wrap(progress, user)); });
}

mg_status mg_desk_checks(const mg_config* cfg, char** out_json, int* all_passed) {
  MG_REQUIRE(cfg && out_json && all_passed);
  return guarded([&] {
    const auto checks = modalgraph::desk_checks(cfg->cfg);
    nlohmann::json j = nlohmann::json::array();
    bool ok = !checks.empty();
    for (const auto& c : checks) {
      j.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
      ok = ok && c.passed;
    }
    *out_json = dup(j.dump(2));
    *all_passed = ok ? 1 : 0;
  });
}

mg_status mg_inspect(const char* path, char** out_json) {
  MG_REQUIRE(path && out_json);
  return guarded([&] { *out_json = dup(modalgraph::inspect(path).dump(2)); });
}

mg_status mg_report_load(const char* path, mg_report** out) {
  MG_REQUIRE(path && out);
  *out = nullptr;
  return guarded([&] { *out = new mg_report{modalgraph::read_report(path)}; });
}

void mg_report_destroy(mg_report* r) { delete r; }

int mg_report_n_target(const mg_report* r) { return r ? r->report.n_target : 0; }

mg_status mg_report_stat(const mg_report* r, const char* group, mg_metric metric, int mode, mg_stats* out) {
  MG_REQUIRE(r && group && out);
  if (metric < MG_METRIC_MAC || metric > MG_METRIC_DAMPING_ERROR) return fail(MG_INVALID_ARGUMENT, "unknown metric");
  if (std::strcmp(group, "train") != 0 && std::strcmp(group, "held_out") != 0)
    return fail(MG_INVALID_ARGUMENT, "group must be 'train' or 'held_out'");
  if (mode < 0 || mode >= r->report.n_target) return fail(MG_INVALID_ARGUMENT, "mode out of range");
  return guarded([&] {
    const auto& s = r->report.stat(group, static_cast<modalgraph::Metric>(metric), mode);
    *out = {s.mean, s.median, s.std, s.count};
  });
}

mg_status mg_report_table(const mg_report* r, char** out_text) {
  MG_REQUIRE(r && out_text);
  return guarded([&] { *out_text = dup(modalgraph::format_table(r->report)); });
}

}  // extern "C"
