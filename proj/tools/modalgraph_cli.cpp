// modalgraph command-line driver. Talks to the library only through the C API.
//
// Exit codes: 0 ok, 2 configuration error, 3 stage failure, 4 desk-scale
// acceptance failure.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "modalgraph/modalgraph.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitAcceptance = 4;

struct Failure {
  int code;
};

int exit_code_for(mg_status s) {
  return (s == MG_CONFIG || s == MG_INVALID_ARGUMENT) ? kExitConfig : kExitStage;
}

void check(mg_status s, const std::string& what) {
  if (s == MG_OK) return;
  std::cerr << "modalgraph: " << what << ": " << mg_status_name(s) << ": " << mg_last_error() << "\n";
  throw Failure{exit_code_for(s)};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  mg_string_free(s);
  return out;
}

void print_progress(const char* msg, void*) { std::cerr << msg << "\n"; }

// Options shared by every pipeline subcommand.
struct Common {
  bool desk = false;
  std::string config;
  std::string out;
  std::optional<unsigned long long> seed;
  std::vector<std::string> sets;
  bool quiet = false;
};

struct Command {
  CLI::App* app = nullptr;
  std::string stage;  // empty for non-stage commands
  Common common;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_flag("--desk", c.desk, "start from the desk-scale recipe (10 trusses, T=1000, P=5)");
  sub->add_option("--config", c.config, "INI config file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "artifact directory");
  sub->add_option("--seed", c.seed, "global seed");
  sub->add_option("--set", c.sets, "override one key, section.key=value (repeatable)");
  sub->add_flag("-q,--quiet", c.quiet, "no progress output");
}

using ConfigPtr = std::unique_ptr<mg_config, decltype(&mg_config_destroy)>;

ConfigPtr build_config(const Common& c, const std::vector<std::pair<std::string, std::string>>& flags) {
  mg_config* raw = nullptr;
  check(mg_config_create(c.desk ? 1 : 0, &raw), "create config");
  ConfigPtr cfg(raw, &mg_config_destroy);
  if (!c.config.empty()) check(mg_config_load_ini(cfg.get(), c.config.c_str()), "config file");
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "modalgraph: --set expects section.key=value, got '" << kv << "'\n";
      throw Failure{kExitConfig};
    }
    check(mg_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
  }
  for (const auto& [k, v] : flags) check(mg_config_set(cfg.get(), k.c_str(), v.c_str()), k);
  if (c.seed) check(mg_config_set(cfg.get(), "run.seed", std::to_string(*c.seed).c_str()), "--seed");
  if (!c.out.empty()) check(mg_config_set(cfg.get(), "run.out_dir", c.out.c_str()), "--out");
  check(mg_config_validate(cfg.get()), "config");
  return cfg;
}

void check_device() {
  const char* dev = std::getenv("MODALGRAPH_DEVICE");
  if (!dev || std::string(dev).empty() || std::string(dev) == "cpu") return;
  std::cerr << "modalgraph: MODALGRAPH_DEVICE='" << dev << "' is not available; only 'cpu' is supported\n";
  throw Failure{kExitConfig};
}

int run_checks(const mg_config* cfg) {
  char* json = nullptr;
  int ok = 0;
  check(mg_desk_checks(cfg, &json, &ok), "desk checks");
  std::cout << take(json) << "\n";
  return ok ? 0 : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modalgraph: graph-network operational modal analysis over truss populations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mg_version()));

  std::vector<std::unique_ptr<Command>> commands;
  // raw flag storage; each entry is bound to one config key
  std::vector<std::unique_ptr<std::string>> values;
  std::vector<std::pair<Command*, std::pair<std::string, std::string*>>> bindings;

  auto command = [&](const std::string& name, const std::string& stage, const std::string& help) {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->stage = stage;
    add_common(c->app, c->common);
    commands.push_back(std::move(c));
    return commands.back().get();
  };
  auto bind = [&](Command* c, const std::string& flag, const std::string& key, const std::string& help) {
    values.push_back(std::make_unique<std::string>());
    c->app->add_option(flag, *values.back(), help);
    bindings.push_back({c, {key, values.back().get()}});
  };

  auto* gen = command("gen-population", "gen-population", "generate the truss population and its split");
  bind(gen, "--count", "population.count", "number of trusses");
  bind(gen, "--span", "population.span_m", "bottom span [m]");
  bind(gen, "--top-span", "population.top_span_m", "top span [m]");
  bind(gen, "--height", "population.height_m", "height [m]");
  bind(gen, "--boundary-points", "population.n_boundary_points", "boundary points");

  auto* sim = command("simulate", "simulate", "white-noise response and modal reference per truss");
  bind(sim, "--population", "run.dataset", "population file (default: <out>/dataset.mgd)");
  bind(sim, "--steps", "simulate.steps", "time steps");

  auto* sense = command("sense", "sense", "sensor mask, low-pass, resampling, feature propagation");
  bind(sense, "--dataset", "run.dataset", "simulated dataset");
  bind(sense, "--keep-fraction", "sense.keep_fraction", "fraction of nodes measured");
  bind(sense, "--cutoff-hz", "sense.cutoff_hz", "low-pass cutoff [Hz]");

  auto* train = command("train", "train", "train the decomposition network");
  bind(train, "--dataset", "run.dataset", "sensed dataset");
  bind(train, "--epochs", "train.epochs", "epochs");

  auto* dec = command("decompose", "decompose", "run a checkpoint over the dataset");
  bind(dec, "--checkpoint", "run.checkpoint", "checkpoint file");
  bind(dec, "--dataset", "run.dataset", "sensed dataset");

  auto* ident = command("identify", "identify", "modal identification from a decomposition");
  bind(ident, "--decomposition", "run.decomposition", "decomposition file");
  bind(ident, "--reference", "run.dataset", "dataset holding the modal reference");

  auto* base = command("baseline", "baseline", "EFDD / SSI on the measured channels");
  bind(base, "--method", "baseline.methods", "efdd, ssi or efdd,ssi");
  bind(base, "--dataset", "run.dataset", "sensed dataset");

  auto* abl = command("ablate", "ablate", "train and evaluate the ablation variants");
  bind(abl, "--dataset", "run.dataset", "sensed dataset");
  bind(abl, "--variants", "ablate.variants", "comma-separated variants");

  auto* rep = command("report", "report", "tables and figures from the artifacts");
  bind(rep, "--dataset", "run.dataset", "dataset");

  auto* run = command("run", "", "run the configured stage list end to end");
  bind(run, "--stages", "run.stages", "comma-separated stages");
  bool run_check = false;
  run->app->add_flag("--check", run_check, "evaluate the desk-scale checks afterwards (exit 4 on failure)");

  auto* chk = command("check", "", "evaluate the desk-scale checks on an artifact directory");

  std::string inspect_path;
  auto* insp = app.add_subcommand("inspect", "print the header/manifest of a container file");
  insp->add_option("file", inspect_path, "dataset, checkpoint or decomposition")->required();

  auto* show = command("show-config", "", "print the effective configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    check_device();
    if (insp->parsed()) {
      char* json = nullptr;
      check(mg_inspect(inspect_path.c_str(), &json), "inspect");
      std::cout << take(json) << "\n";
      return 0;
    }
    for (const auto& c : commands) {
      if (!c->app->parsed()) continue;
      std::vector<std::pair<std::string, std::string>> flags;
      for (const auto& [owner, kv] : bindings)
        if (owner == c.get() && !kv.second->empty()) flags.emplace_back(kv.first, *kv.second);
      const auto cfg = build_config(c->common, flags);
      const mg_progress_fn progress = c->common.quiet ? nullptr : &print_progress;
      if (c.get() == show) {
        char* json = nullptr;
        check(mg_config_to_json(cfg.get(), &json), "config");
        std::cout << take(json) << "\n";
        return 0;
      }
      if (c.get() == chk) return run_checks(cfg.get());
      if (c.get() == run) {
        check(mg_run_pipeline(cfg.get(), progress, nullptr), "pipeline");
        return run_check ? run_checks(cfg.get()) : 0;
      }
      check(mg_run_stage(cfg.get(), c->stage.c_str(), progress, nullptr), c->stage);
      return 0;
    }
  } catch (const Failure& f) {
    return f.code;
  }
  return 0;
}
