#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "modalgraph/baselines.hpp"
#include "modalgraph/fem.hpp"
#include "modalgraph/graphdata.hpp"
#include "modalgraph/identify.hpp"
#include "modalgraph/network.hpp"
#include "modalgraph/population.hpp"
#include "modalgraph/sensing.hpp"
#include "modalgraph/training.hpp"

namespace modalgraph {

// Pipeline stages in dependency order.
enum class Stage { gen_population, simulate, sense, train, decompose, identify, baseline, ablate, report };
const char* stage_name(Stage s);
Stage parse_stage(const std::string& s);
std::vector<Stage> all_stages();

// Ablation variants: the three architectures plus the full architecture trained
// on the reconstruction term alone.
inline const std::vector<std::string> kAblationVariants = {"full", "no_gnn", "set_lstm", "no_independence"};

struct RunConfig {
  std::string out_dir = "run";
  // Optional explicit inputs; empty means the artifact inside out_dir.
  std::string dataset_in;
  std::string checkpoint_in;
  std::string decomposition_in;
  // Checkpoint used by decompose/ablate: "final" or "best" (lowest validation loss).
  std::string decompose_with = "final";
  std::uint64_t seed = 2024;

  int population_count = 100;
  TrapezoidSpec boundary;
  SplitFractions fractions;
  SimulationParams simulation;
  SensingParams sensing;
  ModelConfig model;
  TrainConfig train;
  IdentifyParams identify;
  BaselineParams baseline;
  std::vector<std::string> baseline_methods = {"efdd", "ssi"};
  std::vector<std::string> ablation_variants = kAblationVariants;
  std::vector<Stage> stages = all_stages();

  // Desk-scale recipe: 10 trusses, 20 s records resampled to 50 Hz (T = 1000),
  // P = 5, 1500 epochs of batch-1 Adam at lr 1e-3.
  static RunConfig desk_scale();

  // INI file with [run], [population], [split], [simulate], [sense], [model],
  // [train], [identify], [baseline], [ablate] sections. Unknown keys are errors.
  void apply_ini(const std::string& path);
  // One "section.key" assignment with the same parsing as the INI file.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  nlohmann::json to_json() const;

  std::uint64_t stage_seed(const std::string& stage) const { return derive_seed(seed, stage); }
};

using Progress = std::function<void(const std::string&)>;

// --- stages (pure: no file I/O) ---

Dataset generate_dataset(const RunConfig& cfg);
void simulate_dataset(Dataset& data, const RunConfig& cfg, const Progress& progress = {});
void sense_dataset(Dataset& data, const RunConfig& cfg);

struct TrainedModel {
  std::unique_ptr<DecompositionModel> final_model;
  std::unique_ptr<DecompositionModel> best_model;
  TrainResult result;
};

// Model input length is taken from the sensed signals.
TrainedModel train_on_dataset(const Dataset& data, ModelConfig model, const TrainConfig& train,
                              std::uint64_t model_seed, const EpochCallback& on_epoch = {});

DecompositionSet decompose_dataset(const DecompositionModel& model, const Dataset& data);

IdentificationReport identify_dataset(const DecompositionSet& d, const Dataset& data, const IdentifyParams& p,
                                      const std::string& method = "proposed");

IdentificationReport baseline_dataset(BaselineMethod method, const Dataset& data, const BaselineParams& bp,
                                      const IdentifyParams& ip);

// Mean over structures of the mean |R_ij| (i != j) of the decomposed responses.
double mean_offdiagonal_correlation(const DecompositionSet& d);

struct VariantSpec {
  ModelConfig model;
  TrainConfig train;
};
VariantSpec ablation_spec(const std::string& variant, const RunConfig& cfg);

// --- desk-scale checks (exit code 4 when any fails) ---

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct AblationEntry {
  std::string variant;
  double mode1_mac = kNaN;  // train-group mean
  double offdiagonal = kNaN;
};

// Train-group mode-1/2 mean MAC >= 0.90 / 0.75, mean |frequency error| <= 3 %
// for modes 1-2, every mode-1 damping estimate positive with mean within a
// factor of 3 of the target damping.
Check check_end_to_end(const IdentificationReport& proposed, double target_damping = 0.01);
// Proposed mean MAC of its highest identified mode >= both baselines' means.
Check check_method_ordering(const IdentificationReport& proposed, const IdentificationReport& efdd,
                            const IdentificationReport& ssi);
// full >= every other variant on mode-1 MAC; no_independence has the largest
// off-diagonal correlation.
Check check_ablation(const std::vector<AblationEntry>& entries);
// Runs whichever checks have their artifacts under cfg.out_dir.
std::vector<Check> desk_checks(const RunConfig& cfg);

// --- on-disk pipeline ---

struct ArtifactPaths {
  std::string dir;
  std::string dataset() const { return dir + "/dataset.mgd"; }
  std::string checkpoint_final() const { return dir + "/checkpoint_final.mgc"; }
  std::string checkpoint_best() const { return dir + "/checkpoint_best.mgc"; }
  std::string train_log() const { return dir + "/train_log.csv"; }
  std::string decomposition() const { return dir + "/decomposition.mgr"; }
  std::string report(const std::string& method) const { return dir + "/report_" + method + ".json"; }
  std::string manifest(Stage s) const { return dir + "/manifest_" + stage_name(s) + ".json"; }
  std::string ablation_dir(const std::string& variant) const { return dir + "/ablation/" + variant; }
  std::string figures() const { return dir + "/figures"; }
  std::string tables() const { return dir + "/tables"; }
};

// Runs one stage reading upstream artifacts from cfg.out_dir and writing its
// own artifacts + manifest. Missing inputs raise ConfigError naming the stage
// to run first.
void run_stage(Stage s, const RunConfig& cfg, const Progress& progress = {});
// Runs cfg.stages in dependency order.
void run_pipeline(const RunConfig& cfg, const Progress& progress = {});

// CSV/table files for a report: <stem>.csv, <stem>_matches.csv, <stem>_table.txt.
void write_report_files(const IdentificationReport& r, const std::string& stem);
IdentificationReport read_report(const std::string& path);
void write_report(const IdentificationReport& r, const std::string& path);

}  // namespace modalgraph
