#include "modalgraph/pipeline.hpp"

#include <zlib.h>

#include <boost/property_tree/ini_parser.hpp>
#include <cstdio>
#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "modalgraph/report.hpp"

namespace fs = std::filesystem;

namespace modalgraph {

namespace {

constexpr int kManifestVersion = 1;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (is.fail() || !(is >> std::ws).eof()) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <class T>
Setter num(T RunConfig::*outer) {
  return [outer](RunConfig& c, const std::string& k, const std::string& v) { c.*outer = parse_number<T>(k, v); };
}

// Setter for a numeric member reached through a projection lambda.
template <class F>
Setter field(F ref) {
  return [ref](RunConfig& c, const std::string& k, const std::string& v) {
    auto& target = ref(c);
    target = parse_number<std::remove_reference_t<decltype(target)>>(k, v);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"run.out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
      {"run.seed", num(&RunConfig::seed)},
      {"run.stages",
       [](RunConfig& c, const std::string&, const std::string& v) {
         c.stages.clear();
         for (const auto& s : split_list(v)) c.stages.push_back(parse_stage(s));
       }},
      {"run.dataset", [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_in = v; }},
      {"run.checkpoint", [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint_in = v; }},
      {"run.decomposition", [](RunConfig& c, const std::string&, const std::string& v) { c.decomposition_in = v; }},
      {"run.decompose_with", [](RunConfig& c, const std::string&, const std::string& v) { c.decompose_with = v; }},

      {"population.count", num(&RunConfig::population_count)},
      {"population.span_m", field([](RunConfig& c) -> double& { return c.boundary.span_m; })},
      {"population.top_span_m", field([](RunConfig& c) -> double& { return c.boundary.top_span_m; })},
      {"population.height_m", field([](RunConfig& c) -> double& { return c.boundary.height_m; })},
      {"population.n_boundary_points", field([](RunConfig& c) -> int& { return c.boundary.n_boundary_points; })},
      {"population.n_interior_min", field([](RunConfig& c) -> int& { return c.boundary.n_interior_min; })},
      {"population.n_interior_max", field([](RunConfig& c) -> int& { return c.boundary.n_interior_max; })},
      {"population.min_spacing_m", field([](RunConfig& c) -> double& { return c.boundary.min_spacing_m; })},
      {"population.min_angle_deg", field([](RunConfig& c) -> double& { return c.boundary.min_angle_deg; })},
      {"population.max_attempts", field([](RunConfig& c) -> int& { return c.boundary.max_attempts; })},

      {"split.train", field([](RunConfig& c) -> double& { return c.fractions.train; })},
      {"split.validation", field([](RunConfig& c) -> double& { return c.fractions.validation; })},
      {"split.test", field([](RunConfig& c) -> double& { return c.fractions.test; })},

      {"simulate.steps", field([](RunConfig& c) -> int& { return c.simulation.steps; })},
      {"simulate.dt_s", field([](RunConfig& c) -> double& { return c.simulation.dt_s; })},
      {"simulate.noise_std_n", field([](RunConfig& c) -> double& { return c.simulation.noise_std_n; })},
      {"simulate.target_damping", field([](RunConfig& c) -> double& { return c.simulation.target_damping; })},
      {"simulate.reference_modes", field([](RunConfig& c) -> int& { return c.simulation.reference_modes; })},

      {"sense.keep_fraction", field([](RunConfig& c) -> double& { return c.sensing.keep_fraction; })},
      {"sense.cutoff_hz", field([](RunConfig& c) -> double& { return c.sensing.cutoff_hz; })},
      {"sense.filter_order", field([](RunConfig& c) -> int& { return c.sensing.filter_order; })},
      {"sense.decimation", field([](RunConfig& c) -> int& { return c.sensing.decimation; })},
      {"sense.fp_iterations", field([](RunConfig& c) -> int& { return c.sensing.fp_iterations; })},

      {"model.P", field([](RunConfig& c) -> int& { return c.model.P; })},
      {"model.hidden_dim", field([](RunConfig& c) -> int& { return c.model.hidden_dim; })},
      {"model.n_gnn_layers", field([](RunConfig& c) -> int& { return c.model.n_gnn_layers; })},
      {"model.n_mlp_layers", field([](RunConfig& c) -> int& { return c.model.n_mlp_layers; })},
      {"model.n_attention_heads", field([](RunConfig& c) -> int& { return c.model.n_attention_heads; })},
      {"model.n_inducing_points", field([](RunConfig& c) -> int& { return c.model.n_inducing_points; })},
      {"model.n_encoder_blocks", field([](RunConfig& c) -> int& { return c.model.n_encoder_blocks; })},
      {"model.subset_nodes", field([](RunConfig& c) -> int& { return c.model.subset_nodes; })},
      {"model.activation",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.model.activation = nn::parse_activation(v);
         } catch (const InvalidArgument& e) {
           throw ConfigError("config key '" + k + "': " + e.what());
         }
       }},
      {"model.variant",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.model.variant = parse_variant(v);
         } catch (const InvalidArgument& e) {
           throw ConfigError("config key '" + k + "': " + e.what());
         }
       }},

      {"train.learning_rate", field([](RunConfig& c) -> double& { return c.train.learning_rate; })},
      {"train.beta1", field([](RunConfig& c) -> double& { return c.train.beta1; })},
      {"train.beta2", field([](RunConfig& c) -> double& { return c.train.beta2; })},
      {"train.adam_eps", field([](RunConfig& c) -> double& { return c.train.adam_eps; })},
      {"train.batch_size", field([](RunConfig& c) -> int& { return c.train.batch_size; })},
      {"train.epochs", field([](RunConfig& c) -> int& { return c.train.epochs; })},
      {"train.lambda1", field([](RunConfig& c) -> double& { return c.train.loss_weights.lambda1; })},
      {"train.lambda2", field([](RunConfig& c) -> double& { return c.train.loss_weights.lambda2; })},
      {"train.lambda3", field([](RunConfig& c) -> double& { return c.train.loss_weights.lambda3; })},
      {"train.divergence_factor", field([](RunConfig& c) -> double& { return c.train.divergence_factor; })},
      {"train.grad_clip_norm", field([](RunConfig& c) -> double& { return c.train.grad_clip_norm; })},
      {"train.independence",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.independence_enabled = parse_bool(k, v); }},

      {"identify.n_target", field([](RunConfig& c) -> int& { return c.identify.n_target; })},
      {"identify.min_dominance", field([](RunConfig& c) -> double& { return c.identify.min_dominance; })},
      {"identify.magnitude_ratio", field([](RunConfig& c) -> double& { return c.identify.magnitude_ratio; })},
      {"identify.max_mismatch", field([](RunConfig& c) -> double& { return c.identify.max_mismatch; })},
      {"identify.damping_peaks", field([](RunConfig& c) -> int& { return c.identify.damping_peaks; })},
      {"identify.trigger_sigma", field([](RunConfig& c) -> double& { return c.identify.rdt.trigger_sigma; })},
      {"identify.rdt_cycles", field([](RunConfig& c) -> double& { return c.identify.rdt.cycles; })},
      {"identify.rdt_min_segments", field([](RunConfig& c) -> int& { return c.identify.rdt.min_segments; })},

      {"baseline.efdd_segment", field([](RunConfig& c) -> int& { return c.baseline.efdd.segment; })},
      {"baseline.efdd_overlap", field([](RunConfig& c) -> double& { return c.baseline.efdd.overlap; })},
      {"baseline.bell_mac", field([](RunConfig& c) -> double& { return c.baseline.efdd.bell_mac; })},
      {"baseline.min_separation", field([](RunConfig& c) -> int& { return c.baseline.efdd.min_separation; })},
      {"baseline.ssi_order", field([](RunConfig& c) -> int& { return c.baseline.ssi.order; })},
      {"baseline.ssi_max_damping", field([](RunConfig& c) -> double& { return c.baseline.ssi.max_damping; })},

      {"baseline.methods",
       [](RunConfig& c, const std::string&, const std::string& v) { c.baseline_methods = split_list(v); }},
      {"ablate.variants",
       [](RunConfig& c, const std::string&, const std::string& v) { c.ablation_variants = split_list(v); }},
  };
  return table;
}

std::uint32_t file_crc(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string rel(const std::string& path, const std::string& dir) {
  return fs::path(path).lexically_relative(dir).generic_string();
}

struct Manifest {
  Stage stage;
  const RunConfig& cfg;
  nlohmann::json inputs = nlohmann::json::array();
  nlohmann::json outputs = nlohmann::json::array();
  nlohmann::json extra = nlohmann::json::object();

  void input(const std::string& path) {
    inputs.push_back({{"path", path}, {"crc32", file_crc(path)}});
  }
  // Files carrying wall-clock times are listed without a checksum.
  void output(const std::string& path, bool checksum = true) {
    nlohmann::json o{{"path", rel(path, cfg.out_dir)}};
    if (checksum) o["crc32"] = file_crc(path);
    outputs.push_back(o);
  }
  void write() const {
    nlohmann::json j{{"stage", stage_name(stage)},
                     {"manifest_version", kManifestVersion},
                     {"schema_version", kContainerVersion},
                     {"seed", cfg.seed},
                     {"stage_seed", cfg.stage_seed(stage_name(stage))},
                     {"config", cfg.to_json()},
                     {"inputs", inputs},
                     {"outputs", outputs}};
    if (!extra.empty()) j["summary"] = extra;
    // inputs may live outside out_dir, so only their checksums identify them
    for (auto& in : j["inputs"]) in["path"] = fs::path(in["path"].get<std::string>()).filename().string();
    std::ofstream f(ArtifactPaths{cfg.out_dir}.manifest(stage));
    if (!f) throw Error("cannot write manifest in '" + cfg.out_dir + "'");
    f << j.dump(2) << "\n";
  }
};

std::string need(const std::string& path, Stage producer) {
  if (!fs::exists(path))
    throw ConfigError("missing artifact '" + path + "': run the '" + std::string(stage_name(producer)) +
                      "' stage first");
  return path;
}

std::string dataset_in(const RunConfig& cfg) {
  return cfg.dataset_in.empty() ? ArtifactPaths{cfg.out_dir}.dataset() : cfg.dataset_in;
}

Dataset load_dataset_for(const RunConfig& cfg, Stage producer, Manifest& m) {
  const std::string path = need(dataset_in(cfg), producer);
  m.input(path);
  return load(path);
}

void check_stage_ready(const Dataset& data, Stage needed) {
  for (const auto& g : data.graphs) {
    if (needed == Stage::simulate && !g.raw)
      throw ConfigError("dataset graph " + std::to_string(g.id) + " has no response history: run the 'simulate' stage first");
    if (needed == Stage::sense && !g.signals)
      throw ConfigError("dataset graph " + std::to_string(g.id) + " has no sensed signals: run the 'sense' stage first");
  }
}

void say(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

EpochCallback epoch_printer(const Progress& p, const std::string& tag, int every) {
  if (!p) return {};
  return [p, tag, every](const EpochRecord& r) {
    if (r.epoch == 1 || r.epoch % every == 0) {
      std::ostringstream os;
      os << tag << " epoch " << r.epoch << ": train " << r.train.total << " (rec " << r.train.reconstruction
         << ", R " << r.train.time_independence << ", Rf " << r.train.spectral_independence << "), val "
         << r.validation.total;
      p(os.str());
    }
  };
}

struct TrainArtifacts {
  TrainedModel model;
  DecompositionSet decomposition;
};

// Trains and writes both checkpoints and the log under dir.
TrainArtifacts train_and_save(const Dataset& data, const VariantSpec& spec, const RunConfig& cfg,
                                   const std::string& dir, const std::string& tag, const Progress& progress) {
  ArtifactPaths out{dir};
  TrainArtifacts a;
  a.model = train_on_dataset(data, spec.model, spec.train, cfg.stage_seed("model"),
                             epoch_printer(progress, tag, std::max(1, spec.train.epochs / 10)));
  if (a.model.result.diverged) {
    // keep the curve up to the blow-up for diagnosis
    fs::create_directories(dir);
    a.model.result.log.write_csv(out.train_log());
    throw NumericalError(tag + ": " + a.model.result.diagnostic + " (log: " + out.train_log() + ")");
  }
  const nlohmann::json extra{{"best_epoch", a.model.result.best_epoch},
                             {"best_validation", a.model.result.best_validation},
                             {"train", spec.train.to_json()}};
  save_checkpoint(*a.model.final_model, out.checkpoint_final(), extra);
  save_checkpoint(*a.model.best_model, out.checkpoint_best(), extra);
  a.model.result.log.write_csv(out.train_log());
  return a;
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::gen_population: return "gen-population";
    case Stage::simulate: return "simulate";
    case Stage::sense: return "sense";
    case Stage::train: return "train";
    case Stage::decompose: return "decompose";
    case Stage::identify: return "identify";
    case Stage::baseline: return "baseline";
    case Stage::ablate: return "ablate";
    case Stage::report: return "report";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  for (Stage st : all_stages())
    if (s == stage_name(st)) return st;
  throw ConfigError("unknown stage '" + s + "'");
}

std::vector<Stage> all_stages() {
  return {Stage::gen_population, Stage::simulate, Stage::sense,    Stage::train, Stage::decompose,
          Stage::identify,       Stage::baseline, Stage::ablate, Stage::report};
}

RunConfig RunConfig::desk_scale() {
  RunConfig c;
  c.out_dir = "run_desk";
  c.population_count = 10;
  c.simulation.steps = 4000;
  c.sensing.decimation = 4;
  c.model.P = 5;
  c.model.input_length = 1000;
  c.train.epochs = 1500;
  // ten trusses only give eight training graphs: per-graph Adam steps at a
  // higher rate are what gets the reconstruction below the signal variance
  c.train.batch_size = 1;
  c.train.learning_rate = 1e-3;
  // single-graph steps at that rate occasionally throw the response scale off
  // (no_independence blows up near epoch 90 without this)
  c.train.grad_clip_norm = 1.0;
  return c;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, value);
}

void RunConfig::apply_ini(const std::string& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config file: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("config file '" + path + "': key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      try {
        set(section + "." + key, value.get_value<std::string>());
      } catch (const ConfigError& e) {
        throw ConfigError("config file '" + path + "': " + e.what());
      }
    }
  }
}

void RunConfig::validate() const {
  try {
    if (decompose_with != "final" && decompose_with != "best")
      throw ConfigError("run.decompose_with must be 'final' or 'best'");
    if (population_count < 1) throw ConfigError("population.count must be >= 1");
    boundary.validate();
    const double sum = fractions.train + fractions.validation + fractions.test;
    if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 || std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("split fractions must be non-negative and sum to 1");
    if (simulation.steps < 16 || !(simulation.dt_s > 0)) throw ConfigError("simulate.steps >= 16 and dt_s > 0 required");
    if (sensing.decimation < 1) throw ConfigError("sense.decimation must be >= 1");
    if (!(sensing.keep_fraction > 0 && sensing.keep_fraction <= 1)) throw ConfigError("sense.keep_fraction must be in (0, 1]");
    if (!(sensing.cutoff_hz > 0 && sensing.cutoff_hz < 0.5 / simulation.dt_s))
      throw ConfigError("sense.cutoff_hz must lie below the simulation Nyquist frequency");
    if (sensing.cutoff_hz >= 0.5 / (simulation.dt_s * sensing.decimation))
      throw ConfigError("sense.cutoff_hz must lie below the Nyquist frequency after decimation");
    model.validate();
    train.validate();
    if (identify.n_target < 1 || identify.n_target > simulation.reference_modes)
      throw ConfigError("identify.n_target must be in [1, simulate.reference_modes]");
    for (const auto& b : baseline_methods) parse_baseline(b);
    for (const auto& v : ablation_variants)
      if (std::find(kAblationVariants.begin(), kAblationVariants.end(), v) == kAblationVariants.end())
        throw ConfigError("unknown ablation variant '" + v + "'");
    for (std::size_t i = 1; i < stages.size(); ++i)
      if (static_cast<int>(stages[i]) <= static_cast<int>(stages[i - 1]))
        throw ConfigError("run.stages must be listed once each, in dependency order");
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json st = nlohmann::json::array();
  for (Stage s : stages) st.push_back(stage_name(s));
  return {
      {"seed", seed},
      {"stages", st},
      {"decompose_with", decompose_with},
      {"population", {{"count", population_count}, {"boundary", boundary_to_json(boundary)}}},
      {"split", {{"train", fractions.train}, {"validation", fractions.validation}, {"test", fractions.test}}},
      {"simulate",
       {{"steps", simulation.steps},
        {"dt_s", simulation.dt_s},
        {"noise_std_n", simulation.noise_std_n},
        {"target_damping", simulation.target_damping},
        {"reference_modes", simulation.reference_modes}}},
      {"sense",
       {{"keep_fraction", sensing.keep_fraction},
        {"cutoff_hz", sensing.cutoff_hz},
        {"filter_order", sensing.filter_order},
        {"decimation", sensing.decimation},
        {"fp_iterations", sensing.fp_iterations}}},
      {"model", model.to_json()},
      {"train", train.to_json()},
      {"identify",
       {{"n_target", identify.n_target},
        {"min_dominance", identify.min_dominance},
        {"magnitude_ratio", identify.magnitude_ratio},
        {"max_mismatch", identify.max_mismatch},
        {"damping_peaks", identify.damping_peaks},
        {"trigger_sigma", identify.rdt.trigger_sigma},
        {"rdt_cycles", identify.rdt.cycles},
        {"rdt_min_segments", identify.rdt.min_segments}}},
      {"baseline",
       {{"efdd_segment", baseline.efdd.segment},
        {"efdd_overlap", baseline.efdd.overlap},
        {"bell_mac", baseline.efdd.bell_mac},
        {"min_separation", baseline.efdd.min_separation},
        {"ssi_order", baseline.ssi.order},
        {"ssi_max_damping", baseline.ssi.max_damping},
        {"methods", baseline_methods}}},
      {"ablate", {{"variants", ablation_variants}}},
  };
}

// --- pure stages ---

Dataset generate_dataset(const RunConfig& cfg) {
  Dataset d;
  d.population_seed = cfg.stage_seed("population");
  d.boundary = cfg.boundary;
  d.fractions = cfg.fractions;
  const auto trusses = generate_population(cfg.population_count, cfg.boundary, d.population_seed);
  const auto splits = assign_splits(cfg.population_count, cfg.fractions, cfg.stage_seed("split"));
  for (std::size_t i = 0; i < trusses.size(); ++i) {
    GraphRecord g;
    g.id = static_cast<std::int64_t>(i);
    g.truss = trusses[i];
    g.split = splits[i];
    d.graphs.push_back(std::move(g));
  }
  d.provenance["gen-population"] = {{"count", cfg.population_count}, {"seed", d.population_seed}};
  return d;
}

void simulate_dataset(Dataset& data, const RunConfig& cfg, const Progress& progress) {
  const std::uint64_t base = cfg.stage_seed("simulate");
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& g = data.graphs[i];
    auto sim = simulate(g.truss, derive_seed(base, static_cast<std::uint64_t>(g.id)), cfg.simulation);
    g.raw = std::move(sim.history);
    g.signals.reset();
    data.set_reference(i, std::move(sim.reference));
    say(progress, "simulated truss " + std::to_string(g.id) + " (" + std::to_string(g.truss.node_count()) + " nodes)");
  }
  data.provenance["simulate"] = {{"seed", base},
                                 {"steps", cfg.simulation.steps},
                                 {"dt_s", cfg.simulation.dt_s},
                                 {"noise_std_n", cfg.simulation.noise_std_n},
                                 {"target_damping", cfg.simulation.target_damping}};
}

void sense_dataset(Dataset& data, const RunConfig& cfg) {
  check_stage_ready(data, Stage::simulate);
  for (auto& g : data.graphs) g.signals = sense(g.raw->accelerations, g.raw->fs_hz(), g.truss, cfg.sensing);
  data.provenance["sense"] = {{"keep_fraction", cfg.sensing.keep_fraction},
                              {"cutoff_hz", cfg.sensing.cutoff_hz},
                              {"filter_order", cfg.sensing.filter_order},
                              {"decimation", cfg.sensing.decimation},
                              {"fp_iterations", cfg.sensing.fp_iterations}};
}

TrainedModel train_on_dataset(const Dataset& data, ModelConfig model, const TrainConfig& train_cfg,
                              std::uint64_t model_seed, const EpochCallback& on_epoch) {
  check_stage_ready(data, Stage::sense);
  require(!data.graphs.empty(), "train_on_dataset: empty dataset");
  model.input_length = data.graphs.front().signals->length();
  for (const auto& g : data.graphs)
    if (g.signals->length() != model.input_length)
      throw ConfigError("sensed signals have different lengths; the model needs one input length");
  TrainedModel out;
  out.final_model = std::make_unique<DecompositionModel>(model, model_seed);
  out.result = train(*out.final_model, data, train_cfg, on_epoch);
  out.best_model = std::make_unique<DecompositionModel>(model, model_seed);
  if (out.result.best_params.empty()) {
    out.best_model->copy_parameters_from(out.final_model->params());
  } else {
    std::size_t i = 0;
    for (auto& p : out.best_model->params().all()) p.value = out.result.best_params[i++];
  }
  return out;
}

DecompositionSet decompose_dataset(const DecompositionModel& model, const Dataset& data) {
  check_stage_ready(data, Stage::sense);
  DecompositionSet out;
  out.variant = variant_name(model.config().variant);
  for (const auto& g : data.graphs) {
    const auto r = model.decompose(make_graph_input(g.truss, g.signals->signals));
    out.records.push_back({g.id, r.modal_responses, r.mode_shapes, g.signals->fs_hz});
  }
  return out;
}

namespace {

std::size_t position_of(const Dataset& data, std::int64_t id) {
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.graphs[i].id == id) return i;
  throw FormatError("graph id " + std::to_string(id) + " is not in the dataset");
}

std::vector<const ModalReference*> references_for(const Dataset& data,
                                                  const std::vector<StructureIdentification>& s) {
  std::vector<const ModalReference*> refs;
  for (const auto& si : s) {
    const std::size_t pos = position_of(data, si.id);
    if (!data.has_reference(pos))
      throw ConfigError("graph " + std::to_string(si.id) + " has no modal reference: run the 'simulate' stage first");
    refs.push_back(&data.reference(pos));
  }
  return refs;
}

}  // namespace

IdentificationReport identify_dataset(const DecompositionSet& d, const Dataset& data, const IdentifyParams& p,
                                      const std::string& method) {
  std::vector<StructureIdentification> ids;
  for (const auto& r : d.records) {
    auto s = identify_structure({r.modal_responses, r.mode_shapes}, r.fs_hz, p);
    s.id = r.id;
    s.split = data.graphs[position_of(data, r.id)].split;
    ids.push_back(std::move(s));
  }
  return match_and_report(ids, references_for(data, ids), p, method);
}

IdentificationReport baseline_dataset(BaselineMethod method, const Dataset& data, const BaselineParams& bp,
                                      const IdentifyParams& ip) {
  check_stage_ready(data, Stage::sense);
  std::vector<StructureIdentification> ids;
  for (const auto& g : data.graphs) {
    std::vector<double> x;
    for (const auto& n : g.truss.nodes) x.push_back(n.x);
    auto s = baseline_structure(method, g.signals->signals, g.signals->measured_nodes(), x, g.signals->fs_hz, bp);
    s.id = g.id;
    s.split = g.split;
    ids.push_back(std::move(s));
  }
  return match_and_report(ids, references_for(data, ids), ip, baseline_name(method));
}

double mean_offdiagonal_correlation(const DecompositionSet& d) {
  require(!d.records.empty(), "mean_offdiagonal_correlation: no records");
  double total = 0.0;
  for (const auto& r : d.records) {
    const Matrix R = correlation_matrix(r.modal_responses);
    const Eigen::Index P = R.rows();
    if (P < 2) continue;
    total += (R.cwiseAbs().sum() - R.diagonal().cwiseAbs().sum()) / static_cast<double>(P * (P - 1));
  }
  return total / static_cast<double>(d.records.size());
}

VariantSpec ablation_spec(const std::string& variant, const RunConfig& cfg) {
  VariantSpec s{cfg.model, cfg.train};
  s.train.seed = cfg.stage_seed("train");
  if (variant == "full") {
    s.model.variant = Variant::full;
  } else if (variant == "no_gnn") {
    s.model.variant = Variant::no_gnn;
  } else if (variant == "set_lstm") {
    s.model.variant = Variant::set_lstm;
  } else if (variant == "no_independence") {
    s.model.variant = Variant::full;
    s.train.independence_enabled = false;
  } else {
    throw ConfigError("unknown ablation variant '" + variant + "'");
  }
  return s;
}

// --- on-disk stages ---

void write_report(const IdentificationReport& r, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << report_to_json(r).dump(1) << "\n";
}

IdentificationReport read_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot read report '" + path + "'");
  try {
    return report_from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report '" + path + "': " + e.what());
  }
}

void write_report_files(const IdentificationReport& r, const std::string& stem) {
  write_report_csv(r, stem + ".csv");
  write_matches_csv(r, stem + "_matches.csv");
  std::ofstream f(stem + "_table.txt");
  if (!f) throw Error("cannot write '" + stem + "_table.txt'");
  f << format_table(r);
}

void run_stage(Stage stage, const RunConfig& cfg, const Progress& progress) {
  cfg.validate();
  const ArtifactPaths out{cfg.out_dir};
  fs::create_directories(cfg.out_dir);
  Manifest m{stage, cfg};
  auto save_report = [&](const IdentificationReport& r, const std::string& method) {
    write_report(r, out.report(method));
    const std::string stem = cfg.out_dir + "/report_" + method;
    write_report_files(r, stem);
    for (const char* suffix : {".json", ".csv", "_matches.csv", "_table.txt"})
      m.output(stem + suffix);
  };

  switch (stage) {
    case Stage::gen_population: {
      const Dataset d = generate_dataset(cfg);
      const auto dm = save(d, out.dataset());
      m.output(out.dataset());
      m.extra = dm.to_json();
      say(progress, "generated " + std::to_string(d.size()) + " trusses");
      break;
    }
    case Stage::simulate: {
      Dataset d = load_dataset_for(cfg, Stage::gen_population, m);
      simulate_dataset(d, cfg, progress);
      save(d, out.dataset());
      m.output(out.dataset());
      break;
    }
    case Stage::sense: {
      Dataset d = load_dataset_for(cfg, Stage::simulate, m);
      check_stage_ready(d, Stage::simulate);
      sense_dataset(d, cfg);
      save(d, out.dataset());
      m.output(out.dataset());
      break;
    }
    case Stage::train: {
      const Dataset d = load_dataset_for(cfg, Stage::sense, m);
      check_stage_ready(d, Stage::sense);
      VariantSpec spec{cfg.model, cfg.train};
      spec.train.seed = cfg.stage_seed("train");
      auto a = train_and_save(d, spec, cfg, cfg.out_dir, "train", progress);
      m.output(out.checkpoint_final());
      m.output(out.checkpoint_best());
      m.output(out.train_log(), false);
      m.extra = {{"best_epoch", a.model.result.best_epoch},
                 {"best_validation", a.model.result.best_validation},
                 {"model", a.model.final_model->config().to_json()},
                 {"train", spec.train.to_json()}};
      break;
    }
    case Stage::decompose: {
      const Dataset d = load_dataset_for(cfg, Stage::sense, m);
      const std::string ckpt = !cfg.checkpoint_in.empty()        ? cfg.checkpoint_in
                               : cfg.decompose_with == "best" ? out.checkpoint_best()
                                                              : out.checkpoint_final();
      need(ckpt, Stage::train);
      m.input(ckpt);
      const auto model = load_checkpoint(ckpt);
      const auto dec = decompose_dataset(*model, d);
      save_decomposition(dec, out.decomposition());
      m.output(out.decomposition());
      break;
    }
    case Stage::identify: {
      const Dataset d = load_dataset_for(cfg, Stage::simulate, m);
      const std::string dp = cfg.decomposition_in.empty() ? out.decomposition() : cfg.decomposition_in;
      need(dp, Stage::decompose);
      m.input(dp);
      const auto r = identify_dataset(load_decomposition(dp), d, cfg.identify, "proposed");
      save_report(r, "proposed");
      say(progress, format_table(r));
      break;
    }
    case Stage::baseline: {
      const Dataset d = load_dataset_for(cfg, Stage::sense, m);
      BaselineParams bp = cfg.baseline;
      bp.n_target = cfg.identify.n_target;
      for (const auto& name : cfg.baseline_methods) {
        const BaselineMethod b = parse_baseline(name);
        const auto r = baseline_dataset(b, d, bp, cfg.identify);
        save_report(r, baseline_name(b));
        say(progress, format_table(r));
      }
      break;
    }
    case Stage::ablate: {
      const Dataset d = load_dataset_for(cfg, Stage::sense, m);
      check_stage_ready(d, Stage::sense);
      nlohmann::json summary = nlohmann::json::array();
      for (const auto& v : cfg.ablation_variants) {
        const std::string dir = out.ablation_dir(v);
        fs::create_directories(dir);
        const VariantSpec spec = ablation_spec(v, cfg);
        auto a = train_and_save(d, spec, cfg, dir, v, progress);
        a.decomposition =
            decompose_dataset(cfg.decompose_with == "best" ? *a.model.best_model : *a.model.final_model, d);
        a.decomposition.variant = v;
        const ArtifactPaths vp{dir};
        save_decomposition(a.decomposition, vp.decomposition());
        const auto r = identify_dataset(a.decomposition, d, cfg.identify, v);
        write_report(r, vp.report(v));
        write_report_files(r, dir + "/report_" + v);
        const double offdiag = mean_offdiagonal_correlation(a.decomposition);
        summary.push_back({{"variant", v},
                           {"report", rel(vp.report(v), cfg.out_dir)},
                           {"mode1_mean_mac_train", r.stat("train", Metric::mac, 0).mean},
                           {"mode1_mean_mac_heldout", r.stat("held_out", Metric::mac, 0).mean},
                           {"mean_offdiagonal_correlation", offdiag},
                           {"best_epoch", a.model.result.best_epoch}});
        for (const std::string& p : {vp.checkpoint_final(), vp.checkpoint_best(), vp.decomposition(), vp.report(v)})
          m.output(p);
        m.output(vp.train_log(), false);
        say(progress, v + ": mode-1 mean MAC (train) " + std::to_string(r.stat("train", Metric::mac, 0).mean) +
                          ", off-diagonal |R| " + std::to_string(offdiag));
      }
      const std::string sp = cfg.out_dir + "/ablation/summary.json";
      std::ofstream(sp) << summary.dump(2) << "\n";
      m.output(sp);
      m.extra = summary;
      break;
    }
    case Stage::report: {
      const auto files = render_report(cfg, dataset_in(cfg));
      for (const auto& f : files) m.output(f);
      say(progress, "wrote " + std::to_string(files.size()) + " report artifacts under " + cfg.out_dir);
      break;
    }
  }
  m.write();
}

namespace {

std::string fmt3(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3f", v);
  return b;
}

}  // namespace

Check check_end_to_end(const IdentificationReport& r, double target_damping) {
  Check c{"end-to-end", true, ""};
  std::ostringstream os;
  const double need_mac[2] = {0.90, 0.75};
  for (int m = 0; m < 2; ++m) {
    const auto& s = r.stat("train", Metric::mac, m);
    const bool ok = s.count > 0 && s.mean >= need_mac[m];
    os << "mode " << m + 1 << " mean MAC " << fmt3(s.mean) << " (n=" << s.count << ", need " << need_mac[m] << "); ";
    c.passed = c.passed && ok;
    std::vector<double> abs_err;
    for (const auto& st : r.structures)
      if (st.split == Split::train)
        for (const auto& mm : st.matches)
          if (mm.reference_mode == m) abs_err.push_back(std::abs(mm.frequency_error_pct));
    const auto e = compute_stats(abs_err);
    os << "mode " << m + 1 << " mean |freq err| " << fmt3(e.mean) << "%; ";
    c.passed = c.passed && e.count > 0 && e.mean <= 3.0;
  }
  std::vector<double> zeta;
  bool positive = true;
  for (const auto& st : r.structures)
    if (st.split == Split::train)
      for (const auto& mm : st.matches)
        if (mm.reference_mode == 0 && st.modes[mm.identified].damping_valid) {
          zeta.push_back(st.modes[mm.identified].damping_ratio);
          positive = positive && zeta.back() > 0.0;
        }
  const auto z = compute_stats(zeta);
  const bool zeta_ok = z.count > 0 && positive && z.mean >= target_damping / 3 && z.mean <= 3 * target_damping;
  os << "mode 1 damping mean " << z.mean << " over " << z.count << " estimates" << (positive ? "" : " (non-positive estimate)");
  c.passed = c.passed && zeta_ok;
  c.detail = os.str();
  return c;
}

Check check_method_ordering(const IdentificationReport& proposed, const IdentificationReport& efdd,
                            const IdentificationReport& ssi) {
  Check c{"method-ordering", false, ""};
  int mode = -1;
  for (int m = 0; m < proposed.n_target; ++m)
    if (proposed.stat("train", Metric::mac, m).count > 0) mode = m;
  if (mode < 0) {
    c.detail = "proposed method identified no mode on the training structures";
    return c;
  }
  const double p = proposed.stat("train", Metric::mac, mode).mean;
  const double e = efdd.stat("train", Metric::mac, mode).mean;
  const double s = ssi.stat("train", Metric::mac, mode).mean;
  // a baseline that never identified this mode counts as MAC 0
  c.passed = p >= (std::isfinite(e) ? e : 0.0) && p >= (std::isfinite(s) ? s : 0.0);
  c.detail = "mode " + std::to_string(mode + 1) + " mean MAC: proposed " + fmt3(p) + ", efdd " + fmt3(e) + ", ssi " + fmt3(s);
  return c;
}

Check check_ablation(const std::vector<AblationEntry>& entries) {
  Check c{"ablation-ordering", false, ""};
  const AblationEntry* full = nullptr;
  const AblationEntry* worst = nullptr;
  for (const auto& e : entries) {
    if (e.variant == "full") full = &e;
    if (!worst || e.offdiagonal > worst->offdiagonal) worst = &e;
  }
  std::ostringstream os;
  for (const auto& e : entries) os << e.variant << " MAC1 " << fmt3(e.mode1_mac) << " offdiag " << fmt3(e.offdiagonal) << "; ";
  if (!full || entries.size() < 2) {
    c.detail = "need the full variant and at least one ablation: " + os.str();
    return c;
  }
  bool ok = std::isfinite(full->mode1_mac);
  for (const auto& e : entries)
    if (&e != full && std::isfinite(e.mode1_mac) && e.mode1_mac > full->mode1_mac) ok = false;
  bool has_noind = false;
  for (const auto& e : entries) has_noind = has_noind || e.variant == "no_independence";
  if (has_noind) ok = ok && worst->variant == "no_independence";
  c.passed = ok;
  c.detail = os.str();
  return c;
}

std::vector<Check> desk_checks(const RunConfig& cfg) {
  const ArtifactPaths ap{cfg.out_dir};
  std::vector<Check> out;
  if (fs::exists(ap.report("proposed"))) {
    const auto p = read_report(ap.report("proposed"));
    out.push_back(check_end_to_end(p, cfg.simulation.target_damping));
    if (fs::exists(ap.report("efdd")) && fs::exists(ap.report("ssi")))
      out.push_back(check_method_ordering(p, read_report(ap.report("efdd")), read_report(ap.report("ssi"))));
  }
  const std::string summary = cfg.out_dir + "/ablation/summary.json";
  if (fs::exists(summary)) {
    std::ifstream f(summary);
    std::vector<AblationEntry> entries;
    for (const auto& e : nlohmann::json::parse(f))
      entries.push_back({e["variant"].get<std::string>(),
                         e["mode1_mean_mac_train"].is_null() ? kNaN : e["mode1_mean_mac_train"].get<double>(),
                         e["mean_offdiagonal_correlation"].get<double>()});
    out.push_back(check_ablation(entries));
  }
  return out;
}

void run_pipeline(const RunConfig& cfg, const Progress& progress) {
  cfg.validate();
  for (Stage s : cfg.stages) {
    say(progress, std::string("== ") + stage_name(s));
    run_stage(s, cfg, progress);
  }
}

}  // namespace modalgraph
