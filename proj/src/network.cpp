#include "modalgraph/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "modalgraph/baselines.hpp"
#include "modalgraph/graphdata.hpp"

namespace modalgraph {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_gnn: return "no_gnn";
    case Variant::set_lstm: return "set_lstm";
  }
  return "full";
}

Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "no_gnn") return Variant::no_gnn;
  if (s == "set_lstm") return Variant::set_lstm;
  throw InvalidArgument("unknown model variant '" + s + "' (expected full, no_gnn or set_lstm)");
}

void ModelConfig::validate() const {
  require(P >= 1, "ModelConfig: P must be >= 1");
  require(input_length >= 2, "ModelConfig: input_length must be >= 2");
  require(hidden_dim > 0, "ModelConfig: hidden_dim must be > 0");
  require(n_gnn_layers >= 1, "ModelConfig: n_gnn_layers must be >= 1");
  require(n_mlp_layers >= 1, "ModelConfig: n_mlp_layers must be >= 1");
  require(n_attention_heads >= 1 && hidden_dim % n_attention_heads == 0,
          "ModelConfig: hidden_dim must be divisible by n_attention_heads");
  require(n_inducing_points >= 1, "ModelConfig: n_inducing_points must be >= 1");
  require(n_encoder_blocks >= 0, "ModelConfig: n_encoder_blocks must be >= 0");
  require(subset_nodes >= 0, "ModelConfig: subset_nodes must be >= 0");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"P", P},
          {"input_length", input_length},
          {"hidden_dim", hidden_dim},
          {"n_gnn_layers", n_gnn_layers},
          {"n_mlp_layers", n_mlp_layers},
          {"n_attention_heads", n_attention_heads},
          {"n_inducing_points", n_inducing_points},
          {"n_encoder_blocks", n_encoder_blocks},
          {"activation", nn::activation_name(activation)},
          {"variant", variant_name(variant)},
          {"subset_nodes", subset_nodes}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.P = j.at("P").get<int>();
  c.input_length = j.at("input_length").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.n_gnn_layers = j.at("n_gnn_layers").get<int>();
  c.n_mlp_layers = j.at("n_mlp_layers").get<int>();
  c.n_attention_heads = j.at("n_attention_heads").get<int>();
  c.n_inducing_points = j.at("n_inducing_points").get<int>();
  c.n_encoder_blocks = j.at("n_encoder_blocks").get<int>();
  c.activation = nn::parse_activation(j.at("activation").get<std::string>());
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.subset_nodes = j.value("subset_nodes", 0);
  c.validate();
  return c;
}

GraphInput make_graph_input(const TrussSpec& truss, const Matrix& signals) {
  require(signals.rows() == truss.node_count(), "make_graph_input: signal rows != node count");
  GraphInput g;
  g.signals = signals;
  g.coords = truss.nodes;
  const auto adj = truss.neighbours();
  g.neighbours.resize(adj.size());
  for (std::size_t v = 0; v < adj.size(); ++v) {
    g.neighbours[v].push_back(static_cast<int>(v));
    for (int u : adj[v])
      if (u != static_cast<int>(v)) g.neighbours[v].push_back(u);
  }
  return g;
}

std::vector<int> even_subset(const std::vector<Point2>& coords, int count) {
  const int n = static_cast<int>(coords.size());
  require(count >= 1 && count <= n, "even_subset: count must be in [1, N]");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return coords[a].x < coords[b].x || (coords[a].x == coords[b].x && coords[a].y < coords[b].y);
  });
  std::vector<int> out;
  for (int i = 0; i < count; ++i) {
    const long pos = std::lround((i + 0.5) * n / count - 0.5);
    out.push_back(order[std::clamp<long>(pos, 0, n - 1)]);
  }
  return out;
}

DecompositionModel::DecompositionModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const Eigen::Index d = config_.hidden_dim;
  const auto act = config_.activation;

  Eigen::Index in = config_.input_length;
  for (int l = 0; l < config_.n_gnn_layers; ++l) {
    gnn_.emplace_back(params_, "gnn." + std::to_string(l), in, d, act, rng);
    in = d;
  }

  if (config_.variant == Variant::set_lstm) {
    lstm_ = nn::SetLstm(params_, "set_lstm", d, rng);
    decoder_ = nn::Linear(params_, "decoder", 2 * d, config_.input_length, rng);
  } else {
    for (int b = 0; b < config_.n_encoder_blocks; ++b) {
      const std::string name = "encoder." + std::to_string(b);
      if (config_.variant == Variant::full) {
        // induced self-attention: inducing points attend to the set, then the set attends back
        nn::Param& ind = params_.add(name + ".inducing", config_.n_inducing_points, d);
        nn::init_xavier(ind, rng);
        inducing_.push_back(&ind);
        enc_.emplace_back(params_, name + ".mab0", d, d, d, config_.n_attention_heads, act, rng);
        enc_.emplace_back(params_, name + ".mab1", d, d, d, config_.n_attention_heads, act, rng);
      } else {
        enc_.emplace_back(params_, name + ".sab", d, d, d, config_.n_attention_heads, act, rng);
      }
    }
    seeds_ = &params_.add("pool.seeds", config_.P, d);
    nn::init_xavier(*seeds_, rng);
    pool_ = nn::AttentionBlock(params_, "pool.mab", d, d, d, config_.n_attention_heads, act, rng);
    decoder_ = nn::Linear(params_, "decoder", d, config_.input_length, rng);
  }

  std::vector<Eigen::Index> dims(1, d);
  for (int l = 0; l + 1 < config_.n_mlp_layers; ++l) dims.push_back(d);
  dims.push_back(config_.P);
  node_head_ = nn::Mlp(params_, "node_head", dims, act, rng);
}

DecompositionModel::Output DecompositionModel::forward(const GraphInput& g, Cache& c) const {
  require(g.signals.cols() == config_.input_length,
          "DecompositionModel: signal length " + std::to_string(g.signals.cols()) +
              " != configured input_length " + std::to_string(config_.input_length));
  require(static_cast<int>(g.neighbours.size()) == g.node_count(),
          "DecompositionModel: neighbour list size != node count");
  require(g.signals.allFinite(), "DecompositionModel: non-finite input signals");

  Matrix x;
  if (config_.variant == Variant::no_gnn) {
    c.rows = even_subset(g.coords, std::min(config_.effective_subset(), g.node_count()));
    x.resize(static_cast<Eigen::Index>(c.rows.size()), g.signals.cols());
    for (std::size_t i = 0; i < c.rows.size(); ++i) x.row(i) = g.signals.row(c.rows[i]);
    c.neighbours.assign(c.rows.size(), {});
    for (std::size_t i = 0; i < c.rows.size(); ++i) c.neighbours[i] = {static_cast<int>(i)};
  } else {
    c.rows.resize(g.node_count());
    std::iota(c.rows.begin(), c.rows.end(), 0);
    x = g.signals;
    c.neighbours = g.neighbours;
  }

  c.gnn.resize(gnn_.size());
  for (std::size_t l = 0; l < gnn_.size(); ++l) x = gnn_[l].forward(x, c.neighbours, c.gnn[l]);
  c.H = x;

  Output out;
  if (config_.variant == Variant::set_lstm) {
    c.Z = lstm_.forward(c.H, config_.P, c.lstm);
  } else {
    c.enc_x.assign(1, c.H);
    c.enc.assign(enc_.size(), {});
    Matrix cur = c.H;
    for (int b = 0; b < config_.n_encoder_blocks; ++b) {
      if (config_.variant == Variant::full) {
        const Matrix hi = enc_[2 * b].forward(inducing_[b]->value, cur, c.enc[2 * b]);
        cur = enc_[2 * b + 1].forward(cur, hi, c.enc[2 * b + 1]);
      } else {
        cur = enc_[b].forward(cur, cur, c.enc[b]);
      }
      c.enc_x.push_back(cur);
    }
    c.Z = pool_.forward(seeds_->value, cur, c.pool);
  }
  out.Q = decoder_.forward(c.Z);
  out.Phi = node_head_.forward(c.H, c.node_head);
  out.rows = c.rows;
  return out;
}

DecompositionModel::Output DecompositionModel::forward(const GraphInput& g) const {
  Cache c;
  return forward(g, c);
}

Matrix DecompositionModel::encode(const GraphInput& g) const {
  Cache c;
  forward(g, c);
  return c.H;
}

void DecompositionModel::backward(const Matrix& dQ, const Matrix& dPhi, const Cache& c) {
  const Matrix dZ = decoder_.backward(c.Z, dQ);
  Matrix dH;
  if (config_.variant == Variant::set_lstm) {
    dH = lstm_.backward(dZ, c.lstm);
  } else {
    auto [d_seeds, d_cur] = pool_.backward(dZ, c.pool);
    seeds_->grad += d_seeds;
    for (int b = config_.n_encoder_blocks - 1; b >= 0; --b) {
      if (config_.variant == Variant::full) {
        auto [dx_direct, d_hi] = enc_[2 * b + 1].backward(d_cur, c.enc[2 * b + 1]);
        auto [d_ind, dx_via_hi] = enc_[2 * b].backward(d_hi, c.enc[2 * b]);
        inducing_[b]->grad += d_ind;
        d_cur = dx_direct + dx_via_hi;
      } else {
        auto [dx, dy] = enc_[b].backward(d_cur, c.enc[b]);
        d_cur = dx + dy;
      }
    }
    dH = std::move(d_cur);
  }
  dH += node_head_.backward(dPhi, c.node_head);
  for (int l = static_cast<int>(gnn_.size()) - 1; l >= 0; --l)
    dH = gnn_[l].backward(dH, c.neighbours, c.gnn[l]);
}

void canonicalize(Matrix& Q, Matrix& Phi) {
  require(Q.rows() == Phi.cols(), "canonicalize: Q rows != Phi columns");
  for (Eigen::Index p = 0; p < Phi.cols(); ++p) {
    Eigen::Index idx = 0;
    const double peak = Phi.col(p).cwiseAbs().maxCoeff(&idx);
    if (!(peak > 0.0)) continue;
    const double s = Phi(idx, p);
    Phi.col(p) /= s;
    Q.row(p) *= s;
  }
}

DecompositionResult DecompositionModel::decompose(const GraphInput& g) const {
  Output o = forward(g);
  canonicalize(o.Q, o.Phi);
  DecompositionResult r;
  r.modal_responses = std::move(o.Q);
  if (static_cast<int>(o.rows.size()) == g.node_count()) {
    r.mode_shapes = std::move(o.Phi);
    return r;
  }
  // Reduced-input variant: extend the subset shapes along x to every node.
  std::vector<double> mx, qx;
  for (int i : o.rows) mx.push_back(g.coords[i].x);
  for (const auto& p : g.coords) qx.push_back(p.x);
  if (o.rows.size() >= 2) {
    r.mode_shapes = interpolate_shapes(o.Phi, mx, qx);
  } else {
    r.mode_shapes = o.Phi.row(0).replicate(g.node_count(), 1);
  }
  return r;
}

void DecompositionModel::copy_parameters_from(const nn::ParamSet& other) {
  require(other.all().size() == params_.all().size(), "copy_parameters_from: parameter count mismatch");
  for (std::size_t i = 0; i < params_.all().size(); ++i) {
    auto& dst = params_.all()[i];
    const auto& src = other.all()[i];
    require(dst.name == src.name && dst.value.rows() == src.value.rows() &&
                dst.value.cols() == src.value.cols(),
            "copy_parameters_from: parameter '" + dst.name + "' does not match");
    dst.value = src.value;
  }
}

void save_checkpoint(const DecompositionModel& model, const std::string& path, const nlohmann::json& extra) {
  Container c;
  c.kind = "checkpoint";
  c.meta = extra;
  c.meta["config"] = model.config().to_json();
  c.meta["seed"] = model.seed();
  nlohmann::json shapes = nlohmann::json::object();
  for (const auto& p : model.params().all()) {
    shapes[p.name] = {p.value.rows(), p.value.cols()};
    Block b;
    b.name = p.name;
    b.section = "params";
    b.graph = -1;
    b.data.assign(p.value.data(), p.value.data() + p.value.size());
    c.blocks.push_back(std::move(b));
  }
  c.meta["shapes"] = shapes;
  write_container(path, c);
}

std::unique_ptr<DecompositionModel> load_checkpoint(const std::string& path, nlohmann::json* meta) {
  const Container c = read_container(path);
  if (c.kind != "checkpoint") throw FormatError(path + ": not a checkpoint (kind '" + c.kind + "')");
  ModelConfig cfg;
  std::uint64_t seed = 0;
  try {
    cfg = ModelConfig::from_json(c.meta.at("config"));
    seed = c.meta.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed checkpoint header: " + e.what());
  }
  auto model = std::make_unique<DecompositionModel>(cfg, seed);
  for (auto& p : model->params().all()) {
    const Block* b = c.find(p.name);
    if (!b) throw FormatError(path + ": checkpoint missing parameter '" + p.name + "'");
    if (static_cast<Eigen::Index>(b->data.size()) != p.value.size())
      throw FormatError(path + ": parameter '" + p.name + "' has wrong size");
    std::copy(b->data.begin(), b->data.end(), p.value.data());
  }
  if (meta) *meta = c.meta;
  return model;
}

}  // namespace modalgraph
