#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "modalgraph/nn.hpp"
#include "modalgraph/population.hpp"

namespace modalgraph {

enum class Variant { full, no_gnn, set_lstm };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct ModelConfig {
  int P = 7;
  int input_length = 2000;  // T; fixes the first encoder layer and the decoder width
  int hidden_dim = 128;
  int n_gnn_layers = 3;
  int n_mlp_layers = 3;
  int n_attention_heads = 4;
  int n_inducing_points = 16;
  int n_encoder_blocks = 2;
  nn::Activation activation = nn::Activation::relu;
  Variant variant = Variant::full;
  // no_gnn only: fixed node count every truss is reduced to (0 means P).
  int subset_nodes = 0;

  int effective_subset() const { return subset_nodes > 0 ? subset_nodes : P; }
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// One graph as the model sees it.
struct GraphInput {
  Matrix signals;                            // N x T
  std::vector<std::vector<int>> neighbours;  // self-loop first, then adjacency
  std::vector<Point2> coords;

  int node_count() const { return static_cast<int>(signals.rows()); }
};

GraphInput make_graph_input(const TrussSpec& truss, const Matrix& signals);

// count nodes spread evenly over the (x, y)-sorted order.
std::vector<int> even_subset(const std::vector<Point2>& coords, int count);

struct DecompositionResult {
  Matrix modal_responses;  // P x T
  Matrix mode_shapes;      // N x P
};

class DecompositionModel {
 public:
  struct Output {
    Matrix Q;               // P x T
    Matrix Phi;             // rows.size() x P
    std::vector<int> rows;  // input nodes the Phi rows (and the loss target) refer to
  };

  struct Cache {
    std::vector<int> rows;
    std::vector<std::vector<int>> neighbours;
    std::vector<nn::SageLayer::Cache> gnn;
    Matrix H;
    std::vector<Matrix> enc_x;  // encoder block inputs, n_encoder_blocks + 1 entries
    std::vector<nn::AttentionBlock::Cache> enc;
    nn::AttentionBlock::Cache pool;
    nn::SetLstm::Cache lstm;
    Matrix Z;
    nn::Mlp::Cache node_head;
  };

  DecompositionModel(const ModelConfig& config, std::uint64_t seed);
  DecompositionModel(const DecompositionModel&) = delete;
  DecompositionModel& operator=(const DecompositionModel&) = delete;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  Output forward(const GraphInput& g, Cache& cache) const;
  Output forward(const GraphInput& g) const;
  // Accumulates parameter gradients for dL/dQ and dL/dPhi of the matching forward.
  void backward(const Matrix& dQ, const Matrix& dPhi, const Cache& cache);

  // Hidden node features of the encoder (rows as in Output::rows).
  Matrix encode(const GraphInput& g) const;

  // Inference: canonical scaling (unit max-abs shape columns, positive dominant
  // entry, inverse scale moved into Q) and shapes on every node of the graph.
  DecompositionResult decompose(const GraphInput& g) const;

  // Copies every parameter value from another model with the same config.
  void copy_parameters_from(const nn::ParamSet& other);

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  nn::ParamSet params_;
  std::vector<nn::SageLayer> gnn_;
  std::vector<nn::Param*> inducing_;
  std::vector<nn::AttentionBlock> enc_;
  nn::Param* seeds_ = nullptr;
  nn::AttentionBlock pool_;
  nn::SetLstm lstm_;
  nn::Linear decoder_;
  nn::Mlp node_head_;
};

// Puts the columns of a shape matrix into canonical form and rescales the
// matching rows of Q so that Phi Q is unchanged.
void canonicalize(Matrix& Q, Matrix& Phi);

// Checkpoint container: config, seed and every named parameter tensor.
void save_checkpoint(const DecompositionModel& model, const std::string& path,
                     const nlohmann::json& extra = nlohmann::json::object());
std::unique_ptr<DecompositionModel> load_checkpoint(const std::string& path,
                                                    nlohmann::json* meta = nullptr);

}  // namespace modalgraph
