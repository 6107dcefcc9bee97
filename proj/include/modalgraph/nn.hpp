#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "modalgraph/common.hpp"

// Minimal reverse-mode building blocks. Row convention: one row per set element
// (node, seed, inducing point), one column per feature. Every block's forward()
// fills a cache that its backward() consumes; parameter gradients accumulate.
namespace modalgraph::nn {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Stable-address parameter registry.
class ParamSet {
 public:
  Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  std::deque<Param>& all() { return params_; }
  const std::deque<Param>& all() const { return params_; }
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::deque<Param> params_;
};

enum class Activation { relu, tanh };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);

Matrix activate(const Matrix& pre, Activation a);
// d(out)/d(pre) applied to upstream gradient, given the activated output.
Matrix activate_backward(const Matrix& grad_out, const Matrix& out, Activation a);

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
void init_fan_in(Param& p, Eigen::Index fan_in, std::mt19937_64& rng);
void init_xavier(Param& p, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParamSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);

  Matrix forward(const Matrix& x) const;
  // Accumulates dW, db; returns dx.
  Matrix backward(const Matrix& x, const Matrix& grad_y) const;
  // Gradient wrt input only (no parameter accumulation).
  Matrix backward_input(const Matrix& grad_y) const;

  Eigen::Index in_dim() const { return W_->value.rows(); }
  Eigen::Index out_dim() const { return W_->value.cols(); }
  Param& weight() const { return *W_; }
  Param& bias() const { return *b_; }

 private:
  Param* W_ = nullptr;
  Param* b_ = nullptr;
};

// Max-pool GraphSAGE layer:
//   z_u = act(h_u W_pool + b_pool)
//   m_v = elementwise max over u in neighbours(v) (self-loop included by caller)
//   h'_v = act(m_v W) + b
class SageLayer {
 public:
  struct Cache {
    Matrix input;
    Matrix pooled_in;                 // z
    Matrix aggregated;                // m
    Matrix activated;                 // act(m W)
    Eigen::MatrixXi argmax;           // source node per (v, feature)
  };

  SageLayer() = default;
  SageLayer(ParamSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out,
            Activation act, std::mt19937_64& rng);

  Matrix forward(const Matrix& h, const std::vector<std::vector<int>>& neighbours, Cache& c) const;
  Matrix backward(const Matrix& grad_out, const std::vector<std::vector<int>>& neighbours,
                  const Cache& c) const;

 private:
  Linear pool_;
  Param* W_ = nullptr;
  Param* b_ = nullptr;
  Activation act_ = Activation::relu;
};

// Multihead attention block (Set Transformer MAB, no layer norm):
//   Q = X Wq, K = Y Wk, V = Y Wv, per head O_h = Q_h + softmax(Q_h K_h^T / sqrt(d)) V_h
//   out = O + act(O Wo)
class AttentionBlock {
 public:
  struct Cache {
    Matrix x, y, q, k, v, o, ff;
    std::vector<Matrix> attn;  // per head, rows(x) x rows(y)
  };

  AttentionBlock() = default;
  AttentionBlock(ParamSet& ps, const std::string& name, Eigen::Index dim_q, Eigen::Index dim_kv,
                 Eigen::Index dim, int heads, Activation act, std::mt19937_64& rng);

  Matrix forward(const Matrix& x, const Matrix& y, Cache& c) const;
  // Returns {dX, dY}.
  std::pair<Matrix, Matrix> backward(const Matrix& grad_out, const Cache& c) const;

 private:
  Linear wq_, wk_, wv_, wo_;
  int heads_ = 1;
  Eigen::Index dim_ = 0;
  Activation act_ = Activation::relu;
};

// Set2Set-style LSTM readout producing one pooled vector per step.
class SetLstm {
 public:
  struct Step {
    Matrix input;      // 1 x 2d  (q*_{t-1})
    Matrix h_prev, c_prev;
    Matrix gates;      // 1 x 4d activated: i f g o
    Matrix c, tanh_c, h;
    Matrix attn;       // N x 1 softmax weights
    Matrix readout;    // 1 x d
  };
  struct Cache {
    Matrix x;
    std::vector<Step> steps;
  };

  SetLstm() = default;
  SetLstm(ParamSet& ps, const std::string& name, Eigen::Index dim, std::mt19937_64& rng);

  // Returns steps x 2d, row t = [h_t, r_t].
  Matrix forward(const Matrix& x, int steps, Cache& c) const;
  Matrix backward(const Matrix& grad_out, const Cache& c) const;

 private:
  Param* W_ih_ = nullptr;  // 2d x 4d
  Param* W_hh_ = nullptr;  // d x 4d
  Param* b_ = nullptr;     // 1 x 4d
  Eigen::Index dim_ = 0;
};

// Stack of Linear layers with activation between them; no activation after the
// last layer.
class Mlp {
 public:
  struct Cache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
  };

  Mlp() = default;
  Mlp(ParamSet& ps, const std::string& name, const std::vector<Eigen::Index>& dims, Activation act,
      std::mt19937_64& rng);

  Matrix forward(const Matrix& x, Cache& c) const;
  Matrix backward(const Matrix& grad_out, const Cache& c) const;

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::relu;
};

// Row-wise softmax.
Matrix softmax_rows(const Matrix& s);
// Given softmax output A and dL/dA, returns dL/dS.
Matrix softmax_rows_backward(const Matrix& a, const Matrix& grad_a);

}  // namespace modalgraph::nn
