#include "modalgraph/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace modalgraph::nn {

Param& ParamSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  require(find(name) == nullptr, "ParamSet: duplicate parameter '" + name + "'");
  params_.push_back({name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
  return params_.back();
}

Param* ParamSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Param* ParamSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw InvalidArgument("unknown activation '" + name + "' (expected relu or tanh)");
}

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Matrix activate(const Matrix& pre, Activation a) {
  if (a == Activation::relu) return pre.cwiseMax(0.0);
  return pre.array().tanh().matrix();
}

Matrix activate_backward(const Matrix& grad_out, const Matrix& out, Activation a) {
  if (a == Activation::relu) return (out.array() > 0.0).select(grad_out, 0.0);
  return (grad_out.array() * (1.0 - out.array().square())).matrix();
}

void init_fan_in(Param& p, Eigen::Index fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index j = 0; j < p.value.cols(); ++j)
    for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = u(rng);
}

void init_xavier(Param& p, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index j = 0; j < p.value.cols(); ++j)
    for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = u(rng);
}

Linear::Linear(ParamSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out,
               std::mt19937_64& rng) {
  W_ = &ps.add(name + ".weight", in, out);
  b_ = &ps.add(name + ".bias", 1, out);
  init_fan_in(*W_, in, rng);
  init_fan_in(*b_, in, rng);
}

Matrix Linear::forward(const Matrix& x) const {
  Matrix y = x * W_->value;
  y.rowwise() += b_->value.row(0);
  return y;
}

Matrix Linear::backward(const Matrix& x, const Matrix& grad_y) const {
  W_->grad.noalias() += x.transpose() * grad_y;
  b_->grad += grad_y.colwise().sum();
  return grad_y * W_->value.transpose();
}

Matrix Linear::backward_input(const Matrix& grad_y) const { return grad_y * W_->value.transpose(); }

SageLayer::SageLayer(ParamSet& ps, const std::string& name, Eigen::Index in, Eigen::Index out,
                     Activation act, std::mt19937_64& rng)
    : pool_(ps, name + ".pool", in, out, rng), act_(act) {
  W_ = &ps.add(name + ".weight", out, out);
  b_ = &ps.add(name + ".bias", 1, out);
  init_fan_in(*W_, out, rng);
  init_fan_in(*b_, out, rng);
}

Matrix SageLayer::forward(const Matrix& h, const std::vector<std::vector<int>>& neighbours,
                          Cache& c) const {
  const Eigen::Index n = h.rows();
  require(static_cast<Eigen::Index>(neighbours.size()) == n, "SageLayer: neighbour list size != node count");
  require(h.cols() == pool_.in_dim(), "SageLayer: input feature dimension mismatch");
  c.input = h;
  c.pooled_in = activate(pool_.forward(h), act_);
  const Eigen::Index f = c.pooled_in.cols();
  c.aggregated.resize(n, f);
  c.argmax.resize(n, f);
  for (Eigen::Index v = 0; v < n; ++v) {
    require(!neighbours[v].empty(), "SageLayer: node without neighbours (missing self-loop)");
    for (Eigen::Index k = 0; k < f; ++k) {
      int best = neighbours[v][0];
      double value = c.pooled_in(best, k);
      for (int u : neighbours[v]) {
        if (c.pooled_in(u, k) > value) {
          value = c.pooled_in(u, k);
          best = u;
        }
      }
      c.aggregated(v, k) = value;
      c.argmax(v, k) = best;
    }
  }
  c.activated = activate(c.aggregated * W_->value, act_);
  Matrix out = c.activated;
  out.rowwise() += b_->value.row(0);
  return out;
}

Matrix SageLayer::backward(const Matrix& grad_out, const std::vector<std::vector<int>>& /*neighbours*/,
                           const Cache& c) const {
  b_->grad += grad_out.colwise().sum();
  const Matrix d_pre = activate_backward(grad_out, c.activated, act_);
  W_->grad.noalias() += c.aggregated.transpose() * d_pre;
  const Matrix d_agg = d_pre * W_->value.transpose();
  Matrix d_pool = Matrix::Zero(c.pooled_in.rows(), c.pooled_in.cols());
  for (Eigen::Index k = 0; k < d_agg.cols(); ++k)
    for (Eigen::Index v = 0; v < d_agg.rows(); ++v) d_pool(c.argmax(v, k), k) += d_agg(v, k);
  return pool_.backward(c.input, activate_backward(d_pool, c.pooled_in, act_));
}

AttentionBlock::AttentionBlock(ParamSet& ps, const std::string& name, Eigen::Index dim_q,
                               Eigen::Index dim_kv, Eigen::Index dim, int heads, Activation act,
                               std::mt19937_64& rng)
    : wq_(ps, name + ".q", dim_q, dim, rng),
      wk_(ps, name + ".k", dim_kv, dim, rng),
      wv_(ps, name + ".v", dim_kv, dim, rng),
      wo_(ps, name + ".o", dim, dim, rng),
      heads_(heads),
      dim_(dim),
      act_(act) {
  require(heads >= 1 && dim % heads == 0, "AttentionBlock: dim must be divisible by heads");
}

Matrix AttentionBlock::forward(const Matrix& x, const Matrix& y, Cache& c) const {
  c.x = x;
  c.y = y;
  c.q = wq_.forward(x);
  c.k = wk_.forward(y);
  c.v = wv_.forward(y);
  const Eigen::Index dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  c.o = c.q;
  c.attn.resize(heads_);
  for (int h = 0; h < heads_; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    c.attn[h] = softmax_rows(scale * (qh * kh.transpose()));
    c.o.middleCols(h * dh, dh).noalias() += c.attn[h] * vh;
  }
  c.ff = activate(wo_.forward(c.o), act_);
  return c.o + c.ff;
}

std::pair<Matrix, Matrix> AttentionBlock::backward(const Matrix& grad_out, const Cache& c) const {
  Matrix d_o = grad_out + wo_.backward(c.o, activate_backward(grad_out, c.ff, act_));
  const Eigen::Index dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  Matrix d_q = d_o;  // residual
  Matrix d_k = Matrix::Zero(c.k.rows(), c.k.cols());
  Matrix d_v = Matrix::Zero(c.v.rows(), c.v.cols());
  for (int h = 0; h < heads_; ++h) {
    const auto doh = d_o.middleCols(h * dh, dh);
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    const Matrix d_attn = doh * vh.transpose();
    d_v.middleCols(h * dh, dh).noalias() += c.attn[h].transpose() * doh;
    const Matrix d_s = scale * softmax_rows_backward(c.attn[h], d_attn);
    d_q.middleCols(h * dh, dh).noalias() += d_s * kh;
    d_k.middleCols(h * dh, dh).noalias() += d_s.transpose() * qh;
  }
  Matrix d_x = wq_.backward(c.x, d_q);
  Matrix d_y = wk_.backward(c.y, d_k) + wv_.backward(c.y, d_v);
  return {std::move(d_x), std::move(d_y)};
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

SetLstm::SetLstm(ParamSet& ps, const std::string& name, Eigen::Index dim, std::mt19937_64& rng)
    : dim_(dim) {
  W_ih_ = &ps.add(name + ".w_ih", 2 * dim, 4 * dim);
  W_hh_ = &ps.add(name + ".w_hh", dim, 4 * dim);
  b_ = &ps.add(name + ".bias", 1, 4 * dim);
  init_fan_in(*W_ih_, dim, rng);
  init_fan_in(*W_hh_, dim, rng);
  init_fan_in(*b_, dim, rng);
}

Matrix SetLstm::forward(const Matrix& x, int steps, Cache& c) const {
  require(x.cols() == dim_, "SetLstm: feature dimension mismatch");
  const Eigen::Index d = dim_;
  c.x = x;
  c.steps.clear();
  Matrix out(steps, 2 * d);
  Matrix qstar = Matrix::Zero(1, 2 * d);
  Matrix h = Matrix::Zero(1, d), cell = Matrix::Zero(1, d);
  for (int t = 0; t < steps; ++t) {
    Step s;
    s.input = qstar;
    s.h_prev = h;
    s.c_prev = cell;
    Matrix pre = qstar * W_ih_->value + h * W_hh_->value + b_->value;
    s.gates.resize(1, 4 * d);
    for (Eigen::Index k = 0; k < d; ++k) {
      s.gates(0, k) = sigmoid(pre(0, k));
      s.gates(0, d + k) = sigmoid(pre(0, d + k));
      s.gates(0, 2 * d + k) = std::tanh(pre(0, 2 * d + k));
      s.gates(0, 3 * d + k) = sigmoid(pre(0, 3 * d + k));
    }
    const auto i = s.gates.leftCols(d).array();
    const auto f = s.gates.middleCols(d, d).array();
    const auto g = s.gates.middleCols(2 * d, d).array();
    const auto o = s.gates.rightCols(d).array();
    s.c = (f * cell.array() + i * g).matrix();
    s.tanh_c = s.c.array().tanh().matrix();
    s.h = (o * s.tanh_c.array()).matrix();
    const Matrix scores = x * s.h.transpose();  // N x 1
    s.attn = softmax_rows(scores.transpose()).transpose();
    s.readout = s.attn.transpose() * x;
    out.block(t, 0, 1, d) = s.h;
    out.block(t, d, 1, d) = s.readout;
    qstar = out.row(t);
    h = s.h;
    cell = s.c;
    c.steps.push_back(std::move(s));
  }
  return out;
}

Matrix SetLstm::backward(const Matrix& grad_out, const Cache& c) const {
  const Eigen::Index d = dim_;
  Matrix d_x = Matrix::Zero(c.x.rows(), c.x.cols());
  Matrix d_qstar_next = Matrix::Zero(1, 2 * d);
  Matrix d_h_next = Matrix::Zero(1, d), d_c_next = Matrix::Zero(1, d);
  for (int t = static_cast<int>(c.steps.size()) - 1; t >= 0; --t) {
    const Step& s = c.steps[t];
    const Matrix d_out = grad_out.row(t) + d_qstar_next;
    Matrix d_h = d_out.leftCols(d) + d_h_next;
    const Matrix d_r = d_out.rightCols(d);
    // readout r = a^T x
    const Matrix d_a = c.x * d_r.transpose();  // N x 1
    d_x.noalias() += s.attn * d_r;
    const double dot = (s.attn.array() * d_a.array()).sum();
    const Matrix d_e = (s.attn.array() * (d_a.array() - dot)).matrix();  // N x 1
    // scores e = x h^T
    d_h.noalias() += d_e.transpose() * c.x;
    d_x.noalias() += d_e * s.h;
    const auto i = s.gates.leftCols(d).array();
    const auto f = s.gates.middleCols(d, d).array();
    const auto g = s.gates.middleCols(2 * d, d).array();
    const auto o = s.gates.rightCols(d).array();
    const auto tc = s.tanh_c.array();
    const Eigen::ArrayXXd d_o = d_h.array() * tc;
    const Eigen::ArrayXXd d_c = d_h.array() * o * (1.0 - tc.square()) + d_c_next.array();
    Matrix d_pre(1, 4 * d);
    d_pre.leftCols(d) = (d_c * g * i * (1.0 - i)).matrix();
    d_pre.middleCols(d, d) = (d_c * s.c_prev.array() * f * (1.0 - f)).matrix();
    d_pre.middleCols(2 * d, d) = (d_c * i * (1.0 - g.square())).matrix();
    d_pre.rightCols(d) = (d_o * o * (1.0 - o)).matrix();
    W_ih_->grad.noalias() += s.input.transpose() * d_pre;
    W_hh_->grad.noalias() += s.h_prev.transpose() * d_pre;
    b_->grad += d_pre;
    d_qstar_next = d_pre * W_ih_->value.transpose();
    d_h_next = d_pre * W_hh_->value.transpose();
    d_c_next = (d_c * f).matrix();
  }
  return d_x;
}

Mlp::Mlp(ParamSet& ps, const std::string& name, const std::vector<Eigen::Index>& dims, Activation act,
         std::mt19937_64& rng)
    : act_(act) {
  require(dims.size() >= 2, "Mlp: need at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    layers_.emplace_back(ps, name + "." + std::to_string(l), dims[l], dims[l + 1], rng);
}

Matrix Mlp::forward(const Matrix& x, Cache& c) const {
  c.inputs.clear();
  c.outputs.clear();
  Matrix cur = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    c.inputs.push_back(cur);
    cur = layers_[l].forward(cur);
    if (l + 1 < layers_.size()) cur = activate(cur, act_);
    c.outputs.push_back(cur);
  }
  return cur;
}

Matrix Mlp::backward(const Matrix& grad_out, const Cache& c) const {
  Matrix g = grad_out;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    if (l + 1 < static_cast<int>(layers_.size())) g = activate_backward(g, c.outputs[l], act_);
    g = layers_[l].backward(c.inputs[l], g);
  }
  return g;
}

Matrix softmax_rows(const Matrix& s) {
  Matrix a(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double m = s.row(i).maxCoeff();
    a.row(i) = (s.row(i).array() - m).exp().matrix();
    a.row(i) /= a.row(i).sum();
  }
  return a;
}

Matrix softmax_rows_backward(const Matrix& a, const Matrix& grad_a) {
  const Vector dots = (a.array() * grad_a.array()).rowwise().sum();
  return (a.array() * (grad_a.array().colwise() - dots.array())).matrix();
}

}  // namespace modalgraph::nn
