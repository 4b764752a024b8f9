#include "simgen/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace simgen::nn {

Eigen::MatrixXd orthogonal(int rows, int cols, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool tall = rows >= cols;
  const int r = tall ? rows : cols;
  const int c = tall ? cols : rows;
  Eigen::MatrixXd a(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(r, c);
  const Eigen::MatrixXd rmat = qr.matrixQR().topRows(c).triangularView<Eigen::Upper>();
  for (int j = 0; j < c; ++j) {
    if (rmat(j, j) < 0) q.col(j) *= -1.0;
  }
  q *= gain;
  return tall ? q : Eigen::MatrixXd(q.transpose());
}

Mlp::Mlp(const std::vector<int>& sizes, std::mt19937_64& rng, double hidden_gain, double output_gain) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const bool last = l + 2 == sizes.size();
    DenseLayer layer;
    layer.weight = orthogonal(sizes[l + 1], sizes[l], last ? output_gain : hidden_gain, rng);
    layer.bias = Eigen::VectorXd::Zero(sizes[l + 1]);
    layers_.push_back(std::move(layer));
  }
}

std::vector<int> Mlp::sizes() const {
  std::vector<int> s{input_dim()};
  for (const auto& l : layers_) s.push_back(static_cast<int>(l.weight.rows()));
  return s;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  if (layers_.empty() || x.rows() != layers_.front().weight.cols()) throw std::invalid_argument("Mlp::forward: input dimension mismatch");
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = (l + 1 < layers_.size()) ? Eigen::MatrixXd(z.array().tanh()) : z;
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (layers_.empty() || x.rows() != layers_.front().weight.cols()) throw std::invalid_argument("Mlp::forward: input dimension mismatch");
  cache.activations.clear();
  cache.activations.push_back(x);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * cache.activations.back();
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) z = z.array().tanh();
    cache.activations.push_back(std::move(z));
  }
  return cache.activations.back();
}

void Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_out, std::span<double> grad) const {
  if (grad.size() != param_count()) throw std::invalid_argument("Mlp::backward: gradient buffer size mismatch");
  // Offsets of each layer's block in the flat layout.
  std::vector<std::size_t> offset(layers_.size());
  std::size_t pos = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offset[l] = pos;
    pos += static_cast<std::size_t>(layers_[l].weight.size() + layers_[l].bias.size());
  }
  Eigen::MatrixXd delta = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Eigen::MatrixXd& input = cache.activations[l];
    Eigen::Map<Eigen::MatrixXd> dw(grad.data() + offset[l], layer.weight.rows(), layer.weight.cols());
    Eigen::Map<Eigen::VectorXd> db(grad.data() + offset[l] + layer.weight.size(), layer.bias.size());
    dw.noalias() += delta * input.transpose();
    db += delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = layer.weight.transpose() * delta;
      delta = back.array() * (1.0 - input.array().square());
    }
  }
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void Mlp::read_params(std::span<double> out) const {
  if (out.size() != param_count()) throw std::invalid_argument("Mlp::read_params: size mismatch");
  std::size_t pos = 0;
  for (const auto& l : layers_) {
    std::copy(l.weight.data(), l.weight.data() + l.weight.size(), out.data() + pos);
    pos += static_cast<std::size_t>(l.weight.size());
    std::copy(l.bias.data(), l.bias.data() + l.bias.size(), out.data() + pos);
    pos += static_cast<std::size_t>(l.bias.size());
  }
}

void Mlp::write_params(std::span<const double> in) {
  if (in.size() != param_count()) throw std::invalid_argument("Mlp::write_params: size mismatch");
  std::size_t pos = 0;
  for (auto& l : layers_) {
    std::copy(in.data() + pos, in.data() + pos + l.weight.size(), l.weight.data());
    pos += static_cast<std::size_t>(l.weight.size());
    std::copy(in.data() + pos, in.data() + pos + l.bias.size(), l.bias.data());
    pos += static_cast<std::size_t>(l.bias.size());
  }
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void Adam::restore(long t, Eigen::VectorXd m, Eigen::VectorXd v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace simgen::nn
