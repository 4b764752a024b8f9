#pragma once

#include <Eigen/Dense>

#include <random>
#include <span>
#include <vector>

namespace simgen::nn {

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Fully connected stack with tanh hidden activations and a linear output.
/// Batches are column-major: one sample per column.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, then each layer's output
  };

  Mlp() = default;

  /// Orthogonal initialization scaled by `hidden_gain` for hidden layers and
  /// `output_gain` for the last one; zero biases.
  Mlp(const std::vector<int>& sizes, std::mt19937_64& rng, double hidden_gain, double output_gain);

  explicit Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {}

  [[nodiscard]] int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  [[nodiscard]] int output_dim() const { return static_cast<int>(layers_.back().weight.rows()); }
  [[nodiscard]] std::vector<int> sizes() const;
  [[nodiscard]] const std::vector<DenseLayer>& layers() const { return layers_; }

  [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

  /// Accumulates d(loss)/d(params) into `grad` (flat layout, see params())
  /// given d(loss)/d(output) for the cached batch.
  void backward(const Cache& cache, const Eigen::MatrixXd& grad_out, std::span<double> grad) const;

  [[nodiscard]] std::size_t param_count() const;

  /// Flat parameter layout: for each layer, weight (column-major) then bias.
  void read_params(std::span<double> out) const;
  void write_params(std::span<const double> in);

  [[nodiscard]] bool all_finite() const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Orthogonal matrix (rows x cols) scaled by `gain`.
Eigen::MatrixXd orthogonal(int rows, int cols, double gain, std::mt19937_64& rng);

/// Adam with bias correction.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  [[nodiscard]] double learning_rate() const { return lr_; }
  [[nodiscard]] long steps() const { return t_; }
  [[nodiscard]] const Eigen::VectorXd& first_moment() const { return m_; }
  [[nodiscard]] const Eigen::VectorXd& second_moment() const { return v_; }
  void restore(long t, Eigen::VectorXd m, Eigen::VectorXd v);

 private:
  double lr_ = 3e-4;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

}  // namespace simgen::nn
