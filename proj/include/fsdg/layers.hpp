#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "fsdg/featurespace.hpp"
#include "fsdg/tensor.hpp"

namespace fsdg {

/// Trainable array with its gradient and optimizer state.
struct Parameter {
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> velocity;

  void resize(std::size_t n) {
    value.assign(n, 0.0);
    grad.assign(n, 0.0);
    velocity.assign(n, 0.0);
  }
  std::size_t size() const { return value.size(); }
};

/// Entry in a module's state listing: parameters are trained, buffers
/// (batch-norm running statistics) are only saved and restored.
struct StateEntry {
  std::string name;
  std::vector<double>* values = nullptr;
  Parameter* parameter = nullptr;  // null for buffers
  bool backbone = false;
};

using StateList = std::vector<StateEntry>;

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, bool train);
  /// Accumulates weight gradients; returns dL/dx unless `need_input_grad` is false.
  Tensor backward(const Tensor& grad_out, bool need_input_grad = true);
  void collect(StateList& out, const std::string& prefix, bool backbone);

  int out_channels() const { return out_; }
  int output_extent(int extent) const { return (extent + 2 * pad_ - k_) / stride_ + 1; }

 private:
  using ColMatrix = Eigen::MatrixXd;
  void im2col(const Tensor& x, ColMatrix& cols, int oh, int ow) const;

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Parameter weight_;  // out x (in k k), row-major
  // Forward cache.
  ColMatrix cols_;
  int in_h_ = 0, in_w_ = 0, batch_ = 0, out_h_ = 0, out_w_ = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& grad_out);
  void collect(StateList& out, const std::string& prefix, bool backbone);

 private:
  int channels_ = 0;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  Parameter gamma_, beta_;
  std::vector<double> running_mean_, running_var_;
  Tensor x_hat_;
  std::vector<double> inv_std_;
};

/// In-place friendly rectifier; keeps the activation mask for backward.
class Relu {
 public:
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& grad_out) const;

 private:
  std::vector<unsigned char> mask_;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features);

  void init(Rng& rng);
  Matrix forward(const Matrix& x, bool train);
  Matrix backward(const Matrix& grad_out);
  void collect(StateList& out, const std::string& prefix, bool backbone);

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  /// Row k is the weight vector of output k.
  Eigen::Map<const Matrix> weight() const { return {weight_.value.data(), out_, in_}; }
  std::span<const double> bias() const { return bias_.value; }

 private:
  int in_ = 0, out_ = 0;
  Parameter weight_, bias_;
  Matrix input_;
};

/// Spatial mean per channel: B x C x H x W -> B x C.
Matrix global_average_pool(const Tensor& x);
Tensor global_average_pool_backward(const Matrix& grad, int h, int w);

std::size_t parameter_count(const StateList& state);

}  // namespace fsdg
