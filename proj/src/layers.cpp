#include "fsdg/layers.hpp"

#include <algorithm>
#include <cmath>

#include "fsdg/error.hpp"

namespace fsdg {

using RowMap = Eigen::Map<Matrix>;
using ConstRowMap = Eigen::Map<const Matrix>;

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding)
    : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), pad_(padding) {
  weight_.resize(static_cast<std::size_t>(out_) * in_ * k_ * k_);
}

void Conv2d::init(Rng& rng) {
  const double bound = std::sqrt(6.0 / (in_ * k_ * k_));
  for (double& v : weight_.value) v = rng.uniform(-bound, bound);
}

void Conv2d::im2col(const Tensor& x, ColMatrix& cols, int oh, int ow) const {
  const int K = in_ * k_ * k_;
  cols.resize(K, static_cast<Eigen::Index>(x.n) * oh * ow);
  double* col = cols.data();
  for (int b = 0; b < x.n; ++b) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ci = 0; ci < in_; ++ci) {
          const double* plane = x.data.data() + x.index(b, ci, 0, 0);
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              *col++ = (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w) ? plane[iy * x.w + ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  if (x.c != in_) fail(ErrorCode::ShapeMismatch, "conv expects " + std::to_string(in_) + " input channels");
  const int oh = output_extent(x.h);
  const int ow = output_extent(x.w);
  ColMatrix cols;
  im2col(x, cols, oh, ow);
  const Eigen::Index N = cols.cols();
  const Eigen::Index P = static_cast<Eigen::Index>(oh) * ow;
  ConstRowMap W(weight_.value.data(), out_, cols.rows());
  // (N x out) column-major: each (sample, channel) plane is contiguous.
  Eigen::MatrixXd rt = cols.transpose() * W.transpose();
  Tensor y(x.n, out_, oh, ow);
  for (int b = 0; b < x.n; ++b) {
    for (int o = 0; o < out_; ++o) {
      std::copy_n(rt.data() + o * N + b * P, P, y.data.data() + y.index(b, o, 0, 0));
    }
  }
  if (train) {
    cols_ = std::move(cols);
    in_h_ = x.h;
    in_w_ = x.w;
    batch_ = x.n;
    out_h_ = oh;
    out_w_ = ow;
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, bool need_input_grad) {
  const Eigen::Index P = static_cast<Eigen::Index>(out_h_) * out_w_;
  const Eigen::Index N = static_cast<Eigen::Index>(batch_) * P;
  if (grad_out.n != batch_ || grad_out.c != out_ || grad_out.h != out_h_ || grad_out.w != out_w_) {
    fail(ErrorCode::ShapeMismatch, "conv backward: gradient shape does not match the cached forward");
  }
  Eigen::MatrixXd dt(N, out_);
  for (int b = 0; b < batch_; ++b) {
    for (int o = 0; o < out_; ++o) {
      std::copy_n(grad_out.data.data() + grad_out.index(b, o, 0, 0), P, dt.data() + o * N + b * P);
    }
  }
  const Eigen::Index K = cols_.rows();
  RowMap dW(weight_.grad.data(), out_, K);
  dW.noalias() += dt.transpose() * cols_.transpose();
  if (!need_input_grad) return {};

  ConstRowMap W(weight_.value.data(), out_, K);
  Eigen::MatrixXd dcols = W.transpose() * dt.transpose();  // K x N
  Tensor dx(batch_, in_, in_h_, in_w_);
  const double* col = dcols.data();
  for (int b = 0; b < batch_; ++b) {
    for (int oy = 0; oy < out_h_; ++oy) {
      for (int ox = 0; ox < out_w_; ++ox) {
        for (int ci = 0; ci < in_; ++ci) {
          double* plane = dx.data.data() + dx.index(b, ci, 0, 0);
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            for (int kx = 0; kx < k_; ++kx, ++col) {
              const int ix = ox * stride_ - pad_ + kx;
              if (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_) plane[iy * in_w_ + ix] += *col;
            }
          }
        }
      }
    }
  }
  return dx;
}

void Conv2d::collect(StateList& out, const std::string& prefix, bool backbone) {
  out.push_back({prefix + ".weight", &weight_.value, &weight_, backbone});
}

BatchNorm2d::BatchNorm2d(int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_.resize(channels);
  beta_.resize(channels);
  std::fill(gamma_.value.begin(), gamma_.value.end(), 1.0);
  running_mean_.assign(channels, 0.0);
  running_var_.assign(channels, 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  if (x.c != channels_) fail(ErrorCode::ShapeMismatch, "batch norm channel mismatch");
  Tensor y(x.n, x.c, x.h, x.w);
  const int P = x.plane();
  const double count = static_cast<double>(x.n) * P;
  if (train) {
    x_hat_ = Tensor(x.n, x.c, x.h, x.w);
    inv_std_.assign(channels_, 0.0);
  }
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (train) {
      double sum = 0.0;
      for (int b = 0; b < x.n; ++b) {
        const double* p = x.data.data() + x.index(b, c, 0, 0);
        for (int i = 0; i < P; ++i) sum += p[i];
      }
      mean = sum / count;
      double sq = 0.0;
      for (int b = 0; b < x.n; ++b) {
        const double* p = x.data.data() + x.index(b, c, 0, 0);
        for (int i = 0; i < P; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / count;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1 - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    const double g = gamma_.value[c], beta = beta_.value[c];
    for (int b = 0; b < x.n; ++b) {
      const std::size_t off = x.index(b, c, 0, 0);
      for (int i = 0; i < P; ++i) {
        const double xh = (x.data[off + i] - mean) * inv;
        if (train) x_hat_.data[off + i] = xh;
        y.data[off + i] = g * xh + beta;
      }
    }
    if (train) inv_std_[c] = inv;
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  if (!grad_out.same_shape(x_hat_)) fail(ErrorCode::ShapeMismatch, "batch norm backward shape mismatch");
  Tensor dx(grad_out.n, grad_out.c, grad_out.h, grad_out.w);
  const int P = grad_out.plane();
  const double count = static_cast<double>(grad_out.n) * P;
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int b = 0; b < grad_out.n; ++b) {
      const std::size_t off = grad_out.index(b, c, 0, 0);
      for (int i = 0; i < P; ++i) {
        sum_dy += grad_out.data[off + i];
        sum_dy_xh += grad_out.data[off + i] * x_hat_.data[off + i];
      }
    }
    gamma_.grad[c] += sum_dy_xh;
    beta_.grad[c] += sum_dy;
    const double k = gamma_.value[c] * inv_std_[c] / count;
    for (int b = 0; b < grad_out.n; ++b) {
      const std::size_t off = grad_out.index(b, c, 0, 0);
      for (int i = 0; i < P; ++i) {
        dx.data[off + i] = k * (count * grad_out.data[off + i] - sum_dy - x_hat_.data[off + i] * sum_dy_xh);
      }
    }
  }
  return dx;
}

void BatchNorm2d::collect(StateList& out, const std::string& prefix, bool backbone) {
  out.push_back({prefix + ".weight", &gamma_.value, &gamma_, backbone});
  out.push_back({prefix + ".bias", &beta_.value, &beta_, backbone});
  out.push_back({prefix + ".running_mean", &running_mean_, nullptr, backbone});
  out.push_back({prefix + ".running_var", &running_var_, nullptr, backbone});
}

Tensor Relu::forward(const Tensor& x, bool train) {
  Tensor y = x;
  if (train) mask_.assign(x.size(), 0);
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    const bool on = y.data[i] > 0.0;
    if (!on) y.data[i] = 0.0;
    if (train) mask_[i] = on;
  }
  return y;
}

Tensor Relu::backward(const Tensor& grad_out) const {
  if (grad_out.size() != mask_.size()) fail(ErrorCode::ShapeMismatch, "relu backward shape mismatch");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    if (!mask_[i]) dx.data[i] = 0.0;
  }
  return dx;
}

Linear::Linear(int in_features, int out_features) : in_(in_features), out_(out_features) {
  weight_.resize(static_cast<std::size_t>(in_) * out_);
  bias_.resize(out_);
}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  for (double& v : weight_.value) v = rng.uniform(-bound, bound);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0);
}

Matrix Linear::forward(const Matrix& x, bool train) {
  if (x.cols() != in_) fail(ErrorCode::ShapeMismatch, "linear layer input width mismatch");
  Matrix y = x * weight().transpose();
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    for (int k = 0; k < out_; ++k) y(i, k) += bias_.value[k];
  }
  if (train) input_ = x;
  return y;
}

Matrix Linear::backward(const Matrix& grad_out) {
  if (grad_out.rows() != input_.rows() || grad_out.cols() != out_) {
    fail(ErrorCode::ShapeMismatch, "linear backward shape mismatch");
  }
  RowMap dW(weight_.grad.data(), out_, in_);
  dW.noalias() += grad_out.transpose() * input_;
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    for (int k = 0; k < out_; ++k) bias_.grad[k] += grad_out(i, k);
  }
  return grad_out * weight();
}

void Linear::collect(StateList& out, const std::string& prefix, bool backbone) {
  out.push_back({prefix + ".weight", &weight_.value, &weight_, backbone});
  out.push_back({prefix + ".bias", &bias_.value, &bias_, backbone});
}

Matrix global_average_pool(const Tensor& x) {
  Matrix out(x.n, x.c);
  const int P = x.plane();
  for (int b = 0; b < x.n; ++b) {
    for (int c = 0; c < x.c; ++c) {
      const double* p = x.data.data() + x.index(b, c, 0, 0);
      double s = 0.0;
      for (int i = 0; i < P; ++i) s += p[i];
      out(b, c) = s / P;
    }
  }
  return out;
}

Tensor global_average_pool_backward(const Matrix& grad, int h, int w) {
  Tensor dx(static_cast<int>(grad.rows()), static_cast<int>(grad.cols()), h, w);
  const int P = h * w;
  for (int b = 0; b < dx.n; ++b) {
    for (int c = 0; c < dx.c; ++c) {
      double* p = dx.data.data() + dx.index(b, c, 0, 0);
      std::fill(p, p + P, grad(b, c) / P);
    }
  }
  return dx;
}

std::size_t parameter_count(const StateList& state) {
  std::size_t n = 0;
  for (const auto& e : state) {
    if (e.parameter) n += e.values->size();
  }
  return n;
}

}  // namespace fsdg
