#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace hrc {

/// Fully connected network with rectifier hidden layers and a linear output
/// layer. Samples are columns of the batch matrices.
template <typename Scalar = double>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weights;  // out x in
    Vector bias;     // out
  };

  Mlp() = default;

  /// Zero-initialized network with the given widths (input first).
  explicit Mlp(const std::vector<int>& sizes) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
    for (std::size_t i = 1; i < sizes.size(); ++i) {
      if (sizes[i - 1] <= 0 || sizes[i] <= 0) throw std::invalid_argument("Mlp widths must be > 0");
      layers_.push_back({Matrix::Zero(sizes[i], sizes[i - 1]), Vector::Zero(sizes[i])});
    }
  }

  /// He-normal weights, zero biases.
  template <typename Rng>
  static Mlp he_initialized(const std::vector<int>& sizes, Rng& rng) {
    Mlp net(sizes);
    for (auto& layer : net.layers_) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / layer.weights.cols()));
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
          layer.weights(r, c) = static_cast<Scalar>(dist(rng));
    }
    return net;
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  int input_size() const { return static_cast<int>(layers_.front().weights.cols()); }
  int output_size() const { return static_cast<int>(layers_.back().weights.rows()); }

  std::vector<int> sizes() const {
    std::vector<int> s{input_size()};
    for (const auto& l : layers_) s.push_back(static_cast<int>(l.weights.rows()));
    return s;
  }

  Vector forward(const Vector& x) const { return forward_batch(x); }

  Matrix forward_batch(const Matrix& inputs) const {
    Matrix a = inputs;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z = (layers_[i].weights * a).colwise() + layers_[i].bias;
      a = is_hidden(i) ? Matrix(z.cwiseMax(Scalar(0))) : z;
    }
    return a;
  }

  /// Parameter gradients of a loss whose gradient w.r.t. the network output
  /// is `output_grad` (same shape as forward_batch(inputs)).
  std::vector<Layer> backward(const Matrix& inputs, const Matrix& output_grad) const {
    std::vector<Matrix> activations{inputs};
    std::vector<Matrix> pre;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z = (layers_[i].weights * activations.back()).colwise() + layers_[i].bias;
      pre.push_back(z);
      activations.push_back(is_hidden(i) ? Matrix(z.cwiseMax(Scalar(0))) : z);
    }

    std::vector<Layer> grads(layers_.size());
    Matrix delta = output_grad;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      if (is_hidden(k)) delta = delta.cwiseProduct((pre[k].array() > Scalar(0)).template cast<Scalar>().matrix());
      grads[k].weights = delta * activations[k].transpose();
      grads[k].bias = delta.rowwise().sum();
      if (k > 0) delta = layers_[k].weights.transpose() * delta;
    }
    return grads;
  }

  void apply_gradient(const std::vector<Layer>& grads, Scalar learning_rate) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i].weights.noalias() -= learning_rate * grads[i].weights;
      layers_[i].bias.noalias() -= learning_rate * grads[i].bias;
    }
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  bool operator==(const Mlp& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& a = layers_[i];
      const auto& b = other.layers_[i];
      if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols()) return false;
      if (a.weights != b.weights || a.bias != b.bias) return false;
    }
    return true;
  }

 private:
  bool is_hidden(std::size_t i) const { return i + 1 < layers_.size(); }

  std::vector<Layer> layers_;
};

template <typename Scalar>
bool gradients_finite(const std::vector<typename Mlp<Scalar>::Layer>& grads) {
  for (const auto& g : grads)
    if (!g.weights.allFinite() || !g.bias.allFinite()) return false;
  return true;
}

}  // namespace hrc
