#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace lapran {

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<MatX<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const MatX<S>>;

/// Dense n-d array, flat row-major storage. Shapes are small so they are
/// carried by value.
template <typename S>
struct Tensor {
  std::vector<long> shape;
  VecX<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<long> sh) : shape(std::move(sh)) {
    data = VecX<S>::Zero(count(shape));
  }
  Tensor(std::vector<long> sh, VecX<S> d) : shape(std::move(sh)), data(std::move(d)) {
    if (data.size() != count(shape)) throw std::invalid_argument("tensor shape/data mismatch");
  }

  static long count(const std::vector<long>& sh) {
    return std::accumulate(sh.begin(), sh.end(), 1L, std::multiplies<long>());
  }

  long size() const { return data.size(); }
  long dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  int ndim() const { return static_cast<int>(shape.size()); }

  S& operator[](long i) { return data[i]; }
  S operator[](long i) const { return data[i]; }

  Tensor reshaped(std::vector<long> sh) const {
    if (count(sh) != size()) throw std::invalid_argument("reshape count mismatch");
    return Tensor(std::move(sh), data);
  }

  // Maps the tensor as a (rows x cols) row-major matrix.
  MatMap<S> mat(long rows, long cols) { return MatMap<S>(data.data(), rows, cols); }
  ConstMatMap<S> mat(long rows, long cols) const {
    return ConstMatMap<S>(data.data(), rows, cols);
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data = data.template cast<T>();
    return out;
  }
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

/// Deterministic RNG used throughout; a plain mt19937_64 whose state can be
/// serialized through operator<< for checkpoint round-trips.
using Rng = std::mt19937_64;

template <typename S>
Tensor<S> randn(std::vector<long> shape, Rng& rng, S stddev = S(1)) {
  Tensor<S> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (long i = 0; i < t.size(); ++i) t.data[i] = static_cast<S>(dist(rng) * stddev);
  return t;
}

}  // namespace lapran
