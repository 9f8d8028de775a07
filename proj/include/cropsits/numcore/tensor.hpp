#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cropsits/error.hpp"
#include "cropsits/rng.hpp"

namespace cropsits::num {

using Index = std::int64_t;
using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename Scalar>
using MatMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Scalar>
using ArrMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
template <typename Scalar>
using ConstArrMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

// Dense row-major tensor. Copies are shallow handles onto shared storage
// (clone() deep-copies); the gradient buffer is likewise shared, which is
// what lets a Tape write gradients that stay visible through the caller's
// handle after backward().
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<Scalar>>(check_extents(shape_), Scalar(0))) {}

  Tensor(Shape shape, std::vector<Scalar> values) : shape_(std::move(shape)) {
    if (numel(shape_) != static_cast<Index>(values.size()))
      throw DimensionError("Tensor: " + std::to_string(values.size()) + " values for shape " +
                           shape_str(shape_));
    check_extents(shape_);
    data_ = std::make_shared<std::vector<Scalar>>(std::move(values));
  }

  static Tensor full(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    for (Scalar& x : *t.data_) x = v;
    return t;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), Scalar(1)); }
  static Tensor scalar(Scalar v) { return Tensor({1}, {v}); }

  static Tensor uniform(Shape shape, Rng& rng, Scalar lo, Scalar hi) {
    Tensor t(std::move(shape));
    for (Scalar& x : *t.data_)
      x = static_cast<Scalar>(rng.next_uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return t;
  }

  static Tensor normal(Shape shape, Rng& rng, Scalar mean = 0, Scalar stddev = 1) {
    Tensor t(std::move(shape));
    for (Scalar& x : *t.data_)
      x = static_cast<Scalar>(static_cast<double>(mean) +
                              static_cast<double>(stddev) * rng.next_normal());
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_ ? static_cast<Index>(data_->size()) : 0; }
  bool is_scalar() const { return size() == 1; }

  std::span<Scalar> data() { return {data_->data(), data_->size()}; }
  std::span<const Scalar> data() const { return {data_->data(), data_->size()}; }

  Scalar value() const {
    if (!is_scalar()) throw ContractError("Tensor::value: not a scalar, shape " + shape_str(shape_));
    return (*data_)[0];
  }

  Scalar& operator[](Index i) { return (*data_)[static_cast<std::size_t>(i)]; }
  Scalar operator[](Index i) const { return (*data_)[static_cast<std::size_t>(i)]; }

  Scalar& operator()(Index i, Index j) { return (*data_)[static_cast<std::size_t>(i * shape_[1] + j)]; }
  Scalar operator()(Index i, Index j) const {
    return (*data_)[static_cast<std::size_t>(i * shape_[1] + j)];
  }
  Scalar& operator()(Index i, Index j, Index k) {
    return (*data_)[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  Scalar operator()(Index i, Index j, Index k) const {
    return (*data_)[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  Scalar& operator()(Index i, Index j, Index k, Index l) {
    return (*data_)[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  Scalar operator()(Index i, Index j, Index k, Index l) const {
    return (*data_)[static_cast<std::size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  // Same storage, new shape (element count must match).
  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size())
      throw DimensionError("reshape: " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.requires_grad_ = requires_grad_;
    if (data_) t.data_ = std::make_shared<std::vector<Scalar>>(*data_);
    return t;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> t(shape_);
    auto dst = t.data();
    auto src = data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
    return t;
  }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on) {
    requires_grad_ = on;
    if (on) ensure_grad();
    return *this;
  }

  bool has_grad() const { return grad_ != nullptr; }
  void ensure_grad() {
    if (!grad_) grad_ = std::make_shared<std::vector<Scalar>>(data_->size(), Scalar(0));
  }
  void zero_grad() {
    if (grad_)
      for (Scalar& g : *grad_) g = Scalar(0);
  }
  std::span<Scalar> grad() {
    if (!grad_) throw ContractError("Tensor::grad: no gradient buffer");
    return {grad_->data(), grad_->size()};
  }
  std::span<const Scalar> grad() const {
    if (!grad_) throw ContractError("Tensor::grad: no gradient buffer");
    return {grad_->data(), grad_->size()};
  }

  // Gradient buffer viewed as a tensor sharing that buffer.
  Tensor grad_view() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = grad_;
    if (!t.data_) throw ContractError("Tensor::grad_view: no gradient buffer");
    return t;
  }

  MatMap<Scalar> mat(Index rows, Index cols) {
    if (rows * cols != size())
      throw DimensionError("Tensor::mat: " + shape_str({rows, cols}) + " view of " +
                           shape_str(shape_));
    return MatMap<Scalar>(data_->data(), rows, cols);
  }
  ConstMatMap<Scalar> mat(Index rows, Index cols) const {
    if (rows * cols != size())
      throw DimensionError("Tensor::mat: " + shape_str({rows, cols}) + " view of " +
                           shape_str(shape_));
    return ConstMatMap<Scalar>(data_->data(), rows, cols);
  }
  MatMap<Scalar> mat() {
    if (rank() != 2) throw DimensionError("Tensor::mat: rank-2 expected, got " + shape_str(shape_));
    return mat(shape_[0], shape_[1]);
  }
  ConstMatMap<Scalar> mat() const {
    if (rank() != 2) throw DimensionError("Tensor::mat: rank-2 expected, got " + shape_str(shape_));
    return mat(shape_[0], shape_[1]);
  }
  ArrMap<Scalar> arr() { return ArrMap<Scalar>(data_->data(), size()); }
  ConstArrMap<Scalar> arr() const { return ConstArrMap<Scalar>(data_->data(), size()); }

  bool same_data(const Tensor& other) const { return data_ == other.data_; }

 private:
  static Index check_extents(const Shape& shape) {
    Index n = 1;
    for (Index d : shape) {
      if (d <= 0) throw DimensionError("Tensor: nonpositive extent in " + shape_str(shape));
      n *= d;
    }
    return n;
  }

  template <typename T>
  friend class Tensor;

  Shape shape_;
  std::shared_ptr<std::vector<Scalar>> data_;
  std::shared_ptr<std::vector<Scalar>> grad_;
  bool requires_grad_ = false;
};

}  // namespace cropsits::num
