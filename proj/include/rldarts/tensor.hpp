#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "rldarts/common.hpp"

namespace rldarts {

inline long long numel(const std::vector<int>& shape) {
  long long n = 1;
  for (int d : shape) {
    if (d <= 0) throw UsageError("tensor shape entries must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense N-dimensional array, row-major flat buffer. Images are N x H x W x C,
// feature matrices N x F, conv kernels kh x kw x Cin x Cout. The scalar type
// selects the mode: float for training, double for gradient checking.
template <typename S>
struct Tensor {
  using Buf = Eigen::Array<S, Eigen::Dynamic, 1>;

  std::vector<int> shape;
  Buf data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp)
      : shape(std::move(shp)), data(Buf::Zero(numel(shape))) {}
  Tensor(std::vector<int> shp, Buf buf) : shape(std::move(shp)), data(std::move(buf)) {
    if (numel(shape) != data.size())
      throw UsageError("tensor buffer length does not match shape " + shape_str(shape));
  }

  static Tensor zeros(std::vector<int> shp) { return Tensor(std::move(shp)); }
  static Tensor full(std::vector<int> shp, S v) {
    Tensor t(std::move(shp));
    t.data.setConstant(v);
    return t;
  }
  static Tensor scalar(S v) { return full({1}, v); }
  static Tensor from(std::vector<int> shp, std::initializer_list<S> vals) {
    Tensor t(std::move(shp));
    if (static_cast<long long>(vals.size()) != t.size())
      throw UsageError("initializer length does not match shape");
    int i = 0;
    for (S v : vals) t.data[i++] = v;
    return t;
  }

  long long size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  // multi-index accessor, mainly for tests and env rendering
  S& at(std::initializer_list<int> idx) {
    return data[flat_index(idx)];
  }
  S at(std::initializer_list<int> idx) const {
    return data[flat_index(idx)];
  }

  bool all_finite() const { return data.isFinite().all(); }

  template <typename S2>
  Tensor<S2> cast() const {
    return Tensor<S2>(shape, data.template cast<S2>());
  }

 private:
  Eigen::Index flat_index(std::initializer_list<int> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw UsageError("index rank mismatch for shape " + shape_str(shape));
    Eigen::Index f = 0;
    int k = 0;
    for (int i : idx) {
      f = f * shape[static_cast<size_t>(k)] + i;
      ++k;
    }
    return f;
  }
};

template <typename S>
bool same_shape(const Tensor<S>& a, const Tensor<S>& b) {
  return a.shape == b.shape;
}

}  // namespace rldarts
