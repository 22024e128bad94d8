#pragma once

#include <algorithm>
#include <cstddef>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hytip::nn {

/// NCHW extent of a dense tensor. Batch is almost always 1 in this codebase.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "[" << n << "," << c << "," << h << "," << w << "]";
    return os.str();
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(s.numel(), fill) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw std::invalid_argument("Tensor: negative extent " + s.str());
  }
  Tensor(Shape s, std::vector<T> values) : shape_(s), data_(std::move(values)) {
    if (data_.size() != s.numel())
      throw std::invalid_argument("Tensor: value count does not match " + s.str());
  }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  T& at(int b, int ch, int y, int x) { return data_[index(b, ch, y, x)]; }
  const T& at(int b, int ch, int y, int x) const { return data_[index(b, ch, y, x)]; }

  T* plane(int b, int ch) { return data_.data() + index(b, ch, 0, 0); }
  const T* plane(int b, int ch) const { return data_.data() + index(b, ch, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  Tensor& operator+=(const Tensor& o) {
    if (o.shape_ != shape_)
      throw std::invalid_argument("Tensor +=: " + shape_.str() + " vs " + o.shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

/// Largest absolute elementwise difference; shapes must agree.
template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, static_cast<double>(a[i] > b[i] ? a[i] - b[i] : b[i] - a[i]));
  return m;
}

}  // namespace hytip::nn
