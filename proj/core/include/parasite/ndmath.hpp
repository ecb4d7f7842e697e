#pragma once

// Image and coefficient tensors, orthonormal 2D DCT, and the pixel-space
// similarity measures used across the pipeline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "parasite/errors.hpp"

namespace parasite {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 1;

  [[nodiscard]] std::size_t size() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  [[nodiscard]] bool square() const noexcept { return height == width; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

// Dense H x W x C grid stored row-major with interleaved channels. The tag
// keeps spatial images and DCT coefficients from being mixed up by accident.
template <class Tag>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {
    check_shape(shape);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    check_shape(shape);
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_.str());
    }
  }

  static Tensor square(int n, int channels = 1, double fill = 0.0) { return Tensor(Shape{n, n, channels}, fill); }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] int height() const noexcept { return shape_.height; }
  [[nodiscard]] int width() const noexcept { return shape_.width; }
  [[nodiscard]] int channels() const noexcept { return shape_.channels; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] double& at(int row, int col, int ch = 0) noexcept { return data_[index(row, col, ch)]; }
  [[nodiscard]] double at(int row, int col, int ch = 0) const noexcept { return data_[index(row, col, ch)]; }
  [[nodiscard]] double& operator[](std::size_t i) noexcept { return data_[i]; }
  [[nodiscard]] double operator[](std::size_t i) const noexcept { return data_[i]; }

  [[nodiscard]] std::span<double> values() noexcept { return data_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return data_; }
  [[nodiscard]] const std::vector<double>& vector() const noexcept { return data_; }

  Tensor& operator+=(const Tensor& rhs) {
    require_same_shape(rhs);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& rhs) {
    require_same_shape(rhs);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor lhs, const Tensor& rhs) { return lhs += rhs; }
  friend Tensor operator-(Tensor lhs, const Tensor& rhs) { return lhs -= rhs; }
  friend Tensor operator*(Tensor lhs, double s) { return lhs *= s; }
  friend Tensor operator*(double s, Tensor rhs) { return rhs *= s; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

  void require_same_shape(const Tensor& other) const {
    if (!(shape_ == other.shape_)) {
      throw ShapeError("shape mismatch: " + shape_.str() + " vs " + other.shape_.str());
    }
  }

 private:
  static void check_shape(const Shape& s) {
    if (s.height < 0 || s.width < 0 || s.channels < 1) throw ShapeError("invalid tensor shape " + s.str());
  }
  [[nodiscard]] std::size_t index(int row, int col, int ch) const noexcept {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(shape_.width) + static_cast<std::size_t>(col)) *
               static_cast<std::size_t>(shape_.channels) +
           static_cast<std::size_t>(ch);
  }

  Shape shape_{};
  std::vector<double> data_;
};

struct ImageTag {};
struct CoefTag {};

// Spatial image, nominally in [-1, 1].
using ImageTensor = Tensor<ImageTag>;
// Orthonormal DCT-II coefficients of an ImageTensor.
using CoefTensor = Tensor<CoefTag>;

// Per-channel orthonormal 2D DCT-II over the whole (square) image.
CoefTensor dct2(const ImageTensor& img);
// Inverse of dct2 (orthonormal DCT-III). The result is not clamped.
ImageTensor idct2(const CoefTensor& coef);

// Orthonormal N x N DCT-II basis: row k holds a_k cos(pi (2n+1) k / 2N).
std::vector<double> dct_basis(int n);

// Peak-to-peak range of the nominal [-1, 1] pixel interval.
inline constexpr double kPsnrPeak = 2.0;

// 10 log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const ImageTensor& a, const ImageTensor& b);
// Pearson correlation of the flattened pixels; 0 when either side is constant.
double ncc(const ImageTensor& a, const ImageTensor& b);
double mse(const ImageTensor& a, const ImageTensor& b);

template <class Tag>
double l2_norm(const Tensor<Tag>& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v * v;
  return std::sqrt(acc);
}

template <class Tag>
double max_abs_diff(const Tensor<Tag>& a, const Tensor<Tag>& b) {
  a.require_same_shape(b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(std::span<const double> values) noexcept;

ImageTensor clamp_unit(ImageTensor img);
// Nearest-neighbour resample to a size x size image with the same channel count.
ImageTensor resize_nearest(const ImageTensor& img, int size);

}  // namespace parasite
