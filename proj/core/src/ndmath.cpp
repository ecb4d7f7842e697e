#include "parasite/ndmath.hpp"

#include <limits>
#include <numbers>

namespace parasite {

std::string Shape::str() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

std::vector<double> dct_basis(int n) {
  std::vector<double> basis(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  const double dc = std::sqrt(1.0 / n);
  const double ac = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k) {
    const double scale = k == 0 ? dc : ac;
    for (int i = 0; i < n; ++i) {
      basis[static_cast<std::size_t>(k) * n + i] = scale * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
  }
  return basis;
}

namespace {

template <class Tag>
void require_transformable(const Tensor<Tag>& t) {
  if (t.empty()) throw ShapeError("DCT of an empty tensor");
  if (!t.shape().square()) throw ShapeError("DCT requires a square tensor, got " + t.shape().str());
}

// Separable transform: rows then columns, each as a dense N x N product with
// either the basis (forward) or its transpose (inverse).
std::vector<double> separable(const std::vector<double>& in, const Shape& shape, bool inverse) {
  const int n = shape.height;
  const int c = shape.channels;
  const std::vector<double> basis = dct_basis(n);
  auto coeff = [&](int out, int in_idx) {
    return inverse ? basis[static_cast<std::size_t>(in_idx) * n + out] : basis[static_cast<std::size_t>(out) * n + in_idx];
  };
  auto at = [&](int row, int col, int ch) { return (static_cast<std::size_t>(row) * n + col) * c + ch; };

  std::vector<double> tmp(in.size(), 0.0);
  std::vector<double> out(in.size(), 0.0);
  for (int ch = 0; ch < c; ++ch) {
    for (int row = 0; row < n; ++row) {
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += coeff(k, i) * in[at(row, i, ch)];
        tmp[at(row, k, ch)] = acc;
      }
    }
    for (int col = 0; col < n; ++col) {
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += coeff(k, i) * tmp[at(i, col, ch)];
        out[at(k, col, ch)] = acc;
      }
    }
  }
  return out;
}

}  // namespace

CoefTensor dct2(const ImageTensor& img) {
  require_transformable(img);
  return CoefTensor(img.shape(), separable(img.vector(), img.shape(), false));
}

ImageTensor idct2(const CoefTensor& coef) {
  require_transformable(coef);
  return ImageTensor(coef.shape(), separable(coef.vector(), coef.shape(), true));
}

double mse(const ImageTensor& a, const ImageTensor& b) {
  a.require_same_shape(b);
  if (a.empty()) throw ShapeError("MSE of empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  const double err = mse(a, b);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kPsnrPeak * kPsnrPeak / err);
}

double ncc(const ImageTensor& a, const ImageTensor& b) {
  a.require_same_shape(b);
  const std::size_t n = a.size();
  if (n == 0) throw ShapeError("NCC of empty images");
  double mean_a = 0.0;
  double mean_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  // Relative guard: a constant image leaves only rounding residue here.
  constexpr double kFlat = 1e-24;
  if (saa <= kFlat * n || sbb <= kFlat * n) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

bool all_finite(std::span<const double> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

ImageTensor clamp_unit(ImageTensor img) {
  for (double& v : img.values()) v = std::clamp(v, -1.0, 1.0);
  return img;
}

ImageTensor resize_nearest(const ImageTensor& img, int size) {
  if (size < 1) throw ShapeError("resize target must be positive");
  if (img.empty()) throw ShapeError("resize of an empty image");
  if (img.height() == size && img.width() == size) return img;
  ImageTensor out(Shape{size, size, img.channels()});
  for (int r = 0; r < size; ++r) {
    const int src_r = std::min(img.height() - 1, r * img.height() / size);
    for (int c = 0; c < size; ++c) {
      const int src_c = std::min(img.width() - 1, c * img.width() / size);
      for (int ch = 0; ch < img.channels(); ++ch) out.at(r, c, ch) = img.at(src_r, src_c, ch);
    }
  }
  return out;
}

}  // namespace parasite
