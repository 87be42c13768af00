#include "life/filters.hpp"

#include <algorithm>
#include <cmath>

namespace life {

Eigen::ArrayXd gaussian_kernel(double sigma) {
  if (!(sigma > 0)) return Eigen::ArrayXd::Ones(1);
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  Eigen::ArrayXd k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-0.5 * (i * i) / (sigma * sigma));
  return k / k.sum();
}

namespace {

Image convolve_rows(const Image& img, const Eigen::ArrayXd& k) {
  const int r = static_cast<int>(k.size() / 2);
  const Index W = img.cols();
  Image out(img.rows(), W);
  for (Index y = 0; y < img.rows(); ++y) {
    for (Index x = 0; x < W; ++x) {
      double acc = 0;
      for (int i = -r; i <= r; ++i) {
        const Index xx = std::clamp<Index>(x + i, 0, W - 1);
        acc += k[i + r] * img(y, xx);
      }
      out(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

Image convolve_cols(const Image& img, const Eigen::ArrayXd& k) {
  const int r = static_cast<int>(k.size() / 2);
  const Index H = img.rows();
  Image out(H, img.cols());
  for (Index y = 0; y < H; ++y) {
    out.row(y).setZero();
    for (int i = -r; i <= r; ++i) {
      const Index yy = std::clamp<Index>(y + i, 0, H - 1);
      out.row(y) += static_cast<float>(k[i + r]) * img.row(yy);
    }
  }
  return out;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0)) return img;
  const Eigen::ArrayXd k = gaussian_kernel(sigma);
  return convolve_cols(convolve_rows(img, k), k);
}

Image box_mean(const Image& img, int radius) {
  if (radius <= 0) return img;
  const Eigen::ArrayXd k = Eigen::ArrayXd::Constant(2 * radius + 1, 1.0 / (2 * radius + 1));
  return convolve_cols(convolve_rows(img, k), k);
}

float sample_bilinear(const Image& img, double x, double y) {
  const Index H = img.rows();
  const Index W = img.cols();
  x = std::clamp(x, 0.0, static_cast<double>(W - 1));
  y = std::clamp(y, 0.0, static_cast<double>(H - 1));
  const auto x0 = static_cast<Index>(std::floor(x));
  const auto y0 = static_cast<Index>(std::floor(y));
  const Index x1 = std::min(x0 + 1, W - 1);
  const Index y1 = std::min(y0 + 1, H - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = (1 - fx) * img(y0, x0) + fx * img(y0, x1);
  const double bottom = (1 - fx) * img(y1, x0) + fx * img(y1, x1);
  return static_cast<float>((1 - fy) * top + fy * bottom);
}

Image downsample2(const Image& img) {
  const Image blurred = gaussian_blur(img, 1.0);
  const Index H = (img.rows() + 1) / 2;
  const Index W = (img.cols() + 1) / 2;
  Image out(H, W);
  for (Index y = 0; y < H; ++y)
    for (Index x = 0; x < W; ++x) out(y, x) = blurred(2 * y, 2 * x);
  return out;
}

Image resize_bilinear(const Image& img, Index rows, Index cols) {
  Image out(rows, cols);
  const double sy = static_cast<double>(img.rows()) / static_cast<double>(rows);
  const double sx = static_cast<double>(img.cols()) / static_cast<double>(cols);
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      out(y, x) = sample_bilinear(img, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
    }
  }
  return out;
}

}  // namespace life
