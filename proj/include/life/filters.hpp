#pragma once

#include "life/volume.hpp"

#include <Eigen/Core>

namespace life {

/// Sampled, unit-sum Gaussian of radius ceil(3 sigma). sigma <= 0 gives {1}.
Eigen::ArrayXd gaussian_kernel(double sigma);

/// Separable Gaussian blur with edge replication.
Image gaussian_blur(const Image& img, double sigma);

/// Mean over a (2r+1)^2 window with edge replication.
Image box_mean(const Image& img, int radius);

/// Bilinear sample at (x, y) with edge clamping.
float sample_bilinear(const Image& img, double x, double y);

/// Blur then decimate by two (output size ceil(n/2)).
Image downsample2(const Image& img);

/// Bilinear resize to rows x cols, pixel centers aligned.
Image resize_bilinear(const Image& img, Index rows, Index cols);

}  // namespace life
