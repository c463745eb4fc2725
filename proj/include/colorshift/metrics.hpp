#pragma once

#include <string>
#include <vector>

#include "colorshift/imaging.hpp"

namespace colorshift {

// 10*log10(1/MSE) over all channels jointly, inputs clamped to [0,1].
// Returns +infinity when the images are identical.
double psnr(const Tensor<float>& pred, const Tensor<float>& gt);

// Mean SSIM over channels, 11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03,
// dynamic range 1, valid windows only. Scalar-loop implementation; doubles as
// the reference for the differentiable loss.
double ssim(const Tensor<float>& pred, const Tensor<float>& gt);

// Root mean squared error over LAB channels after converting both inputs
// (treated as sRGB in [0,1]).
double rmse_lab(const Tensor<float>& pred, const Tensor<float>& gt);

struct MetricRow {
    std::string name;
    double psnr = 0, ssim = 0, rmse_lab = 0;
};

// Per-image rows plus a trailing "mean" row (metrics averaged per image;
// an infinite PSNR makes the mean infinite). Infinity prints as "inf".
void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows);

MetricRow mean_metrics(const std::vector<MetricRow>& rows);

}  // namespace colorshift
