#pragma once

#include <array>
#include <random>

#include "colorshift/data.hpp"

namespace colorshift {

enum class ExposureLabel : uint8_t { Normal = 0, Over = 1, Under = 2 };

// Per-pixel label from the channel-mean difference input - gt: over when
// > tau, under when < -tau, else normal.
std::vector<ExposureLabel> classify_exposure(const Tensor<float>& input,
                                             const Tensor<float>& gt, float tau = 0.1f);

struct PcaShiftResult {
    // top-2 principal components of the RGB shift covariance, eigenvalues
    // descending; third eigenvalue kept for the reconstruction check
    std::array<std::array<double, 3>, 3> components{};
    std::array<double, 3> eigenvalues{};
    std::array<double, 3> mean_shift{};
    int rank = 0;  // eigenvalues above tolerance; 0 flags a degenerate cloud
    std::vector<std::array<double, 2>> points;  // projections onto comps 0,1
    std::vector<ExposureLabel> labels;          // parallel to points
    std::array<double, 2> mean_over{}, mean_under{};
    double over_under_dot = 0;
    size_t over_count = 0, under_count = 0;
};

// Samples up to samples_per_image labeled (non-normal) pixels per pair,
// stacks their RGB differences (input - gt), eigen-decomposes the 3x3
// covariance and projects onto the top two components. Deterministic under
// seed. Throws DataError when no over or no under pixels exist anywhere.
PcaShiftResult pca_color_shift(const PairedDataset& pairs, int samples_per_image,
                               uint32_t seed, float tau = 0.1f);

// In-memory variant used by tests and by the CLI after synthesis.
PcaShiftResult pca_color_shift_tensors(
    const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pairs, int samples_per_image,
    uint32_t seed, float tau = 0.1f);

// (x, y, label) rows; label spelled out (over/under).
void write_pca_points_csv(const std::string& path, const PcaShiftResult& r);
// Component vectors, eigenvalues, per-label means, and the over/under dot
// product as JSON.
void write_pca_summary_json(const std::string& path, const PcaShiftResult& r);

// 3x3 symmetric eigendecomposition by cyclic Jacobi rotations; eigenvalues
// descending, rows of `vecs` are the matching unit eigenvectors.
void symmetric_eigen3(const std::array<std::array<double, 3>, 3>& m,
                      std::array<double, 3>& vals, std::array<std::array<double, 3>, 3>& vecs);

}  // namespace colorshift
