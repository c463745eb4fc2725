#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "colorshift/imaging.hpp"

namespace colorshift {

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PairRecord {
    std::string input_path, gt_path;
};

// Paired degraded/reference dataset. Images are loaded on first use and kept
// in memory (desk-scale sets).
struct PairedDataset {
    std::vector<PairRecord> records;
    int patch_size = 128;
    bool augment_flip = true;
    bool augment_rot90 = true;

    size_t size() const { return records.size(); }
    const std::pair<Tensor<float>, Tensor<float>>& pair(size_t index) const;

  private:
    mutable std::vector<std::optional<std::pair<Tensor<float>, Tensor<float>>>> cache_;
    friend PairedDataset scan_dataset(const std::string&, const std::string&);
};

// Scans `root`/input + `root`/gt for images paired by filename, or — when
// `manifest` is non-empty — reads tab-separated "input<TAB>gt" lines (paths
// relative to the manifest's directory unless absolute; one gt may serve many
// inputs). Validates that each pair has matching dimensions. Deterministic
// lexicographic order.
PairedDataset scan_dataset(const std::string& root, const std::string& manifest = "");

// Same random crop and augmentation applied to both images. Patch size comes
// from ds.patch_size; throws if larger than the image.
std::pair<Tensor<float>, Tensor<float>> sample_patch(const PairedDataset& ds, size_t index,
                                                     std::mt19937& g);

// Synthetic mixed-exposure degradation. A smooth random field is cut at its
// 1/3 and 2/3 quantiles into under / normal / over regions; over regions are
// gamma-brightened with tone shift +delta, under regions gamma-darkened with
// tone shift -delta plus Gaussian noise. delta is a zero-sum 3-vector so the
// opposite chroma casts leave region brightness ordering intact.
struct DegradationSpec {
    int region_count = 3;  // granularity of the random region field
    float gamma_over_lo = 0.35f, gamma_over_hi = 0.9f;   // brightening exponents (<1)
    float gamma_under_lo = 1.1f, gamma_under_hi = 2.8f;  // darkening exponents (>1)
    float tone_shift_magnitude = 0.08f;
    float noise_sigma = 0.01f;
    uint32_t seed = 1;

    void validate() const;
};

struct DegradedPair {
    Tensor<float> input;                 // (3,H,W)
    Tensor<float> over_mask, under_mask; // (1,H,W), values 0/1
};

DegradedPair synthesize_degraded(const Tensor<float>& gt, const DegradationSpec& spec);

// Smooth mid-range reference image (coarse bilinear color field), for
// building synthetic datasets.
Tensor<float> synthetic_gt(int height, int width, uint32_t seed);

// Writes `count` synthetic (input, gt) PNG pairs under root/input and
// root/gt; degradation seeds derive from spec.seed + pair index.
void write_synthetic_dataset(const std::string& root, int count, int height, int width,
                             const DegradationSpec& spec);

}  // namespace colorshift
