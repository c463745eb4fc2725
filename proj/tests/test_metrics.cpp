#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "colorshift/metrics.hpp"
#include "colorshift/tensor.hpp"

using namespace colorshift;
using TenF = Tensor<float>;

namespace {

TenF uniform(std::vector<int> shape, uint32_t seed, float lo = 0.0f, float hi = 1.0f) {
    std::mt19937 g(seed);
    return rand_uniform<float>(std::move(shape), g, lo, hi);
}

}  // namespace

TEST_CASE("psnr of a uniform +0.1 offset is exactly 20 dB") {
    TenF gt({3, 8, 8});                 // all zeros
    TenF pred({3, 8, 8}, 0.1f);         // uniform offset
    CHECK(std::fabs(psnr(pred, gt) - 20.0) <= 1e-6);
}

TEST_CASE("psnr is infinite at identity and symmetric in its arguments") {
    TenF x = uniform({3, 6, 6}, 1);
    CHECK(std::isinf(psnr(x, x)));
    TenF y = uniform({3, 6, 6}, 2);
    CHECK(psnr(x, y) == doctest::Approx(psnr(y, x)).epsilon(1e-12));
}

TEST_CASE("psnr clamps predictions outside [0,1] before comparing") {
    TenF gt({3, 4, 4}, 1.0f);
    TenF over({3, 4, 4}, 1.7f);  // clamps to exactly the gt
    CHECK(std::isinf(psnr(over, gt)));
    TenF under({3, 4, 4}, -0.3f);
    CHECK(psnr(under, gt) == doctest::Approx(0.0).epsilon(1e-9));  // error 1.0
}

TEST_CASE("ssim is 1 at identity and decreases with corruption") {
    TenF x = uniform({3, 16, 16}, 3);
    CHECK(ssim(x, x) == 1.0);
    TenF noisy = x;
    std::mt19937 g(4);
    for (auto& v : noisy.v) v = std::clamp(v + 0.05f * (float(canonical_u01(g)) - 0.5f), 0.0f, 1.0f);
    double s_small = ssim(noisy, x);
    TenF other = uniform({3, 16, 16}, 5);
    double s_other = ssim(other, x);
    CHECK(s_small < 1.0);
    CHECK(s_small > s_other);
    CHECK(ssim(noisy, x) == doctest::Approx(ssim(x, noisy)).epsilon(1e-12));
}

TEST_CASE("ssim of two constant images matches the closed form") {
    // constant images: variances and covariance vanish, so
    // SSIM = (2 m1 m2 + C1)/(m1^2 + m2^2 + C1) * C2/C2
    float m1 = 0.3f, m2 = 0.6f;
    TenF a({3, 12, 12}, m1), b({3, 12, 12}, m2);
    double c1 = 1e-4;
    double expect = (2.0 * m1 * m2 + c1) / (double(m1) * m1 + double(m2) * m2 + c1);
    CHECK(ssim(a, b) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("rmse in lab space: zero at identity, 100/sqrt(3) for black vs white") {
    TenF x = uniform({3, 8, 8}, 6);
    CHECK(rmse_lab(x, x) == 0.0);
    TenF black({3, 8, 8});
    TenF white({3, 8, 8}, 1.0f);
    CHECK(std::fabs(rmse_lab(black, white) - 100.0 / std::sqrt(3.0)) < 0.1);
    CHECK(rmse_lab(black, white) == doctest::Approx(rmse_lab(white, black)).epsilon(1e-12));
}

TEST_CASE("rmse_lab satisfies the triangle inequality on random triples") {
    for (uint32_t s = 0; s < 5; ++s) {
        TenF a = uniform({3, 6, 6}, 10 + s), b = uniform({3, 6, 6}, 20 + s),
             c = uniform({3, 6, 6}, 30 + s);
        // RMSE is a scaled Euclidean norm of the LAB difference, so the
        // metric triangle inequality must hold
        CHECK(rmse_lab(a, c) <= rmse_lab(a, b) + rmse_lab(b, c) + 1e-9);
    }
}

TEST_CASE("mean_metrics averages rows and propagates the infinity sentinel") {
    std::vector<MetricRow> rows = {{"a", 20.0, 0.8, 5.0}, {"b", 30.0, 0.6, 7.0}};
    MetricRow m = mean_metrics(rows);
    CHECK(m.psnr == doctest::Approx(25.0));
    CHECK(m.ssim == doctest::Approx(0.7));
    CHECK(m.rmse_lab == doctest::Approx(6.0));
    rows.push_back({"perfect", std::numeric_limits<double>::infinity(), 1.0, 0.0});
    CHECK(std::isinf(mean_metrics(rows).psnr));
}

TEST_CASE("metrics csv: header, one row per image, trailing mean row") {
    std::vector<MetricRow> rows = {{"x.png", 21.5, 0.91, 4.25},
                                   {"y.png", std::numeric_limits<double>::infinity(), 1.0, 0.0}};
    auto path = (std::filesystem::temp_directory_path() / "cs_metrics.csv").string();
    write_metrics_csv(path, rows);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "name,psnr,ssim,rmse_lab");
    std::getline(in, line);
    CHECK(line.substr(0, 6) == "x.png,");
    std::getline(in, line);
    CHECK(line.find("inf") != std::string::npos);
    std::getline(in, line);
    CHECK(line.substr(0, 5) == "mean,");
    CHECK_FALSE(std::getline(in, line));  // nothing after the mean row
}
