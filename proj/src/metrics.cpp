#include "colorshift/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace colorshift {

namespace {

void check_same_shape(const Tensor<float>& a, const Tensor<float>& b, const char* who) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

double clamp01(double v) { return v < 0 ? 0 : (v > 1 ? 1 : v); }

}  // namespace

double psnr(const Tensor<float>& pred, const Tensor<float>& gt) {
    check_same_shape(pred, gt, "psnr");
    double se = 0;
    for (size_t i = 0; i < pred.v.size(); ++i) {
        double d = clamp01(pred.v[i]) - clamp01(gt.v[i]);
        se += d * d;
    }
    double mse = se / static_cast<double>(pred.v.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor<float>& pred, const Tensor<float>& gt) {
    check_same_shape(pred, gt, "ssim");
    const int win = 11;
    const double sigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    int C = pred.dim(0), H = pred.dim(1), W = pred.dim(2);
    if (H < win || W < win) throw std::invalid_argument("ssim: image smaller than window");

    double g[win][win];
    double gsum = 0;
    for (int y = 0; y < win; ++y)
        for (int x = 0; x < win; ++x) {
            double d2 = (y - 5) * (y - 5) + (x - 5) * (x - 5);
            g[y][x] = std::exp(-d2 / (2 * sigma * sigma));
            gsum += g[y][x];
        }
    for (auto& row : g)
        for (auto& v : row) v /= gsum;

    double total = 0;
    int64_t count = 0;
    for (int c = 0; c < C; ++c)
        for (int oy = 0; oy + win <= H; ++oy)
            for (int ox = 0; ox + win <= W; ++ox) {
                double mp = 0, mg = 0, spp = 0, sgg = 0, spg = 0;
                for (int y = 0; y < win; ++y)
                    for (int x = 0; x < win; ++x) {
                        double w = g[y][x];
                        double p = clamp01(pred.at(c, oy + y, ox + x));
                        double q = clamp01(gt.at(c, oy + y, ox + x));
                        mp += w * p;
                        mg += w * q;
                        spp += w * p * p;
                        sgg += w * q * q;
                        spg += w * p * q;
                    }
                spp -= mp * mp;
                sgg -= mg * mg;
                spg -= mp * mg;
                double n = (2 * mp * mg + C1) * (2 * spg + C2);
                double d = (mp * mp + mg * mg + C1) * (spp + sgg + C2);
                total += n / d;
                ++count;
            }
    return total / static_cast<double>(count);
}

double rmse_lab(const Tensor<float>& pred, const Tensor<float>& gt) {
    check_same_shape(pred, gt, "rmse_lab");
    ImageTensor a{pred, ColorSpace::SRGB}, b{gt, ColorSpace::SRGB};
    ImageTensor la = srgb_to_lab(a), lb = srgb_to_lab(b);
    double se = 0;
    for (size_t i = 0; i < la.data.v.size(); ++i) {
        double d = static_cast<double>(la.data.v[i]) - lb.data.v[i];
        se += d * d;
    }
    return std::sqrt(se / static_cast<double>(la.data.v.size()));
}

MetricRow mean_metrics(const std::vector<MetricRow>& rows) {
    MetricRow m;
    m.name = "mean";
    if (rows.empty()) return m;
    for (const auto& r : rows) {
        m.psnr += r.psnr;
        m.ssim += r.ssim;
        m.rmse_lab += r.rmse_lab;
    }
    double n = static_cast<double>(rows.size());
    m.psnr /= n;
    m.ssim /= n;
    m.rmse_lab /= n;
    return m;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write metrics csv: " + path);
    std::fprintf(f, "name,psnr,ssim,rmse_lab\n");
    auto emit = [&](const MetricRow& r) {
        if (std::isinf(r.psnr))
            std::fprintf(f, "%s,inf,%.6f,%.6f\n", r.name.c_str(), r.ssim, r.rmse_lab);
        else
            std::fprintf(f, "%s,%.6f,%.6f,%.6f\n", r.name.c_str(), r.psnr, r.ssim, r.rmse_lab);
    };
    for (const auto& r : rows) emit(r);
    emit(mean_metrics(rows));
    std::fclose(f);
}

}  // namespace colorshift
