#include "colorshift/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace colorshift {

std::vector<ExposureLabel> classify_exposure(const Tensor<float>& input,
                                             const Tensor<float>& gt, float tau) {
    if (!input.same_shape(gt)) throw DataError("classify_exposure: shape mismatch");
    int H = input.dim(1), W = input.dim(2);
    std::vector<ExposureLabel> labels(static_cast<size_t>(H) * W, ExposureLabel::Normal);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            float d = 0;
            for (int c = 0; c < 3; ++c) d += input.at(c, y, x) - gt.at(c, y, x);
            d /= 3.0f;
            if (d > tau)
                labels[static_cast<size_t>(y) * W + x] = ExposureLabel::Over;
            else if (d < -tau)
                labels[static_cast<size_t>(y) * W + x] = ExposureLabel::Under;
        }
    return labels;
}

void symmetric_eigen3(const std::array<std::array<double, 3>, 3>& m,
                      std::array<double, 3>& vals, std::array<std::array<double, 3>, 3>& vecs) {
    double a[3][3];
    double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a[i][j] = m[i][j];

    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off == 0) break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0) continue;
                double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1));
                double c = 1 / std::sqrt(t * t + 1), s = t * c;
                for (int k = 0; k < 3; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    double vkp = v[k][p], vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
    }
    int order[3] = {0, 1, 2};
    std::sort(order, order + 3, [&](int i, int j) { return a[i][i] > a[j][j]; });
    for (int r = 0; r < 3; ++r) {
        vals[r] = a[order[r]][order[r]];
        for (int k = 0; k < 3; ++k) vecs[r][k] = v[k][order[r]];
    }
}

PcaShiftResult pca_color_shift_tensors(
    const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pairs, int samples_per_image,
    uint32_t seed, float tau) {
    if (pairs.empty()) throw DataError("pca_color_shift: no pairs");
    if (samples_per_image < 1) throw DataError("pca_color_shift: samples_per_image must be >= 1");
    std::mt19937 g(seed);

    std::vector<std::array<double, 3>> shifts;
    std::vector<ExposureLabel> labels;
    for (const auto& [in, gt] : pairs) {
        auto lab = classify_exposure(in, gt, tau);
        std::vector<size_t> candidates;
        for (size_t i = 0; i < lab.size(); ++i)
            if (lab[i] != ExposureLabel::Normal) candidates.push_back(i);
        if (candidates.empty()) continue;
        // sample without replacement up to the budget
        size_t want = std::min(candidates.size(), static_cast<size_t>(samples_per_image));
        for (size_t k = 0; k < want; ++k) {
            size_t left = candidates.size() - k;
            size_t pick = k + std::min(left - 1, static_cast<size_t>(canonical_u01(g) * left));
            std::swap(candidates[k], candidates[pick]);
            size_t idx = candidates[k];
            int W = in.dim(2);
            int y = static_cast<int>(idx) / W, x = static_cast<int>(idx) % W;
            std::array<double, 3> d;
            for (int c = 0; c < 3; ++c)
                d[static_cast<size_t>(c)] =
                    static_cast<double>(in.at(c, y, x)) - gt.at(c, y, x);
            shifts.push_back(d);
            labels.push_back(lab[idx]);
        }
    }
    size_t n_over = static_cast<size_t>(
        std::count(labels.begin(), labels.end(), ExposureLabel::Over));
    size_t n_under = labels.size() - n_over;
    if (n_over == 0) throw DataError("pca_color_shift: no over-exposed pixels found");
    if (n_under == 0) throw DataError("pca_color_shift: no under-exposed pixels found");

    PcaShiftResult r;
    r.over_count = n_over;
    r.under_count = n_under;
    r.labels = labels;
    double n = static_cast<double>(shifts.size());
    for (const auto& d : shifts)
        for (int c = 0; c < 3; ++c) r.mean_shift[static_cast<size_t>(c)] += d[static_cast<size_t>(c)] / n;
    std::array<std::array<double, 3>, 3> cov{};
    for (const auto& d : shifts)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                cov[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                    (d[static_cast<size_t>(i)] - r.mean_shift[static_cast<size_t>(i)]) *
                    (d[static_cast<size_t>(j)] - r.mean_shift[static_cast<size_t>(j)]) / n;

    symmetric_eigen3(cov, r.eigenvalues, r.components);
    double trace = cov[0][0] + cov[1][1] + cov[2][2];
    double tol = std::max(1e-12, 1e-9 * trace);
    for (double ev : r.eigenvalues)
        if (ev > tol) ++r.rank;

    r.points.reserve(shifts.size());
    std::array<double, 2> sum_over{}, sum_under{};
    for (size_t i = 0; i < shifts.size(); ++i) {
        std::array<double, 2> p{};
        for (int comp = 0; comp < 2; ++comp)
            for (int c = 0; c < 3; ++c)
                p[static_cast<size_t>(comp)] +=
                    r.components[static_cast<size_t>(comp)][static_cast<size_t>(c)] *
                    (shifts[i][static_cast<size_t>(c)] - r.mean_shift[static_cast<size_t>(c)]);
        r.points.push_back(p);
        auto& acc = labels[i] == ExposureLabel::Over ? sum_over : sum_under;
        acc[0] += p[0];
        acc[1] += p[1];
    }
    r.mean_over = {sum_over[0] / static_cast<double>(n_over),
                   sum_over[1] / static_cast<double>(n_over)};
    r.mean_under = {sum_under[0] / static_cast<double>(n_under),
                    sum_under[1] / static_cast<double>(n_under)};
    r.over_under_dot = r.mean_over[0] * r.mean_under[0] + r.mean_over[1] * r.mean_under[1];
    return r;
}

PcaShiftResult pca_color_shift(const PairedDataset& pairs, int samples_per_image, uint32_t seed,
                               float tau) {
    std::vector<std::pair<Tensor<float>, Tensor<float>>> tensors;
    for (size_t i = 0; i < pairs.size(); ++i) tensors.push_back(pairs.pair(i));
    return pca_color_shift_tensors(tensors, samples_per_image, seed, tau);
}

void write_pca_points_csv(const std::string& path, const PcaShiftResult& r) {
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write csv: " + path);
    std::fprintf(f, "x,y,label\n");
    for (size_t i = 0; i < r.points.size(); ++i)
        std::fprintf(f, "%.9g,%.9g,%s\n", r.points[i][0], r.points[i][1],
                     r.labels[i] == ExposureLabel::Over ? "over" : "under");
    std::fclose(f);
}

void write_pca_summary_json(const std::string& path, const PcaShiftResult& r) {
    nlohmann::json j;
    j["components"] = {r.components[0], r.components[1], r.components[2]};
    j["eigenvalues"] = r.eigenvalues;
    j["mean_shift"] = r.mean_shift;
    j["rank"] = r.rank;
    j["mean_over_projection"] = r.mean_over;
    j["mean_under_projection"] = r.mean_under;
    j["over_under_dot"] = r.over_under_dot;
    j["over_count"] = r.over_count;
    j["under_count"] = r.under_count;
    FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write json: " + path);
    std::string s = j.dump(2);
    std::fwrite(s.data(), 1, s.size(), f);
    std::fputc('\n', f);
    std::fclose(f);
}

}  // namespace colorshift
