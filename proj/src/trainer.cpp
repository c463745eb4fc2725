#include "colorshift/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "colorshift/fpmode.hpp"

namespace fs = std::filesystem;

namespace colorshift {

void Adam::init(const std::vector<NamedParam<float>>& params) {
    step = 0;
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (size_t i = 0; i < params.size(); ++i) {
        size_t n = params[i].var.value().numel();
        m[i].assign(n, 0.0f);
        v[i].assign(n, 0.0f);
    }
}

void Adam::apply(std::vector<NamedParam<float>>& params, double lr) {
    ++step;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (size_t i = 0; i < params.size(); ++i) {
        const Tensor<float>& g = params[i].var.grad();
        if (g.numel() == 0) continue;  // parameter unused by this graph
        Tensor<float>& w = params[i].var.value();
        auto& mi = m[i];
        auto& vi = v[i];
        for (size_t j = 0; j < w.v.size(); ++j) {
            double gj = g.v[j];
            mi[j] = static_cast<float>(beta1 * mi[j] + (1 - beta1) * gj);
            vi[j] = static_cast<float>(beta2 * vi[j] + (1 - beta2) * gj * gj);
            double mhat = mi[j] / c1, vhat = vi[j] / c2;
            w.v[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

double cosine_lr(double lr, double lr_final, int iteration, int total) {
    if (total <= 1) return lr;
    double p = static_cast<double>(iteration - 1) / (total - 1);
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + std::cos(p * M_PI));
}

double clip_global_norm(std::vector<NamedParam<float>>& params, double max_norm) {
    double sq = 0;
    for (auto& p : params) {
        const Tensor<float>& g = p.var.grad();
        for (size_t j = 0; j < g.v.size(); ++j) sq += static_cast<double>(g.v[j]) * g.v[j];
    }
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        float s = static_cast<float>(max_norm / norm);
        for (auto& p : params) {
            Tensor<float>& g = p.var.node()->grad;
            for (auto& x : g.v) x *= s;
        }
    }
    return norm;
}

CheckpointData checkpoint_from_model(Model<float>& model, const Adam* adam, uint64_t iteration,
                                     const std::string& rng_state) {
    CheckpointData d;
    d.iteration = iteration;
    d.model_json = canonical_model_json(model.cfg);
    d.config_hash = config_hash(model.cfg);
    d.rng_state = rng_state;
    auto params = model.params();
    for (auto& p : params) d.arrays.emplace_back(p.name, p.var.value().v);
    for (auto& s : model.states()) d.arrays.emplace_back("state." + s.name, s.tensor->v);
    if (adam) {
        d.optimizer_step = adam->step;
        for (size_t i = 0; i < params.size(); ++i) {
            d.arrays.emplace_back("adam.m." + params[i].name, adam->m[i]);
            d.arrays.emplace_back("adam.v." + params[i].name, adam->v[i]);
        }
    }
    return d;
}

namespace {

void copy_named(const CheckpointData& d, const std::string& name, std::vector<float>& dst,
                const char* kind) {
    const std::vector<float>* src = d.find(name);
    if (!src) throw CheckpointError(std::string("checkpoint missing ") + kind + ": " + name);
    if (src->size() != dst.size())
        throw CheckpointError("checkpoint array size mismatch for " + name + ": " +
                              std::to_string(src->size()) + " vs " + std::to_string(dst.size()));
    dst = *src;
}

}  // namespace

void apply_checkpoint(const CheckpointData& data, Model<float>& model) {
    if (data.config_hash != config_hash(model.cfg))
        throw ConfigError(
            "checkpoint model-config hash mismatch: checkpoint was produced by a different "
            "model configuration");
    for (auto& p : model.params()) copy_named(data, p.name, p.var.value().v, "parameter");
    for (auto& s : model.states()) copy_named(data, "state." + s.name, s.tensor->v, "state");
}

void restore_optimizer(const CheckpointData& data, Model<float>& model, Adam& adam) {
    auto params = model.params();
    adam.init(params);
    adam.step = data.optimizer_step;
    for (size_t i = 0; i < params.size(); ++i) {
        copy_named(data, "adam.m." + params[i].name, adam.m[i], "optimizer array");
        copy_named(data, "adam.v." + params[i].name, adam.v[i], "optimizer array");
    }
}

Model<float> model_from_checkpoint(const CheckpointData& data) {
    ModelConfig cfg = parse_model_json(data.model_json);
    Model<float> model(cfg, 0);
    apply_checkpoint(data, model);
    return model;
}

Tensor<float> enhance_tensor(Model<float>& model, const Tensor<float>& input) {
    flush_denormals();
    bool was_training = model.training;
    model.training = false;
    int multiple = 1 << model.cfg.extractor_depth;
    int oh = 0, ow = 0;
    Tensor<float> padded = reflect_pad_multiple(input, multiple, oh, ow);
    ForwardResult<float> r = model.forward(Var<float>::constant(padded));
    model.training = was_training;
    Tensor<float> out = crop_origin(r.iy.value(), oh, ow);
    for (auto& v : out.v) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

std::vector<MetricRow> evaluate_model(Model<float>& model, const PairedDataset& ds,
                                      const std::string& csv_path) {
    std::vector<MetricRow> rows;
    for (size_t i = 0; i < ds.size(); ++i) {
        const auto& [in, gt] = ds.pair(i);
        Tensor<float> pred = enhance_tensor(model, in);
        MetricRow r;
        r.name = fs::path(ds.records[i].input_path).filename().string();
        r.psnr = psnr(pred, gt);
        r.ssim = ssim(pred, gt);
        r.rmse_lab = rmse_lab(pred, gt);
        rows.push_back(std::move(r));
    }
    if (!csv_path.empty()) write_metrics_csv(csv_path, rows);
    return rows;
}

std::vector<MetricRow> evaluate_identity(const PairedDataset& ds, const std::string& csv_path) {
    std::vector<MetricRow> rows;
    for (size_t i = 0; i < ds.size(); ++i) {
        const auto& [in, gt] = ds.pair(i);
        MetricRow r;
        r.name = fs::path(ds.records[i].input_path).filename().string();
        r.psnr = psnr(in, gt);
        r.ssim = ssim(in, gt);
        r.rmse_lab = rmse_lab(in, gt);
        rows.push_back(std::move(r));
    }
    if (!csv_path.empty()) write_metrics_csv(csv_path, rows);
    return rows;
}

TrainResult train(const FullConfig& cfg, std::ostream* console) {
    PairedDataset ds = scan_dataset(cfg.train.dataset, cfg.train.manifest);
    PairedDataset val;
    bool has_val = !cfg.train.val_dataset.empty() || !cfg.train.val_manifest.empty();
    if (has_val) val = scan_dataset(cfg.train.val_dataset, cfg.train.val_manifest);
    return train_with_datasets(cfg, ds, has_val ? &val : nullptr, console);
}

TrainResult train_with_datasets(const FullConfig& cfg, const PairedDataset& ds_in,
                                const PairedDataset* val, std::ostream* console) {
    flush_denormals();
    cfg.model.validate();
    cfg.train.validate();
    if (ds_in.size() == 0) throw DataError("training dataset is empty");
    int multiple = 1 << cfg.model.extractor_depth;
    if (cfg.train.patch_size % multiple != 0)
        throw ConfigError("patch_size must be a multiple of " + std::to_string(multiple));
    if (cfg.loss.weights.use_ssim && cfg.train.patch_size < 11)
        throw ConfigError("patch_size too small for the ssim window");

    PairedDataset ds = ds_in;
    ds.patch_size = cfg.train.patch_size;
    ds.augment_flip = cfg.train.augment_flip;
    ds.augment_rot90 = cfg.train.augment_rot90;

    fs::create_directories(cfg.train.output_dir);
    Model<float> model(cfg.model, cfg.train.seed);
    model.training = true;

    PerceptualExtractor<float> pe;
    if (cfg.loss.weights.use_vgg && cfg.loss.weights.lambda4 > 0) {
        pe = cfg.loss.perceptual_weights.empty()
                 ? PerceptualExtractor<float>::seeded(cfg.loss.perceptual_seed)
                 : PerceptualExtractor<float>::from_file(cfg.loss.perceptual_weights);
    }

    auto params = model.params();
    Adam adam;
    adam.init(params);
    std::mt19937 g(cfg.train.seed ^ 0x9e3779b9u);

    TrainResult res;
    res.log_path = (fs::path(cfg.train.output_dir) / "train_log.csv").string();
    std::ofstream log(res.log_path);
    if (!log) throw std::runtime_error("cannot write training log: " + res.log_path);
    log << "iteration,lr,total,l1,cos,ssim,vgg,pseudo,psnr\n";

    const int total_iters = cfg.train.iterations;
    // Epoch-style sampling: a reshuffled pass over the dataset, never repeating
    // an image inside the window. When the batch covers the whole set this
    // makes every step see each image exactly once, so the pooled
    // normalization statistics are stable from one iteration to the next.
    std::vector<size_t> order;
    size_t cursor = 0;
    auto next_index = [&]() -> size_t {
        if (cursor >= order.size()) {
            order.resize(ds.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::shuffle(order.begin(), order.end(), g);
            cursor = 0;
        }
        return order[cursor++];
    };
    for (int it = 1; it <= total_iters; ++it) {
        double lr = cosine_lr(cfg.train.lr, cfg.train.lr_final, it, total_iters);

        Var<float> batch_loss;
        LossBreakdown bd;
        double batch_psnr = 0;
        std::vector<Var<float>> xs;
        std::vector<Tensor<float>> gts;
        for (int b = 0; b < cfg.train.batch_size; ++b) {
            auto [pin, pgt] = sample_patch(ds, next_index(), g);
            xs.push_back(Var<float>::constant(pin));
            gts.push_back(std::move(pgt));
        }
        std::vector<ForwardResult<float>> rs = model.forward_batch(xs);
        for (int b = 0; b < cfg.train.batch_size; ++b) {
            const ForwardResult<float>& r = rs[b];
            Var<float> y = Var<float>::constant(gts[b]);
            auto [one_loss, one_bd] = total_loss(r.iy, r.fn, y, cfg.loss.weights, &pe);
            batch_loss = batch_loss.defined() ? add(batch_loss, one_loss) : one_loss;
            bd.l1 += one_bd.l1;
            bd.cosine += one_bd.cosine;
            bd.ssim += one_bd.ssim;
            bd.vgg += one_bd.vgg;
            bd.pseudo += one_bd.pseudo;
            bd.total += one_bd.total;
            batch_psnr += psnr(r.iy.value(), gts[b]);
        }
        double inv = 1.0 / cfg.train.batch_size;
        bd.l1 *= inv;
        bd.cosine *= inv;
        bd.ssim *= inv;
        bd.vgg *= inv;
        bd.pseudo *= inv;
        bd.total *= inv;
        batch_psnr *= inv;
        batch_loss = mul_scalar(batch_loss, static_cast<float>(inv));

        if (!std::isfinite(bd.total)) throw TrainAbort(static_cast<uint64_t>(it), bd);
        res.loss_history.push_back(bd.total);
        res.last = bd;

        batch_loss.backward();
        clip_global_norm(params, 5.0);
        adam.apply(params, lr);

        bool last_it = it == total_iters;
        if (it % cfg.train.log_interval == 0 || last_it) {
            double logged_psnr = batch_psnr;
            if (val) {
                auto rows = evaluate_model(model, *val, "");
                logged_psnr = mean_metrics(rows).psnr;
            }
            res.last_psnr = logged_psnr;
            char line[256];
            std::snprintf(line, sizeof line, "%d,%.8g,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f\n", it,
                          lr, bd.total, bd.l1, bd.cosine, bd.ssim, bd.vgg, bd.pseudo,
                          logged_psnr);
            log << line;
            log.flush();
            if (console) *console << "iter " << it << " lr " << lr << " " << bd.to_string()
                                  << " psnr " << logged_psnr << "\n";
        }
        if (it % cfg.train.checkpoint_interval == 0 && !last_it) {
            std::ostringstream rng_ss;
            rng_ss << g;
            char name[48];
            std::snprintf(name, sizeof name, "ckpt_%06d.cspt", it);
            save_checkpoint((fs::path(cfg.train.output_dir) / name).string(),
                            checkpoint_from_model(model, &adam, static_cast<uint64_t>(it),
                                                  rng_ss.str()));
        }
    }

    std::ostringstream rng_ss;
    rng_ss << g;
    res.final_checkpoint = (fs::path(cfg.train.output_dir) / "final.cspt").string();
    save_checkpoint(res.final_checkpoint,
                    checkpoint_from_model(model, &adam, static_cast<uint64_t>(total_iters),
                                          rng_ss.str()));
    return res;
}

}  // namespace colorshift
