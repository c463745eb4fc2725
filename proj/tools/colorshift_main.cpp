#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "colorshift/analysis.hpp"
#include "colorshift/fpmode.hpp"
#include "colorshift/selftest.hpp"
#include "colorshift/trainer.hpp"

namespace fs = std::filesystem;
using namespace colorshift;

namespace {

int cmd_train(const std::string& config_path) {
    FullConfig cfg = load_config_file(config_path);
    std::cout << "training with config " << config_path << "\n";
    TrainResult res = train(cfg, &std::cout);
    std::cout << "final checkpoint: " << res.final_checkpoint << "\n"
              << "log: " << res.log_path << "\n";
    return 0;
}

int cmd_enhance(const std::string& ckpt_path, const std::string& input,
                const std::string& output) {
    Model<float> model = model_from_checkpoint(load_checkpoint(ckpt_path));
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw std::runtime_error("no input images in " + input);
    } else {
        files.push_back(input);
    }
    fs::create_directories(output);
    for (const auto& f : files) {
        ImageTensor img = load_image(f.string());
        Tensor<float> enhanced = enhance_tensor(model, img.data);
        fs::path out = fs::path(output) / f.filename().replace_extension(".png");
        save_image({enhanced, ColorSpace::SRGB}, out.string());
        std::cout << f.filename().string() << " -> " << out.string() << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset,
             const std::string& manifest, const std::string& report) {
    Model<float> model = model_from_checkpoint(load_checkpoint(ckpt_path));
    PairedDataset ds = scan_dataset(dataset, manifest);
    auto rows = evaluate_model(model, ds, report);
    MetricRow mean = mean_metrics(rows);
    std::cout << "images: " << rows.size() << "\n"
              << "mean psnr: " << mean.psnr << "\n"
              << "mean ssim: " << mean.ssim << "\n"
              << "mean rmse_lab: " << mean.rmse_lab << "\n";
    if (!report.empty()) std::cout << "report: " << report << "\n";
    return 0;
}

int cmd_analyze(const std::string& dataset, const std::string& manifest, int samples,
                const std::string& out_csv, const std::string& summary, uint32_t seed,
                float tau) {
    if (samples < 1) throw std::runtime_error("--samples must be >= 1");
    PairedDataset ds = scan_dataset(dataset, manifest);
    PcaShiftResult r = pca_color_shift(ds, samples, seed, tau);
    write_pca_points_csv(out_csv, r);
    std::string summary_path = summary.empty()
                                   ? (fs::path(out_csv).replace_extension(".json").string())
                                   : summary;
    write_pca_summary_json(summary_path, r);
    std::cout << "sampled " << r.points.size() << " shift vectors (" << r.over_count
              << " over, " << r.under_count << " under)\n"
              << "covariance rank: " << r.rank << "\n"
              << "over/under mean projection dot: " << r.over_under_dot << "\n"
              << "points: " << out_csv << "\nsummary: " << summary_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    flush_denormals();
    CLI::App app{"color-shift estimation and correction for mixed-exposure images"};
    app.require_subcommand(1);

    std::string config_path;
    const char* env_cfg = std::getenv("COLORSHIFT_CONFIG");
    auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
    auto* cfg_opt = train_cmd->add_option("--config", config_path,
                                          "config file (or set COLORSHIFT_CONFIG)");
    if (env_cfg)
        cfg_opt->default_val(std::string(env_cfg));
    else
        cfg_opt->required();

    std::string ckpt, input, output;
    auto* enhance_cmd = app.add_subcommand("enhance", "enhance an image or directory");
    enhance_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    enhance_cmd->add_option("--input", input, "input image or directory")->required();
    enhance_cmd->add_option("--output", output, "output directory")->required();

    std::string ds_root, manifest, report;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a paired dataset");
    eval_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
    eval_cmd->add_option("--dataset", ds_root, "dataset root (input/ + gt/)");
    eval_cmd->add_option("--manifest", manifest, "tab-separated input/gt manifest");
    eval_cmd->add_option("--report", report, "per-image metrics CSV to write");

    int samples = 500;
    std::string out_csv = "shift_points.csv", summary_json;
    uint32_t seed = 1;
    float tau = 0.1f;
    auto* an_cmd = app.add_subcommand("analyze-shift",
                                      "PCA of over/under exposure color shifts");
    an_cmd->add_option("--dataset", ds_root, "dataset root (input/ + gt/)");
    an_cmd->add_option("--manifest", manifest, "tab-separated input/gt manifest");
    an_cmd->add_option("--samples", samples, "pixels sampled per image");
    an_cmd->add_option("--out", out_csv, "points CSV path");
    an_cmd->add_option("--summary", summary_json, "summary JSON path");
    an_cmd->add_option("--seed", seed, "sampling seed");
    an_cmd->add_option("--tau", tau, "exposure classification threshold");

    auto* st_cmd = app.add_subcommand("selftest", "run built-in correctness checks");
    bool perturb = false;
    st_cmd->add_flag("--perturb-kernel", perturb)->group("");  // hidden debug hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train_cmd) return cmd_train(config_path);
        if (*enhance_cmd) return cmd_enhance(ckpt, input, output);
        if (*eval_cmd) return cmd_eval(ckpt, ds_root, manifest, report);
        if (*an_cmd)
            return cmd_analyze(ds_root, manifest, samples, out_csv, summary_json, seed, tau);
        if (*st_cmd) {
            SelftestOptions opt;
            opt.perturb_kernel = perturb;
            return run_selftest(opt, std::cout) ? 0 : 1;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
