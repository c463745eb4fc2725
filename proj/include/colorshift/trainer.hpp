#pragma once

#include <iosfwd>

#include "colorshift/checkpoint.hpp"
#include "colorshift/config.hpp"
#include "colorshift/metrics.hpp"

namespace colorshift {

// Raised when the training loss goes non-finite; carries the iteration and
// the per-term breakdown in the message.
struct TrainAbort : std::runtime_error {
    TrainAbort(uint64_t it, const LossBreakdown& bd)
        : std::runtime_error("non-finite loss at iteration " + std::to_string(it) + ": " +
                             bd.to_string()),
          iteration(it),
          breakdown(bd) {}
    uint64_t iteration;
    LossBreakdown breakdown;
};

// Adaptive moment estimation with per-parameter first/second moment buffers.
// Parameters that received no gradient in a step are left untouched.
struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    uint64_t step = 0;
    std::vector<std::vector<float>> m, v;

    void init(const std::vector<NamedParam<float>>& params);
    void apply(std::vector<NamedParam<float>>& params, double lr);
};

// Cosine decay from lr to lr_final across `total` iterations (1-based).
double cosine_lr(double lr, double lr_final, int iteration, int total);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(std::vector<NamedParam<float>>& params, double max_norm);

struct TrainResult {
    std::string final_checkpoint;
    std::string log_path;
    LossBreakdown last;
    double last_psnr = 0;
    std::vector<double> loss_history;  // total loss per iteration
};

// Full training run driven by the config: builds the model, streams batches
// of augmented patches, optimizes Eq-style composite loss, logs a CSV row
// every log_interval iterations (and at the end), and writes periodic plus
// final checkpoints under train.output_dir.
TrainResult train(const FullConfig& cfg, std::ostream* console = nullptr);

// As train(), with datasets supplied by the caller (tests, in-memory sets).
TrainResult train_with_datasets(const FullConfig& cfg, const PairedDataset& ds,
                                const PairedDataset* val, std::ostream* console = nullptr);

// Checkpoint <-> model/optimizer glue. apply_checkpoint verifies the config
// hash and copies every parameter and batch-norm state by name.
CheckpointData checkpoint_from_model(Model<float>& model, const Adam* adam, uint64_t iteration,
                                     const std::string& rng_state);
void apply_checkpoint(const CheckpointData& data, Model<float>& model);
void restore_optimizer(const CheckpointData& data, Model<float>& model, Adam& adam);

// Constructs the model a checkpoint was saved from (embedded config JSON)
// and loads its weights.
Model<float> model_from_checkpoint(const CheckpointData& data);

// Pads, runs the model in evaluation mode, crops back, clamps to [0,1].
Tensor<float> enhance_tensor(Model<float>& model, const Tensor<float>& input);

// Per-image + mean metrics of the model over a paired dataset; writes a CSV
// when csv_path is non-empty.
std::vector<MetricRow> evaluate_model(Model<float>& model, const PairedDataset& ds,
                                      const std::string& csv_path);

// Metrics of the raw inputs against gt (identity baseline).
std::vector<MetricRow> evaluate_identity(const PairedDataset& ds, const std::string& csv_path);

}  // namespace colorshift
