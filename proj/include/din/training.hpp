#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "din/config.hpp"
#include "din/image.hpp"
#include "din/model.hpp"
#include "din/nn.hpp"
#include "din/parameter_store.hpp"

namespace din {

using nn::l1_loss;

// Per-parameter first/second moments, aligned with ParameterStore::entries().
template <typename T>
struct AdamState {
    std::vector<std::vector<T>> m;
    std::vector<std::vector<T>> v;
    std::int64_t t = 0;

    static AdamState zeros_like(const ParameterStore<T>& store);
};

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

// Bias-corrected Adam. Every parameter must carry a gradient buffer.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state, double lr, const AdamHyper& hyper);

// lr0 * 0.5^floor(epoch / lr_halve_every).
[[nodiscard]] double lr_schedule(int epoch, const TrainConfig& config);

// Full-size training image pair in the model range.
template <typename T>
struct TrainPair {
    Tensor<T> hr;  // (1, 3, r h, r w)
    Tensor<T> lr;  // (1, 3, h, w)
};

// Crops the HR image to a multiple of r and derives the LR image the same
// way degrade_dataset does, including 8-bit quantisation.
template <typename T>
[[nodiscard]] TrainPair<T> make_train_pair(const ImagePlane& hr, int scale);

template <typename T>
[[nodiscard]] TrainPair<T> make_train_pair(const ImagePlane& hr, const ImagePlane& lr, int scale);

struct PatchWindow {
    int x = 0;  // LR column of the top-left corner
    int y = 0;  // LR row of the top-left corner
    int transform = 0;  // dihedral index, 0 when augmentation is off
};

// Draws a uniformly random LR window of size p (and a transform if `augment`).
[[nodiscard]] PatchWindow draw_patch_window(int lr_width, int lr_height, int patch, bool augment,
                                            std::mt19937_64& rng);

// The aligned (lr p x p, hr rp x rp) crops of a pair, with the window's
// transform applied identically to both.
template <typename T>
[[nodiscard]] TrainPair<T> extract_patch(const TrainPair<T>& pair, int scale, int patch,
                                         const PatchWindow& window);

template <typename T>
[[nodiscard]] TrainPair<T> sample_patch_pair(const TrainPair<T>& pair, int scale, int patch, bool augment,
                                             std::mt19937_64& rng);

struct TrainRecord {
    std::int64_t step = 0;  // updates applied before this loss was measured
    int epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<double> val_psnr;
};

// CSV with a fixed column order `step,epoch,lr,loss,val_psnr`; an absent
// validation PSNR is an empty field.
[[nodiscard]] std::string train_record_header();
[[nodiscard]] std::string format_train_record(const TrainRecord& record);
[[nodiscard]] TrainRecord parse_train_record(const std::string& line);
[[nodiscard]] std::vector<TrainRecord> read_train_records(const std::filesystem::path& path);

template <typename T>
struct Dataset {
    std::vector<TrainPair<T>> train;
    std::vector<TrainPair<T>> validation;
};

// HR PNGs of a directory (and optionally matching LR PNGs from degrade).
template <typename T>
[[nodiscard]] std::vector<TrainPair<T>> load_pairs(const std::filesystem::path& hr_dir, int scale,
                                                   const std::optional<std::filesystem::path>& lr_dir);

// Mean Y PSNR (border r) of the model's 8-bit outputs over the pairs.
template <typename T>
[[nodiscard]] double evaluate_psnr(const DinModel<T>& model, const std::vector<TrainPair<T>>& pairs);

// One model, its optimiser and its sampling stream. The whole state needed
// to continue bit-exactly is written by save_checkpoint.
template <typename T>
class Trainer {
public:
    Trainer(const ModelConfig& model_config, const TrainConfig& train_config, Dataset<T> data);

    [[nodiscard]] DinModel<T>& model() { return model_; }
    [[nodiscard]] const DinModel<T>& model() const { return model_; }
    [[nodiscard]] const TrainConfig& train_config() const { return train_config_; }
    [[nodiscard]] std::int64_t steps_done() const { return state_.t; }
    [[nodiscard]] bool finished() const { return steps_done() >= train_config_.total_steps(); }

    // Samples a batch, measures the loss, back-propagates and applies Adam.
    // Throws NumericError on a non-finite loss.
    TrainRecord step();

    // Directory with weights.dinw, adam.dinw and state.json.
    void save_checkpoint(const std::filesystem::path& dir) const;
    void load_checkpoint(const std::filesystem::path& dir);

private:
    ModelConfig model_config_;
    TrainConfig train_config_;
    Dataset<T> data_;
    DinModel<T> model_;
    AdamState<T> state_;
    std::mt19937_64 rng_;
};

struct TrainOptions {
    std::filesystem::path out_dir;  // records.csv, checkpoint/, weights.dinw; empty writes nothing
    bool resume = false;            // continue from out_dir/checkpoint if present
    std::int64_t max_steps = -1;    // stop early after this many total steps
    std::function<void(const TrainRecord&)> on_record;
};

template <typename T>
struct TrainResult {
    std::vector<TrainRecord> records;
    std::int64_t steps = 0;
};

// Runs (or continues) training until the step budget is spent.
template <typename T>
TrainResult<T> train_loop(Trainer<T>& trainer, const TrainOptions& options);

struct SeriesRun {
    std::string label;
    ModelConfig model;
    std::filesystem::path records;
    std::int64_t parameters = 0;
    std::vector<TrainRecord> series;
};

// Three matched trainings (sum, concat, asyca) from one base config and
// seed, each writing `<out_dir>/<mode>/records.csv`.
template <typename T>
std::vector<SeriesRun> fusion_comparison(const std::vector<ModelConfig>& configs, const TrainConfig& train,
                                         const Dataset<T>& data, const std::filesystem::path& out_dir);

// The fusion-mode configs used by fusion_comparison, in run order.
[[nodiscard]] std::vector<ModelConfig> fusion_configs(const ModelConfig& base);

// Throws ConfigError unless the configs differ only in fusion_mode / use_asyca.
void require_fusion_only_difference(const std::vector<ModelConfig>& configs);

// The 2^3 AsyCA x DWC x GFF grid. Without AsyCA the fusion nodes use the
// 1x1 concat reduction.
[[nodiscard]] std::vector<ModelConfig> ablation_grid(const ModelConfig& base);
[[nodiscard]] std::string ablation_label(const ModelConfig& config);

template <typename T>
std::vector<SeriesRun> ablation(const ModelConfig& base, const TrainConfig& train, const Dataset<T>& data,
                                const std::filesystem::path& out_dir);

}  // namespace din
