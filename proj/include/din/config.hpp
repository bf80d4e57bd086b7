#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace din {

enum class FusionMode {
    Asyca,   // asymmetric co-attention
    Concat,  // 1x1 conv over the concatenated pair
    Sum,     // elementwise sum
    Mean,    // (x1 + x2) / 2; reference for the zero-initialised attention start
};

[[nodiscard]] std::string_view to_string(FusionMode mode);
[[nodiscard]] FusionMode parse_fusion_mode(std::string_view text);

struct ModelConfig {
    int branches = 4;          // M
    int wrdbs_per_branch = 5;  // D
    int rdbs_per_wrdb = 3;     // B
    int convs_per_rdb = 6;     // L
    int growth = 32;           // G
    int base_channels = 64;    // C
    int scale = 2;             // r in {2, 3, 4}
    int attn_reduction = 16;
    bool use_asyca = true;
    bool use_dwc = true;
    bool use_gff = true;
    FusionMode fusion_mode = FusionMode::Asyca;
    // Initialise the attention expansion conv to zero so every fusion node
    // starts as the mean of its inputs. Initialisation only; not hashed.
    bool asyca_zero_init = true;

    static ModelConfig paper();
    static ModelConfig desk();
    static ModelConfig profile(std::string_view name);

    // Throws ConfigError naming the offending field.
    void validate() const;

    // One `key = value` line per field in schema order.
    [[nodiscard]] std::string to_text() const;

    // FNV-1a over the architecture fields; embedded in weight files.
    [[nodiscard]] std::uint64_t hash() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
    int batch_size = 8;
    int lr_patch = 50;
    double lr0 = 1e-4;
    int lr_halve_every = 200;  // epochs
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
    int max_epochs = 1000;
    int steps_per_epoch = 1000;
    std::uint64_t seed = 0;
    bool augment = true;
    int checkpoint_every = 1;  // epochs; 0 disables
    int validate_every = 1;    // epochs; 0 disables
    std::string precision = "float";

    static TrainConfig paper();
    static TrainConfig desk();
    static TrainConfig profile(std::string_view name);

    void validate() const;
    [[nodiscard]] std::string to_text() const;
    [[nodiscard]] std::int64_t total_steps() const {
        return static_cast<std::int64_t>(max_epochs) * steps_per_epoch;
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Config files are UTF-8 text, one `key = value` per line; `#` starts a
// comment; blank lines are ignored. Unknown keys, duplicate keys and
// malformed values are errors reported as `source:line: field 'key': ...`.
struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
};

[[nodiscard]] std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view source);

// Each parser starts from `base` and applies the file's entries on top.
[[nodiscard]] ModelConfig parse_model_config(std::string_view text, std::string_view source,
                                             ModelConfig base = ModelConfig::paper());
[[nodiscard]] TrainConfig parse_train_config(std::string_view text, std::string_view source,
                                             TrainConfig base = TrainConfig::paper());

[[nodiscard]] ModelConfig load_model_config(const std::filesystem::path& path,
                                            ModelConfig base = ModelConfig::paper());
[[nodiscard]] TrainConfig load_train_config(const std::filesystem::path& path,
                                            TrainConfig base = TrainConfig::paper());

// `key=value` overrides from the command line.
void apply_override(ModelConfig& config, std::string_view assignment);
void apply_override(TrainConfig& config, std::string_view assignment);

[[nodiscard]] std::uint64_t fnv1a64(std::string_view bytes,
                                    std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace din
