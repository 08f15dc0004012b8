// Flat key=value run configuration. Every tunable of the pipeline lives here;
// unknown keys are rejected and all keys have documented defaults.
#pragma once

#include <cstdint>
#include <string>

namespace metal {

enum class ShapeCombo {
    SquaresOnlyNoMask,
    SquaresOnly,
    SquaresRows,
    SquaresCols,
    RowsCols,
    SquaresRowsCols
};

enum class MaskMode { NegInf, ZeroLogit };
enum class AttentionResidual { Standard, Disabled };
enum class NormPlacement { PreNorm, PostNorm };
enum class SsimMode { Global, Windowed };
enum class ImageScoreMode { Max, Mean, TopKMean };
enum class OptimizerKind { Adam, Sgd };
enum class LossReduction { Sum, Mean };

struct Config {
    // geometry / architecture
    int image_side = 128;
    int patch_side = 16;
    int embed_dim = 128;
    int num_heads = 4;
    int num_blocks = 1;
    ShapeCombo combo = ShapeCombo::SquaresRows;
    MaskMode mask_mode = MaskMode::NegInf;
    AttentionResidual attention_residual = AttentionResidual::Standard;
    NormPlacement norm_placement = NormPlacement::PreNorm;
    int ffn_hidden = 512;
    int decoder_hidden = 512;
    std::string activation = "gelu";  // gelu | relu

    // loss
    SsimMode ssim_mode = SsimMode::Windowed;
    std::string l1_reduction = "sum";  // sum | mean

    // anomaly map & evaluation
    double sigma = 4.0;
    double fpr_cap = 0.3;
    ImageScoreMode image_score_mode = ImageScoreMode::Max;

    // training
    double lr = 1e-4;
    int batch = 64;
    int max_epochs = 3000;
    int early_stop_start_epoch = 500;
    int patience = 50;
    double val_fraction = 0.10;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double weight_decay = 0.0;
    double grad_clip = 0.0;  // 0 disables clipping
    uint64_t seed = 0;

    // derived helpers
    bool has_squares() const {
        return combo != ShapeCombo::RowsCols;
    }
    bool has_rows() const {
        return combo == ShapeCombo::SquaresRows || combo == ShapeCombo::RowsCols ||
               combo == ShapeCombo::SquaresRowsCols;
    }
    bool has_cols() const {
        return combo == ShapeCombo::SquaresCols || combo == ShapeCombo::RowsCols ||
               combo == ShapeCombo::SquaresRowsCols;
    }
    bool diag_masked() const { return combo != ShapeCombo::SquaresOnlyNoMask; }
    int grid_side() const { return image_side / patch_side; }
    int num_squares() const { return grid_side() * grid_side(); }
    int segment_len() const { return embed_dim / grid_side(); }

    // throws ConfigError (with the offending key) on invalid settings
    void validate() const;
};

Config parse_config_text(const std::string& text);
Config load_config_file(const std::string& path);
// applies "key=value" to an existing config (CLI overrides)
void apply_config_override(Config& cfg, const std::string& assignment);
std::string serialize_config(const Config& cfg);

std::string to_string(ShapeCombo c);
std::string to_string(MaskMode m);
std::string to_string(AttentionResidual r);
std::string to_string(NormPlacement n);
std::string to_string(SsimMode s);
std::string to_string(ImageScoreMode m);
std::string to_string(OptimizerKind o);

}  // namespace metal
