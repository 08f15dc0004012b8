#include "metal/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "metal/errors.hpp"

namespace metal {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

template <class E>
E parse_enum(const std::string& key, const std::string& v,
             const std::vector<std::pair<std::string, E>>& table) {
    for (const auto& [name, val] : table)
        if (name == v) return val;
    std::string opts;
    for (const auto& [name, val] : table) opts += (opts.empty() ? "" : "|") + name;
    throw ConfigError("config key '" + key + "': expected one of " + opts + ", got '" + v + "'");
}

const std::vector<std::pair<std::string, ShapeCombo>> kCombos = {
    {"squares_only_no_mask", ShapeCombo::SquaresOnlyNoMask},
    {"squares_only", ShapeCombo::SquaresOnly},
    {"squares_rows", ShapeCombo::SquaresRows},
    {"squares_cols", ShapeCombo::SquaresCols},
    {"rows_cols", ShapeCombo::RowsCols},
    {"squares_rows_cols", ShapeCombo::SquaresRowsCols},
};
const std::vector<std::pair<std::string, MaskMode>> kMaskModes = {
    {"neginf", MaskMode::NegInf}, {"zerologit", MaskMode::ZeroLogit}};
const std::vector<std::pair<std::string, AttentionResidual>> kResiduals = {
    {"standard", AttentionResidual::Standard}, {"disabled", AttentionResidual::Disabled}};
const std::vector<std::pair<std::string, NormPlacement>> kNorms = {
    {"prenorm", NormPlacement::PreNorm}, {"postnorm", NormPlacement::PostNorm}};
const std::vector<std::pair<std::string, SsimMode>> kSsimModes = {
    {"global", SsimMode::Global}, {"windowed", SsimMode::Windowed}};
const std::vector<std::pair<std::string, ImageScoreMode>> kScoreModes = {
    {"max", ImageScoreMode::Max}, {"mean", ImageScoreMode::Mean}, {"topk", ImageScoreMode::TopKMean}};
const std::vector<std::pair<std::string, OptimizerKind>> kOptimizers = {
    {"adam", OptimizerKind::Adam}, {"sgd", OptimizerKind::Sgd}};

void set_key(Config& c, const std::string& key, const std::string& v) {
    if (key == "image_side")
        c.image_side = static_cast<int>(parse_int(key, v));
    else if (key == "patch_side")
        c.patch_side = static_cast<int>(parse_int(key, v));
    else if (key == "embed_dim")
        c.embed_dim = static_cast<int>(parse_int(key, v));
    else if (key == "num_heads")
        c.num_heads = static_cast<int>(parse_int(key, v));
    else if (key == "num_blocks")
        c.num_blocks = static_cast<int>(parse_int(key, v));
    else if (key == "combo")
        c.combo = parse_enum(key, v, kCombos);
    else if (key == "mask_mode")
        c.mask_mode = parse_enum(key, v, kMaskModes);
    else if (key == "attention_residual")
        c.attention_residual = parse_enum(key, v, kResiduals);
    else if (key == "norm_placement")
        c.norm_placement = parse_enum(key, v, kNorms);
    else if (key == "ffn_hidden")
        c.ffn_hidden = static_cast<int>(parse_int(key, v));
    else if (key == "decoder_hidden")
        c.decoder_hidden = static_cast<int>(parse_int(key, v));
    else if (key == "activation") {
        if (v != "gelu" && v != "relu")
            throw ConfigError("config key 'activation': expected gelu|relu, got '" + v + "'");
        c.activation = v;
    } else if (key == "ssim_mode")
        c.ssim_mode = parse_enum(key, v, kSsimModes);
    else if (key == "l1_reduction") {
        if (v != "sum" && v != "mean")
            throw ConfigError("config key 'l1_reduction': expected sum|mean, got '" + v + "'");
        c.l1_reduction = v;
    } else if (key == "sigma")
        c.sigma = parse_real(key, v);
    else if (key == "fpr_cap")
        c.fpr_cap = parse_real(key, v);
    else if (key == "image_score_mode")
        c.image_score_mode = parse_enum(key, v, kScoreModes);
    else if (key == "lr")
        c.lr = parse_real(key, v);
    else if (key == "batch")
        c.batch = static_cast<int>(parse_int(key, v));
    else if (key == "max_epochs")
        c.max_epochs = static_cast<int>(parse_int(key, v));
    else if (key == "early_stop_start_epoch")
        c.early_stop_start_epoch = static_cast<int>(parse_int(key, v));
    else if (key == "patience")
        c.patience = static_cast<int>(parse_int(key, v));
    else if (key == "val_fraction")
        c.val_fraction = parse_real(key, v);
    else if (key == "optimizer")
        c.optimizer = parse_enum(key, v, kOptimizers);
    else if (key == "weight_decay")
        c.weight_decay = parse_real(key, v);
    else if (key == "grad_clip")
        c.grad_clip = parse_real(key, v);
    else if (key == "seed")
        c.seed = static_cast<uint64_t>(parse_int(key, v));
    else
        throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void Config::validate() const {
    if (image_side <= 0 || patch_side <= 0)
        throw ConfigError("image_side and patch_side must be positive");
    if (image_side % patch_side != 0)
        throw ConfigError("patch_side must divide image_side (" + std::to_string(image_side) +
                          " % " + std::to_string(patch_side) + " != 0)");
    if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0)
        throw ConfigError("embed_dim must be a positive multiple of num_heads");
    if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
    if (ffn_hidden < embed_dim) throw ConfigError("ffn_hidden must be >= embed_dim");
    if (decoder_hidden < 1) throw ConfigError("decoder_hidden must be >= 1");
    if ((has_rows() || has_cols()) && embed_dim % grid_side() != 0)
        throw ConfigError("embed_dim must be divisible by image_side/patch_side (stripe segments)");
    if (grid_side() < 2 && diag_masked())
        throw ConfigError("diagonal masking needs at least 2 patches per shape");
    if (sigma < 0) throw ConfigError("sigma must be >= 0");
    if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) throw ConfigError("fpr_cap must be in (0, 1]");
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (early_stop_start_epoch > max_epochs)
        throw ConfigError("early_stop_start_epoch must be <= max_epochs");
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw ConfigError("val_fraction must be in (0, 1)");
}

Config parse_config_text(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        set_key(cfg, key, val);
    }
    return cfg;
}

Config load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

void apply_config_override(Config& cfg, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
    set_key(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string to_string(ShapeCombo c) {
    for (const auto& [name, val] : kCombos)
        if (val == c) return name;
    return "?";
}
std::string to_string(MaskMode m) {
    return m == MaskMode::NegInf ? "neginf" : "zerologit";
}
std::string to_string(AttentionResidual r) {
    return r == AttentionResidual::Standard ? "standard" : "disabled";
}
std::string to_string(NormPlacement n) {
    return n == NormPlacement::PreNorm ? "prenorm" : "postnorm";
}
std::string to_string(SsimMode s) {
    return s == SsimMode::Global ? "global" : "windowed";
}
std::string to_string(ImageScoreMode m) {
    switch (m) {
        case ImageScoreMode::Max: return "max";
        case ImageScoreMode::Mean: return "mean";
        default: return "topk";
    }
}
std::string to_string(OptimizerKind o) {
    return o == OptimizerKind::Adam ? "adam" : "sgd";
}

std::string serialize_config(const Config& c) {
    std::ostringstream os;
    auto real = [](double v) {
        std::ostringstream r;
        r.precision(17);
        r << v;
        return r.str();
    };
    os << "image_side=" << c.image_side << "\n";
    os << "patch_side=" << c.patch_side << "\n";
    os << "embed_dim=" << c.embed_dim << "\n";
    os << "num_heads=" << c.num_heads << "\n";
    os << "num_blocks=" << c.num_blocks << "\n";
    os << "combo=" << to_string(c.combo) << "\n";
    os << "mask_mode=" << to_string(c.mask_mode) << "\n";
    os << "attention_residual=" << to_string(c.attention_residual) << "\n";
    os << "norm_placement=" << to_string(c.norm_placement) << "\n";
    os << "ffn_hidden=" << c.ffn_hidden << "\n";
    os << "decoder_hidden=" << c.decoder_hidden << "\n";
    os << "activation=" << c.activation << "\n";
    os << "ssim_mode=" << to_string(c.ssim_mode) << "\n";
    os << "l1_reduction=" << c.l1_reduction << "\n";
    os << "sigma=" << real(c.sigma) << "\n";
    os << "fpr_cap=" << real(c.fpr_cap) << "\n";
    os << "image_score_mode=" << to_string(c.image_score_mode) << "\n";
    os << "lr=" << real(c.lr) << "\n";
    os << "batch=" << c.batch << "\n";
    os << "max_epochs=" << c.max_epochs << "\n";
    os << "early_stop_start_epoch=" << c.early_stop_start_epoch << "\n";
    os << "patience=" << c.patience << "\n";
    os << "val_fraction=" << real(c.val_fraction) << "\n";
    os << "optimizer=" << to_string(c.optimizer) << "\n";
    os << "weight_decay=" << real(c.weight_decay) << "\n";
    os << "grad_clip=" << real(c.grad_clip) << "\n";
    os << "seed=" << c.seed << "\n";
    return os.str();
}

}  // namespace metal
