// Command-line entry point: train / eval / infer / synth / gradcheck.
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "metal/anomaly.hpp"
#include "metal/config.hpp"
#include "metal/data.hpp"
#include "metal/errors.hpp"
#include "metal/gradcheck.hpp"
#include "metal/image_io.hpp"
#include "metal/metal_model.hpp"
#include "metal/metrics.hpp"
#include "metal/trainer.hpp"

namespace fs = std::filesystem;
using namespace metal;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
};

Config resolve_config(const CommonOpts& opts) {
    Config cfg = opts.config_path.empty() ? Config{} : load_config_file(opts.config_path);
    for (const auto& o : opts.overrides) apply_config_override(cfg, o);
    cfg.validate();
    return cfg;
}

DatasetLayout parse_layout(const std::string& s) {
    if (s == "mvtec") return DatasetLayout::MVTec;
    if (s == "folder") return DatasetLayout::LabeledFolder;
    if (s == "synthetic") return DatasetLayout::Synthetic;
    throw ConfigError("unknown layout '" + s + "' (expected mvtec|folder|synthetic)");
}

DatasetSpec make_dataset_spec(const Config& cfg, const std::string& data_root,
                              const std::string& layout, const std::string& class_name) {
    DatasetSpec spec;
    spec.layout = parse_layout(layout);
    spec.root = data_root;
    spec.class_name = class_name;
    spec.image_side = cfg.image_side;
    spec.seed = cfg.seed;
    if (spec.layout == DatasetLayout::Synthetic) {
        spec.synth = load_synth_spec_file(data_root);
        if (spec.synth.image_side != cfg.image_side)
            throw ConfigError("synth spec image_side " + std::to_string(spec.synth.image_side) +
                              " does not match config image_side " +
                              std::to_string(cfg.image_side));
    }
    return spec;
}

void write_resolved_config(const Config& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / "config.resolved");
    os << "# resolved run configuration (checkpoint format v" << kCheckpointVersion
       << ", anomaly map format v" << kAmapVersion << ")\n";
    os << serialize_config(cfg);
}

std::string safe_name(std::string id) {
    for (auto& c : id)
        if (c == '/' || c == '\\') c = '_';
    return id;
}

int cmd_train(const CommonOpts& common, const std::string& data_root, const std::string& layout,
              const std::string& class_name, const std::string& out_dir) {
    Config cfg = resolve_config(common);
    DatasetSpec dspec = make_dataset_spec(cfg, data_root, layout, class_name);
    Dataset ds = load_dataset(dspec);
    std::cout << "loaded " << ds.train.size() << " train / " << ds.test.size()
              << " test images\n";
    auto [train_set, val_set] = make_validation_split(ds.train, cfg.val_fraction, cfg.seed);
    std::cout << "split: " << train_set.size() << " train, " << val_set.size() << " val\n";

    MetalModel<float> model(cfg);
    std::cout << "model parameters: " << model.param_count() << " (combo "
              << to_string(cfg.combo) << ")\n";
    TrainResult res = train(model, train_set, val_set, cfg, true);
    std::cout << "stopped at epoch " << res.stopped_epoch << ", best epoch " << res.best_epoch
              << ", best val loss " << res.best_val_loss << "\n";

    fs::create_directories(out_dir);
    save_checkpoint(model.params(), (fs::path(out_dir) / "checkpoint.bin").string());
    write_history_csv((fs::path(out_dir) / "history.csv").string(), res.history);
    write_resolved_config(cfg, out_dir);
    std::cout << "wrote " << out_dir << "/checkpoint.bin, history.csv, config.resolved\n";
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& checkpoint, const std::string& data_root,
             const std::string& layout, const std::string& class_name,
             const std::string& out_dir) {
    Config cfg = resolve_config(common);
    MetalModel<float> model(cfg);
    load_checkpoint(model.params(), checkpoint);
    DatasetSpec dspec = make_dataset_spec(cfg, data_root, layout, class_name);
    Dataset ds = load_dataset(dspec);
    if (ds.test.empty()) throw DataError("evaluation needs a non-empty test set");

    fs::create_directories(fs::path(out_dir) / "maps");
    fs::create_directories(fs::path(out_dir) / "heatmaps");

    std::vector<Mat<float>> maps;
    std::vector<BinaryMask> masks;
    std::vector<double> scores;
    std::vector<uint8_t> labels;
    bool have_masks = true;
    for (const auto& s : ds.test) {
        ImageTensor recon = model.reconstruct_patchwise(s.image);
        AnomalyMap am = make_anomaly_map(s.image, recon, cfg.sigma);
        std::string stem = safe_name(s.id);
        write_amap((fs::path(out_dir) / "maps" / (stem + ".amap")).string(), am.smoothed);
        save_png_heatmap((fs::path(out_dir) / "heatmaps" / (stem + ".png")).string(), am.smoothed);
        scores.push_back(image_score(am, cfg.image_score_mode));
        labels.push_back(s.anomalous ? 1 : 0);
        if (s.mask.has_value()) {
            maps.push_back(am.smoothed);
            masks.push_back(*s.mask);
        } else {
            have_masks = false;
        }
    }

    EvalReport rep;
    rep.class_name = class_name.empty() ? "dataset" : class_name;
    rep.n_images = static_cast<int>(ds.test.size());
    rep.fpr_cap = cfg.fpr_cap;
    rep.sigma = cfg.sigma;
    rep.combo = to_string(cfg.combo);
    rep.seed = cfg.seed;
    if (have_masks && !maps.empty()) {
        try {
            PixelEvalResult pix = pixel_level_eval(maps, masks, cfg.fpr_cap);
            rep.pooled_partial_auroc = pix.pooled.partial_auc_normalized;
            rep.per_image_mean_partial = pix.per_image_mean;
        } catch (const DataError& e) {
            std::cerr << "notice: pixel metrics skipped (" << e.what() << ")\n";
        }
    } else {
        std::cerr << "notice: ground-truth masks unavailable, pixel metrics skipped\n";
    }
    try {
        rep.image_level_auroc = partial_auroc(roc(scores, labels), 1.0);
    } catch (const DataError& e) {
        std::cerr << "notice: image-level AUROC skipped (" << e.what() << ")\n";
    }

    std::ofstream(fs::path(out_dir) / "report.txt") << rep.to_text();
    std::ofstream(fs::path(out_dir) / "report.csv") << rep.to_csv();
    write_resolved_config(cfg, out_dir);
    std::cout << rep.to_text();
    return 0;
}

int cmd_infer(const CommonOpts& common, const std::string& checkpoint, const std::string& image,
              const std::string& out_dir) {
    Config cfg = resolve_config(common);
    MetalModel<float> model(cfg);
    load_checkpoint(model.params(), checkpoint);
    ImageTensor img = load_image(image, cfg.image_side);
    ImageTensor recon = model.reconstruct_patchwise(img);
    AnomalyMap am = make_anomaly_map(img, recon, cfg.sigma);
    fs::create_directories(out_dir);
    save_png_rgb((fs::path(out_dir) / "reconstruction.png").string(), recon);
    write_amap((fs::path(out_dir) / "anomaly.amap").string(), am.smoothed);
    save_png_heatmap((fs::path(out_dir) / "heatmap.png").string(), am.smoothed);
    write_resolved_config(cfg, out_dir);
    std::cout << "image score (" << to_string(cfg.image_score_mode)
              << "): " << image_score(am, cfg.image_score_mode) << "\n";
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              const std::string& class_name) {
    SyntheticSpec spec = load_synth_spec_file(spec_path);
    materialize_synthetic(spec, out_dir, class_name);
    std::cout << "wrote synthetic dataset (" << spec.train_count << " train, "
              << spec.test_count + spec.test_normal_count << " test) under " << out_dir << "/"
              << class_name << "\n";
    return 0;
}

int cmd_gradcheck(const CommonOpts& common, int entries) {
    Config cfg = common.config_path.empty() && common.overrides.empty()
                     ? gradcheck_default_config()
                     : resolve_config(common);
    bool ok = true;
    auto report = [&](const GradCheckResult& r) {
        bool pass = r.pass();
        ok = ok && pass;
        std::cout << (pass ? "[ok]   " : "[FAIL] ") << r.name << " max rel err " << r.max_rel_err
                  << "\n";
    };
    report(gradcheck_primitives());
    report(gradcheck_model(cfg, SsimMode::Global, entries));
    report(gradcheck_model(cfg, SsimMode::Windowed, entries));
    std::cout << (ok ? "gradient check passed\n" : "gradient check FAILED\n");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"masked-transformer anomaly localization"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string data_root, layout = "mvtec", class_name, out_dir, checkpoint, image, spec_path;
    std::string synth_class = "synthetic";
    int gc_entries = 6;
    std::function<int()> run;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "key=value config file");
        sub->add_option("--set", common.overrides, "override a config key (key=value)");
    };

    CLI::App* tr = app.add_subcommand("train", "train a model");
    add_common(tr);
    tr->add_option("--data-root", data_root, "dataset root (or synth spec file)")->required();
    tr->add_option("--layout", layout, "mvtec|folder|synthetic");
    tr->add_option("--class", class_name, "dataset class name");
    tr->add_option("--out", out_dir, "output directory")->required();
    tr->callback([&]() { run = [&]() { return cmd_train(common, data_root, layout, class_name, out_dir); }; });

    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a test set");
    add_common(ev);
    ev->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    ev->add_option("--data-root", data_root, "dataset root (or synth spec file)")->required();
    ev->add_option("--layout", layout, "mvtec|folder|synthetic");
    ev->add_option("--class", class_name, "dataset class name");
    ev->add_option("--out", out_dir, "output directory")->required();
    ev->callback([&]() {
        run = [&]() { return cmd_eval(common, checkpoint, data_root, layout, class_name, out_dir); };
    });

    CLI::App* in = app.add_subcommand("infer", "reconstruct one image and score it");
    add_common(in);
    in->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    in->add_option("--image", image, "input image")->required();
    in->add_option("--out", out_dir, "output directory")->required();
    in->callback([&]() { run = [&]() { return cmd_infer(common, checkpoint, image, out_dir); }; });

    CLI::App* sy = app.add_subcommand("synth", "materialize a synthetic dataset");
    sy->add_option("--spec", spec_path, "synth spec file")->required();
    sy->add_option("--out", out_dir, "output directory")->required();
    sy->add_option("--class", synth_class, "class directory name");
    sy->callback([&]() { run = [&]() { return cmd_synth(spec_path, out_dir, synth_class); }; });

    CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(gc);
    gc->add_option("--entries", gc_entries,
                   "finite-difference probes per parameter (0 = every entry)");
    gc->callback([&]() { run = [&]() { return cmd_gradcheck(common, gc_entries); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        return run();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const MetalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
