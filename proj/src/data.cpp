#include "metal/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "metal/anomaly.hpp"
#include "metal/errors.hpp"
#include "metal/image_io.hpp"

namespace fs = std::filesystem;

namespace metal {

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" ||
           ext == ".tiff";
}

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("missing directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<fs::path> list_subdirs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("missing directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::mt19937 seeded_rng(uint64_t seed) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), 0x9e3779b9u};
    return std::mt19937(seq);
}

}  // namespace

Dataset load_mvtec(const DatasetSpec& spec) {
    const fs::path root = fs::path(spec.root) / spec.class_name;
    if (!fs::is_directory(root)) throw DataError("missing dataset directory: " + root.string());
    Dataset ds;

    for (const auto& p : list_images(root / "train" / "good")) {
        Sample s;
        s.image = load_image(p.string(), spec.image_side);
        s.anomalous = false;
        s.id = "train/good/" + p.filename().string();
        ds.train.push_back(std::move(s));
    }
    if (ds.train.empty()) throw DataError("no training images under " + (root / "train").string());

    for (const auto& type_dir : list_subdirs(root / "test")) {
        const std::string type = type_dir.filename().string();
        for (const auto& p : list_images(type_dir)) {
            Sample s;
            s.image = load_image(p.string(), spec.image_side);
            s.anomalous = type != "good";
            s.id = "test/" + type + "/" + p.filename().string();
            if (s.anomalous) {
                fs::path mask_path = root / "ground_truth" / type /
                                     (p.stem().string() + "_mask.png");
                if (!fs::exists(mask_path))
                    throw DataError("missing ground-truth mask: " + mask_path.string());
                s.mask = load_mask(mask_path.string(), spec.image_side);
            } else {
                s.mask = BinaryMask(spec.image_side, spec.image_side);
            }
            ds.test.push_back(std::move(s));
        }
    }

    std::mt19937 rng = seeded_rng(spec.seed);
    std::shuffle(ds.train.begin(), ds.train.end(), rng);
    return ds;
}

Dataset load_labeled_folder(const DatasetSpec& spec) {
    const fs::path root = spec.root;
    const fs::path csv = root / "labels.csv";
    std::ifstream is(csv);
    if (!is) throw DataError("missing label file: " + csv.string());

    std::string line;
    if (!std::getline(is, line)) throw DataError("empty label file: " + csv.string());
    std::vector<Sample> normal, anomalous;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t comma = line.rfind(',');
        if (comma == std::string::npos)
            throw DataError("label file line " + std::to_string(lineno) + ": expected name,label");
        std::string name = line.substr(0, comma);
        std::string lab = line.substr(comma + 1);
        if (lab != "0" && lab != "1")
            throw DataError("label file line " + std::to_string(lineno) + ": label must be 0 or 1");
        fs::path img_path = root / name;
        if (!fs::exists(img_path))
            throw DataError("label file names unknown image: " + img_path.string());
        Sample s;
        s.image = load_image(img_path.string(), spec.image_side);
        s.anomalous = lab == "1";
        s.id = name;
        (s.anomalous ? anomalous : normal).push_back(std::move(s));
    }
    if (normal.empty()) throw DataError("label file contains no normal images");

    std::mt19937 rng = seeded_rng(spec.seed);
    std::shuffle(normal.begin(), normal.end(), rng);
    if (static_cast<int>(normal.size()) <= spec.labeled_train_count)
        throw DataError("need more than " + std::to_string(spec.labeled_train_count) +
                        " normal images, got " + std::to_string(normal.size()));
    Dataset ds;
    ds.train.assign(normal.begin(), normal.begin() + spec.labeled_train_count);
    ds.test.assign(normal.begin() + spec.labeled_train_count, normal.end());
    ds.test.insert(ds.test.end(), anomalous.begin(), anomalous.end());
    if (anomalous.empty())
        std::cerr << "warning: test split has a single class (no anomalous labels)\n";
    return ds;
}

namespace {

struct TexCtx {
    const SyntheticSpec& spec;
    std::mt19937& rng;
};

ImageTensor make_texture(TexCtx& ctx) {
    const int side = ctx.spec.image_side, cell = ctx.spec.cell;
    std::uniform_real_distribution<float> ulo(0.15f, 0.30f), uhi(0.70f, 0.85f);
    std::uniform_int_distribution<int> uphase(0, std::max(1, cell) - 1);
    std::uniform_real_distribution<float> unoise(-0.02f, 0.02f);
    ImageTensor img(3, side, side);
    switch (ctx.spec.texture) {
        case TextureKind::Checker: {
            int px = uphase(ctx.rng), py = uphase(ctx.rng);
            float lo = ulo(ctx.rng), hi = uhi(ctx.rng);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    bool on = (((x + px) / cell) + ((y + py) / cell)) % 2 != 0;
                    float v = std::clamp((on ? hi : lo) + unoise(ctx.rng), 0.0f, 1.0f);
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
                }
            break;
        }
        case TextureKind::Stripes: {
            int px = uphase(ctx.rng);
            float lo = ulo(ctx.rng), hi = uhi(ctx.rng);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    bool on = ((x + px) / cell) % 2 != 0;
                    float v = std::clamp((on ? hi : lo) + unoise(ctx.rng), 0.0f, 1.0f);
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
                }
            break;
        }
        case TextureKind::NoiseBlur: {
            Mat<float> field(side, side);
            std::uniform_real_distribution<float> u01(0.0f, 1.0f);
            for (auto& v : field.a) v = u01(ctx.rng);
            field = gaussian_smooth(field, 2.0);
            float fmin = *std::min_element(field.a.begin(), field.a.end());
            float fmax = *std::max_element(field.a.begin(), field.a.end());
            float range = std::max(1e-6f, fmax - fmin);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x) {
                    float v = 0.2f + 0.6f * (field(y, x) - fmin) / range;
                    for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
                }
            break;
        }
    }
    return img;
}

void plant_defect(ImageTensor& img, BinaryMask& mask, TexCtx& ctx) {
    const int side = ctx.spec.image_side;
    std::uniform_int_distribution<int> usize(ctx.spec.defect_min, ctx.spec.defect_max);
    std::uniform_real_distribution<float> ugray(0.40f, 0.60f);
    auto paint = [&](int y, int x, float v) {
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = v;
        mask.at(y, x) = 1;
    };
    switch (ctx.spec.defect) {
        case DefectKind::Rect: {
            int h = usize(ctx.rng), w = usize(ctx.rng);
            std::uniform_int_distribution<int> uy(0, side - h), ux(0, side - w);
            int y0 = uy(ctx.rng), x0 = ux(ctx.rng);
            float v = ugray(ctx.rng);
            for (int y = y0; y < y0 + h; ++y)
                for (int x = x0; x < x0 + w; ++x) paint(y, x, v);
            break;
        }
        case DefectKind::Blob: {
            int d = usize(ctx.rng);
            double r = d / 2.0;
            int lo = static_cast<int>(std::ceil(r));
            std::uniform_int_distribution<int> uc(lo, side - 1 - lo);
            int cy = uc(ctx.rng), cx = uc(ctx.rng);
            float v = ugray(ctx.rng);
            for (int y = 0; y < side; ++y)
                for (int x = 0; x < side; ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) paint(y, x, v);
            break;
        }
        case DefectKind::LineScratch: {
            std::uniform_int_distribution<int> upos(0, side - 1);
            std::uniform_int_distribution<int> uthick(1, 2);
            int y0 = upos(ctx.rng), x0 = upos(ctx.rng), y1 = upos(ctx.rng), x1 = upos(ctx.rng);
            int thick = uthick(ctx.rng);
            int steps = std::max(std::abs(y1 - y0), std::abs(x1 - x0)) + 1;
            for (int i = 0; i < steps; ++i) {
                double t = steps == 1 ? 0.0 : double(i) / (steps - 1);
                int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
                int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
                for (int dy = 0; dy < thick; ++dy)
                    for (int dx = 0; dx < thick; ++dx) {
                        int yy = std::clamp(y + dy, 0, side - 1);
                        int xx = std::clamp(x + dx, 0, side - 1);
                        paint(yy, xx, 0.05f);
                    }
            }
            break;
        }
    }
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.defect_min < 1 || spec.defect_max < spec.defect_min ||
        spec.defect_max > spec.image_side)
        throw DataError("synthetic: invalid defect size range");
    std::mt19937 rng = seeded_rng(spec.seed);
    TexCtx ctx{spec, rng};
    Dataset ds;
    char buf[32];
    for (int i = 0; i < spec.train_count; ++i) {
        Sample s;
        s.image = make_texture(ctx);
        s.anomalous = false;
        std::snprintf(buf, sizeof(buf), "train_%03d", i);
        s.id = buf;
        ds.train.push_back(std::move(s));
    }
    for (int i = 0; i < spec.test_count; ++i) {
        Sample s;
        s.image = make_texture(ctx);
        BinaryMask mask(spec.image_side, spec.image_side);
        plant_defect(s.image, mask, ctx);
        s.mask = std::move(mask);
        s.anomalous = true;
        std::snprintf(buf, sizeof(buf), "test_%03d", i);
        s.id = buf;
        ds.test.push_back(std::move(s));
    }
    for (int i = 0; i < spec.test_normal_count; ++i) {
        Sample s;
        s.image = make_texture(ctx);
        s.mask = BinaryMask(spec.image_side, spec.image_side);
        s.anomalous = false;
        std::snprintf(buf, sizeof(buf), "test_good_%03d", i);
        s.id = buf;
        ds.test.push_back(std::move(s));
    }
    return ds;
}

Dataset load_dataset(const DatasetSpec& spec) {
    switch (spec.layout) {
        case DatasetLayout::MVTec:
            return load_mvtec(spec);
        case DatasetLayout::LabeledFolder:
            return load_labeled_folder(spec);
        case DatasetLayout::Synthetic:
            return generate_synthetic(spec.synth);
    }
    throw DataError("unknown dataset layout");
}

std::pair<std::vector<Sample>, std::vector<Sample>> make_validation_split(
    const std::vector<Sample>& train, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw DataError("validation fraction must be in (0,1)");
    const size_t n = train.size();
    const size_t n_val = static_cast<size_t>(std::llround(fraction * double(n)));
    if (n_val < 1 || n_val >= n)
        throw DataError("degenerate validation split: " + std::to_string(n_val) + " of " +
                        std::to_string(n));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937 rng = seeded_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::pair<std::vector<Sample>, std::vector<Sample>> out;
    for (size_t i = 0; i < n_val; ++i) out.second.push_back(train[order[i]]);
    for (size_t i = n_val; i < n; ++i) out.first.push_back(train[order[i]]);
    return out;
}

namespace {

std::string trim_copy(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

SyntheticSpec parse_synth_spec_text(const std::string& text) {
    SyntheticSpec spec;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string s = trim_copy(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("synth spec line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim_copy(s.substr(0, eq));
        std::string val = trim_copy(s.substr(eq + 1));
        auto as_int = [&](const std::string& v) {
            try {
                return std::stoi(v);
            } catch (const std::exception&) {
                throw ConfigError("synth spec key '" + key + "': expected integer, got '" + v + "'");
            }
        };
        if (key == "texture") {
            if (val == "checker") spec.texture = TextureKind::Checker;
            else if (val == "stripes") spec.texture = TextureKind::Stripes;
            else if (val == "noise_blur") spec.texture = TextureKind::NoiseBlur;
            else throw ConfigError("synth spec: unknown texture '" + val + "'");
        } else if (key == "defect") {
            if (val == "rect") spec.defect = DefectKind::Rect;
            else if (val == "blob") spec.defect = DefectKind::Blob;
            else if (val == "scratch") spec.defect = DefectKind::LineScratch;
            else throw ConfigError("synth spec: unknown defect '" + val + "'");
        } else if (key == "defect_min")
            spec.defect_min = as_int(val);
        else if (key == "defect_max")
            spec.defect_max = as_int(val);
        else if (key == "train_count")
            spec.train_count = as_int(val);
        else if (key == "test_count")
            spec.test_count = as_int(val);
        else if (key == "test_normal_count")
            spec.test_normal_count = as_int(val);
        else if (key == "image_side")
            spec.image_side = as_int(val);
        else if (key == "cell")
            spec.cell = as_int(val);
        else if (key == "seed")
            spec.seed = static_cast<uint64_t>(std::stoull(val));
        else
            throw ConfigError("unknown synth spec key '" + key + "'");
    }
    return spec;
}

SyntheticSpec load_synth_spec_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open synth spec file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_synth_spec_text(ss.str());
}

std::string to_string(TextureKind t) {
    switch (t) {
        case TextureKind::Checker: return "checker";
        case TextureKind::Stripes: return "stripes";
        default: return "noise_blur";
    }
}

std::string to_string(DefectKind d) {
    switch (d) {
        case DefectKind::Rect: return "rect";
        case DefectKind::Blob: return "blob";
        default: return "scratch";
    }
}

std::string serialize_synth_spec(const SyntheticSpec& s) {
    std::ostringstream os;
    os << "texture=" << to_string(s.texture) << "\n"
       << "defect=" << to_string(s.defect) << "\n"
       << "defect_min=" << s.defect_min << "\n"
       << "defect_max=" << s.defect_max << "\n"
       << "train_count=" << s.train_count << "\n"
       << "test_count=" << s.test_count << "\n"
       << "test_normal_count=" << s.test_normal_count << "\n"
       << "image_side=" << s.image_side << "\n"
       << "cell=" << s.cell << "\n"
       << "seed=" << s.seed << "\n";
    return os.str();
}

void materialize_synthetic(const SyntheticSpec& spec, const std::string& out_dir,
                           const std::string& class_name) {
    Dataset ds = generate_synthetic(spec);
    const fs::path root = fs::path(out_dir) / class_name;
    fs::create_directories(root / "train" / "good");
    fs::create_directories(root / "test" / "defect");
    fs::create_directories(root / "test" / "good");
    fs::create_directories(root / "ground_truth" / "defect");
    for (const auto& s : ds.train)
        save_png_rgb((root / "train" / "good" / (s.id + ".png")).string(), s.image);
    for (const auto& s : ds.test) {
        if (s.anomalous) {
            save_png_rgb((root / "test" / "defect" / (s.id + ".png")).string(), s.image);
            save_png_mask((root / "ground_truth" / "defect" / (s.id + "_mask.png")).string(),
                          *s.mask);
        } else {
            save_png_rgb((root / "test" / "good" / (s.id + ".png")).string(), s.image);
        }
    }
    std::ofstream os(root / "synth.spec");
    os << serialize_synth_spec(spec);
}

}  // namespace metal
