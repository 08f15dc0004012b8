// Dataset ingestion (MVTec directory layout, labeled-folder layout with a csv
// label file), preprocessing, the train/validation split, and a synthetic
// texture+defect generator for desk-scale runs.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metal/image.hpp"

namespace metal {

enum class DatasetLayout { MVTec, LabeledFolder, Synthetic };
enum class TextureKind { Checker, Stripes, NoiseBlur };
enum class DefectKind { Rect, Blob, LineScratch };

struct Sample {
    ImageTensor image;
    bool anomalous = false;
    std::optional<BinaryMask> mask;
    std::string id;
};

struct SyntheticSpec {
    TextureKind texture = TextureKind::Checker;
    DefectKind defect = DefectKind::Rect;
    int defect_min = 8;
    int defect_max = 8;
    int train_count = 40;
    int test_count = 20;
    int test_normal_count = 0;
    int image_side = 64;
    int cell = 8;
    uint64_t seed = 0;
};

struct DatasetSpec {
    std::string root;
    DatasetLayout layout = DatasetLayout::MVTec;
    std::string class_name;
    int image_side = 128;
    uint64_t seed = 0;
    int labeled_train_count = 80;  // normal images reserved for training (LabeledFolder)
    SyntheticSpec synth;
};

struct Dataset {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

// `<root>/<class>/train/good/*.png`, `<root>/<class>/test/<type>/*.png`,
// `<root>/<class>/ground_truth/<type>/<stem>_mask.png`; test images of type
// "good" get all-zero masks. The train list is shuffled by spec.seed.
Dataset load_mvtec(const DatasetSpec& spec);

// Folder of images plus labels.csv ("filename,label" with a header); the
// first labeled_train_count normal images (after a seeded shuffle) form the
// train split, everything else is test.
Dataset load_labeled_folder(const DatasetSpec& spec);

Dataset generate_synthetic(const SyntheticSpec& spec);

Dataset load_dataset(const DatasetSpec& spec);

// Deterministic disjoint split; n_val = round(fraction * n).
std::pair<std::vector<Sample>, std::vector<Sample>> make_validation_split(
    const std::vector<Sample>& train, double fraction, uint64_t seed);

SyntheticSpec parse_synth_spec_text(const std::string& text);
SyntheticSpec load_synth_spec_file(const std::string& path);
std::string serialize_synth_spec(const SyntheticSpec& spec);

// Writes the generated dataset to disk in the MVTec layout under
// <out_dir>/<class_name>.
void materialize_synthetic(const SyntheticSpec& spec, const std::string& out_dir,
                           const std::string& class_name);

std::string to_string(TextureKind t);
std::string to_string(DefectKind d);

}  // namespace metal
