#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pfad/image.hpp"

namespace pfad {

struct DatasetRecord {
    std::string id;
    std::string category;
    std::string split;  // "train" | "test"
    std::string label;  // "normal" | "defective"
    std::string image_path;  // relative to root
    std::string mask_path;   // empty for normal records
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<std::string> categories;
    std::vector<DatasetRecord> records;
    std::uint64_t seed = 0;

    std::vector<const DatasetRecord*> split_records(const std::string& split) const {
        std::vector<const DatasetRecord*> out;
        for (const auto& r : records)
            if (r.split == split) out.push_back(&r);
        return out;
    }
};

enum class DefectKind { Scratch, Blob, MissingRegion };

struct GenOptions {
    int n_categories = 3;
    int n_train = 200;
    int n_test_normal = 50;
    int n_test_defect = 50;
    int image_size = 64;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_categories < 2)
            throw std::invalid_argument("gen: need >= 2 categories (unified multi-class setting)");
        if (n_train < 1 || n_test_normal < 1 || n_test_defect < 0)
            throw std::invalid_argument("gen: counts must be >= 1 (defect count >= 0)");
        if (image_size < 16) throw std::invalid_argument("gen: image_size must be >= 16");
    }
};

/// One generated sample; mask present iff a defect was injected, and the
/// defect writes only inside the mask.
struct SynthSample {
    Image image;
    std::optional<GrayImage> mask;
};

/// Deterministic per (seed, category index, record index, defective).
SynthSample synth_sample(std::uint64_t seed, int category_index, int record_index, int image_size,
                         bool defective);

DatasetManifest generate_dataset(const std::filesystem::path& root, const GenOptions& opts);
DatasetManifest load_dataset(const std::filesystem::path& root);

}  // namespace pfad
