#pragma once

#include <string>
#include <vector>

#include "pfad/codec.hpp"
#include "pfad/frontend.hpp"
#include "pfad/synth.hpp"

namespace pfad {

/// Per-location L2 distance between original and reconstructed features.
struct AnomalyScoreMap {
    int h = 0, w = 0;
    std::vector<double> scores;  // nonnegative

    double at(int y, int x) const { return scores[static_cast<size_t>(y) * w + x]; }
};

struct LocalizationResult {
    int h = 0, w = 0;
    std::vector<double> upsampled;      // continuous map at target resolution
    std::vector<std::uint8_t> mask;     // scores > threshold
};

AnomalyScoreMap anomaly_map(const FeatureMap& f_org, const FeatureMap& f_rec);

/// Max over the stride-1 same-padded average-pooled score map; the kernel
/// is clamped to the map size.
double image_score(const AnomalyScoreMap& map, int kernel = 16);

LocalizationResult localize(const AnomalyScoreMap& map, int target_h, int target_w,
                            double threshold);

/// Mann-Whitney AUROC with tie-group midranks, O(n log n). Throws if only
/// one class is present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct CategoryMetrics {
    std::string category;
    double image_auroc = 0, pixel_auroc = 0;
    int n_images = 0;
    long long n_pixels = 0;
    bool has_pixel = false;
};

struct EvalReport {
    double image_auroc = 0;  // mean over categories
    double pixel_auroc = 0;
    bool has_pixel = false;
    std::vector<CategoryMetrics> per_category;
    int n_images = 0;
    long long n_pixels = 0;

    std::string table() const;
    std::string key_values() const;  // one metric per line, key=value
};

/// Runs the inference path (no perturbation) over the test split and
/// aggregates image- and pixel-level AUROC per category.
EvalReport eval_dataset(Codec<float>& model, const Frontend& frontend,
                        const DatasetManifest& dataset, int pool_kernel = 16);

/// Scoring pieces shared by eval and the score subcommand.
AnomalyScoreMap score_record(Codec<float>& model, const Frontend& frontend,
                             const DatasetManifest& dataset, const DatasetRecord& rec);

}  // namespace pfad
