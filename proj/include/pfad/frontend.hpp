#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pfad/image.hpp"

namespace pfad {

/// Dense h*w*c feature map; role tells original from reconstructed.
struct FeatureMap {
    int h = 0, w = 0, c = 0;
    std::vector<float> data;  // row-major h, w, c

    float& at(int y, int x, int k) { return data[(static_cast<size_t>(y) * w + x) * c + k]; }
    float at(int y, int x, int k) const { return data[(static_cast<size_t>(y) * w + x) * c + k]; }
};

class Frontend {
public:
    virtual ~Frontend() = default;
    /// `id` keys precomputed lookups; pixel-driven frontends ignore it.
    virtual FeatureMap extract(const Image& img, const std::string& id) const = 0;
    virtual std::string describe() const = 0;
};

/// Multi-scale featurizer with strictly local receptive fields: per scale
/// s = 1..S the image is average-pooled by 2^s, each pooled pixel is
/// mapped through a fixed seeded linear projection to c_feat/S channels,
/// all scale maps are average-pooled down to the coarsest grid and
/// concatenated.
class RandomProjectionFrontend : public Frontend {
public:
    RandomProjectionFrontend(std::uint64_t seed, int scales, int c_feat);

    FeatureMap extract(const Image& img, const std::string& id) const override;
    std::string describe() const override;

    int scales() const { return scales_; }
    int c_feat() const { return c_feat_; }

private:
    std::uint64_t seed_;
    int scales_, c_feat_;
    std::vector<std::vector<float>> proj_;  // per scale: 3 x (c_feat/scales), row-major
};

/// Reads `<dir>/<id>.pfad` tensors exported from any external backbone.
class PrecomputedFrontend : public Frontend {
public:
    explicit PrecomputedFrontend(std::filesystem::path dir);

    FeatureMap extract(const Image& img, const std::string& id) const override;
    std::string describe() const override;

private:
    std::filesystem::path dir_;
};

// Desk preset: 64x64 images -> 16x16 grid, 64 channels (2 scales).
// Reference preset: 224x224 -> 14x14 grid, 272 channels (4 scales).
std::unique_ptr<Frontend> make_desk_frontend(std::uint64_t seed);
std::unique_ptr<Frontend> make_reference_frontend(std::uint64_t seed);

void save_feature_map(const std::string& path, const FeatureMap& fm);
FeatureMap load_feature_map(const std::string& path);

}  // namespace pfad
