#include "pfad/frontend.hpp"

#include <random>
#include <stdexcept>

#include "pfad/tensor_io.hpp"

namespace pfad {

namespace {

/// Non-overlapping factor pooling; trailing partial windows average the
/// in-bounds pixels.
std::vector<float> pool_by_factor(const std::vector<float>& src, int h, int w, int c, int factor,
                                  int& h_out, int& w_out) {
    h_out = (h + factor - 1) / factor;
    w_out = (w + factor - 1) / factor;
    std::vector<float> out(static_cast<size_t>(h_out) * w_out * c, 0.0f);
    for (int i = 0; i < h_out; ++i) {
        const int r0 = i * factor, r1 = std::min(h, r0 + factor);
        for (int j = 0; j < w_out; ++j) {
            const int c0 = j * factor, c1 = std::min(w, c0 + factor);
            const float inv = 1.0f / static_cast<float>((r1 - r0) * (c1 - c0));
            for (int k = 0; k < c; ++k) {
                float acc = 0;
                for (int r = r0; r < r1; ++r)
                    for (int cc = c0; cc < c1; ++cc)
                        acc += src[(static_cast<size_t>(r) * w + cc) * c + k];
                out[(static_cast<size_t>(i) * w_out + j) * c + k] = acc * inv;
            }
        }
    }
    return out;
}

}  // namespace

RandomProjectionFrontend::RandomProjectionFrontend(std::uint64_t seed, int scales, int c_feat)
    : seed_(seed), scales_(scales), c_feat_(c_feat) {
    if (scales < 1) throw std::invalid_argument("frontend: scales must be >= 1");
    if (c_feat < 1 || c_feat % scales != 0)
        throw std::invalid_argument("frontend: c_feat must be divisible by scales");
    const int c_per = c_feat / scales;
    proj_.resize(static_cast<size_t>(scales));
    for (int s = 0; s < scales; ++s) {
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(s + 1)));
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        auto& p = proj_[static_cast<size_t>(s)];
        p.resize(static_cast<size_t>(3) * c_per);
        for (auto& v : p) v = static_cast<float>(dist(rng));
    }
}

FeatureMap RandomProjectionFrontend::extract(const Image& img, const std::string&) const {
    img.validate();
    const int c_per = c_feat_ / scales_;
    // pooled grids per scale, then everything brought to the coarsest
    struct ScaleMap {
        int h, w;
        std::vector<float> data;  // h*w*c_per
    };
    std::vector<ScaleMap> maps;
    for (int s = 1; s <= scales_; ++s) {
        int ph = 0, pw = 0;
        auto pooled = pool_by_factor(img.rgb, img.h, img.w, 3, 1 << s, ph, pw);
        const auto& p = proj_[static_cast<size_t>(s - 1)];
        ScaleMap m{ph, pw, std::vector<float>(static_cast<size_t>(ph) * pw * c_per, 0.0f)};
        for (int i = 0; i < ph * pw; ++i)
            for (int k = 0; k < c_per; ++k) {
                float acc = 0;
                for (int cc = 0; cc < 3; ++cc)
                    acc += p[static_cast<size_t>(cc) * c_per + k] * pooled[static_cast<size_t>(i) * 3 + cc];
                m.data[static_cast<size_t>(i) * c_per + k] = acc;
            }
        maps.push_back(std::move(m));
    }
    const int gh = maps.back().h, gw = maps.back().w;
    FeatureMap fm;
    fm.h = gh;
    fm.w = gw;
    fm.c = c_feat_;
    fm.data.assign(static_cast<size_t>(gh) * gw * c_feat_, 0.0f);
    for (int s = 0; s < scales_; ++s) {
        auto& m = maps[static_cast<size_t>(s)];
        std::vector<float> coarse = m.data;
        int ch = m.h, cw = m.w;
        if (m.h != gh || m.w != gw) {
            const int factor = m.h / gh;  // power of two by construction
            coarse = pool_by_factor(m.data, m.h, m.w, c_per, factor, ch, cw);
        }
        if (ch != gh || cw != gw) throw std::runtime_error("frontend: scale grids misaligned");
        for (int i = 0; i < gh * gw; ++i)
            for (int k = 0; k < c_per; ++k)
                fm.data[static_cast<size_t>(i) * c_feat_ + s * c_per + k] =
                    coarse[static_cast<size_t>(i) * c_per + k];
    }
    return fm;
}

std::string RandomProjectionFrontend::describe() const {
    return "random_projection(seed=" + std::to_string(seed_) +
           ",scales=" + std::to_string(scales_) + ",c_feat=" + std::to_string(c_feat_) + ")";
}

PrecomputedFrontend::PrecomputedFrontend(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_))
        throw std::runtime_error("precomputed feature directory missing: " + dir_.string());
}

FeatureMap PrecomputedFrontend::extract(const Image&, const std::string& id) const {
    const auto path = dir_ / (id + ".pfad");
    if (!std::filesystem::exists(path))
        throw std::runtime_error("missing precomputed features: " + path.string());
    return load_feature_map(path.string());
}

std::string PrecomputedFrontend::describe() const { return "precomputed(" + dir_.string() + ")"; }

std::unique_ptr<Frontend> make_desk_frontend(std::uint64_t seed) {
    return std::make_unique<RandomProjectionFrontend>(seed, 2, 64);
}

std::unique_ptr<Frontend> make_reference_frontend(std::uint64_t seed) {
    return std::make_unique<RandomProjectionFrontend>(seed, 4, 272);
}

void save_feature_map(const std::string& path, const FeatureMap& fm) {
    save_tensor(path, Tensor<float>({fm.h, fm.w, fm.c}, fm.data));
}

FeatureMap load_feature_map(const std::string& path) {
    Tensor<float> t = load_tensor<float>(path);
    if (t.rank() != 3) throw std::runtime_error("feature map tensor must be rank 3: " + path);
    FeatureMap fm;
    fm.h = t.dim(0);
    fm.w = t.dim(1);
    fm.c = t.dim(2);
    fm.data = t.data();
    return fm;
}

}  // namespace pfad
