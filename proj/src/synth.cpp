#include "pfad/synth.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace pfad {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::mt19937_64 record_rng(std::uint64_t seed, int cat, int idx, bool defective) {
    std::uint64_t h = mix(seed);
    h = mix(h ^ static_cast<std::uint64_t>(cat + 1));
    h = mix(h ^ static_cast<std::uint64_t>(idx + 1));
    h = mix(h ^ (defective ? 0xdefecced : 0x1));
    return std::mt19937_64(h);
}

float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

/// Low-resolution uniform noise upsampled to full size; keeps the normal
/// appearance smooth so feature statistics stay compact per category.
Image smooth_noise(std::mt19937_64& rng, int size, float amp) {
    std::uniform_real_distribution<float> dist(-amp, amp);
    Image low = Image::filled(8, 8, 0.5f, 0.5f, 0.5f);
    for (auto& v : low.rgb) v = 0.5f + dist(rng);
    return resize_image(low, size, size);
}

Image make_texture_image(std::uint64_t seed, int cat, int idx, int size) {
    std::mt19937_64 crng(mix(seed) ^ mix(static_cast<std::uint64_t>(cat) + 101));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double fx = 2 + std::floor(u(crng) * 4), fy = 2 + std::floor(u(crng) * 4);
    const float base[3] = {static_cast<float>(0.35 + 0.3 * u(crng)),
                           static_cast<float>(0.35 + 0.3 * u(crng)),
                           static_cast<float>(0.35 + 0.3 * u(crng))};
    const float amp = 0.16f;

    auto rng = record_rng(seed, cat, idx, false);
    std::uniform_real_distribution<double> ur(0.0, 1.0);
    const double phase = 2.0 * kPi * ur(rng);
    Image noise = smooth_noise(rng, size, 0.04f);

    Image img = Image::filled(size, size, 0, 0, 0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double s =
                std::sin(2.0 * kPi * (fx * x + fy * y) / static_cast<double>(size) + phase);
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) =
                    clamp01(base[c] + amp * static_cast<float>(s) + (noise.at(y, x, c) - 0.5f));
        }
    return img;
}

Image make_object_image(std::uint64_t seed, int cat, int idx, int size) {
    std::mt19937_64 crng(mix(seed) ^ mix(static_cast<std::uint64_t>(cat) + 511));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const float bg[3] = {static_cast<float>(0.15 + 0.2 * u(crng)),
                         static_cast<float>(0.15 + 0.2 * u(crng)),
                         static_cast<float>(0.15 + 0.2 * u(crng))};
    const float obj[3] = {static_cast<float>(0.6 + 0.25 * u(crng)),
                          static_cast<float>(0.6 + 0.25 * u(crng)),
                          static_cast<float>(0.6 + 0.25 * u(crng))};
    const bool disk = u(crng) < 0.5;

    auto rng = record_rng(seed, cat, idx, false);
    std::uniform_real_distribution<double> ur(0.0, 1.0);
    const double r = size / 4.0 * (0.96 + 0.08 * ur(rng));
    const double cx = size / 2.0 + (ur(rng) - 0.5) * 2.5;
    const double cy = size / 2.0 + (ur(rng) - 0.5) * 2.5;
    Image noise = smooth_noise(rng, size, 0.03f);

    Image img = Image::filled(size, size, 0, 0, 0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            bool inside;
            if (disk) {
                const double dx = x - cx, dy = y - cy;
                inside = dx * dx + dy * dy <= r * r;
            } else {
                inside = std::abs(x - cx) <= r && std::abs(y - cy) <= r * 0.8;
            }
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = clamp01((inside ? obj[c] : bg[c]) + (noise.at(y, x, c) - 0.5f));
        }
    return img;
}

/// Per-channel push away from the local value, so the defect stays strong
/// whether the surface is bright or dark.
void paint_defect_pixel(Image& img, int y, int x, float shift) {
    for (int c = 0; c < 3; ++c) {
        const float v = img.at(y, x, c);
        img.at(y, x, c) = v > 0.5f ? clamp01(v - shift) : clamp01(v + shift);
    }
}

void inject_defect(Image& img, GrayImage& mask, std::mt19937_64& rng) {
    const int size = img.h;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int kind = static_cast<int>(u(rng) * 3.0);
    const float shift = static_cast<float>(0.4 + 0.2 * u(rng));
    auto paint = [&](int y, int x) {
        if (y < 0 || y >= size || x < 0 || x >= size) return;
        if (!mask.at(y, x)) {
            paint_defect_pixel(img, y, x, shift);
            mask.at(y, x) = 255;
        }
    };
    const int margin = size / 6;
    auto coord = [&]() {
        return margin + static_cast<int>(u(rng) * (size - 2 * margin));
    };
    if (kind == 0) {
        // scratch: thick line segment
        const double angle = 2.0 * kPi * u(rng);
        const double len = size * (0.3 + 0.25 * u(rng));
        const double x0 = coord(), y0 = coord();
        const int steps = static_cast<int>(len * 2);
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps * len;
            const int x = static_cast<int>(x0 + t * std::cos(angle));
            const int y = static_cast<int>(y0 + t * std::sin(angle));
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) paint(y + dy, x + dx);
        }
    } else if (kind == 1) {
        // blob: filled disk
        const double r = size * (0.1 + 0.06 * u(rng));
        const int cx = coord(), cy = coord();
        for (int y = static_cast<int>(cy - r); y <= static_cast<int>(cy + r) + 1; ++y)
            for (int x = static_cast<int>(cx - r); x <= static_cast<int>(cx + r) + 1; ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) paint(y, x);
    } else {
        // missing region: rectangle flattened to mid-gray
        const int rw = static_cast<int>(size * (0.14 + 0.1 * u(rng)));
        const int rh = static_cast<int>(size * (0.14 + 0.1 * u(rng)));
        const int x0 = coord() - rw / 2, y0 = coord() - rh / 2;
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) paint(y, x);
    }
}

std::string category_name(int index) {
    return (index % 2 == 0 ? "texture" : "object") + std::to_string(index);
}

}  // namespace

SynthSample synth_sample(std::uint64_t seed, int category_index, int record_index, int image_size,
                         bool defective) {
    SynthSample s;
    s.image = category_index % 2 == 0
                  ? make_texture_image(seed, category_index, record_index, image_size)
                  : make_object_image(seed, category_index, record_index, image_size);
    if (defective) {
        GrayImage mask;
        mask.h = image_size;
        mask.w = image_size;
        mask.pix.assign(static_cast<size_t>(image_size) * image_size, 0);
        auto rng = record_rng(seed, category_index, record_index, true);
        inject_defect(s.image, mask, rng);
        s.mask = std::move(mask);
    }
    return s;
}

DatasetManifest generate_dataset(const std::filesystem::path& root, const GenOptions& opts) {
    opts.validate();
    DatasetManifest man;
    man.root = root;
    man.seed = opts.seed;
    std::filesystem::create_directories(root);
    std::ostringstream tsv;
    tsv << "# seed\t" << opts.seed << "\n";
    tsv << "id\tcategory\tsplit\tlabel\timage\tmask\n";
    for (int c = 0; c < opts.n_categories; ++c) {
        const std::string cat = category_name(c);
        man.categories.push_back(cat);
        for (const auto& split : {std::string("train"), std::string("test")}) {
            std::filesystem::create_directories(root / cat / split / "images");
            std::filesystem::create_directories(root / cat / split / "masks");
        }
        int idx = 0;
        auto emit = [&](const std::string& split, bool defective) {
            const std::string id = cat + "_" + split + "_" + std::to_string(idx);
            SynthSample s = synth_sample(opts.seed, c, idx, opts.image_size, defective);
            DatasetRecord rec;
            rec.id = id;
            rec.category = cat;
            rec.split = split;
            rec.label = defective ? "defective" : "normal";
            rec.image_path = cat + "/" + split + "/images/" + id + ".ppm";
            save_ppm((root / rec.image_path).string(), s.image);
            if (defective) {
                rec.mask_path = cat + "/" + split + "/masks/" + id + ".pgm";
                save_pgm((root / rec.mask_path).string(), *s.mask);
            }
            tsv << rec.id << "\t" << rec.category << "\t" << rec.split << "\t" << rec.label << "\t"
                << rec.image_path << "\t" << rec.mask_path << "\n";
            man.records.push_back(std::move(rec));
            ++idx;
        };
        for (int i = 0; i < opts.n_train; ++i) emit("train", false);
        for (int i = 0; i < opts.n_test_normal; ++i) emit("test", false);
        for (int i = 0; i < opts.n_test_defect; ++i) emit("test", true);
    }
    std::ofstream os(root / "manifest.tsv", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write manifest under " + root.string());
    os << tsv.str();
    return man;
}

DatasetManifest load_dataset(const std::filesystem::path& root) {
    std::ifstream is(root / "manifest.tsv");
    if (!is) throw std::runtime_error("manifest file missing: " + (root / "manifest.tsv").string());
    DatasetManifest man;
    man.root = root;
    std::string line;
    std::map<std::string, bool> seen_cat;
    bool header_done = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line.rfind("# seed\t", 0) == 0) {
            man.seed = std::stoull(line.substr(7));
            continue;
        }
        if (!header_done) {
            header_done = true;  // column header
            continue;
        }
        DatasetRecord rec;
        std::istringstream ls(line);
        std::getline(ls, rec.id, '\t');
        std::getline(ls, rec.category, '\t');
        std::getline(ls, rec.split, '\t');
        std::getline(ls, rec.label, '\t');
        std::getline(ls, rec.image_path, '\t');
        std::getline(ls, rec.mask_path, '\t');
        if (rec.id.empty() || rec.category.empty())
            throw std::runtime_error("malformed manifest line: " + line);
        if (rec.split != "train" && rec.split != "test")
            throw std::runtime_error("record " + rec.id + ": unknown split " + rec.split);
        if (rec.label != "normal" && rec.label != "defective")
            throw std::runtime_error("record " + rec.id + ": unknown label " + rec.label);
        if (rec.split == "train" && rec.label != "normal")
            throw std::runtime_error("record " + rec.id +
                                     ": train split must contain only normal samples");
        if (!std::filesystem::exists(root / rec.image_path))
            throw std::runtime_error("record " + rec.id + ": image file missing");
        if (rec.label == "defective") {
            if (rec.mask_path.empty())
                throw std::runtime_error("record " + rec.id + ": defective record without mask");
            if (!std::filesystem::exists(root / rec.mask_path))
                throw std::runtime_error("record " + rec.id + ": mask file missing");
        } else if (!rec.mask_path.empty()) {
            throw std::runtime_error("record " + rec.id + ": normal record must not carry a mask");
        }
        if (!seen_cat.count(rec.category)) {
            seen_cat[rec.category] = true;
            man.categories.push_back(rec.category);
        }
        man.records.push_back(std::move(rec));
    }
    if (man.records.empty()) throw std::runtime_error("manifest is empty");
    return man;
}

}  // namespace pfad
