#include "pfad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pfad/tensor.hpp"

namespace pfad {

AnomalyScoreMap anomaly_map(const FeatureMap& f_org, const FeatureMap& f_rec) {
    if (f_org.h != f_rec.h || f_org.w != f_rec.w || f_org.c != f_rec.c)
        throw std::invalid_argument("anomaly_map: feature map shapes differ");
    AnomalyScoreMap out;
    out.h = f_org.h;
    out.w = f_org.w;
    out.scores.resize(static_cast<size_t>(out.h) * out.w);
    for (int i = 0; i < out.h * out.w; ++i) {
        double acc = 0;
        for (int k = 0; k < f_org.c; ++k) {
            const double d = static_cast<double>(f_org.data[static_cast<size_t>(i) * f_org.c + k]) -
                             static_cast<double>(f_rec.data[static_cast<size_t>(i) * f_org.c + k]);
            acc += d * d;
        }
        out.scores[static_cast<size_t>(i)] = std::sqrt(acc);
    }
    return out;
}

double image_score(const AnomalyScoreMap& map, int kernel) {
    if (map.h < 1 || map.w < 1) throw std::invalid_argument("image_score: empty map");
    if (kernel < 1) throw std::invalid_argument("image_score: kernel must be >= 1");
    const int k = std::min(kernel, std::min(map.h, map.w));
    Tensor<double> t({map.h, map.w}, map.scores);
    Tensor<double> pooled = avg_pool2d(t, k);
    double best = pooled.data()[0];
    for (double v : pooled.data()) best = std::max(best, v);
    return best;
}

LocalizationResult localize(const AnomalyScoreMap& map, int target_h, int target_w,
                            double threshold) {
    if (!std::isfinite(threshold)) throw std::invalid_argument("localize: threshold must be finite");
    Tensor<double> t({map.h, map.w}, map.scores);
    Tensor<double> up = bilinear_upsample(t, target_h, target_w);
    LocalizationResult res;
    res.h = target_h;
    res.w = target_w;
    res.upsampled = up.data();
    res.mask.resize(res.upsampled.size());
    for (size_t i = 0; i < res.upsampled.size(); ++i)
        res.mask[i] = res.upsampled[i] > threshold ? 1 : 0;
    return res;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("auroc: scores and labels differ in length");
    const size_t n = scores.size();
    long long n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
        n_pos += l;
    }
    const long long n_neg = static_cast<long long>(n) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auroc: both classes must be present");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });
    // midranks over tie groups; rank sum of positives gives U
    double rank_sum_pos = 0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (labels[order[k]]) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

AnomalyScoreMap score_record(Codec<float>& model, const Frontend& frontend,
                             const DatasetManifest& dataset, const DatasetRecord& rec) {
    const Image img = load_ppm((dataset.root / rec.image_path).string());
    const FeatureMap f_org = frontend.extract(img, rec.id);
    Tensor<float> flat({f_org.h * f_org.w, f_org.c}, f_org.data);
    auto trace = model.forward(flat, nullptr);  // inference: no tape, no perturbation
    FeatureMap f_rec{f_org.h, f_org.w, f_org.c, trace.reconstruction.data()};
    return anomaly_map(f_org, f_rec);
}

EvalReport eval_dataset(Codec<float>& model, const Frontend& frontend,
                        const DatasetManifest& dataset, int pool_kernel) {
    EvalReport rep;
    bool any_missing_mask = false;
    for (const auto& cat : dataset.categories) {
        std::vector<double> img_scores;
        std::vector<int> img_labels;
        std::vector<double> pix_scores;
        std::vector<int> pix_labels;
        for (const auto& rec : dataset.records) {
            if (rec.split != "test" || rec.category != cat) continue;
            AnomalyScoreMap amap = score_record(model, frontend, dataset, rec);
            img_scores.push_back(image_score(amap, pool_kernel));
            img_labels.push_back(rec.label == "defective" ? 1 : 0);
            const Image img = load_ppm((dataset.root / rec.image_path).string());
            LocalizationResult loc = localize(amap, img.h, img.w, 0.0);
            if (rec.label == "defective" && rec.mask_path.empty()) {
                any_missing_mask = true;
                continue;
            }
            GrayImage mask;
            if (rec.label == "defective")
                mask = load_pgm((dataset.root / rec.mask_path).string());
            for (int i = 0; i < img.h * img.w; ++i) {
                pix_scores.push_back(loc.upsampled[static_cast<size_t>(i)]);
                pix_labels.push_back(rec.label == "defective" && mask.pix[static_cast<size_t>(i)] > 0
                                         ? 1
                                         : 0);
            }
        }
        CategoryMetrics m;
        m.category = cat;
        m.n_images = static_cast<int>(img_scores.size());
        m.image_auroc = auroc(img_scores, img_labels);
        const bool pix_ok = !any_missing_mask &&
                            std::find(pix_labels.begin(), pix_labels.end(), 1) != pix_labels.end();
        if (pix_ok) {
            m.pixel_auroc = auroc(pix_scores, pix_labels);
            m.n_pixels = static_cast<long long>(pix_scores.size());
            m.has_pixel = true;
        }
        rep.per_category.push_back(m);
    }
    double img_sum = 0, pix_sum = 0;
    int pix_cats = 0;
    for (const auto& m : rep.per_category) {
        img_sum += m.image_auroc;
        rep.n_images += m.n_images;
        if (m.has_pixel) {
            pix_sum += m.pixel_auroc;
            rep.n_pixels += m.n_pixels;
            ++pix_cats;
        }
    }
    rep.image_auroc = img_sum / static_cast<double>(rep.per_category.size());
    rep.has_pixel = pix_cats == static_cast<int>(rep.per_category.size());
    if (pix_cats > 0) rep.pixel_auroc = pix_sum / static_cast<double>(pix_cats);
    return rep;
}

std::string EvalReport::table() const {
    std::ostringstream os;
    os << "category          image_auroc  pixel_auroc  n_images\n";
    auto row = [&](const std::string& name, double ia, double pa, bool has_pix, int n) {
        char buf[128];
        if (has_pix)
            std::snprintf(buf, sizeof(buf), "%-18s %10.4f %12.4f %9d\n", name.c_str(), ia, pa, n);
        else
            std::snprintf(buf, sizeof(buf), "%-18s %10.4f %12s %9d\n", name.c_str(), ia, "-", n);
        os << buf;
    };
    for (const auto& m : per_category)
        row(m.category, m.image_auroc, m.pixel_auroc, m.has_pixel, m.n_images);
    row("mean", image_auroc, pixel_auroc, has_pixel, n_images);
    return os.str();
}

std::string EvalReport::key_values() const {
    std::ostringstream os;
    os.precision(10);
    os << "image_auroc=" << image_auroc << "\n";
    if (has_pixel) os << "pixel_auroc=" << pixel_auroc << "\n";
    os << "n_images=" << n_images << "\n";
    os << "n_pixels=" << n_pixels << "\n";
    for (const auto& m : per_category) {
        os << "category." << m.category << ".image_auroc=" << m.image_auroc << "\n";
        if (m.has_pixel) os << "category." << m.category << ".pixel_auroc=" << m.pixel_auroc << "\n";
    }
    return os.str();
}

}  // namespace pfad
