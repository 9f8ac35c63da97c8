#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfad/tensor.hpp"

namespace pfad {

using Rng = std::mt19937_64;

enum class PerturbationKind { GaussianNoise, FNoise, FDrop };

inline const char* to_string(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::GaussianNoise: return "gaussian_noise";
        case PerturbationKind::FNoise: return "f_noise";
        case PerturbationKind::FDrop: return "f_drop";
    }
    return "?";
}

inline PerturbationKind perturbation_kind_from_string(const std::string& s) {
    if (s == "gaussian_noise") return PerturbationKind::GaussianNoise;
    if (s == "f_noise") return PerturbationKind::FNoise;
    if (s == "f_drop") return PerturbationKind::FDrop;
    throw std::invalid_argument("unknown perturbation kind: " + s);
}

struct PerturbationSpec {
    double alpha = 1.0;       // Gaussian noise scale
    double apply_prob = 1.0;  // gates the Gaussian addition per sample
    double fnoise_lo = -0.3, fnoise_hi = 0.3;
    double fdrop_lo = 0.6, fdrop_hi = 0.9;
    double weights[3] = {1.0, 1.0, 1.0};  // GaussianNoise, FNoise, FDrop
    std::uint64_t seed = 0;
    bool per_sample_select = false;  // default: one kind per training iteration

    void validate() const {
        if (alpha < 0) throw std::invalid_argument("perturb: alpha must be >= 0");
        if (apply_prob < 0 || apply_prob > 1)
            throw std::invalid_argument("perturb: apply_prob must be in [0,1]");
        if (!(fnoise_lo < fnoise_hi) || !(fdrop_lo < fdrop_hi))
            throw std::invalid_argument("perturb: ranges must satisfy lo < hi");
        double sum = 0;
        for (double w : weights) {
            if (w < 0) throw std::invalid_argument("perturb: weights must be nonnegative");
            sum += w;
        }
        if (sum <= 0) throw std::invalid_argument("perturb: weights must not all be zero");
    }
};

/// Spatial collection of token vectors: tokens is [N, C] with N = h*w.
template <typename T>
struct TokenSequence {
    Tensor<T> tokens;
    int h = 0, w = 0;

    int count() const { return tokens.dim(0); }
    int channels() const { return tokens.dim(1); }

    void validate() const {
        if (!tokens.defined() || tokens.rank() != 2)
            throw std::invalid_argument("token sequence must be [N, C]");
        if (h * w != tokens.dim(0))
            throw std::invalid_argument("token grid does not match token count");
    }
};

/// Draws D ~ N(0, (alpha*||f||_2 / C)^2) elementwise, matching f's length.
template <typename T>
std::vector<T> sample_gaussian_noise(std::span<const T> f, double alpha, Rng& rng) {
    if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
    double norm2 = 0;
    for (T v : f) norm2 += static_cast<double>(v) * static_cast<double>(v);
    const double sigma = alpha * std::sqrt(norm2) / static_cast<double>(f.size());
    std::vector<T> d(f.size(), T(0));
    if (sigma > 0) {
        std::normal_distribution<double> dist(0.0, sigma);
        for (auto& v : d) v = static_cast<T>(dist(rng));
    }
    return d;
}

/// f-noise: f ⊙ ξ + f with ξ ~ U(lo, hi) per element.
template <typename T>
std::vector<T> apply_f_noise(std::span<const T> f, double lo, double hi, Rng& rng) {
    if (!(lo < hi)) throw std::invalid_argument("f_noise: lo < hi required");
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<T> out(f.size());
    for (size_t i = 0; i < f.size(); ++i)
        out[i] = static_cast<T>(f[i] * (T(1) + static_cast<T>(dist(rng))));
    return out;
}

template <typename T>
struct FDropResult {
    std::vector<T> tokens;        // N*C, suppressed copy
    std::vector<std::uint8_t> mask;  // per token, 1 = kept
    double gamma = 0;
};

/// Per-token activation = sum of |channel values|, min-max normalized
/// across the sequence; tokens with normalized activation >= gamma are
/// zeroed whole. Degenerate (all-equal) activations keep everything.
template <typename T>
FDropResult<T> apply_f_drop_with_gamma(std::span<const T> tokens, int n, int c, double gamma) {
    if (n < 2) throw std::invalid_argument("f_drop: need at least 2 tokens");
    std::vector<double> act(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i) {
        double a = 0;
        for (int j = 0; j < c; ++j) a += std::abs(static_cast<double>(tokens[static_cast<size_t>(i * c + j)]));
        act[static_cast<size_t>(i)] = a;
    }
    double amin = act[0], amax = act[0];
    for (double a : act) {
        amin = std::min(amin, a);
        amax = std::max(amax, a);
    }
    FDropResult<T> res;
    res.gamma = gamma;
    res.mask.assign(static_cast<size_t>(n), 1);
    if (amax > amin) {
        for (int i = 0; i < n; ++i) {
            const double norm = (act[static_cast<size_t>(i)] - amin) / (amax - amin);
            res.mask[static_cast<size_t>(i)] = norm < gamma ? 1 : 0;
        }
    }
    res.tokens.assign(tokens.begin(), tokens.end());
    for (int i = 0; i < n; ++i)
        if (!res.mask[static_cast<size_t>(i)])
            for (int j = 0; j < c; ++j) res.tokens[static_cast<size_t>(i * c + j)] = T(0);
    return res;
}

template <typename T>
FDropResult<T> apply_f_drop(std::span<const T> tokens, int n, int c, double lo, double hi, Rng& rng) {
    if (!(lo < hi)) throw std::invalid_argument("f_drop: lo < hi required");
    std::uniform_real_distribution<double> dist(lo, hi);
    return apply_f_drop_with_gamma(tokens, n, c, dist(rng));
}

inline PerturbationKind pool_select(const PerturbationSpec& spec, Rng& rng) {
    spec.validate();
    const double sum = spec.weights[0] + spec.weights[1] + spec.weights[2];
    std::uniform_real_distribution<double> dist(0.0, sum);
    const double u = dist(rng);
    if (u < spec.weights[0]) return PerturbationKind::GaussianNoise;
    if (u < spec.weights[0] + spec.weights[1]) return PerturbationKind::FNoise;
    return PerturbationKind::FDrop;
}

/// Perturbation realized as an affine elementwise correction:
/// out = tokens ⊙ mul + add (either factor may be identity/empty).
template <typename T>
struct PerturbOutcome {
    PerturbationKind kind;
    std::vector<T> add;  // empty or N*C
    std::vector<T> mul;  // empty or N*C
};

/// Samples the perturbation for one token sequence. The kind (and, for
/// F-Drop, gamma) can be pinned by the caller so a whole batch shares one
/// draw per iteration.
template <typename T>
PerturbOutcome<T> sample_perturbation(std::span<const T> tokens, int n, int c,
                                      const PerturbationSpec& spec, Rng& rng,
                                      std::optional<PerturbationKind> forced_kind = std::nullopt,
                                      std::optional<double> forced_gamma = std::nullopt) {
    spec.validate();
    PerturbOutcome<T> out;
    out.kind = forced_kind ? *forced_kind : pool_select(spec, rng);
    switch (out.kind) {
        case PerturbationKind::GaussianNoise: {
            std::uniform_real_distribution<double> gate(0.0, 1.0);
            const bool apply = gate(rng) < spec.apply_prob;
            out.add.assign(tokens.size(), T(0));
            if (apply) {
                // sigma is per token: alpha * ||f_tok||_2 / C
                for (int i = 0; i < n; ++i) {
                    auto d = sample_gaussian_noise<T>(tokens.subspan(static_cast<size_t>(i * c),
                                                                     static_cast<size_t>(c)),
                                                     spec.alpha, rng);
                    for (int j = 0; j < c; ++j) out.add[static_cast<size_t>(i * c + j)] = d[static_cast<size_t>(j)];
                }
            }
            break;
        }
        case PerturbationKind::FNoise: {
            std::uniform_real_distribution<double> dist(spec.fnoise_lo, spec.fnoise_hi);
            out.mul.resize(tokens.size());
            for (auto& m : out.mul) m = T(1) + static_cast<T>(dist(rng));
            break;
        }
        case PerturbationKind::FDrop: {
            double gamma;
            if (forced_gamma) {
                gamma = *forced_gamma;
            } else {
                std::uniform_real_distribution<double> dist(spec.fdrop_lo, spec.fdrop_hi);
                gamma = dist(rng);
            }
            auto res = apply_f_drop_with_gamma<T>(tokens, n, c, gamma);
            out.mul.assign(tokens.size(), T(1));
            for (int i = 0; i < n; ++i)
                if (!res.mask[static_cast<size_t>(i)])
                    for (int j = 0; j < c; ++j) out.mul[static_cast<size_t>(i * c + j)] = T(0);
            break;
        }
    }
    return out;
}

/// Training-time dispatcher over the pool for one sequence of plain
/// tokens; inference never calls this.
template <typename T>
std::pair<TokenSequence<T>, PerturbationKind> perturb(const TokenSequence<T>& seq,
                                                      const PerturbationSpec& spec, Rng& rng) {
    seq.validate();
    const int n = seq.count(), c = seq.channels();
    auto outcome = sample_perturbation<T>(std::span<const T>(seq.tokens.data()), n, c, spec, rng);
    std::vector<T> data = seq.tokens.data();
    if (!outcome.mul.empty())
        for (size_t i = 0; i < data.size(); ++i) data[i] *= outcome.mul[i];
    if (!outcome.add.empty())
        for (size_t i = 0; i < data.size(); ++i) data[i] += outcome.add[i];
    TokenSequence<T> out{Tensor<T>({n, c}, std::move(data)), seq.h, seq.w};
    return {out, outcome.kind};
}

/// Applies a sampled outcome to a tensor on the tape; the factors enter
/// as constants, so gradients pass straight through the affine map.
template <typename T>
Tensor<T> apply_outcome(const Tensor<T>& tokens, const PerturbOutcome<T>& outcome, Tape<T>* tape) {
    Tensor<T> x = tokens;
    if (!outcome.mul.empty()) x = mul(x, Tensor<T>(tokens.shape(), outcome.mul), tape);
    if (!outcome.add.empty()) x = add(x, Tensor<T>(tokens.shape(), outcome.add), tape);
    return x;
}

}  // namespace pfad
