#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pfad/perturb.hpp"
#include "pfad/tensor.hpp"

namespace pfad {

struct CodecConfig {
    int c_in = 272;  // composite feature channels
    int c_tok = 64;  // token dimension after projection
    int n_enc_layers = 4;
    int n_dec_layers = 4;
    int hidden = 64;  // sublayer width
    bool fusion_encoder = true;
    bool fusion_decoder = true;
    double eps = 1e-5;

    void validate() const {
        if (c_in < 1 || hidden < 1) throw std::invalid_argument("codec: dims must be positive");
        if (c_tok < 2) throw std::invalid_argument("codec: c_tok must be >= 2");
        if (n_enc_layers < 1 || n_dec_layers < 1)
            throw std::invalid_argument("codec: layer counts must be >= 1");
        if (eps <= 0) throw std::invalid_argument("codec: eps must be positive");
    }
};

/// Residual per-token sublayer: x + W2·relu(x·W1 + b1) + b2.
/// Zero-initialized weights make the layer the identity map.
template <typename T>
struct ResidualLayer {
    Tensor<T> w1, b1, w2, b2;
};

/// Outputs recorded along one stack: layer_outputs[0] is the stack input,
/// fused is their elementwise sum, normalized is standardize(fused).
template <typename T>
struct FusionState {
    std::vector<Tensor<T>> layer_outputs;
    Tensor<T> fused;
    Tensor<T> normalized;
};

template <typename T>
class Codec {
public:
    Codec() = default;

    explicit Codec(CodecConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    const CodecConfig& config() const { return cfg_; }
    CodecConfig& config() { return cfg_; }

    /// Scaled uniform fan-in init, seed-controlled.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        w_in_ = init_matrix(cfg_.c_in, cfg_.c_tok, rng);
        b_in_ = Tensor<T>::zeros({cfg_.c_tok}, true);
        enc_.clear();
        dec_.clear();
        for (int i = 0; i < cfg_.n_enc_layers; ++i) enc_.push_back(init_layer(rng));
        for (int i = 0; i < cfg_.n_dec_layers; ++i) dec_.push_back(init_layer(rng));
        w_out_ = init_matrix(cfg_.c_tok, cfg_.c_in, rng);
        b_out_ = Tensor<T>::zeros({cfg_.c_in}, true);
    }

    /// Identity-capable init: projections random, sublayers zeroed.
    void init_identity_stacks(std::uint64_t seed) {
        init(seed);
        for (auto* stack : {&enc_, &dec_})
            for (auto& l : *stack) {
                std::fill(l.w1.data().begin(), l.w1.data().end(), T(0));
                std::fill(l.b1.data().begin(), l.b1.data().end(), T(0));
                std::fill(l.w2.data().begin(), l.w2.data().end(), T(0));
                std::fill(l.b2.data().begin(), l.b2.data().end(), T(0));
            }
    }

    std::vector<std::pair<std::string, Tensor<T>>> named_params() {
        std::vector<std::pair<std::string, Tensor<T>>> out;
        out.emplace_back("proj_in.w", w_in_);
        out.emplace_back("proj_in.b", b_in_);
        for (size_t i = 0; i < enc_.size(); ++i) {
            const std::string p = "enc." + std::to_string(i) + ".";
            out.emplace_back(p + "w1", enc_[i].w1);
            out.emplace_back(p + "b1", enc_[i].b1);
            out.emplace_back(p + "w2", enc_[i].w2);
            out.emplace_back(p + "b2", enc_[i].b2);
        }
        for (size_t i = 0; i < dec_.size(); ++i) {
            const std::string p = "dec." + std::to_string(i) + ".";
            out.emplace_back(p + "w1", dec_[i].w1);
            out.emplace_back(p + "b1", dec_[i].b1);
            out.emplace_back(p + "w2", dec_[i].w2);
            out.emplace_back(p + "b2", dec_[i].b2);
        }
        out.emplace_back("proj_out.w", w_out_);
        out.emplace_back("proj_out.b", b_out_);
        return out;
    }

    std::vector<Tensor<T>> params() {
        std::vector<Tensor<T>> out;
        for (auto& [name, t] : named_params()) out.push_back(t);
        return out;
    }

    /// Learnable scalar count. Fusion flags and the perturbation spec do
    /// not enter: standardization and the pool carry no parameters.
    std::int64_t param_count() {
        std::int64_t n = 0;
        for (auto& t : params()) n += t.numel();
        return n;
    }

    std::vector<ResidualLayer<T>>& encoder_stack() { return enc_; }
    std::vector<ResidualLayer<T>>& decoder_stack() { return dec_; }
    Tensor<T>& proj_in_weight() { return w_in_; }
    Tensor<T>& proj_in_bias() { return b_in_; }
    Tensor<T>& proj_out_weight() { return w_out_; }
    Tensor<T>& proj_out_bias() { return b_out_; }

    /// [N, c_in] -> [N, c_tok], per-position linear map.
    Tensor<T> project_in(const Tensor<T>& flat_map, Tape<T>* tape) {
        if (flat_map.rank() != 2 || flat_map.dim(1) != cfg_.c_in)
            throw std::invalid_argument("project_in: expected [N," + std::to_string(cfg_.c_in) +
                                        "], got " + shape_str(flat_map.shape()));
        return add(matmul(flat_map, w_in_, tape), b_in_, tape);
    }

    /// [N, c_tok] -> [N, c_in].
    Tensor<T> project_out(const Tensor<T>& tokens, Tape<T>* tape) {
        if (tokens.rank() != 2 || tokens.dim(1) != cfg_.c_tok)
            throw std::invalid_argument("project_out: expected [N," + std::to_string(cfg_.c_tok) +
                                        "], got " + shape_str(tokens.shape()));
        return add(matmul(tokens, w_out_, tape), b_out_, tape);
    }

    /// Runs a stack sequentially on raw predecessor outputs, records every
    /// intermediate, and (with fusion) returns standardize(sum of all
    /// recorded outputs) along the channel axis.
    std::pair<Tensor<T>, FusionState<T>> run_stack(const Tensor<T>& tokens,
                                                   std::vector<ResidualLayer<T>>& stack,
                                                   bool fusion, Tape<T>* tape) {
        if (tokens.rank() != 2 || tokens.dim(1) != cfg_.c_tok)
            throw std::invalid_argument("stack input must be [N, c_tok]");
        FusionState<T> st;
        st.layer_outputs.push_back(tokens);
        Tensor<T> x = tokens;
        for (auto& l : stack) {
            Tensor<T> h = relu(add(matmul(x, l.w1, tape), l.b1, tape), tape);
            Tensor<T> s = add(matmul(h, l.w2, tape), l.b2, tape);
            x = add(x, s, tape);
            st.layer_outputs.push_back(x);
        }
        Tensor<T> fused = st.layer_outputs[0];
        for (size_t i = 1; i < st.layer_outputs.size(); ++i)
            fused = add(fused, st.layer_outputs[i], tape);
        st.fused = fused;
        st.normalized = standardize(fused, 1, static_cast<T>(cfg_.eps), tape);
        Tensor<T> out = fusion ? st.normalized : x;
        return {out, st};
    }

    std::pair<Tensor<T>, FusionState<T>> encode(const Tensor<T>& tokens, Tape<T>* tape) {
        return run_stack(tokens, enc_, cfg_.fusion_encoder, tape);
    }

    std::pair<Tensor<T>, FusionState<T>> decode(const Tensor<T>& tokens, Tape<T>* tape) {
        return run_stack(tokens, dec_, cfg_.fusion_decoder, tape);
    }

    /// Full pass over a flattened [N, c_in] feature map. `perturbed` hooks
    /// the training-time pool in after projection; inference passes none.
    struct ForwardTrace {
        Tensor<T> tokens_in;       // post-projection, pre-perturbation
        Tensor<T> tokens_perturbed;
        PerturbationKind kind = PerturbationKind::GaussianNoise;
        bool perturbed = false;
        FusionState<T> enc_state, dec_state;
        Tensor<T> reconstruction;  // [N, c_in]
    };

    ForwardTrace forward(const Tensor<T>& flat_map, Tape<T>* tape,
                         const PerturbationSpec* spec = nullptr, Rng* rng = nullptr,
                         std::optional<PerturbationKind> forced_kind = std::nullopt,
                         std::optional<double> forced_gamma = std::nullopt) {
        ForwardTrace tr;
        tr.tokens_in = project_in(flat_map, tape);
        Tensor<T> x = tr.tokens_in;
        if (spec && rng) {
            auto outcome = sample_perturbation<T>(std::span<const T>(x.data()), x.dim(0), x.dim(1),
                                                  *spec, *rng, forced_kind, forced_gamma);
            x = apply_outcome(x, outcome, tape);
            tr.kind = outcome.kind;
            tr.perturbed = true;
        }
        tr.tokens_perturbed = x;
        auto [enc_out, enc_st] = encode(x, tape);
        tr.enc_state = std::move(enc_st);
        auto [dec_out, dec_st] = decode(enc_out, tape);
        tr.dec_state = std::move(dec_st);
        tr.reconstruction = project_out(dec_out, tape);
        return tr;
    }

private:
    Tensor<T> init_matrix(int rows, int cols, Rng& rng) {
        const T bound = T(1) / std::sqrt(static_cast<T>(rows));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<T> d(static_cast<size_t>(rows) * cols);
        for (auto& v : d) v = static_cast<T>(dist(rng));
        return Tensor<T>({rows, cols}, std::move(d), true);
    }

    ResidualLayer<T> init_layer(Rng& rng) {
        ResidualLayer<T> l;
        l.w1 = init_matrix(cfg_.c_tok, cfg_.hidden, rng);
        l.b1 = Tensor<T>::zeros({cfg_.hidden}, true);
        l.w2 = init_matrix(cfg_.hidden, cfg_.c_tok, rng);
        l.b2 = Tensor<T>::zeros({cfg_.c_tok}, true);
        return l;
    }

    CodecConfig cfg_;
    Tensor<T> w_in_, b_in_, w_out_, b_out_;
    std::vector<ResidualLayer<T>> enc_, dec_;
};

}  // namespace pfad
