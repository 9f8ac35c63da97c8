#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pfad/codec.hpp"
#include "pfad/frontend.hpp"
#include "pfad/perturb.hpp"
#include "pfad/scoring.hpp"
#include "pfad/synth.hpp"

namespace pfad {

struct TrainConfig {
    int epochs = 50;  // reference-scale default is 1000
    int batch = 64;
    double lr_initial = 1e-4;
    double lr_final = 1e-5;
    double lr_drop_fraction = 0.8;  // step drop after this fraction of epochs
    double beta1 = 0.9, beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;  // 0 disables clipping
    std::uint64_t seed = 0;
    bool smoke = false;  // 2 epochs on 8 samples
    bool perturb_enabled = true;
    PerturbationSpec perturb;
    CodecConfig codec;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
        if (batch < 1) throw std::invalid_argument("train: batch must be >= 1");
        if (!(lr_final > 0) || lr_final > lr_initial)
            throw std::invalid_argument("train: need 0 < lr_final <= lr_initial");
        if (!(lr_drop_fraction > 0) || lr_drop_fraction > 1)
            throw std::invalid_argument("train: lr_drop_fraction must be in (0,1]");
        perturb.validate();
        codec.validate();
    }
};

/// Step schedule: lr_initial until drop_fraction*epochs, then lr_final.
double lr_at(int epoch, const TrainConfig& cfg);

/// Adam with decoupled weight decay; moments are part of the checkpoint
/// so a resumed run replays bit-exactly.
class AdamW {
public:
    AdamW() = default;
    AdamW(std::vector<Tensor<float>> params, double beta1, double beta2, double eps,
          double weight_decay);

    void zero_grad();
    void step(double lr);
    void clip_gradients(double max_norm);

    std::int64_t step_count() const { return t_; }
    std::vector<Tensor<float>>& first_moments() { return m_; }
    std::vector<Tensor<float>>& second_moments() { return v_; }
    void restore_step_count(std::int64_t t) { t_ = t; }

private:
    std::vector<Tensor<float>> params_, m_, v_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, wd_ = 0.0;
    std::int64_t t_ = 0;
};

struct TrainBatchItem {
    Tensor<float> features;  // [N, c_in]
    std::string id;
    std::string label;
};

struct StepResult {
    double loss = 0;  // pre-update batch loss
    PerturbationKind kind = PerturbationKind::GaussianNoise;
    bool perturbed = false;
};

/// One optimizer step over a normal-only batch. Throws on defective
/// samples and on non-finite losses (with kind and batch ids).
StepResult train_step(const std::vector<TrainBatchItem>& batch, Codec<float>& model, AdamW& opt,
                      const TrainConfig& cfg, double lr, Rng& rng);

struct Checkpoint {
    TrainConfig config;
    Codec<float> model;
    AdamW optimizer;
    int epoch = 0;  // next epoch to run
    double running_loss = 0;
    std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct FitResult {
    std::filesystem::path checkpoint_path;
    std::vector<double> epoch_losses;
};

/// Full training loop with seeded per-epoch shuffling and a tab-separated
/// step log (`epoch step loss lr perturbation_kind`). Pass a checkpoint
/// path to resume.
FitResult fit(const DatasetManifest& dataset, const Frontend& frontend, const TrainConfig& cfg,
              const std::filesystem::path& out_dir,
              const std::optional<std::filesystem::path>& resume = std::nullopt);

struct AblationRow {
    std::string name;
    bool pool = false, fusion = false;
    double image_auroc = 0, pixel_auroc = 0;
    std::int64_t param_count = 0;
};

struct AblationReport {
    std::vector<AblationRow> rows;  // 4 grid cells + 3 per-kind rows
    int n_seeds = 0;
    std::string table() const;
};

/// Trains and evaluates the 2x2 {pool, fusion} grid plus single-kind
/// rows, mean over matched seeds. "Pool off" keeps the Gaussian-only
/// perturbation, matching the baseline the grid is measured against.
AblationReport ablate(const DatasetManifest& dataset, const Frontend& frontend,
                      const TrainConfig& base, const std::filesystem::path& out_dir, int n_seeds,
                      int pool_kernel = 16);

}  // namespace pfad
