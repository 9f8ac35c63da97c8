#pragma once

#include <cstdint>
#include <string>

#include "pfad/synth.hpp"
#include "pfad/trainer.hpp"

namespace pfad {

/// Flat key=value run configuration with dotted section prefixes. Every
/// key is schema-checked; unknown keys are hard errors. CLI flags
/// override file values.
struct RunConfig {
    std::string data_root;
    std::string out_dir;
    std::string checkpoint;  // model.checkpoint

    std::string frontend_kind = "random_projection";
    std::uint64_t frontend_seed = 17;
    int frontend_scales = 2;
    int frontend_c_feat = 64;
    std::string frontend_dir;  // precomputed feature directory

    GenOptions gen;
    TrainConfig train;

    int eval_pool_kernel = 16;
    double score_threshold = 0.0;
    int ablate_seeds = 3;

    void apply_line(const std::string& key, const std::string& value);
    void load_file(const std::string& path);
    std::string resolved() const;  // all keys, defaults expanded

    std::unique_ptr<Frontend> make_frontend() const;
};

}  // namespace pfad
