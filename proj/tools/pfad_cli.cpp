#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pfad/runconfig.hpp"
#include "pfad/scoring.hpp"
#include "pfad/synth.hpp"
#include "pfad/trainer.hpp"

namespace fs = std::filesystem;
using namespace pfad;

namespace {

bool quiet() {
    const char* v = std::getenv("PFAD_LOG");
    return v && std::string(v) == "quiet";
}

void info(const std::string& msg) {
    if (!quiet()) std::cout << msg << "\n";
}

void write_resolved(const RunConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream os(out_dir / "run_config.resolved");
    if (!os) throw std::runtime_error("cannot write resolved config under " + out_dir.string());
    os << cfg.resolved();
}

void require_outputs(const std::vector<fs::path>& files) {
    for (const auto& f : files)
        if (!fs::exists(f)) throw std::runtime_error("declared output missing: " + f.string());
}

int cmd_gen_data(const RunConfig& cfg) {
    if (cfg.out_dir.empty()) throw std::runtime_error("gen-data: out.dir (--out) is required");
    DatasetManifest man = generate_dataset(cfg.out_dir, cfg.gen);
    write_resolved(cfg, cfg.out_dir);
    int train = 0, test_normal = 0, test_defect = 0;
    for (const auto& r : man.records) {
        if (r.split == "train")
            ++train;
        else if (r.label == "normal")
            ++test_normal;
        else
            ++test_defect;
    }
    info("generated " + std::to_string(man.categories.size()) + " categories under " +
         cfg.out_dir + " (train " + std::to_string(train) + ", test normal " +
         std::to_string(test_normal) + ", test defective " + std::to_string(test_defect) + ")");
    require_outputs({fs::path(cfg.out_dir) / "manifest.tsv"});
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    if (cfg.data_root.empty()) throw std::runtime_error("train: data.root (--data) is required");
    if (cfg.out_dir.empty()) throw std::runtime_error("train: out.dir (--out) is required");
    DatasetManifest ds = load_dataset(cfg.data_root);
    auto frontend = cfg.make_frontend();
    write_resolved(cfg, cfg.out_dir);
    std::optional<fs::path> resume;
    if (!cfg.checkpoint.empty()) resume = cfg.checkpoint;
    FitResult fr = fit(ds, *frontend, cfg.train, cfg.out_dir, resume);
    info("trained " + std::to_string(fr.epoch_losses.size()) + " epochs, final mean loss " +
         std::to_string(fr.epoch_losses.empty() ? 0.0 : fr.epoch_losses.back()));
    info("checkpoint: " + fr.checkpoint_path.string());
    require_outputs({fr.checkpoint_path, fs::path(cfg.out_dir) / "train.log",
                     fs::path(cfg.out_dir) / "run_config.resolved"});
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.data_root.empty()) throw std::runtime_error("eval: data.root (--data) is required");
    if (cfg.out_dir.empty()) throw std::runtime_error("eval: out.dir (--out) is required");
    if (cfg.checkpoint.empty()) throw std::runtime_error("eval: model.checkpoint is required");
    DatasetManifest ds = load_dataset(cfg.data_root);
    Checkpoint ck = load_checkpoint(cfg.checkpoint);
    auto frontend = cfg.make_frontend();
    write_resolved(cfg, cfg.out_dir);
    EvalReport rep = eval_dataset(ck.model, *frontend, ds, cfg.eval_pool_kernel);
    std::ofstream table(fs::path(cfg.out_dir) / "report.txt");
    table << rep.table();
    table.close();
    std::ofstream kv(fs::path(cfg.out_dir) / "metrics.kv");
    kv << rep.key_values();
    kv.close();
    info(rep.table());
    require_outputs({fs::path(cfg.out_dir) / "report.txt", fs::path(cfg.out_dir) / "metrics.kv"});
    return 0;
}

int cmd_score(const RunConfig& cfg) {
    if (cfg.data_root.empty()) throw std::runtime_error("score: data.root (--data) is required");
    if (cfg.out_dir.empty()) throw std::runtime_error("score: out.dir (--out) is required");
    if (cfg.checkpoint.empty()) throw std::runtime_error("score: model.checkpoint is required");
    DatasetManifest ds = load_dataset(cfg.data_root);
    Checkpoint ck = load_checkpoint(cfg.checkpoint);
    auto frontend = cfg.make_frontend();
    write_resolved(cfg, cfg.out_dir);
    fs::create_directories(fs::path(cfg.out_dir) / "maps");

    struct Scored {
        const DatasetRecord* rec;
        AnomalyScoreMap map;
        double score;
    };
    std::vector<Scored> scored;
    double global_max = 0;
    for (const auto& rec : ds.records) {
        if (rec.split != "test") continue;
        AnomalyScoreMap m = score_record(ck.model, *frontend, ds, rec);
        const double s = image_score(m, cfg.eval_pool_kernel);
        for (double v : m.scores) global_max = std::max(global_max, v);
        scored.push_back({&rec, std::move(m), s});
    }
    std::ofstream tsv(fs::path(cfg.out_dir) / "scores.tsv");
    tsv << "id\tcategory\tlabel\timage_score\n";
    std::vector<fs::path> outputs = {fs::path(cfg.out_dir) / "scores.tsv"};
    for (const auto& s : scored) {
        const Image img = load_ppm((ds.root / s.rec->image_path).string());
        LocalizationResult loc = localize(s.map, img.h, img.w, cfg.score_threshold);
        GrayImage gm;
        gm.h = loc.h;
        gm.w = loc.w;
        gm.pix.resize(loc.upsampled.size());
        for (size_t i = 0; i < loc.upsampled.size(); ++i)
            gm.pix[i] = global_max > 0 ? static_cast<std::uint8_t>(
                                             std::min(255.0, loc.upsampled[i] / global_max * 255.0))
                                       : 0;
        const fs::path map_path = fs::path(cfg.out_dir) / "maps" / (s.rec->id + ".pgm");
        save_pgm(map_path.string(), gm);
        outputs.push_back(map_path);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s\t%s\t%s\t%.8f\n", s.rec->id.c_str(),
                      s.rec->category.c_str(), s.rec->label.c_str(), s.score);
        tsv << buf;
    }
    tsv.close();
    info("scored " + std::to_string(scored.size()) + " test images into " + cfg.out_dir);
    require_outputs(outputs);
    return 0;
}

int cmd_ablate(const RunConfig& cfg) {
    if (cfg.data_root.empty()) throw std::runtime_error("ablate: data.root (--data) is required");
    if (cfg.out_dir.empty()) throw std::runtime_error("ablate: out.dir (--out) is required");
    DatasetManifest ds = load_dataset(cfg.data_root);
    auto frontend = cfg.make_frontend();
    write_resolved(cfg, cfg.out_dir);
    AblationReport rep =
        ablate(ds, *frontend, cfg.train, cfg.out_dir, cfg.ablate_seeds, cfg.eval_pool_kernel);
    info(rep.table());
    require_outputs({fs::path(cfg.out_dir) / "ablation.txt"});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"feature-perturbation denoising reconstruction toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file, out_dir, data_root, checkpoint;
    std::int64_t seed = -1;
    app.add_option("--config", config_file, "run configuration file (key = value lines)");
    app.add_option("--seed", seed, "override the generation/training seed");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--data", data_root, "dataset root directory");
    app.add_option("--checkpoint", checkpoint, "model checkpoint path");

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-class dataset");
    int categories = -1, n_train = -1, n_test_normal = -1, n_test_defect = -1, image_size = -1;
    gen->add_option("--categories", categories, "number of categories (>= 2)");
    gen->add_option("--train", n_train, "train images per category");
    gen->add_option("--test-normal", n_test_normal, "normal test images per category");
    gen->add_option("--test-defect", n_test_defect, "defective test images per category");
    gen->add_option("--image-size", image_size, "square image size");

    auto* train = app.add_subcommand("train", "train the denoising reconstruction model");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (image/pixel AUROC)");
    auto* score = app.add_subcommand("score", "export anomaly score maps and image scores");
    auto* ablate_cmd = app.add_subcommand("ablate", "run the pool/fusion ablation grid");
    int ablate_seeds = -1;
    ablate_cmd->add_option("--seeds", ablate_seeds, "matched seeds per grid cell");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        // flags override file values
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (!data_root.empty()) cfg.data_root = data_root;
        if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
        if (seed >= 0) {
            cfg.gen.seed = static_cast<std::uint64_t>(seed);
            cfg.train.seed = static_cast<std::uint64_t>(seed);
        }
        if (categories >= 0) cfg.gen.n_categories = categories;
        if (n_train >= 0) cfg.gen.n_train = n_train;
        if (n_test_normal >= 0) cfg.gen.n_test_normal = n_test_normal;
        if (n_test_defect >= 0) cfg.gen.n_test_defect = n_test_defect;
        if (image_size >= 0) cfg.gen.image_size = image_size;
        if (ablate_seeds >= 0) cfg.ablate_seeds = ablate_seeds;

        if (gen->parsed()) return cmd_gen_data(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_eval(cfg);
        if (score->parsed()) return cmd_score(cfg);
        if (ablate_cmd->parsed()) return cmd_ablate(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
