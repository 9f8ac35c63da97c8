#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "pfad/runconfig.hpp"

using namespace pfad;

namespace fs = std::filesystem;

namespace {

const fs::path kCli = PFAD_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = "PFAD_LOG=quiet " + kCli.string() + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return std::string((std::istreambuf_iterator<char>(is)), {});
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string& s) const { return path / s; }
};

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream os(p);
    os << body;
}

}  // namespace

TEST_CASE("run config parsing: comments, overrides, unknown keys") {
    TempDir dir("pfad_cli_cfg");
    write_file(dir / "good.cfg",
               "# comment line\n"
               "train.epochs = 7\n"
               "codec.c_tok = 16\n"
               "\n"
               "perturb.alpha = 0.5\n");
    RunConfig cfg;
    cfg.load_file((dir / "good.cfg").string());
    CHECK(cfg.train.epochs == 7);
    CHECK(cfg.train.codec.c_tok == 16);
    CHECK(cfg.train.perturb.alpha == 0.5);

    CHECK_THROWS_AS(cfg.apply_line("train.nope", "1"), std::invalid_argument);
    CHECK_THROWS_AS(cfg.apply_line("frontend.kind", "resnet"), std::invalid_argument);

    // resolved output echoes every schema key
    const std::string res = cfg.resolved();
    CHECK(res.find("train.epochs = 7") != std::string::npos);
    CHECK(res.find("eval.pool_kernel") != std::string::npos);
    CHECK(res.find("perturb.weight_fdrop") != std::string::npos);
}

TEST_CASE("invalid invocations exit nonzero") {
    CHECK(run("") != 0);                    // missing subcommand
    CHECK(run("frobnicate") != 0);          // unknown subcommand
    CHECK(run("gen-data") != 0);            // missing --out
    CHECK(run("train --out /tmp/x") != 0);  // missing --data
    CHECK(run("eval --data /nonexistent --out /tmp/x") != 0);
    CHECK(run("gen-data --out /tmp/pfad_cli_badcat --categories 1") != 0);
    fs::remove_all("/tmp/pfad_cli_badcat");
}

TEST_CASE("unknown config key is a hard error") {
    TempDir dir("pfad_cli_badkey");
    write_file(dir / "bad.cfg", "train.epochs = 3\nmystery.knob = 1\n");
    CHECK(run("--config " + (dir / "bad.cfg").string() + " gen-data --out " +
              (dir / "out").string()) != 0);
}

TEST_CASE("gen-data is deterministic per seed and writes the declared outputs") {
    TempDir a("pfad_cli_gen_a");
    TempDir b("pfad_cli_gen_b");
    const std::string opts =
        " --seed 5 --categories 2 --train 2 --test-normal 1 --test-defect 1 --image-size 32";
    REQUIRE(run("gen-data --out " + a.path.string() + opts) == 0);
    REQUIRE(run("gen-data --out " + b.path.string() + opts) == 0);
    CHECK(fs::exists(a / "manifest.tsv"));
    CHECK(fs::exists(a / "run_config.resolved"));
    CHECK(slurp(a / "manifest.tsv") == slurp(b / "manifest.tsv"));
    for (const auto& rec : load_dataset(a.path).records)
        CHECK(slurp(a.path / rec.image_path) == slurp(b.path / rec.image_path));

    TempDir c("pfad_cli_gen_c");
    REQUIRE(run("gen-data --out " + c.path.string() + opts.substr(0, 0) +
                " --seed 6 --categories 2 --train 2 --test-normal 1 --test-defect 1 "
                "--image-size 32") == 0);
    CHECK(slurp(a / "manifest.tsv") != slurp(c / "manifest.tsv"));
}

TEST_CASE("smoke pipeline: gen-data, train, eval, score, resolved config") {
    TempDir root("pfad_cli_pipe");
    const fs::path data = root / "data";
    const fs::path run_dir = root / "run";
    const fs::path eval_dir = root / "eval";
    const fs::path score_dir = root / "score";
    write_file(root / "run.cfg",
               "frontend.seed = 17\n"
               "frontend.scales = 2\n"
               "frontend.c_feat = 16\n"
               "codec.c_in = 16\n"
               "codec.c_tok = 8\n"
               "codec.hidden = 8\n"
               "codec.n_enc_layers = 1\n"
               "codec.n_dec_layers = 1\n"
               "train.smoke = true\n"
               "train.batch = 4\n");
    const std::string cfg_flag = " --config " + (root / "run.cfg").string();

    REQUIRE(run("gen-data --out " + data.string() +
                " --seed 3 --categories 2 --train 4 --test-normal 2 --test-defect 2 "
                "--image-size 32") == 0);
    REQUIRE(run(cfg_flag + " train --data " + data.string() + " --out " + run_dir.string()) == 0);
    CHECK(fs::exists(run_dir / "checkpoint.pfck"));
    CHECK(fs::exists(run_dir / "train.log"));
    const std::string resolved = slurp(run_dir / "run_config.resolved");
    CHECK(resolved.find("codec.c_in = 16") != std::string::npos);
    CHECK(resolved.find("train.smoke = 1") != std::string::npos);

    REQUIRE(run(cfg_flag + " eval --data " + data.string() + " --out " + eval_dir.string() +
                " --checkpoint " + (run_dir / "checkpoint.pfck").string()) == 0);
    CHECK(fs::exists(eval_dir / "report.txt"));
    const std::string metrics = slurp(eval_dir / "metrics.kv");
    CHECK(metrics.find("image_auroc=") != std::string::npos);
    CHECK(metrics.find("pixel_auroc=") != std::string::npos);

    REQUIRE(run(cfg_flag + " score --data " + data.string() + " --out " + score_dir.string() +
                " --checkpoint " + (run_dir / "checkpoint.pfck").string()) == 0);
    CHECK(fs::exists(score_dir / "scores.tsv"));
    // one map per test image (2 categories x 4 test images), plus header line
    int maps = 0;
    for (const auto& e : fs::directory_iterator(score_dir / "maps")) {
        CHECK(e.path().extension() == ".pgm");
        ++maps;
    }
    CHECK(maps == 8);
    const std::string tsv = slurp(score_dir / "scores.tsv");
    CHECK(tsv.find("id\tcategory\tlabel\timage_score") == 0);
}
