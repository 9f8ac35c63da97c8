#include "pfad/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pfad {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool parse_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw std::invalid_argument("config: expected boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::apply_line(const std::string& key, const std::string& value) {
    using Setter = std::function<void(RunConfig&, const std::string&)>;
    static const std::map<std::string, Setter> schema = {
        {"data.root", [](RunConfig& c, const std::string& v) { c.data_root = v; }},
        {"out.dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
        {"model.checkpoint", [](RunConfig& c, const std::string& v) { c.checkpoint = v; }},
        {"frontend.kind",
         [](RunConfig& c, const std::string& v) {
             if (v != "random_projection" && v != "precomputed")
                 throw std::invalid_argument("config: frontend.kind must be random_projection or precomputed");
             c.frontend_kind = v;
         }},
        {"frontend.seed", [](RunConfig& c, const std::string& v) { c.frontend_seed = std::stoull(v); }},
        {"frontend.scales", [](RunConfig& c, const std::string& v) { c.frontend_scales = std::stoi(v); }},
        {"frontend.c_feat", [](RunConfig& c, const std::string& v) { c.frontend_c_feat = std::stoi(v); }},
        {"frontend.dir", [](RunConfig& c, const std::string& v) { c.frontend_dir = v; }},
        {"gen.categories", [](RunConfig& c, const std::string& v) { c.gen.n_categories = std::stoi(v); }},
        {"gen.train", [](RunConfig& c, const std::string& v) { c.gen.n_train = std::stoi(v); }},
        {"gen.test_normal", [](RunConfig& c, const std::string& v) { c.gen.n_test_normal = std::stoi(v); }},
        {"gen.test_defect", [](RunConfig& c, const std::string& v) { c.gen.n_test_defect = std::stoi(v); }},
        {"gen.image_size", [](RunConfig& c, const std::string& v) { c.gen.image_size = std::stoi(v); }},
        {"gen.seed", [](RunConfig& c, const std::string& v) { c.gen.seed = std::stoull(v); }},
        {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = std::stoi(v); }},
        {"train.batch", [](RunConfig& c, const std::string& v) { c.train.batch = std::stoi(v); }},
        {"train.lr_initial", [](RunConfig& c, const std::string& v) { c.train.lr_initial = std::stod(v); }},
        {"train.lr_final", [](RunConfig& c, const std::string& v) { c.train.lr_final = std::stod(v); }},
        {"train.lr_drop_fraction",
         [](RunConfig& c, const std::string& v) { c.train.lr_drop_fraction = std::stod(v); }},
        {"train.beta1", [](RunConfig& c, const std::string& v) { c.train.beta1 = std::stod(v); }},
        {"train.beta2", [](RunConfig& c, const std::string& v) { c.train.beta2 = std::stod(v); }},
        {"train.adam_eps", [](RunConfig& c, const std::string& v) { c.train.adam_eps = std::stod(v); }},
        {"train.weight_decay",
         [](RunConfig& c, const std::string& v) { c.train.weight_decay = std::stod(v); }},
        {"train.clip_norm", [](RunConfig& c, const std::string& v) { c.train.clip_norm = std::stod(v); }},
        {"train.seed", [](RunConfig& c, const std::string& v) { c.train.seed = std::stoull(v); }},
        {"train.smoke", [](RunConfig& c, const std::string& v) { c.train.smoke = parse_bool(v); }},
        {"train.perturb_enabled",
         [](RunConfig& c, const std::string& v) { c.train.perturb_enabled = parse_bool(v); }},
        {"perturb.alpha", [](RunConfig& c, const std::string& v) { c.train.perturb.alpha = std::stod(v); }},
        {"perturb.apply_prob",
         [](RunConfig& c, const std::string& v) { c.train.perturb.apply_prob = std::stod(v); }},
        {"perturb.fnoise_lo",
         [](RunConfig& c, const std::string& v) { c.train.perturb.fnoise_lo = std::stod(v); }},
        {"perturb.fnoise_hi",
         [](RunConfig& c, const std::string& v) { c.train.perturb.fnoise_hi = std::stod(v); }},
        {"perturb.fdrop_lo",
         [](RunConfig& c, const std::string& v) { c.train.perturb.fdrop_lo = std::stod(v); }},
        {"perturb.fdrop_hi",
         [](RunConfig& c, const std::string& v) { c.train.perturb.fdrop_hi = std::stod(v); }},
        {"perturb.weight_gaussian",
         [](RunConfig& c, const std::string& v) { c.train.perturb.weights[0] = std::stod(v); }},
        {"perturb.weight_fnoise",
         [](RunConfig& c, const std::string& v) { c.train.perturb.weights[1] = std::stod(v); }},
        {"perturb.weight_fdrop",
         [](RunConfig& c, const std::string& v) { c.train.perturb.weights[2] = std::stod(v); }},
        {"perturb.seed", [](RunConfig& c, const std::string& v) { c.train.perturb.seed = std::stoull(v); }},
        {"perturb.per_sample_select",
         [](RunConfig& c, const std::string& v) { c.train.perturb.per_sample_select = parse_bool(v); }},
        {"codec.c_in", [](RunConfig& c, const std::string& v) { c.train.codec.c_in = std::stoi(v); }},
        {"codec.c_tok", [](RunConfig& c, const std::string& v) { c.train.codec.c_tok = std::stoi(v); }},
        {"codec.n_enc_layers",
         [](RunConfig& c, const std::string& v) { c.train.codec.n_enc_layers = std::stoi(v); }},
        {"codec.n_dec_layers",
         [](RunConfig& c, const std::string& v) { c.train.codec.n_dec_layers = std::stoi(v); }},
        {"codec.hidden", [](RunConfig& c, const std::string& v) { c.train.codec.hidden = std::stoi(v); }},
        {"codec.fusion_encoder",
         [](RunConfig& c, const std::string& v) { c.train.codec.fusion_encoder = parse_bool(v); }},
        {"codec.fusion_decoder",
         [](RunConfig& c, const std::string& v) { c.train.codec.fusion_decoder = parse_bool(v); }},
        {"codec.eps", [](RunConfig& c, const std::string& v) { c.train.codec.eps = std::stod(v); }},
        {"eval.pool_kernel",
         [](RunConfig& c, const std::string& v) { c.eval_pool_kernel = std::stoi(v); }},
        {"score.threshold",
         [](RunConfig& c, const std::string& v) { c.score_threshold = std::stod(v); }},
        {"ablate.seeds", [](RunConfig& c, const std::string& v) { c.ablate_seeds = std::stoi(v); }},
    };
    auto it = schema.find(key);
    if (it == schema.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(*this, value);
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected 'key = value'");
        apply_line(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

std::string RunConfig::resolved() const {
    std::ostringstream os;
    os << "data.root = " << data_root << "\n";
    os << "out.dir = " << out_dir << "\n";
    os << "model.checkpoint = " << checkpoint << "\n";
    os << "frontend.kind = " << frontend_kind << "\n";
    os << "frontend.seed = " << frontend_seed << "\n";
    os << "frontend.scales = " << frontend_scales << "\n";
    os << "frontend.c_feat = " << frontend_c_feat << "\n";
    os << "frontend.dir = " << frontend_dir << "\n";
    os << "gen.categories = " << gen.n_categories << "\n";
    os << "gen.train = " << gen.n_train << "\n";
    os << "gen.test_normal = " << gen.n_test_normal << "\n";
    os << "gen.test_defect = " << gen.n_test_defect << "\n";
    os << "gen.image_size = " << gen.image_size << "\n";
    os << "gen.seed = " << gen.seed << "\n";
    os << "train.epochs = " << train.epochs << "\n";
    os << "train.batch = " << train.batch << "\n";
    os << "train.lr_initial = " << fmt_double(train.lr_initial) << "\n";
    os << "train.lr_final = " << fmt_double(train.lr_final) << "\n";
    os << "train.lr_drop_fraction = " << fmt_double(train.lr_drop_fraction) << "\n";
    os << "train.beta1 = " << fmt_double(train.beta1) << "\n";
    os << "train.beta2 = " << fmt_double(train.beta2) << "\n";
    os << "train.adam_eps = " << fmt_double(train.adam_eps) << "\n";
    os << "train.weight_decay = " << fmt_double(train.weight_decay) << "\n";
    os << "train.clip_norm = " << fmt_double(train.clip_norm) << "\n";
    os << "train.seed = " << train.seed << "\n";
    os << "train.smoke = " << (train.smoke ? 1 : 0) << "\n";
    os << "train.perturb_enabled = " << (train.perturb_enabled ? 1 : 0) << "\n";
    os << "perturb.alpha = " << fmt_double(train.perturb.alpha) << "\n";
    os << "perturb.apply_prob = " << fmt_double(train.perturb.apply_prob) << "\n";
    os << "perturb.fnoise_lo = " << fmt_double(train.perturb.fnoise_lo) << "\n";
    os << "perturb.fnoise_hi = " << fmt_double(train.perturb.fnoise_hi) << "\n";
    os << "perturb.fdrop_lo = " << fmt_double(train.perturb.fdrop_lo) << "\n";
    os << "perturb.fdrop_hi = " << fmt_double(train.perturb.fdrop_hi) << "\n";
    os << "perturb.weight_gaussian = " << fmt_double(train.perturb.weights[0]) << "\n";
    os << "perturb.weight_fnoise = " << fmt_double(train.perturb.weights[1]) << "\n";
    os << "perturb.weight_fdrop = " << fmt_double(train.perturb.weights[2]) << "\n";
    os << "perturb.seed = " << train.perturb.seed << "\n";
    os << "perturb.per_sample_select = " << (train.perturb.per_sample_select ? 1 : 0) << "\n";
    os << "codec.c_in = " << train.codec.c_in << "\n";
    os << "codec.c_tok = " << train.codec.c_tok << "\n";
    os << "codec.n_enc_layers = " << train.codec.n_enc_layers << "\n";
    os << "codec.n_dec_layers = " << train.codec.n_dec_layers << "\n";
    os << "codec.hidden = " << train.codec.hidden << "\n";
    os << "codec.fusion_encoder = " << (train.codec.fusion_encoder ? 1 : 0) << "\n";
    os << "codec.fusion_decoder = " << (train.codec.fusion_decoder ? 1 : 0) << "\n";
    os << "codec.eps = " << fmt_double(train.codec.eps) << "\n";
    os << "eval.pool_kernel = " << eval_pool_kernel << "\n";
    os << "score.threshold = " << fmt_double(score_threshold) << "\n";
    os << "ablate.seeds = " << ablate_seeds << "\n";
    return os.str();
}

std::unique_ptr<Frontend> RunConfig::make_frontend() const {
    if (frontend_kind == "precomputed") return std::make_unique<PrecomputedFrontend>(frontend_dir);
    return std::make_unique<RandomProjectionFrontend>(frontend_seed, frontend_scales,
                                                      frontend_c_feat);
}

}  // namespace pfad
