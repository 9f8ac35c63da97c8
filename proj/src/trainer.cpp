#include "pfad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "pfad/tensor_io.hpp"

namespace pfad {

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs) throw std::invalid_argument("lr_at: epoch out of range");
    const double boundary = cfg.lr_drop_fraction * cfg.epochs;
    return static_cast<double>(epoch) < boundary ? cfg.lr_initial : cfg.lr_final;
}

AdamW::AdamW(std::vector<Tensor<float>> params, double beta1, double beta2, double eps,
             double weight_decay)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {
    for (auto& p : params_) {
        m_.push_back(Tensor<float>::zeros(p.shape()));
        v_.push_back(Tensor<float>::zeros(p.shape()));
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void AdamW::clip_gradients(double max_norm) {
    if (max_norm <= 0) return;
    double norm2 = 0;
    for (auto& p : params_)
        for (float g : p.grad()) norm2 += static_cast<double>(g) * g;
    const double norm = std::sqrt(norm2);
    if (norm <= max_norm) return;
    const float scale = static_cast<float>(max_norm / norm);
    for (auto& p : params_)
        for (float& g : p.grad()) g *= scale;
}

void AdamW::step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].data();
        auto& g = params_[i].grad();
        auto& m = m_[i].data();
        auto& v = v_[i].data();
        for (size_t j = 0; j < p.size(); ++j) {
            m[j] = static_cast<float>(beta1_ * m[j] + (1.0 - beta1_) * g[j]);
            v[j] = static_cast<float>(beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j]);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] = static_cast<float>(p[j] - lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p[j]));
        }
    }
}

StepResult train_step(const std::vector<TrainBatchItem>& batch, Codec<float>& model, AdamW& opt,
                      const TrainConfig& cfg, double lr, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    for (const auto& item : batch)
        if (item.label != "normal")
            throw std::invalid_argument("train_step: sample " + item.id +
                                        " is not normal-labeled; training is normal-only");
    StepResult res;
    std::optional<PerturbationKind> forced_kind;
    std::optional<double> forced_gamma;
    if (cfg.perturb_enabled) {
        res.perturbed = true;
        if (!cfg.perturb.per_sample_select) {
            // one kind (and one gamma) per training iteration
            res.kind = pool_select(cfg.perturb, rng);
            forced_kind = res.kind;
            if (res.kind == PerturbationKind::FDrop) {
                std::uniform_real_distribution<double> dist(cfg.perturb.fdrop_lo,
                                                            cfg.perturb.fdrop_hi);
                forced_gamma = dist(rng);
            }
        }
    }
    opt.zero_grad();
    Tape<float> tape;
    Tensor<float> total;
    try {
        for (const auto& item : batch) {
            auto trace = cfg.perturb_enabled
                             ? model.forward(item.features, &tape, &cfg.perturb, &rng, forced_kind,
                                             forced_gamma)
                             : model.forward(item.features, &tape);
            if (cfg.perturb_enabled && cfg.perturb.per_sample_select) res.kind = trace.kind;
            Tensor<float> loss = mse(trace.reconstruction, item.features, &tape);
            total = total.defined() ? add(total, loss, &tape) : loss;
        }
        total = mul(total, Tensor<float>::scalar(1.0f / static_cast<float>(batch.size())), &tape);
        res.loss = static_cast<double>(total.item());
        tape.backward(total);
    } catch (const std::runtime_error& e) {
        std::string ids;
        for (const auto& item : batch) ids += item.id + " ";
        throw std::runtime_error(std::string("train_step aborted: ") + e.what() +
                                 " (perturbation=" +
                                 (res.perturbed ? to_string(res.kind) : "disabled") +
                                 ", batch: " + ids + ")");
    }
    opt.clip_gradients(cfg.clip_norm);
    opt.step(lr);
    return res;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization: text header (config + tensor directory) then
// concatenated tensors in the repo binary format.

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_config(std::ostream& os, const TrainConfig& c) {
    os << "train.epochs = " << c.epochs << "\n";
    os << "train.batch = " << c.batch << "\n";
    os << "train.lr_initial = " << fmt_double(c.lr_initial) << "\n";
    os << "train.lr_final = " << fmt_double(c.lr_final) << "\n";
    os << "train.lr_drop_fraction = " << fmt_double(c.lr_drop_fraction) << "\n";
    os << "train.beta1 = " << fmt_double(c.beta1) << "\n";
    os << "train.beta2 = " << fmt_double(c.beta2) << "\n";
    os << "train.adam_eps = " << fmt_double(c.adam_eps) << "\n";
    os << "train.weight_decay = " << fmt_double(c.weight_decay) << "\n";
    os << "train.clip_norm = " << fmt_double(c.clip_norm) << "\n";
    os << "train.seed = " << c.seed << "\n";
    os << "train.smoke = " << (c.smoke ? 1 : 0) << "\n";
    os << "train.perturb_enabled = " << (c.perturb_enabled ? 1 : 0) << "\n";
    os << "perturb.alpha = " << fmt_double(c.perturb.alpha) << "\n";
    os << "perturb.apply_prob = " << fmt_double(c.perturb.apply_prob) << "\n";
    os << "perturb.fnoise_lo = " << fmt_double(c.perturb.fnoise_lo) << "\n";
    os << "perturb.fnoise_hi = " << fmt_double(c.perturb.fnoise_hi) << "\n";
    os << "perturb.fdrop_lo = " << fmt_double(c.perturb.fdrop_lo) << "\n";
    os << "perturb.fdrop_hi = " << fmt_double(c.perturb.fdrop_hi) << "\n";
    os << "perturb.weight_gaussian = " << fmt_double(c.perturb.weights[0]) << "\n";
    os << "perturb.weight_fnoise = " << fmt_double(c.perturb.weights[1]) << "\n";
    os << "perturb.weight_fdrop = " << fmt_double(c.perturb.weights[2]) << "\n";
    os << "perturb.seed = " << c.perturb.seed << "\n";
    os << "perturb.per_sample_select = " << (c.perturb.per_sample_select ? 1 : 0) << "\n";
    os << "codec.c_in = " << c.codec.c_in << "\n";
    os << "codec.c_tok = " << c.codec.c_tok << "\n";
    os << "codec.n_enc_layers = " << c.codec.n_enc_layers << "\n";
    os << "codec.n_dec_layers = " << c.codec.n_dec_layers << "\n";
    os << "codec.hidden = " << c.codec.hidden << "\n";
    os << "codec.fusion_encoder = " << (c.codec.fusion_encoder ? 1 : 0) << "\n";
    os << "codec.fusion_decoder = " << (c.codec.fusion_decoder ? 1 : 0) << "\n";
    os << "codec.eps = " << fmt_double(c.codec.eps) << "\n";
}

TrainConfig parse_config(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    auto geti = [&](const char* k) { return std::stoi(kv.at(k)); };
    auto getd = [&](const char* k) { return std::stod(kv.at(k)); };
    auto getu = [&](const char* k) { return std::stoull(kv.at(k)); };
    c.epochs = geti("train.epochs");
    c.batch = geti("train.batch");
    c.lr_initial = getd("train.lr_initial");
    c.lr_final = getd("train.lr_final");
    c.lr_drop_fraction = getd("train.lr_drop_fraction");
    c.beta1 = getd("train.beta1");
    c.beta2 = getd("train.beta2");
    c.adam_eps = getd("train.adam_eps");
    c.weight_decay = getd("train.weight_decay");
    c.clip_norm = getd("train.clip_norm");
    c.seed = getu("train.seed");
    c.smoke = geti("train.smoke") != 0;
    c.perturb_enabled = geti("train.perturb_enabled") != 0;
    c.perturb.alpha = getd("perturb.alpha");
    c.perturb.apply_prob = getd("perturb.apply_prob");
    c.perturb.fnoise_lo = getd("perturb.fnoise_lo");
    c.perturb.fnoise_hi = getd("perturb.fnoise_hi");
    c.perturb.fdrop_lo = getd("perturb.fdrop_lo");
    c.perturb.fdrop_hi = getd("perturb.fdrop_hi");
    c.perturb.weights[0] = getd("perturb.weight_gaussian");
    c.perturb.weights[1] = getd("perturb.weight_fnoise");
    c.perturb.weights[2] = getd("perturb.weight_fdrop");
    c.perturb.seed = getu("perturb.seed");
    c.perturb.per_sample_select = geti("perturb.per_sample_select") != 0;
    c.codec.c_in = geti("codec.c_in");
    c.codec.c_tok = geti("codec.c_tok");
    c.codec.n_enc_layers = geti("codec.n_enc_layers");
    c.codec.n_dec_layers = geti("codec.n_dec_layers");
    c.codec.hidden = geti("codec.hidden");
    c.codec.fusion_encoder = geti("codec.fusion_encoder") != 0;
    c.codec.fusion_decoder = geti("codec.fusion_decoder") != 0;
    c.codec.eps = getd("codec.eps");
    return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Checkpoint& ck) {
    std::ostringstream blobs(std::ios::binary);
    std::vector<std::pair<std::string, std::uint64_t>> directory;
    auto emit = [&](const std::string& name, const Tensor<float>& t) {
        directory.emplace_back(name, static_cast<std::uint64_t>(blobs.tellp()));
        write_tensor(blobs, t);
    };
    auto named = ck.model.named_params();
    for (size_t i = 0; i < named.size(); ++i) {
        emit("param." + named[i].first, named[i].second);
        emit("opt.m." + named[i].first, ck.optimizer.first_moments()[i]);
        emit("opt.v." + named[i].first, ck.optimizer.second_moments()[i]);
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
    os << "PFCK1\n[config]\n";
    write_config(os, ck.config);
    os << "state.epoch = " << ck.epoch << "\n";
    os << "state.running_loss = " << fmt_double(ck.running_loss) << "\n";
    os << "state.opt_step = " << ck.optimizer.step_count() << "\n";
    os << "state.rng = " << ck.rng_state << "\n";
    os << "[tensors]\n";
    for (auto& [name, off] : directory) os << name << " " << off << "\n";
    os << "[end]\n";
    os << blobs.str();
    if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "PFCK1") throw std::runtime_error("bad checkpoint magic in " + path.string());
    std::getline(is, line);
    if (line != "[config]") throw std::runtime_error("malformed checkpoint header");
    std::map<std::string, std::string> kv;
    while (std::getline(is, line) && line != "[tensors]") {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw std::runtime_error("malformed config line: " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    std::vector<std::pair<std::string, std::uint64_t>> directory;
    while (std::getline(is, line) && line != "[end]") {
        const auto sp = line.rfind(' ');
        directory.emplace_back(line.substr(0, sp), std::stoull(line.substr(sp + 1)));
    }
    const std::streampos blob_start = is.tellg();

    Checkpoint ck;
    ck.config = parse_config(kv);
    ck.epoch = std::stoi(kv.at("state.epoch"));
    ck.running_loss = std::stod(kv.at("state.running_loss"));
    ck.rng_state = kv.at("state.rng");
    ck.model = Codec<float>(ck.config.codec);
    ck.model.init(0);
    ck.optimizer = AdamW(ck.model.params(), ck.config.beta1, ck.config.beta2, ck.config.adam_eps,
                         ck.config.weight_decay);
    ck.optimizer.restore_step_count(std::stoll(kv.at("state.opt_step")));

    std::map<std::string, Tensor<float>*> targets;
    auto named = ck.model.named_params();
    for (size_t i = 0; i < named.size(); ++i) {
        targets["param." + named[i].first] = &named[i].second;
        targets["opt.m." + named[i].first] = &ck.optimizer.first_moments()[i];
        targets["opt.v." + named[i].first] = &ck.optimizer.second_moments()[i];
    }
    for (auto& [name, off] : directory) {
        auto it = targets.find(name);
        if (it == targets.end()) throw std::runtime_error("unknown tensor in checkpoint: " + name);
        is.seekg(blob_start + static_cast<std::streamoff>(off));
        Tensor<float> t = read_tensor<float>(is);
        if (t.shape() != it->second->shape())
            throw std::runtime_error("checkpoint tensor shape mismatch for " + name);
        it->second->data() = t.data();
    }
    if (targets.size() != directory.size())
        throw std::runtime_error("checkpoint tensor directory incomplete");
    return ck;
}

FitResult fit(const DatasetManifest& dataset, const Frontend& frontend, const TrainConfig& cfg_in,
              const std::filesystem::path& out_dir,
              const std::optional<std::filesystem::path>& resume) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    std::vector<const DatasetRecord*> train = dataset.split_records("train");
    if (train.empty()) throw std::runtime_error("fit: dataset has no train split");
    if (cfg.smoke) {
        cfg.epochs = 2;
        if (train.size() > 8) train.resize(8);
    }

    // features are extracted once; training iterates over cached tokens
    std::vector<TrainBatchItem> cache;
    cache.reserve(train.size());
    for (const auto* rec : train) {
        const Image img = load_ppm((dataset.root / rec->image_path).string());
        const FeatureMap fm = frontend.extract(img, rec->id);
        if (fm.c != cfg.codec.c_in)
            throw std::runtime_error("fit: frontend channels " + std::to_string(fm.c) +
                                     " do not match codec.c_in " + std::to_string(cfg.codec.c_in));
        cache.push_back({Tensor<float>({fm.h * fm.w, fm.c}, fm.data), rec->id, rec->label});
    }

    Codec<float> model;
    AdamW opt;
    Rng rng;
    int start_epoch = 0;
    if (resume) {
        Checkpoint ck = load_checkpoint(*resume);
        model = ck.model;
        opt = ck.optimizer;
        std::istringstream rs(ck.rng_state);
        rs >> rng;
        start_epoch = ck.epoch;
        cfg = ck.config;
        cfg.epochs = cfg_in.epochs;  // allow extending a finished run
    } else {
        model = Codec<float>(cfg.codec);
        model.init(cfg.seed ^ 0xc0dec);
        opt = AdamW(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
        rng.seed(cfg.seed ^ cfg.perturb.seed * 0x9e3779b97f4a7c15ULL);
    }

    std::ofstream log(out_dir / "train.log", resume ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot open training log under " + out_dir.string());

    FitResult result;
    std::vector<size_t> order(cache.size());
    double epoch_loss = 0;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg);
        // each epoch's permutation is a pure function of the rng state, so a
        // resumed run replays the same batches as an uninterrupted one
        std::iota(order.begin(), order.end(), size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        epoch_loss = 0;
        int steps = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.batch)) {
            std::vector<TrainBatchItem> batch;
            for (size_t i = b; i < std::min(order.size(), b + static_cast<size_t>(cfg.batch)); ++i)
                batch.push_back(cache[order[i]]);
            StepResult sr = train_step(batch, model, opt, cfg, lr, rng);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%d\t%d\t%.8f\t%.8g\t%s\n", epoch, steps, sr.loss, lr,
                          sr.perturbed ? to_string(sr.kind) : "none");
            log << buf;
            epoch_loss += sr.loss;
            ++steps;
        }
        epoch_loss /= std::max(1, steps);
        result.epoch_losses.push_back(epoch_loss);
    }
    log.flush();

    Checkpoint ck;
    ck.config = cfg;
    ck.model = model;
    ck.optimizer = opt;
    ck.epoch = cfg.epochs;
    ck.running_loss = epoch_loss;
    std::ostringstream rs;
    rs << rng;
    ck.rng_state = rs.str();
    result.checkpoint_path = out_dir / "checkpoint.pfck";
    save_checkpoint(result.checkpoint_path, ck);
    return result;
}

std::string AblationReport::table() const {
    std::ostringstream os;
    os << "variant             pool  fusion  image_auroc  pixel_auroc  params\n";
    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-18s %5s %7s %12.4f %12.4f %7lld\n", r.name.c_str(),
                      r.pool ? "yes" : "no", r.fusion ? "yes" : "no", r.image_auroc, r.pixel_auroc,
                      static_cast<long long>(r.param_count));
        os << buf;
    }
    return os.str();
}

AblationReport ablate(const DatasetManifest& dataset, const Frontend& frontend,
                      const TrainConfig& base, const std::filesystem::path& out_dir, int n_seeds,
                      int pool_kernel) {
    if (n_seeds < 1) throw std::invalid_argument("ablate: n_seeds must be >= 1");
    std::filesystem::create_directories(out_dir);

    struct Variant {
        std::string name;
        bool pool, fusion;
        double weights[3];
    };
    // pool off keeps the Gaussian-only perturbation of the baseline
    const std::vector<Variant> variants = {
        {"baseline", false, false, {1, 0, 0}},
        {"pool", true, false, {1, 1, 1}},
        {"fusion", false, true, {1, 0, 0}},
        {"pool_fusion", true, true, {1, 1, 1}},
        {"gaussian_noise", false, false, {1, 0, 0}},
        {"f_noise", false, false, {0, 1, 0}},
        {"f_drop", false, false, {0, 0, 1}},
    };

    AblationReport rep;
    rep.n_seeds = n_seeds;
    for (const auto& v : variants) {
        AblationRow row;
        row.name = v.name;
        row.pool = v.pool;
        row.fusion = v.fusion;
        for (int s = 0; s < n_seeds; ++s) {
            TrainConfig cfg = base;
            cfg.seed = base.seed + static_cast<std::uint64_t>(s);  // matched across variants
            cfg.codec.fusion_encoder = v.fusion;
            cfg.codec.fusion_decoder = v.fusion;
            for (int i = 0; i < 3; ++i) cfg.perturb.weights[i] = v.weights[i];
            const auto run_dir = out_dir / (v.name + "_seed" + std::to_string(s));
            FitResult fr = fit(dataset, frontend, cfg, run_dir);
            Checkpoint ck = load_checkpoint(fr.checkpoint_path);
            EvalReport er = eval_dataset(ck.model, frontend, dataset, pool_kernel);
            row.image_auroc += er.image_auroc;
            row.pixel_auroc += er.pixel_auroc;
            row.param_count = ck.model.param_count();
        }
        row.image_auroc /= n_seeds;
        row.pixel_auroc /= n_seeds;
        rep.rows.push_back(row);
    }
    std::ofstream os(out_dir / "ablation.txt");
    os << "seeds: " << n_seeds << "\n" << rep.table();
    return rep;
}

}  // namespace pfad
