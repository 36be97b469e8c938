#include "sparta/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "sparta/errors.hpp"

namespace sparta {

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(first, eq - first);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string value = line.substr(eq + 1);
        if (out.count(key))
            throw FormatError("line " + std::to_string(lineno) + ": duplicate key " + key);
        out[key] = value;
    }
    return out;
}

namespace {

// Field registry: one entry per key, with parse and print lambdas so load
// and save stay in lockstep.
struct Field {
    std::string key;
    std::function<void(PipelineConfig&, const std::string&)> set;
    std::function<std::string(const PipelineConfig&)> get;
};

std::string fmt_double(double v) {
    char buf[40];
    snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ValidationError("config key " + key + ": bad number \"" + v + "\"");
    }
}

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ValidationError("config key " + key + ": bad integer \"" + v + "\"");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "0" || v == "false") return false;
    if (v == "1" || v == "true") return true;
    throw ValidationError("config key " + key + ": bad boolean \"" + v + "\"");
}

std::vector<Field> make_fields() {
    std::vector<Field> f;
    auto add_u64 = [&](const std::string& k, uint64_t PipelineConfig::*m) {
        f.push_back({k,
                     [k, m](PipelineConfig& c, const std::string& v) {
                         long long x = parse_int(k, v);
                         if (x < 0) throw ValidationError("config key " + k + ": negative");
                         c.*m = static_cast<uint64_t>(x);
                     },
                     [m](const PipelineConfig& c) { return std::to_string(c.*m); }});
    };
    auto add_int = [&](const std::string& k, int PipelineConfig::*m) {
        f.push_back({k,
                     [k, m](PipelineConfig& c, const std::string& v) {
                         c.*m = static_cast<int>(parse_int(k, v));
                     },
                     [m](const PipelineConfig& c) { return std::to_string(c.*m); }});
    };
    auto add_dbl = [&](const std::string& k, double PipelineConfig::*m) {
        f.push_back({k,
                     [k, m](PipelineConfig& c, const std::string& v) { c.*m = parse_double(k, v); },
                     [m](const PipelineConfig& c) { return fmt_double(c.*m); }});
    };
    auto add_bool = [&](const std::string& k, bool PipelineConfig::*m) {
        f.push_back({k,
                     [k, m](PipelineConfig& c, const std::string& v) { c.*m = parse_bool(k, v); },
                     [m](const PipelineConfig& c) { return c.*m ? "1" : "0"; }});
    };
    auto add_str = [&](const std::string& k, std::string PipelineConfig::*m) {
        f.push_back({k, [m](PipelineConfig& c, const std::string& v) { c.*m = v; },
                     [m](const PipelineConfig& c) { return c.*m; }});
    };

    add_u64("seed", &PipelineConfig::seed);
    add_bool("runtime.parallel", &PipelineConfig::parallel);
    add_int("io.timesteps", &PipelineConfig::timesteps);
    add_int("io.frame_h", &PipelineConfig::frame_h);
    add_int("io.frame_w", &PipelineConfig::frame_w);
    add_int("io.csv_width", &PipelineConfig::csv_width);
    add_int("io.csv_height", &PipelineConfig::csv_height);
    add_int("sten.stages", &PipelineConfig::sten_stages);
    add_int("sten.stage_channels", &PipelineConfig::sten_stage_channels);
    add_int("sten.d1", &PipelineConfig::sten_d1);
    add_int("sten.d2", &PipelineConfig::sten_d2);
    add_int("sten.d3", &PipelineConfig::sten_d3);
    add_dbl("sten.init_scale", &PipelineConfig::sten_init_scale);
    add_int("sten.patch_h", &PipelineConfig::patch_h);
    add_int("sten.patch_w", &PipelineConfig::patch_w);
    add_dbl("hilif.mu_tau", &PipelineConfig::mu_tau);
    add_dbl("hilif.sigma_tau", &PipelineConfig::sigma_tau);
    add_dbl("hilif.mu_vth", &PipelineConfig::mu_vth);
    add_dbl("hilif.sigma_vth", &PipelineConfig::sigma_vth);
    add_str("hilif.reset_mode", &PipelineConfig::reset_mode);
    add_dbl("hilif.v_reset", &PipelineConfig::v_reset);
    add_dbl("hilif.fb_lambda", &PipelineConfig::fb_lambda);
    add_dbl("hilif.fb_eta", &PipelineConfig::fb_eta);
    add_dbl("hilif.fb_target", &PipelineConfig::fb_target);
    add_dbl("msp.alpha", &PipelineConfig::msp_alpha);
    add_dbl("msp.beta", &PipelineConfig::msp_beta);
    add_dbl("msp.gamma", &PipelineConfig::msp_gamma);
    add_int("msp.heads", &PipelineConfig::msp_heads);
    add_bool("msp.ablate_timing", &PipelineConfig::ablate_timing);
    add_bool("msp.ablate_interval", &PipelineConfig::ablate_interval);
    add_bool("msp.ablate_rate", &PipelineConfig::ablate_rate);
    add_int("stsg.hidden", &PipelineConfig::stsg_hidden);
    add_int("stsg.k_min", &PipelineConfig::k_min);
    add_int("stsg.n_target", &PipelineConfig::n_target);
    add_int("stsg.fixed_k", &PipelineConfig::fixed_k);
    add_int("sc.heads", &PipelineConfig::sc_heads);
    add_int("sc.layers", &PipelineConfig::sc_layers);
    add_int("sc.ffn_dim", &PipelineConfig::sc_ffn_dim);
    add_int("sc.classes", &PipelineConfig::sc_classes);
    add_int("sc.prio_hidden", &PipelineConfig::sc_prio_hidden);
    add_bool("sc.ablate_we", &PipelineConfig::ablate_we);
    add_bool("sc.ablate_wi", &PipelineConfig::ablate_wi);
    add_bool("sc.ablate_wr", &PipelineConfig::ablate_wr);
    add_str("train.task", &PipelineConfig::train_task);
    add_dbl("train.lr", &PipelineConfig::lr);
    add_int("train.epochs", &PipelineConfig::epochs);
    add_int("train.batch", &PipelineConfig::batch);
    add_int("train.samples", &PipelineConfig::train_samples);
    add_int("train.test_samples", &PipelineConfig::test_samples);
    add_dbl("train.weight_decay", &PipelineConfig::weight_decay);
    add_str("train.surrogate", &PipelineConfig::surrogate);
    add_dbl("train.surrogate_a", &PipelineConfig::surrogate_a);
    add_dbl("train.rho_target", &PipelineConfig::rho_target);
    add_dbl("train.sparsity_weight", &PipelineConfig::sparsity_weight);
    add_bool("train.feedback", &PipelineConfig::train_feedback);
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = make_fields();
    return f;
}

} // namespace

PipelineConfig PipelineConfig::load(const std::string& text) {
    PipelineConfig cfg;
    auto kv = parse_kv(text);
    for (const Field& f : fields()) {
        auto it = kv.find(f.key);
        if (it != kv.end()) {
            f.set(cfg, it->second);
            kv.erase(it);
        }
    }
    if (!kv.empty())
        throw ValidationError("unknown config key \"" + kv.begin()->first + "\"");
    cfg.validate();
    return cfg;
}

PipelineConfig PipelineConfig::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load(ss.str());
}

std::string PipelineConfig::save() const {
    std::string out;
    for (const Field& f : fields()) out += f.key + "=" + f.get(*this) + "\n";
    return out;
}

void PipelineConfig::validate() const {
    auto check = [](bool ok, const std::string& msg) {
        if (!ok) throw ValidationError("config: " + msg);
    };
    check(timesteps >= 1, "io.timesteps must be >= 1");
    check(frame_h >= 1 && frame_w >= 1, "frame geometry must be positive");
    check(csv_width >= 0 && csv_height >= 0, "csv geometry must be non-negative");
    check(sten_stages >= 0, "sten.stages must be >= 0");
    check(sten_stages == 0 || sten_stage_channels >= 1, "sten.stage_channels must be >= 1");
    check(sten_d1 >= 0 && sten_d2 >= 0 && sten_d3 >= 0, "branch widths must be >= 0");
    check(feature_dim() >= 1, "at least one STEN branch must be enabled");
    check(sten_init_scale > 0, "sten.init_scale must be positive");
    check(patch_h >= 1 && patch_w >= 1, "patch dims must be >= 1");
    check(mu_tau > 1.01, "hilif.mu_tau must exceed 1.01");
    check(sigma_tau >= 0 && sigma_vth >= 0, "hilif sigmas must be >= 0");
    check(mu_vth > 0, "hilif.mu_vth must be positive");
    check(reset_mode == "hard" || reset_mode == "soft", "hilif.reset_mode must be hard or soft");
    check(fb_lambda > 0 && fb_lambda < 1, "hilif.fb_lambda must lie in (0,1)");
    check(fb_eta >= 0, "hilif.fb_eta must be >= 0");
    check(fb_target > 0 && fb_target < 1, "hilif.fb_target must lie in (0,1)");
    check(msp_alpha > 0 && msp_beta > 0, "msp decay rates must be positive");
    check(msp_heads >= 1, "msp.heads must be >= 1");
    check(feature_dim() % msp_heads == 0, "msp.heads must divide the feature dim");
    check(stsg_hidden >= 1, "stsg.hidden must be >= 1");
    check(k_min >= 1, "stsg.k_min must be >= 1");
    check(n_target >= 0, "stsg.n_target must be >= 0");
    check(fixed_k >= 0, "stsg.fixed_k must be >= 0");
    check(sc_heads >= 1 && sc_layers >= 1, "sc stack dims must be >= 1");
    check(feature_dim() % sc_heads == 0, "sc.heads must divide the feature dim");
    check(sc_ffn_dim >= 0, "sc.ffn_dim must be >= 0");
    check(sc_classes >= 2, "sc.classes must be >= 2");
    check(sc_prio_hidden >= 1, "sc.prio_hidden must be >= 1");
    check(train_task == "early_late" || train_task == "burst_regular" ||
              train_task == "dense_sparse",
          "train.task must be early_late, burst_regular or dense_sparse");
    check(lr > 0, "train.lr must be positive");
    check(epochs >= 1 && batch >= 1, "train.epochs and train.batch must be >= 1");
    check(train_samples >= 2 && test_samples >= 2, "need at least two samples per split");
    check(weight_decay >= 0, "train.weight_decay must be >= 0");
    check(surrogate == "rectangular" || surrogate == "fast_sigmoid",
          "train.surrogate must be rectangular or fast_sigmoid");
    check(surrogate_a > 0, "train.surrogate_a must be positive");
    check(rho_target > 0 && rho_target < 1, "train.rho_target must lie in (0,1)");
    check(sparsity_weight >= 0, "train.sparsity_weight must be >= 0");
}

} // namespace sparta
