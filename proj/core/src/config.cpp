#include "zsugr/config.hpp"

#include "zsugr/rng.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace zsugr::config {

using json = nlohmann::json;

std::string default_config_json() {
    static const char* text = R"({
  "run": {"outdir": "out", "seed": 7, "workers": 1},
  "provider": {
    "kind": "synthetic",
    "c_backbone": 256, "grid_h": 7, "grid_w": 7,
    "clip_tokens": 50, "c_clip": 768, "d_sem": 512,
    "seed": -1,
    "sigma": 1.0, "clip_sigma": 0.5, "semantic_rank": 8,
    "samples_per_class": 200,
    "manifest": ""
  },
  "split": {"n_splits": 3, "n_seen": 10, "n_unseen": 6, "holdout_fraction": 0.1},
  "gcat": {
    "enc_blocks": 3, "dec_blocks": 3, "heads": 8, "ffn_mult": 2, "d_out": 512,
    "gate_activation": "gelu", "gated_fusion": true, "variant": "full",
    "epochs": 30, "batch_size": 64, "lr": 1e-5, "weight_decay": 1e-4
  },
  "gan": {
    "lambda_gp": 10.0, "alpha_ms": 1e-4, "lr": 1e-4, "critic_steps": 5,
    "d_z": 512, "n_syn_per_class": 400, "hidden": [4096, 4096],
    "batch_size": 64, "iters": 2000, "beta1": 0.5, "beta2": 0.999,
    "divergence_guard": 1e6
  },
  "classifier": {"lr": 1e-3, "epochs": 50, "batch_size": 0, "czsl_head": "restricted"}
})";
    return text;
}

namespace {

void merge_checked(json& base, const json& overlay, const std::string& prefix) {
    for (const auto& [key, value] : overlay.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config field: " + path);
        if (base[key].is_object() && value.is_object()) {
            merge_checked(base[key], value, path);
        } else if (base[key].is_object() != value.is_object()) {
            throw ConfigError("config field " + path + " has the wrong structure");
        } else {
            base[key] = value;
        }
    }
}

json parse_scalar(const std::string& text) {
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded()) return json(text); // plain string
    return v;
}

void apply_env(json& base, const std::vector<std::pair<std::string, std::string>>& env) {
    static const std::vector<std::string> sections = {"run",  "provider",   "split",
                                                      "gcat", "gan",        "classifier"};
    for (const auto& [name, value] : env) {
        if (name.rfind("ZSUGR_", 0) != 0) continue;
        std::string rest = name.substr(6);
        std::string section, key;
        for (const auto& s : sections) {
            std::string upper = s;
            for (auto& ch : upper) ch = static_cast<char>(std::toupper(ch));
            if (rest.rfind(upper + "_", 0) == 0) {
                section = s;
                key = rest.substr(upper.size() + 1);
                break;
            }
        }
        if (section.empty())
            throw ConfigError("unrecognized environment override: " + name);
        for (auto& ch : key) ch = static_cast<char>(std::tolower(ch));
        if (!base.contains(section) || !base[section].contains(key))
            throw ConfigError("unknown config field: " + section + "." + key +
                              " (from " + name + ")");
        base[section][key] = parse_scalar(value);
    }
}

void apply_sets(json& base, const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects section.key=value: " + s);
        std::string path = s.substr(0, eq);
        std::string value = s.substr(eq + 1);
        auto dot = path.find('.');
        if (dot == std::string::npos)
            throw ConfigError("--set expects section.key=value: " + s);
        std::string section = path.substr(0, dot);
        std::string key = path.substr(dot + 1);
        if (!base.contains(section) || !base[section].contains(key))
            throw ConfigError("unknown config field: " + path);
        base[section][key] = parse_scalar(value);
    }
}

template <typename T>
T get_field(const json& j, const std::string& section, const std::string& key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("invalid value for config field " + section + "." + key);
    }
}

} // namespace

std::uint64_t RunConfig::gcat_seed(int i) const {
    return derive_seed(seed, "gcat", static_cast<std::uint64_t>(i));
}
std::uint64_t RunConfig::stage1_seed(int i) const {
    return derive_seed(seed, "stage1", static_cast<std::uint64_t>(i));
}
std::uint64_t RunConfig::gan_seed(int i) const {
    return derive_seed(seed, "gan", static_cast<std::uint64_t>(i));
}
std::uint64_t RunConfig::synth_seed(int i) const {
    return derive_seed(seed, "synth", static_cast<std::uint64_t>(i));
}
std::uint64_t RunConfig::classifier_seed(int i) const {
    return derive_seed(seed, "classifier", static_cast<std::uint64_t>(i));
}

RunConfig parse_run_config(const std::optional<std::string>& file_json,
                           const std::vector<std::pair<std::string, std::string>>& env,
                           const std::vector<std::string>& set_overrides) {
    json merged = json::parse(default_config_json());
    if (file_json) {
        json file = json::parse(*file_json, nullptr, false);
        if (file.is_discarded()) throw ConfigError("config file is not valid JSON");
        merge_checked(merged, file, "");
    }
    apply_env(merged, env);
    apply_sets(merged, set_overrides);

    RunConfig cfg;
    cfg.outdir = get_field<std::string>(merged, "run", "outdir");
    cfg.seed = get_field<std::uint64_t>(merged, "run", "seed");
    cfg.workers = get_field<int>(merged, "run", "workers");
    if (cfg.workers < 1) throw ConfigError("invalid value for config field run.workers");

    cfg.provider.kind = get_field<std::string>(merged, "provider", "kind");
    cfg.provider.c_backbone = get_field<int>(merged, "provider", "c_backbone");
    cfg.provider.grid_h = get_field<int>(merged, "provider", "grid_h");
    cfg.provider.grid_w = get_field<int>(merged, "provider", "grid_w");
    cfg.provider.clip_tokens = get_field<int>(merged, "provider", "clip_tokens");
    cfg.provider.c_clip = get_field<int>(merged, "provider", "c_clip");
    cfg.provider.d_sem = get_field<int>(merged, "provider", "d_sem");
    cfg.provider.sigma = get_field<double>(merged, "provider", "sigma");
    cfg.provider.clip_sigma = get_field<double>(merged, "provider", "clip_sigma");
    cfg.provider.semantic_rank = get_field<int>(merged, "provider", "semantic_rank");
    const auto provider_seed = get_field<std::int64_t>(merged, "provider", "seed");
    cfg.provider.seed = provider_seed < 0 ? derive_seed(cfg.seed, "provider")
                                          : static_cast<std::uint64_t>(provider_seed);
    cfg.samples_per_class = get_field<int>(merged, "provider", "samples_per_class");
    if (cfg.samples_per_class < 1)
        throw ConfigError("invalid value for config field provider.samples_per_class");
    cfg.manifest_path = get_field<std::string>(merged, "provider", "manifest");

    cfg.split.n_splits = get_field<int>(merged, "split", "n_splits");
    cfg.split.n_seen = get_field<int>(merged, "split", "n_seen");
    cfg.split.n_unseen = get_field<int>(merged, "split", "n_unseen");
    cfg.split.holdout_fraction = get_field<double>(merged, "split", "holdout_fraction");
    cfg.split.rng_seed = derive_seed(cfg.seed, "splits");
    if (cfg.split.n_splits < 1) throw ConfigError("invalid value for config field split.n_splits");

    cfg.gcat_cfg.c_backbone = cfg.provider.c_backbone;
    cfg.gcat_cfg.grid_h = cfg.provider.grid_h;
    cfg.gcat_cfg.grid_w = cfg.provider.grid_w;
    cfg.gcat_cfg.clip_tokens = cfg.provider.clip_tokens;
    cfg.gcat_cfg.c_clip = cfg.provider.c_clip;
    cfg.gcat_cfg.d_out = get_field<int>(merged, "gcat", "d_out");
    cfg.gcat_cfg.enc_blocks = get_field<int>(merged, "gcat", "enc_blocks");
    cfg.gcat_cfg.dec_blocks = get_field<int>(merged, "gcat", "dec_blocks");
    cfg.gcat_cfg.heads = get_field<int>(merged, "gcat", "heads");
    cfg.gcat_cfg.ffn_mult = get_field<int>(merged, "gcat", "ffn_mult");
    try {
        cfg.gcat_cfg.gate_activation = ag::activation_from_string(
            get_field<std::string>(merged, "gcat", "gate_activation"));
    } catch (const std::invalid_argument&) {
        throw ConfigError("invalid value for config field gcat.gate_activation");
    }
    cfg.gcat_cfg.gated_fusion = get_field<bool>(merged, "gcat", "gated_fusion");
    try {
        cfg.gcat_cfg.variant =
            gcat::variant_from_string(get_field<std::string>(merged, "gcat", "variant"));
    } catch (const std::invalid_argument&) {
        throw ConfigError("invalid value for config field gcat.variant");
    }
    cfg.stage1.epochs = get_field<int>(merged, "gcat", "epochs");
    cfg.stage1.batch_size = get_field<int>(merged, "gcat", "batch_size");
    cfg.stage1.lr = get_field<double>(merged, "gcat", "lr");
    cfg.stage1.weight_decay = get_field<double>(merged, "gcat", "weight_decay");

    cfg.gan.lambda_gp = get_field<double>(merged, "gan", "lambda_gp");
    cfg.gan.alpha_ms = get_field<double>(merged, "gan", "alpha_ms");
    cfg.gan.lr = get_field<double>(merged, "gan", "lr");
    cfg.gan.critic_steps = get_field<int>(merged, "gan", "critic_steps");
    cfg.gan.d_z = get_field<int>(merged, "gan", "d_z");
    cfg.gan.n_syn_per_class = get_field<int>(merged, "gan", "n_syn_per_class");
    cfg.gan.hidden = get_field<std::vector<int>>(merged, "gan", "hidden");
    cfg.gan.batch_size = get_field<int>(merged, "gan", "batch_size");
    cfg.gan.iters = get_field<int>(merged, "gan", "iters");
    cfg.gan.beta1 = get_field<double>(merged, "gan", "beta1");
    cfg.gan.beta2 = get_field<double>(merged, "gan", "beta2");
    cfg.gan.divergence_guard = get_field<double>(merged, "gan", "divergence_guard");

    cfg.classifier.lr = get_field<double>(merged, "classifier", "lr");
    cfg.classifier.epochs = get_field<int>(merged, "classifier", "epochs");
    cfg.classifier.batch_size = get_field<int>(merged, "classifier", "batch_size");
    cfg.czsl_head = get_field<std::string>(merged, "classifier", "czsl_head");
    if (cfg.czsl_head != "restricted" && cfg.czsl_head != "dedicated")
        throw ConfigError("invalid value for config field classifier.czsl_head");

    try {
        cfg.gcat_cfg.validate();
        cfg.gan.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    cfg.canonical_json = merged.dump(2);
    std::ostringstream hash;
    hash << std::hex << fnv1a64(cfg.canonical_json);
    cfg.hash = hash.str();
    return cfg;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& set_overrides) {
    std::optional<std::string> text;
    if (file) {
        std::ifstream is(*file);
        if (!is) throw ConfigError("config file not found: " + file->string());
        std::ostringstream buf;
        buf << is.rdbuf();
        text = buf.str();
    }
    std::vector<std::pair<std::string, std::string>> env;
    for (char** e = environ; e && *e; ++e) {
        std::string entry(*e);
        auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(0, eq);
        if (name.rfind("ZSUGR_", 0) == 0) env.emplace_back(name, entry.substr(eq + 1));
    }
    return parse_run_config(text, env, set_overrides);
}

} // namespace zsugr::config
