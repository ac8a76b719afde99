#include "vitfill/runconfig.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vitfill/common.hpp"
#include "vitfill/patching.hpp"

namespace vitfill {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
    if (!j.is_object()) {
        throw ConfigError(std::string(where) + ": expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.contains(key)) {
            throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.train.mask = MaskSpec{16, 32};
    return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }

    RunConfig cfg = default_run_config();
    try {
        check_keys(j, {"seed", "lr", "batch", "max_epochs", "weight_decay",
                       "early_stop_patience", "lr_halving_patience", "lambda_known",
                       "composition", "vit_mode", "pretrain_epochs", "joint_finetune", "vit",
                       "mask", "paths"},
                   "run config");

        if (j.contains("seed")) {
            const json& s = j.at("seed");
            if (s.is_number_integer() && s.get<long long>() < 0) {
                throw ConfigError("run config: seed must be non-negative");
            }
            cfg.train.seed = s.get<std::uint64_t>();
        }
        read_field(j, "lr", cfg.train.lr);
        read_field(j, "batch", cfg.train.batch);
        read_field(j, "max_epochs", cfg.train.max_epochs);
        read_field(j, "weight_decay", cfg.train.weight_decay);
        read_field(j, "early_stop_patience", cfg.train.early_stop_patience);
        read_field(j, "lr_halving_patience", cfg.train.lr_halving_patience);
        read_field(j, "lambda_known", cfg.train.lambda_known);
        read_field(j, "pretrain_epochs", cfg.train.pretrain_epochs);
        read_field(j, "joint_finetune", cfg.train.joint_finetune);
        if (j.contains("composition")) {
            cfg.train.composition = parse_composition(j.at("composition").get<std::string>());
        }
        if (j.contains("vit_mode")) {
            cfg.train.vit_mode = parse_vit_mode(j.at("vit_mode").get<std::string>());
        }

        if (j.contains("vit")) {
            const json& v = j.at("vit");
            check_keys(v, {"scheme", "d_model", "heads", "depth", "mlp_hidden", "use_positional"},
                       "run config vit");
            if (v.contains("scheme")) {
                cfg.train.vit.scheme = parse_scheme(v.at("scheme").get<std::string>());
            }
            read_field(v, "d_model", cfg.train.vit.d_model);
            read_field(v, "heads", cfg.train.vit.heads);
            read_field(v, "depth", cfg.train.vit.depth);
            read_field(v, "mlp_hidden", cfg.train.vit.mlp_hidden);
            read_field(v, "use_positional", cfg.train.vit.use_positional);
        }
        if (j.contains("mask")) {
            const json& m = j.at("mask");
            check_keys(m, {"min_side", "max_side"}, "run config mask");
            read_field(m, "min_side", cfg.train.mask.min_side);
            read_field(m, "max_side", cfg.train.mask.max_side);
        }
        if (j.contains("paths")) {
            const json& p = j.at("paths");
            check_keys(p, {"manifest", "out_dir"}, "run config paths");
            read_field(p, "manifest", cfg.manifest);
            read_field(p, "out_dir", cfg.out_dir);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }

    validate_train_config(cfg.train);
    if (cfg.train.mask.min_side < 1 || cfg.train.mask.max_side < cfg.train.mask.min_side) {
        throw ConfigError("run config: mask needs 1 <= min_side <= max_side");
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw IoError("run config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string resolved_run_config_json(const RunConfig& cfg) {
    const json j = {
        {"seed", cfg.train.seed},
        {"lr", cfg.train.lr},
        {"batch", cfg.train.batch},
        {"max_epochs", cfg.train.max_epochs},
        {"weight_decay", cfg.train.weight_decay},
        {"early_stop_patience", cfg.train.early_stop_patience},
        {"lr_halving_patience", cfg.train.lr_halving_patience},
        {"lambda_known", cfg.train.lambda_known},
        {"composition", composition_to_string(cfg.train.composition)},
        {"vit_mode", vit_mode_to_string(cfg.train.vit_mode)},
        {"pretrain_epochs", cfg.train.pretrain_epochs},
        {"joint_finetune", cfg.train.joint_finetune},
        {"vit",
         {{"scheme", scheme_to_string(cfg.train.vit.scheme)},
          {"d_model", cfg.train.vit.d_model},
          {"heads", cfg.train.vit.heads},
          {"depth", cfg.train.vit.depth},
          {"mlp_hidden", cfg.train.vit.mlp_hidden},
          {"use_positional", cfg.train.vit.use_positional}}},
        {"mask", {{"min_side", cfg.train.mask.min_side}, {"max_side", cfg.train.mask.max_side}}},
        {"paths", {{"manifest", cfg.manifest}, {"out_dir", cfg.out_dir}}},
    };
    return j.dump(2) + "\n";
}

void write_resolved_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out.good()) throw IoError("run config: cannot write " + path);
    out << resolved_run_config_json(cfg);
    if (!out.good()) throw IoError("run config: write failed for " + path);
}

} // namespace vitfill
