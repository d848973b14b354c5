#include "dsthcn/config.hpp"

#include <fstream>

#include <json.hpp>

namespace dsthcn {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& where) {
    if (!j.is_object()) throw format_error("config: " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw format_error("config: unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T> void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const std::exception& e) {
            throw format_error("config: bad value for '" + std::string(key) + "': " + e.what());
        }
    }
}

} // namespace

RunConfig run_config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw format_error(std::string("config: ") + e.what());
    }
    check_keys(j, {"model", "train", "stream", "dual_correlation", "preprocess"}, "top level");
    RunConfig rc;
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m,
                   {"c_in", "frames", "num_classes", "k_temporal", "k_spatial", "kmeans_clusters",
                    "residual", "channels", "strides", "init_seed", "threads"},
                   "model");
        get_if(m, "c_in", rc.model.c_in);
        get_if(m, "frames", rc.model.frames);
        get_if(m, "num_classes", rc.model.num_classes);
        get_if(m, "k_temporal", rc.model.k_temporal);
        get_if(m, "k_spatial", rc.model.k_spatial);
        get_if(m, "kmeans_clusters", rc.model.kmeans_clusters);
        get_if(m, "residual", rc.model.residual);
        get_if(m, "channels", rc.model.channels);
        get_if(m, "strides", rc.model.strides);
        get_if(m, "init_seed", rc.model.init_seed);
        get_if(m, "threads", rc.model.threads);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        check_keys(t,
                   {"epochs", "batch_size", "base_lr", "eta_min", "warmup_epochs", "momentum",
                    "weight_decay", "shuffle_seed"},
                   "train");
        get_if(t, "epochs", rc.train.epochs);
        get_if(t, "batch_size", rc.train.batch_size);
        get_if(t, "base_lr", rc.train.base_lr);
        get_if(t, "eta_min", rc.train.eta_min);
        get_if(t, "warmup_epochs", rc.train.warmup_epochs);
        get_if(t, "momentum", rc.train.momentum);
        get_if(t, "weight_decay", rc.train.weight_decay);
        get_if(t, "shuffle_seed", rc.train.shuffle_seed);
    }
    get_if(j, "stream", rc.stream);
    get_if(j, "dual_correlation", rc.dual_correlation);
    get_if(j, "preprocess", rc.preprocess);
    stream_from_name(rc.stream); // validate
    rc.model.validate();
    rc.train.validate();
    return rc;
}

RunConfig run_config_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw format_error("cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return run_config_from_json_text(text);
}

std::string run_config_to_json(const RunConfig& rc) {
    json j;
    j["model"] = {{"c_in", rc.model.c_in},
                  {"frames", rc.model.frames},
                  {"num_classes", rc.model.num_classes},
                  {"k_temporal", rc.model.k_temporal},
                  {"k_spatial", rc.model.k_spatial},
                  {"kmeans_clusters", rc.model.kmeans_clusters},
                  {"residual", rc.model.residual},
                  {"channels", rc.model.channels},
                  {"strides", rc.model.strides},
                  {"init_seed", rc.model.init_seed},
                  {"threads", rc.model.threads}};
    j["train"] = {{"epochs", rc.train.epochs},
                  {"batch_size", rc.train.batch_size},
                  {"base_lr", rc.train.base_lr},
                  {"eta_min", rc.train.eta_min},
                  {"warmup_epochs", rc.train.warmup_epochs},
                  {"momentum", rc.train.momentum},
                  {"weight_decay", rc.train.weight_decay},
                  {"shuffle_seed", rc.train.shuffle_seed}};
    j["stream"] = rc.stream;
    j["dual_correlation"] = rc.dual_correlation;
    j["preprocess"] = rc.preprocess;
    return j.dump(2) + "\n";
}

} // namespace dsthcn
