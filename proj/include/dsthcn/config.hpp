#pragma once

#include <string>

#include "dsthcn/model.hpp"
#include "dsthcn/train.hpp"

namespace dsthcn {

// run configuration for the CLI, loadable from JSON; unknown keys are rejected
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string stream = "joint";
    bool dual_correlation = false;
    bool preprocess = true;
};

RunConfig run_config_from_json_file(const std::string& path);
RunConfig run_config_from_json_text(const std::string& text);
std::string run_config_to_json(const RunConfig& rc);

} // namespace dsthcn
