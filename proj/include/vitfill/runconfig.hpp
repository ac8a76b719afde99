#pragma once

#include <string>

#include "vitfill/trainer.hpp"

namespace vitfill {

// Everything a run needs in one JSON document: the training knobs plus file
// locations. Every field is optional and falls back to the defaults below;
// unknown keys anywhere in the document are rejected so typos cannot
// silently revert a knob to its default.
struct RunConfig {
    TrainConfig train;
    std::string manifest;
    std::string out_dir = "run";
};

// Desk-scale defaults. They differ from TrainConfig{} in one place: the mask
// range is 16..32, sized for the bundled 64x64 corpus rather than the
// published 128-max holes.
RunConfig default_run_config();

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical JSON with every default resolved, keys sorted, trailing newline.
// Echoing this next to a run's outputs makes the run auditable: feeding the
// echo back reproduces the run.
std::string resolved_run_config_json(const RunConfig& cfg);
void write_resolved_run_config(const RunConfig& cfg, const std::string& path);

} // namespace vitfill
