#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "tadiff/data.hpp"
#include "tadiff/denoiser.hpp"
#include "tadiff/losses.hpp"
#include "tadiff/sampler.hpp"
#include "tadiff/schedule.hpp"
#include "tadiff/trainer.hpp"

namespace tadiff {

// Run-wide configuration with one section per module. Defaults reproduce the
// published settings at desk scale; every field can be overridden from a JSON
// file with flat dotted keys or from the command line.
struct RunConfig {
    ScheduleConfig schedule;
    SamplerConfig sampler;
    LossConfig loss;
    TrainConfig train;
    DenoiserConfig model;
    SynthConfig data;
    int min_area_px = 100;  // evaluation eligibility threshold (1 cm^2 at 1 mm)

    void validate() const;
};

// JSON object with flat dotted keys ("schedule.T": 600). Unknown keys are
// rejected so misspellings fail loudly.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);

// Applies one "key=value" override; the value is parsed as JSON.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace tadiff
