#include "tadiff/config.hpp"

#include <fstream>
#include <functional>
#include <vector>

#include "tadiff/errors.hpp"

namespace tadiff {

using nlohmann::json;

void RunConfig::validate() const {
    schedule.validate();
    const ScheduleTable table = build_schedule(schedule);
    sampler.validate(table);
    loss.validate();
    train.validate();
    model.validate();
    data.validate();
    if (min_area_px < 0) throw ConfigError("eval.min_area_px: must be >= 0");
}

namespace {

struct Field {
    const char* key;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&)> set;
};

template <typename M, typename V>
Field field(const char* key, M RunConfig::*section, V M::*member) {
    return Field{
        key,
        [section, member](const RunConfig& c) { return json(c.*section.*member); },
        [section, member](RunConfig& c, const json& v) { c.*section.*member = v.get<V>(); },
    };
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        field("schedule.T", &RunConfig::schedule, &ScheduleConfig::steps),
        field("schedule.beta_start", &RunConfig::schedule, &ScheduleConfig::beta_start),
        field("schedule.beta_end", &RunConfig::schedule, &ScheduleConfig::beta_end),
        field("sampler.T_m", &RunConfig::sampler, &SamplerConfig::mask_fusion_steps),
        field("sampler.ensembles", &RunConfig::sampler, &SamplerConfig::ensembles),
        field("sampler.seed", &RunConfig::sampler, &SamplerConfig::seed),
        field("loss.lambda", &RunConfig::loss, &LossConfig::lambda),
        field("loss.k_l", &RunConfig::loss, &LossConfig::kernel_size),
        field("loss.filter_init", &RunConfig::loss, &LossConfig::filter_init),
        field("train.lr_peak", &RunConfig::train, &TrainConfig::lr_peak),
        field("train.warmup_steps", &RunConfig::train, &TrainConfig::warmup_steps),
        field("train.total_steps", &RunConfig::train, &TrainConfig::total_steps),
        field("train.batch_size", &RunConfig::train, &TrainConfig::batch_size),
        field("train.accum_steps", &RunConfig::train, &TrainConfig::accum_steps),
        field("train.seed", &RunConfig::train, &TrainConfig::seed),
        field("model.channels", &RunConfig::model, &DenoiserConfig::channels),
        field("model.levels", &RunConfig::model, &DenoiserConfig::levels),
        field("model.widths", &RunConfig::model, &DenoiserConfig::widths),
        field("model.blocks", &RunConfig::model, &DenoiserConfig::blocks_per_level),
        field("model.embed_dim", &RunConfig::model, &DenoiserConfig::embed_dim),
        field("model.groups", &RunConfig::model, &DenoiserConfig::groups),
        field("model.treatments", &RunConfig::model, &DenoiserConfig::treatments),
        field("data.cases", &RunConfig::data, &SynthConfig::cases),
        field("data.seed", &RunConfig::data, &SynthConfig::seed),
        field("data.grid", &RunConfig::data, &SynthConfig::grid),
        field("data.sessions_min", &RunConfig::data, &SynthConfig::sessions_min),
        field("data.sessions_max", &RunConfig::data, &SynthConfig::sessions_max),
        field("data.rate_crt", &RunConfig::data, &SynthConfig::rate_crt),
        field("data.rate_tmz", &RunConfig::data, &SynthConfig::rate_tmz),
        field("data.noise_level", &RunConfig::data, &SynthConfig::noise_level),
        Field{"eval.min_area_px", [](const RunConfig& c) { return json(c.min_area_px); },
              [](RunConfig& c, const json& v) { c.min_area_px = v.get<int>(); }},
    };
    return f;
}

}  // namespace

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const auto& f : fields()) {
            if (key == f.key) {
                try {
                    f.set(cfg, value);
                } catch (const json::exception& e) {
                    throw ConfigError("config key \"" + key + "\": " + e.what());
                }
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown config key \"" + key + "\"");
    }
    cfg.validate();
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& f : fields()) j[f.key] = f.get(cfg);
    return j;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write config " + path.string());
    os << config_to_json(cfg).dump(2) << "\n";
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key=value, got \"" + assignment + "\"");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // fall back to a plain string value
    }
    for (const auto& f : fields()) {
        if (key == f.key) {
            try {
                f.set(cfg, value);
            } catch (const json::exception& e) {
                throw ConfigError("override \"" + key + "\": " + e.what());
            }
            return;
        }
    }
    throw ConfigError("unknown config key \"" + key + "\"");
}

}  // namespace tadiff
