#include "tadiff/schedule.hpp"

#include <stdexcept>
#include <string>

#include "tadiff/errors.hpp"

namespace tadiff {

void ScheduleConfig::validate() const {
    if (steps < 1) throw ConfigError("schedule.T: step count must be >= 1, got " + std::to_string(steps));
    if (!(beta_start > 0.0 && beta_start < 1.0))
        throw ConfigError("schedule.beta_start: must lie in (0, 1), got " + std::to_string(beta_start));
    if (!(beta_end > 0.0 && beta_end < 1.0))
        throw ConfigError("schedule.beta_end: must lie in (0, 1), got " + std::to_string(beta_end));
    if (beta_end < beta_start)
        throw ConfigError("schedule.beta_end: must be >= schedule.beta_start");
}

int ScheduleTable::check(int t) const {
    if (t < 1 || t > steps())
        throw std::invalid_argument("schedule step index " + std::to_string(t) +
                                    " outside [1, " + std::to_string(steps()) + "]");
    return t;
}

ScheduleTable build_schedule(const ScheduleConfig& cfg) {
    cfg.validate();
    const int T = cfg.steps;

    ScheduleTable table;
    table.beta_.resize(T);
    if (T == 1) {
        table.beta_[0] = cfg.beta_start;
    } else {
        const double span = cfg.beta_end - cfg.beta_start;
        for (int i = 0; i < T; ++i)
            table.beta_[i] = cfg.beta_start + span * (static_cast<double>(i) / (T - 1));
        // Endpoints are part of the contract; pin them exactly.
        table.beta_.front() = cfg.beta_start;
        table.beta_.back() = cfg.beta_end;
    }

    table.alpha_.resize(T);
    table.alpha_bar_.resize(T);
    table.beta_tilde_.resize(T);
    double running = 1.0;
    for (int i = 0; i < T; ++i) {
        table.alpha_[i] = 1.0 - table.beta_[i];
        const double prev = running;  // alpha_bar_{t-1}, with alpha_bar_0 = 1
        running *= table.alpha_[i];
        table.alpha_bar_[i] = running;
        table.beta_tilde_[i] = (1.0 - prev) / (1.0 - running) * table.beta_[i];
    }
    return table;
}

double mask_fusion_gamma(const ScheduleTable& table, int mask_steps) {
    if (mask_steps < 1 || mask_steps > table.steps())
        throw std::invalid_argument("mask fusion steps " + std::to_string(mask_steps) +
                                    " outside [1, " + std::to_string(table.steps()) + "]");
    double sum = 0.0;
    for (int t = 1; t <= mask_steps; ++t) sum += table.alpha_bar(t);
    return sum;
}

}  // namespace tadiff
