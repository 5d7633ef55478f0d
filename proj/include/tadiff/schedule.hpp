#pragma once

#include <vector>

namespace tadiff {

struct ScheduleConfig {
    int steps = 600;           // T
    double beta_start = 1e-4;  // beta_1
    double beta_end = 0.02;    // beta_T

    void validate() const;
};

// Precomputed variance schedule and derived coefficients for t in [1, T].
// Immutable after construction; all accessors take 1-based step indices.
// alpha_bar(0) is defined as 1 so the t = 1 posterior collapses onto x0.
class ScheduleTable {
public:
    int steps() const { return static_cast<int>(beta_.size()); }

    double beta(int t) const { return beta_[check(t) - 1]; }
    double alpha(int t) const { return alpha_[check(t) - 1]; }
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_[check(t) - 1]; }
    double beta_tilde(int t) const { return beta_tilde_[check(t) - 1]; }

private:
    friend ScheduleTable build_schedule(const ScheduleConfig&);

    int check(int t) const;

    std::vector<double> beta_, alpha_, alpha_bar_, beta_tilde_;
};

// Linear beta schedule with both endpoints included, plus the driven tables
// alpha_t = 1 - beta_t, alpha_bar_t = prod alpha_i, and the posterior variance
// beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.
ScheduleTable build_schedule(const ScheduleConfig& cfg);

// Mask fusion normalizer: gamma = sum_{t=1..mask_steps} alpha_bar_t.
double mask_fusion_gamma(const ScheduleTable& table, int mask_steps);

}  // namespace tadiff
