#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "tadiff/data.hpp"
#include "tadiff/denoiser.hpp"
#include "tadiff/losses.hpp"
#include "tadiff/rng.hpp"
#include "tadiff/schedule.hpp"
#include "tadiff/tensor.hpp"

namespace tadiff {

struct TrainConfig {
    double lr_peak = 2.5e-4;
    int warmup_steps = 1000;
    int total_steps = 5000;
    int batch_size = 8;    // episodes per optimizer step
    int accum_steps = 2;   // micro-batches per optimizer step
    uint64_t seed = 0;

    void validate() const;
};

// One training/inference instance: three source sessions plus a future target.
struct Episode {
    std::array<TensorT<float>, 3> source_images;  // each C x H x W
    TensorT<float> source_masks;                  // 3 x H x W
    TensorT<float> target_image;                  // C x H x W
    TensorT<float> target_mask;                   // H x W
    PairSet pairs;                                // s1, s2, s3, f
    std::array<int, 4> session_indices;           // 1-based
};

// Sorted sample with replacement from [1, L-1] plus a target from (s3, L];
// repetition implements the source-duplication rule for short histories.
Episode sample_episode(const LongitudinalCase& c, Rng& rng);

// Linear warmup to lr_peak followed by cosine decay to zero.
double lr_at(int step, const TrainConfig& cfg);

struct AdamConfig {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct AdamState {
    std::vector<float> m, v;
    long long t = 0;  // update count
};

void adam_update(std::vector<float>& params, const std::vector<float>& grad, AdamState& state,
                 const AdamConfig& cfg, double lr);

struct StepStats {
    long long step = 0;  // 1-based update index
    double lr = 0.0;
    double total = 0.0;
    double weighted_mse = 0.0;
    double seg = 0.0;
    double wall_ms = 0.0;
};

struct Checkpoint {
    DenoiserConfig model;
    std::vector<float> params;
    AdamState adam;
    long long step = 0;
    uint64_t train_seed = 0;
};

// Versioned container: magic line, JSON descriptor (architecture, parameter
// layout, step, seed), then params/m/v as embedded TGV arrays.
extern const char kCheckpointMagic[];
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

class Trainer {
public:
    Trainer(DenoiserConfig model_cfg, ScheduleConfig sched_cfg, LossConfig loss_cfg,
            TrainConfig train_cfg, std::vector<LongitudinalCase> cases);

    // Resume from a checkpoint; configs must describe the same architecture.
    void restore(const Checkpoint& ckpt);
    Checkpoint checkpoint() const;

    // One optimizer step: batch_size episodes in accum_steps micro-batches,
    // summed gradients scaled by 1/batch_size, one Adam update.
    StepStats step();

    // Runs to total_steps; when log is non-null, appends one CSV row per step.
    void run(std::ostream* log);
    static void write_log_header(std::ostream& os);

    long long current_step() const { return step_; }
    const std::vector<float>& params() const { return params_; }
    const DenoiserT<float>& denoiser() const { return net_; }
    const ScheduleTable& table() const { return table_; }

private:
    DenoiserT<float> net_;
    ScheduleTable table_;
    LossConfig loss_cfg_;
    TrainConfig train_cfg_;
    std::vector<LongitudinalCase> cases_;
    std::vector<float> params_;
    AdamState adam_;
    AdamConfig adam_cfg_;
    long long step_ = 0;
};

}  // namespace tadiff
