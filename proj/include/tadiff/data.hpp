#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tadiff/tensor.hpp"

namespace tadiff {

constexpr int kTreatmentCrt = 1;
constexpr int kTreatmentTmz = 2;

struct Session {
    TensorT<float> image;    // C x H x W
    TensorT<uint8_t> mask;   // H x W, values {0, 1}
    int treatment = kTreatmentCrt;
    int day = 0;
};

struct LongitudinalCase {
    std::string case_id;
    std::vector<Session> sessions;  // day strictly increasing

    int length() const { return static_cast<int>(sessions.size()); }
    int channels() const { return sessions.at(0).image.dim(0); }
    int height() const { return sessions.at(0).image.dim(1); }
    int width() const { return sessions.at(0).image.dim(2); }
    void validate() const;
};

struct SynthConfig {
    int cases = 8;
    uint64_t seed = 0;
    int grid = 64;             // H = W
    int sessions_min = 4;      // L range
    int sessions_max = 7;
    double rate_crt = -0.06;   // lesion radius change, px/day
    double rate_tmz = 0.08;
    double noise_level = 0.04;

    void validate() const;
    double rate_for(int treatment) const;  // throws on unknown code
};

// Per-channel standardization: subtract mean, divide by standard deviation.
// Constant channels map to all-zero.
TensorT<float> zscore_normalize(const TensorT<float>& image);

// Session indices usable as evaluation targets: mask area >= min_area_px.
// The synthetic data is natively 2D, so each session contributes one slice.
std::vector<int> eligible_slices(const LongitudinalCase& c, int min_area_px);

// Linear radius evolution: r_{l} = max(0, r_{l-1} + rate(treatment_l) * (d_l - d_{l-1})).
std::vector<double> lesion_radius_trajectory(const SynthConfig& cfg, double r0,
                                             const std::vector<int>& days,
                                             const std::vector<int>& treatments);

// Deterministic synthetic longitudinal case: smooth shared background, an
// elliptic lesion whose radius follows the treatment-dependent rate, and three
// channels rendering core / rim / halo appearance. Raw intensities.
LongitudinalCase render_synthetic_case(const SynthConfig& cfg, uint64_t case_seed);

// Same case with per-channel z-score normalization applied to every session.
LongitudinalCase generate_synthetic_case(const SynthConfig& cfg, uint64_t case_seed);

// Case directory: <dir>/manifest.json plus one image/mask TGV pair per session.
void save_case(const LongitudinalCase& c, const std::filesystem::path& dir);
LongitudinalCase load_case(const std::filesystem::path& dir, bool normalize = true);

// Loads every case_* directory under root, sorted by name.
std::vector<LongitudinalCase> load_cases(const std::filesystem::path& root,
                                         bool normalize = true);

}  // namespace tadiff
