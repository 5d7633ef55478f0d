#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tadiff/tensor.hpp"

namespace tadiff {

// Dice similarity coefficient on binary masks; both empty counts as 1.
double dsc(const TensorT<uint8_t>& pred, const TensorT<uint8_t>& gt);

// Signed relative volume difference (|pred| - |gt|) / |gt|; empty gt is undefined.
double rvd(const TensorT<uint8_t>& pred, const TensorT<uint8_t>& gt);

// Mean local structural similarity over an 11x11 gaussian window (sigma 1.5),
// constants C1 = (0.01 DR)^2 and C2 = (0.03 DR)^2 for the given dynamic range.
// Inputs are single-channel H x W images.
double ssim(const TensorT<float>& a, const TensorT<float>& b, double dynamic_range);

// Mean squared error and 10 log10(peak^2 / mse); identical inputs yield
// mse = 0 and a +infinity PSNR sentinel.
std::pair<double, double> psnr_mse(const TensorT<float>& a, const TensorT<float>& b, double peak);

// Sweeps tau over {0.05, 0.10, ..., 0.95} and returns the threshold that
// maximizes mean DSC over the split; ties resolve to the smallest tau.
double optimize_threshold(
    const std::vector<std::pair<TensorT<float>, TensorT<uint8_t>>>& prob_gt_pairs);

TensorT<uint8_t> binarize(const TensorT<float>& prob, double threshold);

struct MetricRow {
    std::string case_id;
    int slice_id = 0;
    int target_day = 0;
    int treatment = 0;
    double dsc = 0.0, rvd = 0.0, ssim = 0.0, psnr = 0.0, mse = 0.0;
};

// Treatment-day range bins used for aggregation.
int day_range_bin(int day);
extern const std::array<const char*, 5> kDayRangeLabels;

enum class AggregateKey { patient, treatment, day_range };
AggregateKey parse_aggregate_key(const std::string& name);

struct SummaryRow {
    std::string key;
    int count = 0;
    // mean/std per metric in the order dsc, rvd, ssim, psnr, mse
    std::array<double, 5> mean{}, stdev{};
};
extern const std::array<const char*, 5> kMetricNames;

// Group-by with per-group mean and population standard deviation.
std::vector<SummaryRow> aggregate(const std::vector<MetricRow>& rows, AggregateKey key);

void write_metric_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path,
                      const std::string& header_comment = "");
void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path,
                       const std::string& key_name, const std::string& header_comment = "");

}  // namespace tadiff
