#include "tadiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "tadiff/errors.hpp"

namespace tadiff {

double dsc(const TensorT<uint8_t>& pred, const TensorT<uint8_t>& gt) {
    check_same_shape(pred, gt, "dsc");
    long long inter = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        inter += pred[i] && gt[i];
        a += pred[i] != 0;
        b += gt[i] != 0;
    }
    if (a + b == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

double rvd(const TensorT<uint8_t>& pred, const TensorT<uint8_t>& gt) {
    check_same_shape(pred, gt, "rvd");
    long long a = 0, b = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        a += pred[i] != 0;
        b += gt[i] != 0;
    }
    if (b == 0) throw UndefinedMetricError("rvd undefined for empty ground-truth mask");
    return static_cast<double>(a - b) / static_cast<double>(b);
}

namespace {

constexpr int kWin = 11;

const std::vector<double>& gaussian_window() {
    static const std::vector<double> win = [] {
        std::vector<double> w(kWin * kWin);
        const double sigma = 1.5;
        double total = 0.0;
        for (int y = 0; y < kWin; ++y)
            for (int x = 0; x < kWin; ++x) {
                const double dy = y - kWin / 2, dx = x - kWin / 2;
                const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                w[y * kWin + x] = v;
                total += v;
            }
        for (auto& v : w) v /= total;
        return w;
    }();
    return win;
}

}  // namespace

double ssim(const TensorT<float>& a, const TensorT<float>& b, double dynamic_range) {
    check_same_shape(a, b, "ssim");
    if (a.rank() != 2) throw std::invalid_argument("ssim expects single-channel H x W images");
    if (!(dynamic_range > 0)) throw std::invalid_argument("ssim dynamic range must be positive");
    const int h = a.dim(0), w = a.dim(1);
    if (h < kWin || w < kWin)
        throw std::invalid_argument("ssim needs images of at least 11 x 11");

    const auto& win = gaussian_window();
    const double c1 = 0.01 * dynamic_range * 0.01 * dynamic_range;
    const double c2 = 0.03 * dynamic_range * 0.03 * dynamic_range;

    double total = 0.0;
    long count = 0;
    for (int y = 0; y + kWin <= h; ++y) {
        for (int x = 0; x + kWin <= w; ++x) {
            double ma = 0.0, mb = 0.0;
            for (int wy = 0; wy < kWin; ++wy)
                for (int wx = 0; wx < kWin; ++wx) {
                    const double g = win[wy * kWin + wx];
                    ma += g * a[(y + wy) * static_cast<std::size_t>(w) + (x + wx)];
                    mb += g * b[(y + wy) * static_cast<std::size_t>(w) + (x + wx)];
                }
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (int wy = 0; wy < kWin; ++wy)
                for (int wx = 0; wx < kWin; ++wx) {
                    const double g = win[wy * kWin + wx];
                    const double da = a[(y + wy) * static_cast<std::size_t>(w) + (x + wx)] - ma;
                    const double db = b[(y + wy) * static_cast<std::size_t>(w) + (x + wx)] - mb;
                    va += g * da * da;
                    vb += g * db * db;
                    cov += g * da * db;
                }
            const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

std::pair<double, double> psnr_mse(const TensorT<float>& a, const TensorT<float>& b, double peak) {
    check_same_shape(a, b, "psnr_mse");
    if (!(peak > 0)) throw std::invalid_argument("psnr peak must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.numel());
    if (mse == 0.0) return {std::numeric_limits<double>::infinity(), 0.0};
    return {10.0 * std::log10(peak * peak / mse), mse};
}

TensorT<uint8_t> binarize(const TensorT<float>& prob, double threshold) {
    TensorT<uint8_t> out(prob.shape());
    for (std::size_t i = 0; i < prob.numel(); ++i)
        out[i] = prob[i] >= threshold ? 1 : 0;
    return out;
}

double optimize_threshold(
    const std::vector<std::pair<TensorT<float>, TensorT<uint8_t>>>& prob_gt_pairs) {
    if (prob_gt_pairs.empty())
        throw std::invalid_argument("optimize_threshold: empty validation split");
    long long gt_total = 0;
    for (const auto& [prob, gt] : prob_gt_pairs)
        for (std::size_t i = 0; i < gt.numel(); ++i) gt_total += gt[i];
    if (gt_total == 0)
        throw UndefinedMetricError("optimize_threshold: ground truth empty on the whole split");

    double best_tau = 0.05, best_dsc = -1.0;
    for (int i = 1; i <= 19; ++i) {
        const double tau = 0.05 * i;
        double mean = 0.0;
        for (const auto& [prob, gt] : prob_gt_pairs) mean += dsc(binarize(prob, tau), gt);
        mean /= static_cast<double>(prob_gt_pairs.size());
        if (mean > best_dsc) {
            best_dsc = mean;
            best_tau = tau;
        }
    }
    return best_tau;
}

const std::array<const char*, 5> kDayRangeLabels = {"0-50", "51-220", "221-365", "366-720",
                                                    "721+"};
const std::array<const char*, 5> kMetricNames = {"dsc", "rvd", "ssim", "psnr", "mse"};

int day_range_bin(int day) {
    if (day < 0) throw std::invalid_argument("day must be non-negative");
    if (day <= 50) return 0;
    if (day <= 220) return 1;
    if (day <= 365) return 2;
    if (day <= 720) return 3;
    return 4;
}

AggregateKey parse_aggregate_key(const std::string& name) {
    if (name == "patient") return AggregateKey::patient;
    if (name == "treatment") return AggregateKey::treatment;
    if (name == "day-range" || name == "day_range") return AggregateKey::day_range;
    throw std::invalid_argument("unknown aggregation key \"" + name + "\"");
}

std::vector<SummaryRow> aggregate(const std::vector<MetricRow>& rows, AggregateKey key) {
    if (rows.empty()) throw std::invalid_argument("aggregate: no rows");
    std::map<std::string, std::vector<const MetricRow*>> groups;
    for (const auto& r : rows) {
        std::string k;
        switch (key) {
            case AggregateKey::patient: k = r.case_id; break;
            case AggregateKey::treatment: k = std::to_string(r.treatment); break;
            case AggregateKey::day_range: k = kDayRangeLabels[day_range_bin(r.target_day)]; break;
        }
        groups[k].push_back(&r);
    }

    std::vector<SummaryRow> out;
    for (const auto& [k, members] : groups) {
        SummaryRow s;
        s.key = k;
        s.count = static_cast<int>(members.size());
        for (int m = 0; m < 5; ++m) {
            double mean = 0.0;
            for (const auto* r : members) {
                const double v[5] = {r->dsc, r->rvd, r->ssim, r->psnr, r->mse};
                mean += v[m];
            }
            mean /= s.count;
            double var = 0.0;
            for (const auto* r : members) {
                const double v[5] = {r->dsc, r->rvd, r->ssim, r->psnr, r->mse};
                var += (v[m] - mean) * (v[m] - mean);
            }
            s.mean[m] = mean;
            s.stdev[m] = std::sqrt(var / s.count);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_metric_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path,
                      const std::string& header_comment) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << "case_id,slice_id,target_day,treatment,dsc,rvd,ssim,psnr,mse\n";
    for (const auto& r : rows)
        os << r.case_id << ',' << r.slice_id << ',' << r.target_day << ',' << r.treatment << ','
           << r.dsc << ',' << r.rvd << ',' << r.ssim << ',' << r.psnr << ',' << r.mse << '\n';
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const std::filesystem::path& path,
                       const std::string& key_name, const std::string& header_comment) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    if (!header_comment.empty()) os << "# " << header_comment << "\n";
    os << key_name << ",count";
    for (const auto* m : kMetricNames) os << ',' << m << "_mean," << m << "_std";
    os << '\n';
    for (const auto& r : rows) {
        os << r.key << ',' << r.count;
        for (int m = 0; m < 5; ++m) os << ',' << r.mean[m] << ',' << r.stdev[m];
        os << '\n';
    }
}

}  // namespace tadiff
