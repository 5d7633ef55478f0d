#include "tadiff/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "tadiff/errors.hpp"
#include "tadiff/rng.hpp"
#include "tadiff/tgv.hpp"

namespace tadiff {

using nlohmann::json;

void LongitudinalCase::validate() const {
    if (sessions.size() < 2)
        throw std::invalid_argument("case " + case_id + ": needs at least 2 sessions");
    const auto& shape = sessions.front().image.shape();
    int prev_day = -1;
    for (const auto& s : sessions) {
        if (s.image.rank() != 3) throw std::invalid_argument("case " + case_id + ": image must be C x H x W");
        if (s.image.shape() != shape) throw std::invalid_argument("case " + case_id + ": session shapes differ");
        if (s.mask.rank() != 2 || s.mask.dim(0) != s.image.dim(1) || s.mask.dim(1) != s.image.dim(2))
            throw std::invalid_argument("case " + case_id + ": mask shape mismatch");
        if (s.day <= prev_day)
            throw std::invalid_argument("case " + case_id + ": session days must be strictly increasing");
        if (s.treatment != kTreatmentCrt && s.treatment != kTreatmentTmz)
            throw std::invalid_argument("case " + case_id + ": unknown treatment code " + std::to_string(s.treatment));
        for (std::size_t i = 0; i < s.mask.numel(); ++i)
            if (s.mask[i] > 1) throw std::invalid_argument("case " + case_id + ": mask must be binary");
        prev_day = s.day;
    }
}

void SynthConfig::validate() const {
    if (cases < 1) throw ConfigError("data.cases: must be >= 1");
    if (grid < 8) throw ConfigError("data.grid: must be >= 8");
    if (sessions_min < 2) throw ConfigError("data.sessions_min: must be >= 2");
    if (sessions_max < sessions_min) throw ConfigError("data.sessions_max: must be >= data.sessions_min");
    if (noise_level < 0) throw ConfigError("data.noise_level: must be >= 0");
}

double SynthConfig::rate_for(int treatment) const {
    if (treatment == kTreatmentCrt) return rate_crt;
    if (treatment == kTreatmentTmz) return rate_tmz;
    throw std::invalid_argument("unknown treatment code " + std::to_string(treatment));
}

TensorT<float> zscore_normalize(const TensorT<float>& image) {
    if (image.rank() != 3) throw std::invalid_argument("zscore_normalize: image must be C x H x W");
    const int c = image.dim(0);
    const std::size_t per = static_cast<std::size_t>(image.dim(1)) * image.dim(2);
    TensorT<float> out(image.shape());
    for (int ch = 0; ch < c; ++ch) {
        const float* src = image.data() + ch * per;
        float* dst = out.data() + ch * per;
        double mean = 0.0;
        for (std::size_t i = 0; i < per; ++i) mean += src[i];
        mean /= static_cast<double>(per);
        double var = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            const double d = src[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(per);
        if (var <= 1e-24) {
            std::fill(dst, dst + per, 0.0f);
            continue;
        }
        const double inv = 1.0 / std::sqrt(var);
        for (std::size_t i = 0; i < per; ++i)
            dst[i] = static_cast<float>((src[i] - mean) * inv);
    }
    return out;
}

std::vector<int> eligible_slices(const LongitudinalCase& c, int min_area_px) {
    if (min_area_px < 0) throw std::invalid_argument("min_area_px must be >= 0");
    std::vector<int> out;
    for (int s = 0; s < c.length(); ++s) {
        long area = 0;
        for (std::size_t i = 0; i < c.sessions[s].mask.numel(); ++i)
            area += c.sessions[s].mask[i];
        if (area >= min_area_px) out.push_back(s);
    }
    return out;
}

std::vector<double> lesion_radius_trajectory(const SynthConfig& cfg, double r0,
                                             const std::vector<int>& days,
                                             const std::vector<int>& treatments) {
    if (days.size() != treatments.size())
        throw std::invalid_argument("lesion_radius_trajectory: days/treatments size mismatch");
    std::vector<double> r(days.size());
    double cur = r0;
    for (std::size_t i = 0; i < days.size(); ++i) {
        if (i > 0) cur += cfg.rate_for(treatments[i]) * (days[i] - days[i - 1]);
        cur = std::max(cur, 0.0);
        r[i] = cur;
    }
    return r;
}

namespace {

// Separable gaussian blur, zero-padded borders.
void blur_field(std::vector<float>& field, int h, int w, double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<float> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = static_cast<float>(std::exp(-0.5 * (i * i) / (sigma * sigma)));
        ksum += kernel[i + radius];
    }
    for (auto& k : kernel) k = static_cast<float>(k / ksum);

    std::vector<float> tmp(field.size(), 0.0f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = x + i;
                if (xx >= 0 && xx < w) acc += kernel[i + radius] * field[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = y + i;
                if (yy >= 0 && yy < h) acc += kernel[i + radius] * tmp[yy * w + x];
            }
            field[y * w + x] = acc;
        }
}

float clampf(float v, float lo, float hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

LongitudinalCase render_synthetic_case(const SynthConfig& cfg, uint64_t case_seed) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 0xCA5EULL, case_seed));
    const int g = cfg.grid;
    const std::size_t px = static_cast<std::size_t>(g) * g;

    const int L = rng.uniform_int(cfg.sessions_min, cfg.sessions_max);
    std::vector<int> days(L), treatments(L);
    days[0] = 0;
    for (int l = 1; l < L; ++l) days[l] = days[l - 1] + rng.uniform_int(20, 70);
    // Protocol mimic: chemoradiation first, temozolomide afterwards. The switch
    // day varies per case so that treatment and day decorrelate across cases.
    const int switch_day = rng.uniform_int(40, 300);
    for (int l = 0; l < L; ++l)
        treatments[l] = days[l] <= switch_day ? kTreatmentCrt : kTreatmentTmz;

    const double r0 = rng.uniform(7.0, 12.0);
    const double cx = g / 2.0 + rng.uniform(-6.0, 6.0);
    const double cy = g / 2.0 + rng.uniform(-6.0, 6.0);
    const double aspect = rng.uniform(0.85, 1.18);
    const double angle = rng.uniform(0.0, 3.14159265358979323846);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const std::vector<double> radius = lesion_radius_trajectory(cfg, r0, days, treatments);

    // Shared anatomy: one smooth background field per channel for all sessions.
    const double base[3] = {1.0, 1.1, 0.9};
    std::vector<std::vector<float>> background(3, std::vector<float>(px));
    for (int c = 0; c < 3; ++c) {
        for (auto& v : background[c]) v = static_cast<float>(rng.normal());
        blur_field(background[c], g, g, 6.0);
        // Blur shrinks the variance; rescale to a fixed field amplitude.
        double var = 0.0, mean = 0.0;
        for (float v : background[c]) mean += v;
        mean /= static_cast<double>(px);
        for (float v : background[c]) var += (v - mean) * (v - mean);
        var /= static_cast<double>(px);
        const double scale = 0.18 / std::sqrt(std::max(var, 1e-12));
        for (auto& v : background[c]) v = static_cast<float>(base[c] + (v - mean) * scale);
    }

    LongitudinalCase out;
    out.sessions.resize(L);
    for (int l = 0; l < L; ++l) {
        Session& s = out.sessions[l];
        s.day = days[l];
        s.treatment = treatments[l];
        s.image = TensorT<float>({3, g, g});
        s.mask = TensorT<uint8_t>({g, g});

        const double r = radius[l];
        const double ea = std::max(r * aspect, 1e-9);
        const double eb = std::max(r / aspect, 1e-9);
        for (int y = 0; y < g; ++y) {
            for (int x = 0; x < g; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double u = dx * ca + dy * sa;
                const double v = -dx * sa + dy * ca;
                // Normalized elliptic distance: 1.0 on the lesion boundary.
                const double rho = (r < 0.5) ? 1e9 : std::sqrt((u / ea) * (u / ea) + (v / eb) * (v / eb));

                const float core = clampf(static_cast<float>((0.75 - rho) / 0.30), 0.0f, 1.0f);
                const float lesion = clampf(static_cast<float>((1.15 - rho) / 0.15), 0.0f, 1.0f);
                const float halo = clampf(static_cast<float>((1.45 - rho) / 0.25), 0.0f, 1.0f);

                const std::size_t i = static_cast<std::size_t>(y) * g + x;
                float ch0 = background[0][i] - 0.9f * core;          // T1-like hypointense core
                float ch1 = background[1][i] + 1.0f * lesion;        // T1c-like hyperintense lesion/rim
                float ch2 = background[2][i] + 0.9f * halo;          // FLAIR-like hyperintense halo
                ch0 += static_cast<float>(cfg.noise_level * rng.normal());
                ch1 += static_cast<float>(cfg.noise_level * rng.normal());
                ch2 += static_cast<float>(cfg.noise_level * rng.normal());
                s.image.at(0, y, x) = ch0;
                s.image.at(1, y, x) = ch1;
                s.image.at(2, y, x) = ch2;
                s.mask[i] = rho <= 1.0 ? 1 : 0;
            }
        }
    }
    out.validate();
    return out;
}

LongitudinalCase generate_synthetic_case(const SynthConfig& cfg, uint64_t case_seed) {
    LongitudinalCase c = render_synthetic_case(cfg, case_seed);
    for (auto& s : c.sessions) s.image = zscore_normalize(s.image);
    return c;
}

namespace {

std::string session_file(int index, const char* kind) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "s%02d_%s.tgv", index, kind);
    return buf;
}

}  // namespace

void save_case(const LongitudinalCase& c, const std::filesystem::path& dir) {
    c.validate();
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["case_id"] = c.case_id;
    manifest["sessions"] = json::array();
    for (int i = 0; i < c.length(); ++i) {
        const auto& s = c.sessions[i];
        const std::string image_file = session_file(i, "image");
        const std::string mask_file = session_file(i, "mask");
        save_tgv(dir / image_file, s.image);
        save_tgv(dir / mask_file, s.mask);
        manifest["sessions"].push_back(
            {{"day", s.day}, {"treatment", s.treatment}, {"image", image_file}, {"mask", mask_file}});
    }
    const std::filesystem::path tmp = dir / "manifest.json.tmp";
    {
        std::ofstream os(tmp, std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + tmp.string());
        os << manifest.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, dir / "manifest.json");
}

LongitudinalCase load_case(const std::filesystem::path& dir, bool normalize) {
    const std::filesystem::path mpath = dir / "manifest.json";
    std::ifstream is(mpath);
    if (!is) throw std::runtime_error("cannot open " + mpath.string());
    json manifest;
    try {
        is >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed manifest " + mpath.string() + ": " + e.what());
    }
    LongitudinalCase c;
    c.case_id = manifest.at("case_id").get<std::string>();
    for (const auto& js : manifest.at("sessions")) {
        Session s;
        s.day = js.at("day").get<int>();
        s.treatment = js.at("treatment").get<int>();
        s.image = load_tgv_f32(dir / js.at("image").get<std::string>());
        s.mask = load_tgv_u8(dir / js.at("mask").get<std::string>());
        if (normalize) s.image = zscore_normalize(s.image);
        c.sessions.push_back(std::move(s));
    }
    c.validate();
    return c;
}

std::vector<LongitudinalCase> load_cases(const std::filesystem::path& root, bool normalize) {
    std::vector<std::filesystem::path> dirs;
    if (!std::filesystem::is_directory(root))
        throw std::runtime_error("data directory not found: " + root.string());
    for (const auto& e : std::filesystem::directory_iterator(root))
        if (e.is_directory() && e.path().filename().string().rfind("case_", 0) == 0)
            dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<LongitudinalCase> cases;
    for (const auto& d : dirs) cases.push_back(load_case(d, normalize));
    return cases;
}

}  // namespace tadiff
