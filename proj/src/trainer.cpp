#include "tadiff/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tadiff/diffusion.hpp"
#include "tadiff/errors.hpp"
#include "tadiff/tgv.hpp"

namespace tadiff {

using nlohmann::json;

void TrainConfig::validate() const {
    if (lr_peak < 0) throw ConfigError("train.lr_peak: must be >= 0");
    if (warmup_steps < 0) throw ConfigError("train.warmup_steps: must be >= 0");
    if (total_steps < 1) throw ConfigError("train.total_steps: must be >= 1");
    if (warmup_steps >= total_steps) throw ConfigError("train.warmup_steps: must be < train.total_steps");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (accum_steps < 1) throw ConfigError("train.accum_steps: must be >= 1");
    if (batch_size % accum_steps != 0)
        throw ConfigError("train.batch_size: must be divisible by train.accum_steps");
}

Episode sample_episode(const LongitudinalCase& c, Rng& rng) {
    const int L = c.length();
    if (L < 2) throw std::invalid_argument("case " + c.case_id + ": needs at least 2 sessions");

    std::array<int, 3> s{};
    for (auto& v : s) v = rng.uniform_int(1, L - 1);
    std::sort(s.begin(), s.end());
    const int f = rng.uniform_int(s[2] + 1, L);

    Episode ep;
    ep.session_indices = {s[0], s[1], s[2], f};
    const int h = c.height(), w = c.width();
    ep.source_masks = TensorT<float>({3, h, w});
    for (int i = 0; i < 3; ++i) {
        const Session& sess = c.sessions[s[i] - 1];
        ep.source_images[i] = sess.image;
        ep.pairs[i] = {sess.treatment, sess.day};
        for (std::size_t px = 0; px < sess.mask.numel(); ++px)
            ep.source_masks[static_cast<std::size_t>(i) * h * w + px] = sess.mask[px];
    }
    const Session& target = c.sessions[f - 1];
    ep.target_image = target.image;
    ep.pairs[3] = {target.treatment, target.day};
    ep.target_mask = TensorT<float>({h, w});
    for (std::size_t px = 0; px < target.mask.numel(); ++px) ep.target_mask[px] = target.mask[px];
    return ep;
}

double lr_at(int step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.total_steps)
        throw std::invalid_argument("lr_at: step outside [0, total_steps]");
    if (step <= cfg.warmup_steps)
        return cfg.lr_peak * static_cast<double>(step) / std::max(cfg.warmup_steps, 1);
    const double progress = static_cast<double>(step - cfg.warmup_steps) /
                            static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    return cfg.lr_peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void adam_update(std::vector<float>& params, const std::vector<float>& grad, AdamState& state,
                 const AdamConfig& cfg, double lr) {
    if (state.m.size() != params.size()) state.m.assign(params.size(), 0.0f);
    if (state.v.size() != params.size()) state.v.assign(params.size(), 0.0f);
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = static_cast<float>(m);
        state.v[i] = static_cast<float>(v);
        params[i] -= static_cast<float>(lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
    }
}

const char kCheckpointMagic[] = "TADIFF-CKPT-1";

namespace {

json model_to_json(const DenoiserConfig& m) {
    return json{{"channels", m.channels},       {"levels", m.levels},
                {"widths", m.widths},           {"blocks_per_level", m.blocks_per_level},
                {"embed_dim", m.embed_dim},     {"groups", m.groups},
                {"treatments", m.treatments},   {"mask_sessions", m.mask_sessions}};
}

DenoiserConfig model_from_json(const json& j) {
    DenoiserConfig m;
    m.channels = j.at("channels").get<int>();
    m.levels = j.at("levels").get<int>();
    m.widths = j.at("widths").get<std::vector<int>>();
    m.blocks_per_level = j.at("blocks_per_level").get<int>();
    m.embed_dim = j.at("embed_dim").get<int>();
    m.groups = j.at("groups").get<int>();
    m.treatments = j.at("treatments").get<int>();
    m.mask_sessions = j.at("mask_sessions").get<int>();
    return m;
}

TensorT<float> vec_to_tensor(const std::vector<float>& v) {
    TensorT<float> t({static_cast<int>(v.size())});
    std::copy(v.begin(), v.end(), t.data());
    return t;
}

std::vector<float> read_vec(std::istream& is, std::size_t offset, std::size_t expect) {
    TgvArray arr = read_tgv(is, offset);
    if (arr.dtype != TgvDtype::f32 || arr.f32.size() != expect)
        throw FormatError("checkpoint parameter block has unexpected size", offset);
    return std::move(arr.f32);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    ParamLayout layout(ckpt.model);
    if (layout.total() != ckpt.params.size())
        throw std::invalid_argument("checkpoint params do not match the model layout");

    json header;
    header["model"] = model_to_json(ckpt.model);
    header["step"] = ckpt.step;
    header["train_seed"] = ckpt.train_seed;
    header["adam_t"] = ckpt.adam.t;
    header["param_count"] = layout.total();
    json desc = json::array();
    for (const auto& e : layout.entries())
        desc.push_back(json{{"name", e.name}, {"shape", e.shape}});
    header["layout"] = desc;
    const std::string header_str = header.dump();

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os << kCheckpointMagic << "\n";
        const uint32_t hlen = static_cast<uint32_t>(header_str.size());
        os.write(reinterpret_cast<const char*>(&hlen), 4);
        os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        write_tgv(os, vec_to_tensor(ckpt.params));
        write_tgv(os, vec_to_tensor(ckpt.adam.m.empty()
                                        ? std::vector<float>(ckpt.params.size(), 0.0f)
                                        : ckpt.adam.m));
        write_tgv(os, vec_to_tensor(ckpt.adam.v.empty()
                                        ? std::vector<float>(ckpt.params.size(), 0.0f)
                                        : ckpt.adam.v));
        if (!os) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());

    std::string magic;
    std::getline(is, magic);
    if (magic != kCheckpointMagic)
        throw FormatError("checkpoint magic mismatch, expected \"" + std::string(kCheckpointMagic) +
                              "\", got \"" + magic + "\"",
                          0);
    std::size_t offset = magic.size() + 1;

    uint32_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), 4);
    if (is.gcount() != 4) throw FormatError("checkpoint truncated header length", offset);
    offset += 4;
    std::string header_str(hlen, '\0');
    is.read(header_str.data(), hlen);
    if (static_cast<uint32_t>(is.gcount()) != hlen)
        throw FormatError("checkpoint truncated header", offset);
    offset += hlen;

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what(), offset);
    }

    Checkpoint ckpt;
    ckpt.model = model_from_json(header.at("model"));
    ckpt.step = header.at("step").get<long long>();
    ckpt.train_seed = header.at("train_seed").get<uint64_t>();
    ckpt.adam.t = header.at("adam_t").get<long long>();

    ParamLayout layout(ckpt.model);
    const std::size_t expect = header.at("param_count").get<std::size_t>();
    if (expect != layout.total())
        throw FormatError("checkpoint layout total does not match its architecture", offset);
    ckpt.params = read_vec(is, offset, expect);
    ckpt.adam.m = read_vec(is, offset, expect);
    ckpt.adam.v = read_vec(is, offset, expect);
    return ckpt;
}

Trainer::Trainer(DenoiserConfig model_cfg, ScheduleConfig sched_cfg, LossConfig loss_cfg,
                 TrainConfig train_cfg, std::vector<LongitudinalCase> cases)
    : net_(std::move(model_cfg)),
      table_(build_schedule(sched_cfg)),
      loss_cfg_(loss_cfg),
      train_cfg_(train_cfg),
      cases_(std::move(cases)) {
    loss_cfg_.validate();
    train_cfg_.validate();
    if (cases_.empty()) throw std::invalid_argument("trainer: no eligible cases");
    for (const auto& c : cases_) {
        c.validate();
        if (c.channels() != net_.config().channels)
            throw std::invalid_argument("case " + c.case_id + ": channel count mismatch");
        const int f = net_.config().pool_factor();
        if (c.height() % f != 0 || c.width() % f != 0)
            throw std::invalid_argument("case " + c.case_id + ": grid not divisible by pooling factor");
    }
    params_ = net_.init_params(train_cfg_.seed);
    adam_.m.assign(params_.size(), 0.0f);
    adam_.v.assign(params_.size(), 0.0f);
}

void Trainer::restore(const Checkpoint& ckpt) {
    if (ckpt.params.size() != params_.size())
        throw std::invalid_argument("checkpoint does not match the configured architecture");
    params_ = ckpt.params;
    adam_ = ckpt.adam;
    step_ = ckpt.step;
    train_cfg_.seed = ckpt.train_seed;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ckpt;
    ckpt.model = net_.config();
    ckpt.params = params_;
    ckpt.adam = adam_;
    ckpt.step = step_;
    ckpt.train_seed = train_cfg_.seed;
    return ckpt;
}

StepStats Trainer::step() {
    const auto t0 = std::chrono::steady_clock::now();
    const int micro = train_cfg_.batch_size / train_cfg_.accum_steps;
    const int c = net_.config().channels;

    std::vector<float> grad_total(params_.size(), 0.0f);
    std::vector<std::vector<float>> grad_slot(micro);
    std::vector<JointLossParts> parts_slot(micro);
    std::vector<std::string> fail_slot(micro);

    JointLossParts parts_sum;
    for (int a = 0; a < train_cfg_.accum_steps; ++a) {
#pragma omp parallel for schedule(dynamic, 1)
        for (int e = 0; e < micro; ++e) {
            try {
                const int episode_index = a * micro + e;
                Rng rng(derive_seed(train_cfg_.seed, 0xE915ULL, static_cast<uint64_t>(step_),
                                    static_cast<uint64_t>(episode_index)));
                const LongitudinalCase& cs =
                    cases_[rng.uniform_int(0, static_cast<int>(cases_.size()) - 1)];
                Episode ep = sample_episode(cs, rng);
                const int t = rng.uniform_int(1, table_.steps());
                TensorT<float> eps = normal_tensor<float>(ep.target_image.shape(), rng);
                TensorT<float> x_t = forward_sample(ep.target_image, t, eps, table_);

                const int h = x_t.dim(1), w = x_t.dim(2);
                TensorT<float> x_in({4 * c, h, w});
                const std::size_t plane = static_cast<std::size_t>(c) * h * w;
                for (int s = 0; s < 3; ++s)
                    std::copy(ep.source_images[s].data(), ep.source_images[s].data() + plane,
                              x_in.data() + s * plane);
                std::copy(x_t.data(), x_t.data() + plane, x_in.data() + 3 * plane);

                DenoiserCacheT<float> cache;
                DenoiserOutputT<float> out = net_.apply(x_in, ep.pairs, t, params_, &cache);

                TensorT<float> probs(out.mask_logits.shape());
                for (std::size_t i = 0; i < probs.numel(); ++i)
                    probs[i] = logistic(out.mask_logits[i]);

                TensorT<float> gt_masks({4, h, w});
                std::copy(ep.source_masks.data(), ep.source_masks.data() + 3 * h * w,
                          gt_masks.data());
                std::copy(ep.target_mask.data(), ep.target_mask.data() + h * w,
                          gt_masks.data() + 3 * static_cast<std::size_t>(h) * w);

                parts_slot[e] = joint_loss(eps, out.eps_hat, probs, gt_masks, t, table_, loss_cfg_);
                if (!std::isfinite(parts_slot[e].total)) {
                    std::ostringstream msg;
                    msg << "non-finite loss at step " << step_ << " (t=" << t
                        << ", weighted_mse=" << parts_slot[e].weighted_mse
                        << ", seg=" << parts_slot[e].seg << ")";
                    fail_slot[e] = msg.str();
                } else {
                    TensorT<float> d_eps_hat, d_probs;
                    joint_loss_backward(eps, out.eps_hat, probs, gt_masks, t, table_, loss_cfg_,
                                        d_eps_hat, d_probs);
                    TensorT<float> d_logits(d_probs.shape());
                    for (std::size_t i = 0; i < d_probs.numel(); ++i)
                        d_logits[i] = d_probs[i] * probs[i] * (1.0f - probs[i]);

                    grad_slot[e] = net_.backward(d_eps_hat, d_logits, cache, params_);
                }
            } catch (const std::exception& ex) {
                fail_slot[e] = ex.what();
            }
        }
        for (int e = 0; e < micro; ++e) {
            if (!fail_slot[e].empty()) throw NumericError(fail_slot[e]);
            for (std::size_t i = 0; i < grad_total.size(); ++i) grad_total[i] += grad_slot[e][i];
            parts_sum.total += parts_slot[e].total;
            parts_sum.weighted_mse += parts_slot[e].weighted_mse;
            parts_sum.seg += parts_slot[e].seg;
        }
    }

    const double inv_batch = 1.0 / train_cfg_.batch_size;
    for (auto& g : grad_total) g = static_cast<float>(g * inv_batch);

    const long long update = step_ + 1;
    const double lr = lr_at(static_cast<int>(update), train_cfg_);
    adam_update(params_, grad_total, adam_, adam_cfg_, lr);
    step_ = update;

    StepStats stats;
    stats.step = update;
    stats.lr = lr;
    stats.total = parts_sum.total * inv_batch;
    stats.weighted_mse = parts_sum.weighted_mse * inv_batch;
    stats.seg = parts_sum.seg * inv_batch;
    stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
    return stats;
}

void Trainer::write_log_header(std::ostream& os) {
    os << "step,lr,total,weighted_mse,seg,wall_ms\n";
}

void Trainer::run(std::ostream* log) {
    while (step_ < train_cfg_.total_steps) {
        StepStats s = step();
        if (log) {
            (*log) << s.step << ',' << s.lr << ',' << s.total << ',' << s.weighted_mse << ','
                   << s.seg << ',' << s.wall_ms << '\n';
            log->flush();
        }
    }
}

}  // namespace tadiff
