#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tadiff/config.hpp"
#include "tadiff/data.hpp"
#include "tadiff/denoiser.hpp"
#include "tadiff/errors.hpp"
#include "tadiff/metrics.hpp"
#include "tadiff/sampler.hpp"
#include "tadiff/tgv.hpp"
#include "tadiff/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tadiff;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

RunConfig make_config(const std::string& config_path, const std::vector<std::string>& sets) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& s : sets) apply_override(cfg, s);
    cfg.validate();
    return cfg;
}

std::string case_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d", index);
    return buf;
}

int run_synth(const std::string& config_path, const std::vector<std::string>& sets, int cases,
              std::optional<uint64_t> seed, const std::string& out_dir) {
    RunConfig cfg = make_config(config_path, sets);
    cfg.data.cases = cases;
    if (seed) cfg.data.seed = *seed;
    cfg.data.validate();

    fs::create_directories(out_dir);
    for (int i = 0; i < cfg.data.cases; ++i) {
        LongitudinalCase c = render_synthetic_case(cfg.data, static_cast<uint64_t>(i));
        c.case_id = case_name(i);
        save_case(c, fs::path(out_dir) / ("case_" + c.case_id));
        std::cout << "case_" << c.case_id << ": " << c.length() << " sessions\n";
    }
    return 0;
}

int run_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& data_dir, const std::string& out_ckpt,
              std::optional<uint64_t> seed, bool resume, int max_steps) {
    RunConfig cfg = make_config(config_path, sets);
    if (seed) cfg.train.seed = *seed;

    std::vector<LongitudinalCase> cases = load_cases(data_dir, /*normalize=*/true);
    if (cases.empty()) throw std::runtime_error("no eligible cases in " + data_dir);

    Trainer trainer(cfg.model, cfg.schedule, cfg.loss, cfg.train, std::move(cases));

    const fs::path log_path = out_ckpt + ".loss.csv";
    const bool resuming = resume && fs::exists(out_ckpt);
    if (resuming) {
        trainer.restore(load_checkpoint(out_ckpt));
        std::cout << "resumed from step " << trainer.current_step() << "\n";
    }
    std::ofstream log(log_path, resuming ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + log_path.string());
    if (!resuming) Trainer::write_log_header(log);

    int done_here = 0;
    while (trainer.current_step() < cfg.train.total_steps &&
           (max_steps <= 0 || done_here < max_steps)) {
        StepStats s = trainer.step();
        ++done_here;
        log << s.step << ',' << s.lr << ',' << s.total << ',' << s.weighted_mse << ',' << s.seg
            << ',' << s.wall_ms << '\n';
        log.flush();
        if (s.step % 250 == 0 || s.step == cfg.train.total_steps)
            std::cout << "step " << s.step << "/" << cfg.train.total_steps << " total=" << s.total
                      << " seg=" << s.seg << " wall_ms=" << s.wall_ms << std::endl;
    }
    save_checkpoint(trainer.checkpoint(), out_ckpt);
    std::cout << "checkpoint written to " << out_ckpt << "\n";
    return 0;
}

std::array<int, 3> parse_sources(const std::string& text, int session_count) {
    std::vector<int> parsed;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        parsed.push_back(std::stoi(item));
    }
    if (parsed.empty() || parsed.size() > 3)
        throw ConfigError("--sources expects 1 to 3 comma-separated session indices");
    for (int s : parsed)
        if (s < 1 || s > session_count)
            throw std::runtime_error("source session " + std::to_string(s) +
                                     " does not exist (case has " +
                                     std::to_string(session_count) + " sessions)");
    // Fewer than three source sessions: duplicate the most recent one.
    while (parsed.size() < 3) parsed.push_back(parsed.back());
    std::sort(parsed.begin(), parsed.end());
    return {parsed[0], parsed[1], parsed[2]};
}

int run_sample(const std::string& config_path, const std::vector<std::string>& sets,
               const std::string& ckpt_path, const std::string& case_dir,
               const std::string& sources_text, int target_day, int target_treatment,
               std::optional<int> ensembles, std::optional<uint64_t> seed,
               const std::string& out_dir) {
    RunConfig cfg = make_config(config_path, sets);
    if (ensembles) cfg.sampler.ensembles = *ensembles;
    if (seed) cfg.sampler.seed = *seed;

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DenoiserT<float> net(ckpt.model);
    LongitudinalCase c = load_case(case_dir, /*normalize=*/true);

    const std::array<int, 3> src = parse_sources(sources_text, c.length());
    std::array<TensorT<float>, 3> sources;
    PairSet pairs;
    for (int i = 0; i < 3; ++i) {
        const Session& s = c.sessions[src[i] - 1];
        sources[i] = s.image;
        pairs[i] = {s.treatment, s.day};
    }
    pairs[3] = {target_treatment, target_day};

    const ScheduleTable table = build_schedule(cfg.schedule);
    cfg.sampler.validate(table);
    DenoiseFn<float> fn = make_denoise_fn(net, ckpt.params);
    std::vector<SampleResultT<float>> members;
    UncertaintyMapsT<float> maps = ensemble(sources, pairs, fn, cfg.sampler, table, &members);

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    save_tgv(out / "generated.tgv", members[0].generated);
    save_tgv(out / "fused_mask.tgv", members[0].masks);
    save_tgv(out / "image_mean.tgv", maps.image_mean);
    save_tgv(out / "image_std.tgv", maps.image_std);
    save_tgv(out / "mask_mean.tgv", maps.mask_mean);
    save_tgv(out / "mask_std.tgv", maps.mask_std);

    json meta;
    meta["case_id"] = c.case_id;
    meta["sources"] = std::vector<int>(src.begin(), src.end());
    json jp = json::array();
    for (const auto& p : pairs) jp.push_back({{"treatment", p.treatment}, {"day", p.day}});
    meta["pairs"] = jp;
    meta["target_day"] = target_day;
    meta["target_treatment"] = target_treatment;
    meta["seed"] = cfg.sampler.seed;
    meta["ensembles"] = cfg.sampler.ensembles;
    meta["T"] = cfg.schedule.steps;
    meta["T_m"] = cfg.sampler.mask_fusion_steps;
    {
        std::ofstream os(out / "meta.json", std::ios::trunc);
        os << meta.dump(2) << "\n";
    }
    std::cout << "sample written to " << out_dir << " (K=" << cfg.sampler.ensembles << ")\n";
    return 0;
}

struct PredUnit {
    fs::path dir;
    json meta;
};

int run_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& threshold_text, const std::string& report_path) {
    std::vector<PredUnit> preds;
    for (const auto& e : fs::directory_iterator(pred_dir)) {
        if (!e.is_directory() || !fs::exists(e.path() / "meta.json")) continue;
        PredUnit u;
        u.dir = e.path();
        std::ifstream is(e.path() / "meta.json");
        is >> u.meta;
        preds.push_back(std::move(u));
    }
    std::sort(preds.begin(), preds.end(),
              [](const PredUnit& a, const PredUnit& b) { return a.dir < b.dir; });
    if (preds.empty()) throw std::runtime_error("no predictions with meta.json under " + pred_dir);

    std::vector<LongitudinalCase> cases = load_cases(gt_dir, /*normalize=*/true);
    auto find_case = [&](const std::string& id) -> const LongitudinalCase* {
        for (const auto& c : cases)
            if (c.case_id == id) return &c;
        return nullptr;
    };

    // Pair every prediction with its ground-truth session; collect all
    // inventory mismatches before failing.
    struct Item {
        const PredUnit* pred;
        const LongitudinalCase* c;
        int session;  // 0-based
    };
    std::vector<Item> items;
    std::vector<std::string> missing;
    for (const auto& p : preds) {
        const std::string id = p.meta.at("case_id").get<std::string>();
        const int day = p.meta.at("target_day").get<int>();
        const LongitudinalCase* c = find_case(id);
        if (!c) {
            missing.push_back(p.dir.string() + ": no ground-truth case " + id);
            continue;
        }
        int session = -1;
        for (int s = 0; s < c->length(); ++s)
            if (c->sessions[s].day == day) session = s;
        if (session < 0) {
            missing.push_back(p.dir.string() + ": case " + id + " has no session at day " +
                              std::to_string(day));
            continue;
        }
        items.push_back({&p, c, session});
    }
    if (!missing.empty()) {
        for (const auto& m : missing) std::cerr << "missing: " << m << "\n";
        throw std::runtime_error("prediction/ground-truth inventory mismatch (" +
                                 std::to_string(missing.size()) + " items)");
    }

    // Future-mask probabilities against ground truth for thresholding.
    std::vector<std::pair<TensorT<float>, TensorT<uint8_t>>> prob_gt;
    std::vector<TensorT<float>> mask_means;
    for (const auto& it : items) {
        TensorT<float> mask_mean = load_tgv_f32(it.pred->dir / "mask_mean.tgv");
        const int h = mask_mean.dim(1), w = mask_mean.dim(2);
        TensorT<float> future({h, w});
        std::copy(mask_mean.data() + 3 * static_cast<std::size_t>(h) * w,
                  mask_mean.data() + 4 * static_cast<std::size_t>(h) * w, future.data());
        prob_gt.push_back({future, it.c->sessions[it.session].mask});
        mask_means.push_back(std::move(mask_mean));
    }

    double tau;
    if (threshold_text == "auto") {
        tau = optimize_threshold(prob_gt);
    } else {
        tau = std::stod(threshold_text);
        if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("--threshold must be auto or in (0, 1)");
    }

    std::vector<MetricRow> rows;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const Item& it = items[i];
        const Session& gt = it.c->sessions[it.session];
        MetricRow r;
        r.case_id = it.c->case_id;
        r.slice_id = it.session + 1;
        r.target_day = gt.day;
        r.treatment = it.pred->meta.at("target_treatment").get<int>();
        r.dsc = dsc(binarize(prob_gt[i].first, tau), gt.mask);
        r.rvd = rvd(binarize(prob_gt[i].first, tau), gt.mask);

        TensorT<float> image_mean = load_tgv_f32(it.pred->dir / "image_mean.tgv");
        if (!image_mean.same_shape(gt.image))
            throw std::runtime_error(it.pred->dir.string() + ": generated image shape mismatch");
        const int c = gt.image.dim(0), h = gt.image.dim(1), w = gt.image.dim(2);
        double ssim_sum = 0.0, psnr_sum = 0.0, mse_sum = 0.0;
        for (int ch = 0; ch < c; ++ch) {
            TensorT<float> a({h, w}), b({h, w});
            const std::size_t per = static_cast<std::size_t>(h) * w;
            std::copy(gt.image.data() + ch * per, gt.image.data() + (ch + 1) * per, a.data());
            std::copy(image_mean.data() + ch * per, image_mean.data() + (ch + 1) * per, b.data());
            float lo = a[0], hi = a[0];
            for (std::size_t px = 0; px < per; ++px) {
                lo = std::min(lo, a[px]);
                hi = std::max(hi, a[px]);
            }
            const double peak = std::max(static_cast<double>(hi - lo), 1e-12);
            ssim_sum += ssim(a, b, peak);
            const auto [p, m] = psnr_mse(a, b, peak);
            psnr_sum += p;
            mse_sum += m;
        }
        r.ssim = ssim_sum / c;
        r.psnr = psnr_sum / c;
        r.mse = mse_sum / c;
        rows.push_back(std::move(r));
    }

    std::ostringstream comment;
    comment << "threshold=" << tau;
    write_metric_csv(rows, report_path, comment.str());
    const fs::path base(report_path);
    const fs::path stem = base.parent_path() / base.stem();
    write_summary_csv(aggregate(rows, AggregateKey::patient), stem.string() + ".by_patient.csv",
                      "patient", comment.str());
    write_summary_csv(aggregate(rows, AggregateKey::treatment),
                      stem.string() + ".by_treatment.csv", "treatment", comment.str());
    write_summary_csv(aggregate(rows, AggregateKey::day_range), stem.string() + ".by_dayrange.csv",
                      "day_range", comment.str());

    std::cout << "evaluated " << rows.size() << " predictions at threshold " << tau << "\n";
    for (const auto& s : aggregate(rows, AggregateKey::patient))
        std::cout << "  patient " << s.key << ": dsc " << s.mean[0] << " rvd " << s.mean[1]
                  << " ssim " << s.mean[2] << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"treatment-aware diffusion for longitudinal lesion growth prediction"};
    app.require_subcommand(1);
    app.fallthrough();  // --config/--set may follow the subcommand

    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "JSON config with flat dotted keys")
        ->expected(1);
    app.add_option("--set", sets, "config override key=value (repeatable)");

    auto* synth = app.add_subcommand("synth", "generate synthetic longitudinal cases");
    int synth_cases = 0;
    uint64_t synth_seed = 0;
    std::string synth_out;
    synth->add_option("--cases", synth_cases, "number of cases")->required()
        ->check(CLI::PositiveNumber);
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "dataset seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    auto* train = app.add_subcommand("train", "train on a case directory");
    std::string train_data, train_out;
    uint64_t train_seed = 0;
    bool train_resume = false;
    int train_max_steps = 0;
    train->add_option("--data", train_data, "case directory")->required();
    train->add_option("--out", train_out, "checkpoint path")->required();
    auto* train_seed_opt = train->add_option("--seed", train_seed, "training seed");
    train->add_flag("--resume", train_resume, "continue from an existing checkpoint");
    train->add_option("--max-steps", train_max_steps,
                      "optimizer steps to run this invocation (0 = to total_steps)");

    auto* sample = app.add_subcommand("sample", "generate a future session");
    std::string sample_ckpt, sample_case, sample_sources = "1,2,3", sample_out;
    int sample_day = 0, sample_treatment = 0, sample_k = 0;
    uint64_t sample_seed = 0;
    sample->add_option("--ckpt", sample_ckpt, "checkpoint path")->required();
    sample->add_option("--case", sample_case, "case directory")->required();
    sample->add_option("--sources", sample_sources, "comma-separated source session indices");
    sample->add_option("--target-day", sample_day, "future day")->required()
        ->check(CLI::NonNegativeNumber);
    sample->add_option("--target-treatment", sample_treatment, "future treatment code")
        ->required();
    auto* sample_k_opt = sample->add_option("--ensembles", sample_k, "ensemble size K");
    auto* sample_seed_opt = sample->add_option("--seed", sample_seed, "sampling seed");
    sample->add_option("--out", sample_out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "evaluate predictions against ground truth");
    std::string eval_pred, eval_gt, eval_threshold = "auto", eval_report;
    eval->add_option("--pred", eval_pred, "directory of prediction units")->required();
    eval->add_option("--gt", eval_gt, "ground-truth case directory")->required();
    eval->add_option("--threshold", eval_threshold, "auto or a fixed value in (0, 1)");
    eval->add_option("--report", eval_report, "metric CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (synth->parsed())
            return run_synth(config_path, sets, synth_cases,
                             synth_seed_opt->count() ? std::optional<uint64_t>(synth_seed)
                                                     : std::nullopt,
                             synth_out);
        if (train->parsed())
            return run_train(config_path, sets, train_data, train_out,
                             train_seed_opt->count() ? std::optional<uint64_t>(train_seed)
                                                     : std::nullopt,
                             train_resume, train_max_steps);
        if (sample->parsed())
            return run_sample(config_path, sets, sample_ckpt, sample_case, sample_sources,
                              sample_day, sample_treatment,
                              sample_k_opt->count() ? std::optional<int>(sample_k) : std::nullopt,
                              sample_seed_opt->count() ? std::optional<uint64_t>(sample_seed)
                                                       : std::nullopt,
                              sample_out);
        if (eval->parsed())
            return run_eval(eval_pred, eval_gt, eval_threshold, eval_report);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
