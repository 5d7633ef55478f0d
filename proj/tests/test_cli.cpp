#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tadiff/data.hpp"
#include "tadiff/tgv.hpp"

using namespace tadiff;
namespace fs = std::filesystem;

namespace {

std::string g_cli;

int run(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WEXITSTATUS(status);
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "tadiff_cli_test" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(is), {});
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> ra, rb;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) ra.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) rb.push_back(fs::relative(e.path(), b));
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    if (ra != rb) return false;
    for (const auto& rel : ra)
        if (slurp(a / rel) != slurp(b / rel)) return false;
    return true;
}

const char* kSmall =
    " --set data.grid=32 --set data.sessions_min=3 --set data.sessions_max=4"
    " --set model.levels=2 --set model.widths=[8,16] --set model.blocks=1"
    " --set model.embed_dim=16 --set model.groups=4";

}  // namespace

TEST_CASE("synth is byte-reproducible and counts sessions") {
    const fs::path a = scratch("synth_a");
    const fs::path b = scratch("synth_b");
    REQUIRE(run(std::string("synth --cases 2 --seed 7 --out ") + a.string() + kSmall) == 0);
    REQUIRE(run(std::string("synth --cases 2 --seed 7 --out ") + b.string() + kSmall) == 0);
    CHECK(dirs_equal(a, b));
    CHECK(fs::exists(a / "case_0000" / "manifest.json"));
    CHECK(fs::exists(a / "case_0001" / "manifest.json"));

    const fs::path c = scratch("synth_c");
    REQUIRE(run(std::string("synth --cases 2 --seed 8 --out ") + c.string() + kSmall) == 0);
    CHECK(!dirs_equal(a, c));
}

TEST_CASE("zero cases is a usage error") {
    const fs::path out = scratch("synth_zero");
    CHECK(run("synth --cases 0 --seed 1 --out " + out.string()) == 2);
}

TEST_CASE("unknown config keys are a usage error") {
    const fs::path out = scratch("synth_badkey");
    CHECK(run("synth --cases 1 --seed 1 --out " + out.string() + " --set nope=1") == 2);
}

TEST_CASE("training on an empty directory is a data error") {
    const fs::path empty = scratch("empty_data");
    const fs::path ckpt = scratch("empty_ckpt") / "model.ckpt";
    CHECK(run("train --data " + empty.string() + " --out " + ckpt.string() + kSmall) == 3);
}

TEST_CASE("train, sample, and eval round trip") {
    const fs::path data = scratch("e2e_data");
    const fs::path workdir = scratch("e2e_work");
    REQUIRE(run(std::string("synth --cases 2 --seed 11 --out ") + data.string() + kSmall) == 0);

    const std::string train_flags =
        std::string(kSmall) +
        " --set train.total_steps=8 --set train.warmup_steps=2 --set train.batch_size=2"
        " --set train.accum_steps=1";
    const fs::path ckpt = workdir / "model.ckpt";
    REQUIRE(run("train --data " + data.string() + " --out " + ckpt.string() + " --seed 5" +
                train_flags) == 0);
    CHECK(fs::exists(ckpt));
    {
        std::ifstream log(ckpt.string() + ".loss.csv");
        REQUIRE(log.good());
        std::string header;
        std::getline(log, header);
        CHECK(header == "step,lr,total,weighted_mse,seg,wall_ms");
        int lines = 0;
        std::string line;
        while (std::getline(log, line))
            if (!line.empty()) ++lines;
        CHECK(lines == 8);
    }

    // Resume: continuing to the same total is a no-op that still exits 0.
    REQUIRE(run("train --data " + data.string() + " --out " + ckpt.string() + " --seed 5" +
                train_flags + " --resume") == 0);

    // Continuation equivalence: 4 steps then 4 more equals 8 straight through.
    const fs::path split_ckpt = workdir / "split.ckpt";
    REQUIRE(run("train --data " + data.string() + " --out " + split_ckpt.string() + " --seed 5" +
                train_flags + " --max-steps 4") == 0);
    REQUIRE(run("train --data " + data.string() + " --out " + split_ckpt.string() + " --seed 5" +
                train_flags + " --resume") == 0);
    CHECK(slurp(split_ckpt) == slurp(ckpt));

    // Sampling with a short chain keeps the test quick; determinism is what
    // matters here.
    const std::string sample_flags =
        std::string(kSmall) + " --set schedule.T=40 --set sampler.T_m=5";
    const fs::path s1 = workdir / "pred" / "p1";
    const fs::path s2 = workdir / "pred2" / "p1";
    const LongitudinalCase c = load_case(data / "case_0000", false);
    const int day = c.sessions.back().day;
    const std::string args = " --ckpt " + ckpt.string() + " --case " +
                             (data / "case_0000").string() +
                             " --sources 1,2 --target-day " + std::to_string(day) +
                             " --target-treatment 2 --ensembles 1 --seed 13";
    REQUIRE(run("sample" + args + " --out " + s1.string() + sample_flags) == 0);
    REQUIRE(run("sample" + args + " --out " + s2.string() + sample_flags) == 0);
    CHECK(dirs_equal(s1.parent_path(), s2.parent_path()));

    // K = 1 means zero uncertainty everywhere.
    const TensorT<float> istd = load_tgv_f32(s1 / "image_std.tgv");
    for (std::size_t i = 0; i < istd.numel(); ++i) CHECK(istd[i] == 0.0f);

    // Missing source session index is a data error.
    CHECK(run("sample --ckpt " + ckpt.string() + " --case " + (data / "case_0000").string() +
              " --sources 9 --target-day 10 --target-treatment 1 --out " +
              (workdir / "bad").string() + sample_flags) == 3);

    // eval against a hand-built "perfect" prediction of the target session.
    const fs::path pred = workdir / "perfect";
    fs::create_directories(pred / "p0");
    {
        const LongitudinalCase norm = load_case(data / "case_0000", true);
        const Session& target = norm.sessions.back();
        save_tgv(pred / "p0" / "image_mean.tgv", target.image);
        // All four mask channels carry the matching session masks.
        TensorT<float> probs({4, 32, 32});
        const int sess_count = norm.length();
        const std::array<int, 4> picks = {0, std::min(1, sess_count - 1),
                                          std::min(2, sess_count - 1), sess_count - 1};
        for (int s = 0; s < 4; ++s)
            for (int i = 0; i < 32 * 32; ++i)
                probs[s * 32 * 32 + i] = norm.sessions[picks[s]].mask[i] ? 1.0f : 0.0f;
        save_tgv(pred / "p0" / "mask_mean.tgv", probs);
        std::ofstream meta(pred / "p0" / "meta.json");
        meta << "{\"case_id\":\"0000\",\"target_day\":" << day
             << ",\"target_treatment\":2,\"seed\":0,\"ensembles\":1}\n";
    }
    const fs::path report = workdir / "report.csv";
    REQUIRE(run("eval --pred " + pred.string() + " --gt " + data.string() + " --threshold 0.5 " +
                "--report " + report.string()) == 0);
    {
        std::ifstream is(report);
        REQUIRE(is.good());
        std::string line;
        std::getline(is, line);  // threshold comment
        std::getline(is, line);  // header
        std::getline(is, line);  // the single row
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        REQUIRE(fields.size() == 9);
        CHECK(std::stod(fields[4]) == 1.0);  // dsc
        CHECK(std::stod(fields[5]) == 0.0);  // rvd
        CHECK(std::stod(fields[8]) == 0.0);  // mse
    }
    CHECK(fs::exists(workdir / "report.by_patient.csv"));
    CHECK(fs::exists(workdir / "report.by_treatment.csv"));
    CHECK(fs::exists(workdir / "report.by_dayrange.csv"));

    // Mismatched inventories list the missing item and fail with a data error.
    {
        std::ofstream meta(pred / "p0" / "meta.json", std::ios::trunc);
        meta << "{\"case_id\":\"0000\",\"target_day\":99999,\"target_treatment\":2}\n";
    }
    CHECK(run("eval --pred " + pred.string() + " --gt " + data.string() +
              " --threshold 0.5 --report " + report.string()) == 3);
}

int main(int argc, char** argv) {
    std::vector<char*> pass;
    pass.push_back(argv[0]);
    for (int i = 1; i < argc; ++i) {
        if (g_cli.empty() && argv[i][0] != '-')
            g_cli = argv[i];
        else
            pass.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        const char* env = std::getenv("TADIFF_CLI");
        if (env) g_cli = env;
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "usage: test_cli <path-to-tadiff-binary>\n");
        return 1;
    }
    doctest::Context ctx(static_cast<int>(pass.size()), pass.data());
    return ctx.run();
}
