#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "helpers.hpp"
#include "roadfusion/io.hpp"
#include "roadfusion/metrics.hpp"
#include "roadfusion/synth.hpp"

using testutil::TempDir;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout only
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(RF_CLI_PATH) + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    CliResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) res.output += buf.data();
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string sha_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    // FNV-1a is plenty to compare two local runs.
    const std::string s = ss.str();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return std::to_string(h) + ":" + std::to_string(s.size());
}

}  // namespace

TEST_CASE("cli: no arguments is a usage error with exit 2") {
    const CliResult res = run_cli("");
    CHECK(res.exit_code == 2);
}

TEST_CASE("cli: unknown flags are rejected") {
    const CliResult res = run_cli("fuse bench-cost --bogus 3");
    CHECK(res.exit_code == 2);
}

TEST_CASE("cli: bench-cost prints the documented counts") {
    const CliResult res = run_cli("fuse bench-cost --h 8 --w 8 --c 16 --cout 16 --k 3");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("147456") != std::string::npos);
    CHECK(res.output.find("25600") != std::string::npos);
    CHECK(res.output.find("5.76") != std::string::npos);
}

TEST_CASE("cli: gradcheck passes") {
    const CliResult res = run_cli("fuse gradcheck --seed 5");
    CHECK(res.exit_code == 0);
    CHECK(res.output.find("PASS") != std::string::npos);
}

TEST_CASE("cli: synth then dt pipeline recovers manifest models") {
    TempDir dir("cli_synth");
    const std::string out = dir.path().string();
    const CliResult gen = run_cli("synth generate --n 4 --seed 7 --out " + out);
    REQUIRE(gen.exit_code == 0);

    const auto manifest = rf::synth::read_manifest(dir.path() / "manifest.csv");
    REQUIRE(manifest.size() == 4);
    for (const auto& e : manifest) {
        const CliResult pipe =
            run_cli("dt pipeline --disp " + (dir.path() / "disp" / (e.id + ".pgm")).string() +
                    " --out-dir " + (dir.path() / ("dt_" + e.id)).string());
        REQUIRE(pipe.exit_code == 0);
        const auto model = rf::io::read_road_model(dir.path() / ("dt_" + e.id) / "model.txt");
        CHECK(std::fabs(model.a0 - e.spec.a0) < 0.05);
        CHECK(std::fabs(model.a1 - e.spec.a1) < 0.01);
        CHECK(std::fabs(model.theta - e.spec.theta) < 0.5 * 3.14159265358979323846 / 180.0);
    }
}

TEST_CASE("cli: dt estimate + transform round trip through files") {
    TempDir dir("cli_dt");
    const std::string out = dir.path().string();
    REQUIRE(run_cli("synth generate --n 1 --seed 3 --out " + out).exit_code == 0);
    const std::string disp = (dir.path() / "disp" / "scene_0000.pgm").string();
    const std::string model = (dir.path() / "model.txt").string();
    const std::string tout = (dir.path() / "t.pgm").string();
    REQUIRE(run_cli("dt estimate --disp " + disp + " --model " + model).exit_code == 0);
    REQUIRE(run_cli("dt transform --disp " + disp + " --model " + model + " --out " + tout)
                .exit_code == 0);
    // Output is re-readable and non-negative.
    const auto t = rf::io::read_pgm16(tout);
    for (std::size_t i = 0; i < t.data.size(); ++i) CHECK(t.data[i] >= 0.0);
}

TEST_CASE("cli: features subcommands emit readable tensors") {
    TempDir dir("cli_feat");
    const std::string out = dir.path().string();
    REQUIRE(run_cli("synth generate --n 1 --seed 11 --out " + out).exit_code == 0);
    const std::string disp = (dir.path() / "disp" / "scene_0000.pgm").string();
    const std::string cam = (dir.path() / "camera.txt").string();
    for (const std::string kind : {"depth", "normal", "elevation", "hha"}) {
        const std::string tnsr = (dir.path() / (kind + ".tnsr")).string();
        const CliResult res =
            run_cli("features " + kind + " --disp " + disp + " --cam " + cam + " --out " + tnsr);
        REQUIRE(res.exit_code == 0);
        const auto t = rf::io::read_tensor(tnsr);
        CHECK(t.dim(0) == 64);
        CHECK(t.dim(1) == 96);
        CHECK(t.dim(2) == (kind == "normal" || kind == "hha" ? 3 : 1));
    }
}

TEST_CASE("cli: seeded runs are bit-reproducible") {
    TempDir a("cli_rep_a"), b("cli_rep_b");
    REQUIRE(run_cli("synth split --n 6 --seed 99 --out " + a.path().string()).exit_code == 0);
    REQUIRE(run_cli("synth split --n 6 --seed 99 --out " + b.path().string()).exit_code == 0);
    namespace fs = std::filesystem;
    std::size_t compared = 0;
    for (auto it = fs::recursive_directory_iterator(a.path());
         it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        const auto rel = fs::relative(it->path(), a.path());
        CHECK(sha_file(it->path()) == sha_file(b.path() / rel));
        ++compared;
    }
    CHECK(compared > 6 * 3);
}

TEST_CASE("cli: train, eval and a small ablation run end to end") {
    TempDir dir("cli_train");
    const std::string data = (dir.path() / "data").string();
    REQUIRE(run_cli("synth split --n 8 --seed 21 --out " + data + " --width 32 --height 16")
                .exit_code == 0);

    // Config mirrors NetConfig field names exactly.
    const std::string cfg_path = (dir.path() / "cfg.json").string();
    {
        std::ofstream f(cfg_path);
        f << R"({"width":32,"height":16,"stage_channels":[4,8],"fusion":"dfm-all",)"
          << R"("classes":3,"lr":0.15,"momentum":0.9,"iterations":60,"seed":3,)"
          << R"("modality":"tdisp","eval_interval":20})";
    }
    const std::string model = (dir.path() / "model.tnsr").string();
    const CliResult tr = run_cli("train --config " + cfg_path + " --data " + data + " --out " + model);
    REQUIRE(tr.exit_code == 0);
    CHECK(tr.output.find("best_val_miou") != std::string::npos);

    const std::string report = (dir.path() / "report.csv").string();
    const CliResult ev = run_cli("eval --model " + model + " --data " + data + " --out " + report);
    REQUIRE(ev.exit_code == 0);
    CHECK(std::filesystem::exists(report));
    const auto rep = rf::metrics::read_report_csv(report);
    CHECK(rep.class_ids.size() == 2);

    const std::string table = (dir.path() / "table.csv").string();
    const CliResult ab = run_cli("ablate --data " + data + " --seeds 1,2,3 --out " + table +
                                 " --variants addition dfm-all --iterations 30 --threads 2");
    REQUIRE(ab.exit_code == 0);
    std::ifstream tf(table);
    std::string line;
    std::getline(tf, line);
    CHECK(line == "variant,modality,miou_mean,miou_std,runtime_ms,eta,per_seed_miou");
    int rows = 0;
    bool baseline_eta_blank = false;
    while (std::getline(tf, line)) {
        ++rows;
        if (line.rfind("addition,", 0) == 0) {
            // eta column (6th) must be blank for the baseline row.
            std::istringstream is(line);
            std::string field;
            for (int i = 0; i < 6; ++i) std::getline(is, field, ',');
            baseline_eta_blank = field.empty();
        }
    }
    CHECK(rows == 2);  // one row per (variant, modality) pair
    CHECK(baseline_eta_blank);
}
