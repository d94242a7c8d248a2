#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "roadfusion/dfm.hpp"
#include "roadfusion/disparity_transform.hpp"
#include "roadfusion/error.hpp"
#include "roadfusion/features.hpp"
#include "roadfusion/fusionnet.hpp"
#include "roadfusion/io.hpp"
#include "roadfusion/metrics.hpp"
#include "roadfusion/rng.hpp"
#include "roadfusion/synth.hpp"

namespace {

enum class LogLevel { error = 0, info = 1, debug = 2 };

LogLevel g_log_level = LogLevel::info;

void init_log_level(bool verbose) {
    if (const char* env = std::getenv("GS_LOG")) {
        const std::string s = env;
        if (s == "error") g_log_level = LogLevel::error;
        else if (s == "info") g_log_level = LogLevel::info;
        else if (s == "debug") g_log_level = LogLevel::debug;
    }
    if (verbose) g_log_level = LogLevel::debug;
}

void log_info(const std::string& msg) {
    if (g_log_level >= LogLevel::info) std::cerr << msg << "\n";
}

void print_config(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ostringstream os;
    os << "config:";
    for (const auto& [k, v] : kv) os << " " << k << "=" << v;
    log_info(os.str());
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    std::istringstream is(csv);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (!tok.empty()) seeds.push_back(std::stoull(tok));
    }
    if (seeds.empty()) throw rf::RangeError("empty seed list");
    return seeds;
}

// Central finite differences over every entry of `param` against the scalar
// sum(upstream * dfm_forward); used by the gradcheck subcommand.
double max_rel_err(const rf::Tensor& analytic, const rf::Tensor& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-8});
        worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

int run_gradcheck(std::uint64_t seed) {
    using rf::Tensor;
    rf::Rng rng(seed);
    const int h = 4, w = 4, c = 2;
    const Tensor f_r = Tensor::randn({h, w, c}, rng);
    const Tensor f_t = Tensor::randn({h, w, c}, rng);
    rf::dfm::DfmParams params = rf::dfm::DfmParams::random_init(c, c, rng);
    const Tensor upstream = Tensor::randn({h, w, c}, rng);

    const rf::dfm::DfmGrads grads = rf::dfm::dfm_backward(f_r, f_t, params, upstream);

    auto objective = [&](const Tensor& fr, const Tensor& ft, const rf::dfm::DfmParams& p) {
        const Tensor out = rf::dfm::dfm_forward(fr, ft, p);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += upstream[i] * out[i];
        return s;
    };
    const double eps = 1e-5;
    auto fd_tensor = [&](Tensor& target, auto recompute) {
        Tensor fd = Tensor::zeros(target.dims());
        for (std::size_t i = 0; i < target.size(); ++i) {
            const double keep = target[i];
            target[i] = keep + eps;
            const double hi = recompute();
            target[i] = keep - eps;
            const double lo = recompute();
            target[i] = keep;
            fd[i] = (hi - lo) / (2.0 * eps);
        }
        return fd;
    };

    Tensor fr = f_r, ft = f_t;
    rf::dfm::DfmParams p = params;
    auto eval = [&] { return objective(fr, ft, p); };
    struct Row {
        const char* name;
        double err;
    };
    const std::vector<Row> rows = {
        {"f_r", max_rel_err(grads.f_r, fd_tensor(fr, eval))},
        {"f_t", max_rel_err(grads.f_t, fd_tensor(ft, eval))},
        {"omega1_w", max_rel_err(grads.omega1_w, fd_tensor(p.omega1_w, eval))},
        {"omega1_b", max_rel_err(grads.omega1_b, fd_tensor(p.omega1_b, eval))},
        {"omega2_w", max_rel_err(grads.omega2_w, fd_tensor(p.omega2_w, eval))},
        {"omega2_b", max_rel_err(grads.omega2_b, fd_tensor(p.omega2_b, eval))},
    };
    bool ok = true;
    for (const auto& r : rows) {
        std::cout << r.name << " max_rel_err " << r.err << "\n";
        ok = ok && r.err < 1e-4;
    }
    std::cout << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"roadfusion: disparity transformation, dynamic feature fusion and evaluation"};
    app.require_subcommand(1);

    std::uint64_t seed = 7;
    int threads = 1;
    bool verbose = false;
    app.add_option("--seed", seed, "global random seed");
    app.add_option("--threads", threads, "worker pool size for parallel stages");
    app.add_flag("--verbose", verbose, "debug logging");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate synthetic road scenes");
    synth_cmd->require_subcommand(1);
    int synth_n = 20;
    std::string synth_out;
    double synth_noise = 0.25;
    int synth_w = 96, synth_h = 64;
    auto add_synth_opts = [&](CLI::App* c) {
        c->add_option("--n", synth_n, "number of scenes");
        c->add_option("--out", synth_out, "output directory")->required();
        c->add_option("--noise", synth_noise, "disparity noise sigma (px)");
        c->add_option("--width", synth_w, "scene width");
        c->add_option("--height", synth_h, "scene height");
    };
    auto* synth_generate = synth_cmd->add_subcommand("generate", "flat scene directory + manifest");
    add_synth_opts(synth_generate);
    auto* synth_split = synth_cmd->add_subcommand("split", "train/val/test layout + manifest");
    add_synth_opts(synth_split);

    // dt
    auto* dt_cmd = app.add_subcommand("dt", "disparity transformation");
    dt_cmd->require_subcommand(1);
    std::string dt_disp, dt_model, dt_out, dt_out_dir;
    auto* dt_estimate = dt_cmd->add_subcommand("estimate", "fit the road model from a disparity image");
    dt_estimate->add_option("--disp", dt_disp, "input 16-bit PGM")->required();
    dt_estimate->add_option("--model", dt_model, "output road-model text file")->required();
    auto* dt_transform = dt_cmd->add_subcommand("transform", "apply a road model");
    dt_transform->add_option("--disp", dt_disp, "input 16-bit PGM")->required();
    dt_transform->add_option("--model", dt_model, "road-model text file")->required();
    dt_transform->add_option("--out", dt_out, "output 16-bit PGM")->required();
    auto* dt_pipeline = dt_cmd->add_subcommand("pipeline", "estimate + transform in one pass");
    dt_pipeline->add_option("--disp", dt_disp, "input 16-bit PGM")->required();
    dt_pipeline->add_option("--out-dir", dt_out_dir, "output directory")->required();

    // features
    auto* feat_cmd = app.add_subcommand("features", "derive visual features from disparity");
    feat_cmd->require_subcommand(1);
    std::string feat_disp, feat_cam, feat_out;
    auto add_feat_opts = [&](CLI::App* c) {
        c->add_option("--disp", feat_disp, "input 16-bit PGM")->required();
        c->add_option("--cam", feat_cam, "camera intrinsics text file")->required();
        c->add_option("--out", feat_out, "output TNSR tensor")->required();
    };
    for (const char* name : {"depth", "normal", "elevation", "hha"}) {
        add_feat_opts(feat_cmd->add_subcommand(name, name));
    }

    // fuse
    auto* fuse_cmd = app.add_subcommand("fuse", "dynamic fusion module tools");
    fuse_cmd->require_subcommand(1);
    int bc_h = 8, bc_w = 8, bc_c = 16, bc_cout = 16, bc_k = 3;
    bool bc_gen = false;
    auto* bench = fuse_cmd->add_subcommand("bench-cost", "MAC counts of naive vs factorized fusion");
    bench->set_help_flag("--help", "print help");  // frees -h/--h for the height option
    bench->add_option("--h", bc_h, "feature height");
    bench->add_option("--w", bc_w, "feature width");
    bench->add_option("--c", bc_c, "input channels");
    bench->add_option("--cout", bc_cout, "output channels");
    bench->add_option("--k", bc_k, "kernel size");
    bench->add_flag("--include-generation", bc_gen, "count kernel generation too");
    auto* gradcheck = fuse_cmd->add_subcommand("gradcheck", "finite-difference check of the DFM backward");

    // train / eval / ablate
    auto* train_cmd = app.add_subcommand("train", "train the toy fusion network");
    std::string train_config, train_data, train_out = "model.tnsr";
    train_cmd->add_option("--config", train_config, "NetConfig JSON file")->required();
    train_cmd->add_option("--data", train_data, "dataset directory (synth split layout)");
    train_cmd->add_option("--out", train_out, "output model file");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
    std::string eval_model, eval_data, eval_out = "report.csv", eval_split = "test";
    eval_cmd->add_option("--model", eval_model, "model file written by train")->required();
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_out, "output report CSV");
    eval_cmd->add_option("--split", eval_split, "dataset split to evaluate");

    auto* ablate_cmd = app.add_subcommand("ablate", "fusion-strategy ablation grid");
    std::string ab_data, ab_out = "table.csv", ab_seeds = "1,2,3,4,5";
    std::vector<std::string> ab_variants = {"addition", "concatenation", "dfm-first", "dfm-last",
                                            "dfm-all"};
    std::vector<std::string> ab_modalities = {"tdisp"};
    int ab_iterations = 0;
    ablate_cmd->add_option("--data", ab_data, "dataset directory")->required();
    ablate_cmd->add_option("--seeds", ab_seeds, "comma-separated seed list");
    ablate_cmd->add_option("--out", ab_out, "output CSV");
    ablate_cmd->add_option("--variants", ab_variants, "fusion variants");
    ablate_cmd->add_option("--modalities", ab_modalities, "second-branch modalities");
    ablate_cmd->add_option("--iterations", ab_iterations, "override training iterations");

    // Global flags (--seed, --threads, --verbose) may appear after any
    // subcommand name.
    std::function<void(CLI::App*)> enable_fallthrough = [&](CLI::App* a) {
        a->fallthrough();
        for (CLI::App* s : a->get_subcommands([](CLI::App*) { return true; })) {
            enable_fallthrough(s);
        }
    };
    enable_fallthrough(&app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    init_log_level(verbose);

    try {
        if (synth_generate->parsed() || synth_split->parsed()) {
            const bool split = synth_split->parsed();
            print_config({{"cmd", split ? "synth split" : "synth generate"},
                          {"n", std::to_string(synth_n)},
                          {"seed", std::to_string(seed)},
                          {"out", synth_out},
                          {"noise", std::to_string(synth_noise)},
                          {"width", std::to_string(synth_w)},
                          {"height", std::to_string(synth_h)}});
            const auto entries =
                split ? rf::synth::make_split(synth_n, seed, synth_out, synth_noise, synth_w, synth_h)
                      : rf::synth::make_flat(synth_n, seed, synth_out, synth_noise, synth_w, synth_h);
            log_info("wrote " + std::to_string(entries.size()) + " scenes to " + synth_out);
        } else if (dt_estimate->parsed()) {
            print_config({{"cmd", "dt estimate"}, {"disp", dt_disp}, {"model", dt_model}});
            const auto d = rf::io::read_pgm16(dt_disp);
            const auto res = rf::dt::run_pipeline(d);
            rf::io::write_road_model(res.model, dt_model);
            log_info("theta_rad=" + std::to_string(res.model.theta) +
                     " a0=" + std::to_string(res.model.a0) + " a1=" + std::to_string(res.model.a1));
        } else if (dt_transform->parsed()) {
            print_config({{"cmd", "dt transform"}, {"disp", dt_disp}, {"model", dt_model}, {"out", dt_out}});
            const auto d = rf::io::read_pgm16(dt_disp);
            const auto model = rf::io::read_road_model(dt_model);
            const auto res = rf::dt::transform(d, model);
            if (res.delta_used != model.delta) {
                log_info("delta " + std::to_string(model.delta) +
                         " was insufficient; recomputed delta=" + std::to_string(res.delta_used));
            }
            rf::io::write_pgm16(res.image, dt_out);
        } else if (dt_pipeline->parsed()) {
            print_config({{"cmd", "dt pipeline"}, {"disp", dt_disp}, {"out-dir", dt_out_dir}});
            std::filesystem::create_directories(dt_out_dir);
            const auto d = rf::io::read_pgm16(dt_disp);
            const auto res = rf::dt::run_pipeline(d);
            rf::io::write_pgm16(res.transformed, std::filesystem::path(dt_out_dir) / "transformed.pgm");
            rf::io::write_road_model(res.model, std::filesystem::path(dt_out_dir) / "model.txt");
            rf::LabelImage mask_img(res.mask.width, res.mask.height);
            for (std::size_t i = 0; i < res.mask.mask.size(); ++i) {
                mask_img.classes[i] = res.mask.mask[i] ? 1 : 0;
            }
            rf::io::write_label_pgm(mask_img, std::filesystem::path(dt_out_dir) / "coarse_mask.pgm");
        } else if (feat_cmd->parsed()) {
            const std::string kind = feat_cmd->get_subcommands().front()->get_name();
            print_config({{"cmd", "features " + kind}, {"disp", feat_disp}, {"cam", feat_cam}, {"out", feat_out}});
            const auto d = rf::io::read_pgm16(feat_disp);
            const auto cam = rf::io::read_camera(feat_cam);
            rf::Tensor out;
            if (kind == "depth") {
                out = rf::feat::depth_from_disparity(d, cam).map;
            } else if (kind == "normal") {
                out = rf::feat::normal_image(d, cam).map;
            } else {
                const auto mask = rf::dt::coarse_road_mask(d).mask;
                out = kind == "elevation" ? rf::feat::elevation_map(d, cam, mask).map
                                          : rf::feat::hha_image(d, cam, mask).map;
            }
            rf::io::write_tensor(out, feat_out);
        } else if (bench->parsed()) {
            print_config({{"cmd", "fuse bench-cost"},
                          {"h", std::to_string(bc_h)},
                          {"w", std::to_string(bc_w)},
                          {"c", std::to_string(bc_c)},
                          {"cout", std::to_string(bc_cout)},
                          {"k", std::to_string(bc_k)},
                          {"include_generation", bc_gen ? "1" : "0"}});
            const auto naive =
                rf::dfm::cost_model(bc_h, bc_w, bc_c, bc_cout, bc_k, rf::dfm::CostVariant::naive, bc_gen);
            const auto fact = rf::dfm::cost_model(bc_h, bc_w, bc_c, bc_cout, bc_k,
                                                  rf::dfm::CostVariant::factorized, bc_gen);
            std::cout << "naive      " << naive << "\n";
            std::cout << "factorized " << fact << "\n";
            std::cout << "ratio      " << (static_cast<double>(naive) / static_cast<double>(fact))
                      << "\n";
        } else if (gradcheck->parsed()) {
            print_config({{"cmd", "fuse gradcheck"}, {"seed", std::to_string(seed)}});
            return run_gradcheck(seed);
        } else if (train_cmd->parsed()) {
            std::ifstream cf(train_config);
            if (!cf) throw rf::IoError("cannot open " + train_config);
            std::stringstream ss;
            ss << cf.rdbuf();
            rf::net::NetConfig cfg = rf::net::config_from_json(ss.str());
            if (train_data.empty()) throw rf::RangeError("train: --data is required");
            print_config({{"cmd", "train"},
                          {"config", train_config},
                          {"data", train_data},
                          {"out", train_out},
                          {"fusion", rf::net::to_string(cfg.fusion)},
                          {"modality", rf::net::to_string(cfg.modality)},
                          {"iterations", std::to_string(cfg.iterations)},
                          {"seed", std::to_string(cfg.seed)}});
            const auto train_set = rf::net::load_split(train_data, "train", cfg.modality);
            const auto val_set = rf::net::load_split(train_data, "val", cfg.modality);
            const auto result = rf::net::train(cfg, train_set, val_set);
            rf::net::save_model(result.net, train_out);
            std::cout << "final_loss " << result.loss_curve.back() << "\n";
            std::cout << "best_val_miou " << result.best_val_miou << "\n";
        } else if (eval_cmd->parsed()) {
            print_config({{"cmd", "eval"}, {"model", eval_model}, {"data", eval_data},
                          {"split", eval_split}, {"out", eval_out}});
            const auto net = rf::net::load_model(eval_model);
            const auto data = rf::net::load_split(eval_data, eval_split, net.cfg.modality);
            rf::metrics::ConfusionCounts counts(net.cfg.classes);
            std::vector<std::vector<double>> scores(static_cast<std::size_t>(net.cfg.classes));
            std::vector<int> gts;
            for (const auto& item : data.items) {
                const auto inf = rf::net::infer(net, item.rgb, item.feat);
                counts.merge(rf::metrics::confusion(inf.labels, item.labels, net.cfg.classes));
                for (int v = 0; v < item.labels.height; ++v) {
                    for (int u = 0; u < item.labels.width; ++u) {
                        gts.push_back(item.labels.at(u, v));
                        for (int c = 0; c < net.cfg.classes; ++c) {
                            scores[static_cast<std::size_t>(c)].push_back(inf.probs.at(v, u, c));
                        }
                    }
                }
            }
            std::vector<std::optional<rf::metrics::PrCurve>> curves(
                static_cast<std::size_t>(net.cfg.classes));
            const std::filesystem::path out_path(eval_out);
            for (int c = 1; c < net.cfg.classes; ++c) {
                try {
                    curves[static_cast<std::size_t>(c)] =
                        rf::metrics::pr_curve(scores[static_cast<std::size_t>(c)], gts, c);
                    rf::metrics::write_pr_csv(*curves[static_cast<std::size_t>(c)],
                                              out_path.parent_path() /
                                                  ("pr_" + std::to_string(c) + ".csv"));
                } catch (const rf::UndefinedMetricError& e) {
                    log_info(std::string("pr_curve skipped: ") + e.what());
                }
            }
            const auto report = rf::metrics::make_report(counts, curves);
            rf::metrics::write_report_csv(report, out_path);
            std::cout << "mIoU " << report.mean_iou << "\n";
            std::cout << "mFsc " << report.mean_fsc << "\n";
            if (report.mean_ap.has_value()) std::cout << "mAP " << *report.mean_ap << "\n";
        } else if (ablate_cmd->parsed()) {
            print_config({{"cmd", "ablate"}, {"data", ab_data}, {"seeds", ab_seeds},
                          {"out", ab_out}, {"threads", std::to_string(threads)}});
            rf::net::NetConfig base;
            if (ab_iterations > 0) base.iterations = ab_iterations;
            std::vector<rf::net::Fusion> variants;
            for (const auto& v : ab_variants) variants.push_back(rf::net::fusion_from_string(v));
            std::vector<rf::net::Modality> modalities;
            for (const auto& m : ab_modalities) modalities.push_back(rf::net::modality_from_string(m));
            const auto rows = rf::net::ablation(ab_data, variants, modalities,
                                                parse_seed_list(ab_seeds), base, threads);
            rf::net::write_ablation_csv(rows, ab_out);
            for (const auto& row : rows) {
                std::cout << rf::net::to_string(row.variant) << " " << rf::net::to_string(row.modality)
                          << " miou " << row.miou_mean << " +/- " << row.miou_std;
                if (row.eta.has_value()) std::cout << " eta " << *row.eta;
                std::cout << "\n";
            }
        }
    } catch (const rf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
