#include "roadfusion/fusionnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include <json.hpp>

#include "roadfusion/disparity_transform.hpp"
#include "roadfusion/error.hpp"
#include "roadfusion/features.hpp"
#include "roadfusion/io.hpp"
#include "roadfusion/metrics.hpp"
#include "roadfusion/synth.hpp"

namespace rf::net {

namespace {

using nlohmann::json;

const std::map<std::string, Fusion>& fusion_names() {
    static const std::map<std::string, Fusion> names = {
        {"addition", Fusion::addition},   {"concatenation", Fusion::concatenation},
        {"dfm-first", Fusion::dfm_first}, {"dfm-last", Fusion::dfm_last},
        {"dfm-all", Fusion::dfm_all},     {"scale-rgb2", Fusion::scale_rgb2},
    };
    return names;
}

const std::map<std::string, Modality>& modality_names() {
    static const std::map<std::string, Modality> names = {
        {"rgb", Modality::rgb},       {"disparity", Modality::disparity},
        {"normal", Modality::normal}, {"elevation", Modality::elevation},
        {"hha", Modality::hha},       {"tdisp", Modality::tdisp},
    };
    return names;
}

}  // namespace

Fusion fusion_from_string(const std::string& s) {
    const auto it = fusion_names().find(s);
    if (it == fusion_names().end()) throw RangeError("unknown fusion variant '" + s + "'");
    return it->second;
}

std::string to_string(Fusion f) {
    for (const auto& [name, val] : fusion_names()) {
        if (val == f) return name;
    }
    return "?";
}

Modality modality_from_string(const std::string& s) {
    const auto it = modality_names().find(s);
    if (it == modality_names().end()) throw RangeError("unknown modality '" + s + "'");
    return it->second;
}

std::string to_string(Modality m) {
    for (const auto& [name, val] : modality_names()) {
        if (val == m) return name;
    }
    return "?";
}

int modality_channels(Modality m) {
    switch (m) {
        case Modality::rgb:
        case Modality::normal:
        case Modality::hha:
            return 3;
        default:
            return 1;
    }
}

NetConfig config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config json: ") + e.what());
    }
    NetConfig cfg;
    try {
        if (j.contains("width")) cfg.width = j["width"].get<int>();
        if (j.contains("height")) cfg.height = j["height"].get<int>();
        if (j.contains("stage_channels")) cfg.stage_channels = j["stage_channels"].get<std::vector<int>>();
        if (j.contains("fusion")) cfg.fusion = fusion_from_string(j["fusion"].get<std::string>());
        if (j.contains("classes")) cfg.classes = j["classes"].get<int>();
        if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
        if (j.contains("momentum")) cfg.momentum = j["momentum"].get<double>();
        if (j.contains("iterations")) cfg.iterations = j["iterations"].get<int>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("modality")) cfg.modality = modality_from_string(j["modality"].get<std::string>());
        if (j.contains("class_weighting")) cfg.class_weighting = j["class_weighting"].get<bool>();
        if (j.contains("eval_interval")) cfg.eval_interval = j["eval_interval"].get<int>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("config json: ") + e.what());
    }
    return cfg;
}

std::string config_to_json(const NetConfig& cfg) {
    json j;
    j["width"] = cfg.width;
    j["height"] = cfg.height;
    j["stage_channels"] = cfg.stage_channels;
    j["fusion"] = to_string(cfg.fusion);
    j["classes"] = cfg.classes;
    j["lr"] = cfg.lr;
    j["momentum"] = cfg.momentum;
    j["iterations"] = cfg.iterations;
    j["seed"] = cfg.seed;
    j["modality"] = to_string(cfg.modality);
    j["class_weighting"] = cfg.class_weighting;
    j["eval_interval"] = cfg.eval_interval;
    return j.dump(2);
}

bool Network::stage_uses_dfm(int stage) const {
    switch (cfg.fusion) {
        case Fusion::dfm_all: return true;
        case Fusion::dfm_first: return stage == 0;
        case Fusion::dfm_last: return stage == static_cast<int>(cfg.stage_channels.size()) - 1;
        default: return false;
    }
}

std::vector<Tensor*> Network::parameters() {
    std::vector<Tensor*> out;
    auto push_conv = [&](ConvParams& c) {
        out.push_back(&c.w);
        out.push_back(&c.b);
    };
    for (auto& c : enc_rgb) push_conv(c);
    for (auto& c : enc_feat) push_conv(c);
    for (std::size_t s = 0; s < concat_proj.size(); ++s) push_conv(concat_proj[s]);
    for (auto& d : dfm_params) {
        out.push_back(&d.omega1_w);
        out.push_back(&d.omega1_b);
        out.push_back(&d.omega2_w);
        out.push_back(&d.omega2_b);
    }
    for (auto& c : decoder) push_conv(c);
    push_conv(head);
    return out;
}

std::vector<const Tensor*> Network::parameters() const {
    auto mut = const_cast<Network*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : parameters()) n += t->size();
    return n;
}

namespace {

ConvParams init_conv(int kh, int kw, int cin, int cout, Rng& rng) {
    ConvParams p;
    const double stddev = std::sqrt(2.0 / (kh * kw * cin));
    p.w = Tensor::randn({kh, kw, cin, cout}, rng, stddev);
    p.b = Tensor::zeros({cout});
    return p;
}

}  // namespace

Network build(const NetConfig& cfg) {
    if (cfg.stage_channels.empty()) throw RangeError("config needs at least one encoder stage");
    if (cfg.classes < 2) throw RangeError("config needs at least 2 classes");
    const int stages = static_cast<int>(cfg.stage_channels.size());
    if (cfg.width % (1 << stages) != 0 || cfg.height % (1 << stages) != 0) {
        throw RangeError("input dims must be divisible by 2^stages");
    }
    Network net;
    net.cfg = cfg;
    net.feat_channels = modality_channels(cfg.modality);
    Rng rng(cfg.seed ^ 0x6e65745f696e6974ull);

    int cin_r = 3, cin_t = net.feat_channels;
    for (int s = 0; s < stages; ++s) {
        const int ch = cfg.stage_channels[static_cast<std::size_t>(s)];
        net.enc_rgb.push_back(init_conv(3, 3, cin_r, ch, rng));
        net.enc_feat.push_back(init_conv(3, 3, cin_t, ch, rng));
        if (cfg.fusion == Fusion::concatenation) {
            net.concat_proj.push_back(init_conv(1, 1, 2 * ch, ch, rng));
        }
        if (net.stage_uses_dfm(s)) {
            net.dfm_params.push_back(dfm::DfmParams::identity_init(ch, ch));
        } else if (cfg.fusion == Fusion::dfm_first || cfg.fusion == Fusion::dfm_last ||
                   cfg.fusion == Fusion::dfm_all) {
            net.dfm_params.push_back(dfm::DfmParams::zeros(1, 1));  // placeholder, unused stage
        }
        cin_r = ch;
        cin_t = ch;
    }
    // Decoder mirrors the encoder stage count; all stages after the first
    // keep the first decoder width.
    int cin_d = cfg.stage_channels.back();
    const int dec_ch = cfg.stage_channels.front();
    for (int s = 0; s < stages; ++s) {
        net.decoder.push_back(init_conv(3, 3, cin_d, dec_ch, rng));
        cin_d = dec_ch;
    }
    net.head = init_conv(1, 1, dec_ch, cfg.classes, rng);
    return net;
}

ForwardGraph forward(const Network& net, const Tensor& rgb, const Tensor& feat) {
    if (rgb.rank() != 3 || rgb.dim(0) != net.cfg.height || rgb.dim(1) != net.cfg.width ||
        rgb.dim(2) != 3) {
        throw ShapeError("forward: rgb input must be H x W x 3 matching the config");
    }
    if (feat.rank() != 3 || feat.dim(0) != net.cfg.height || feat.dim(1) != net.cfg.width ||
        feat.dim(2) != net.feat_channels) {
        throw ShapeError("forward: feature input shape does not match the config/modality");
    }

    ForwardGraph g;
    Tape& tape = g.tape;
    g.rgb = tape.leaf(rgb);
    g.feat = tape.leaf(feat);

    // Track leaf ids in the exact order of Network::parameters().
    std::vector<Tape::NodeId> enc_rgb_ids, enc_feat_ids, proj_ids, dfm_ids, dec_ids;
    for (const auto& c : net.enc_rgb) {
        enc_rgb_ids.push_back(tape.leaf(c.w));
        enc_rgb_ids.push_back(tape.leaf(c.b));
    }
    for (const auto& c : net.enc_feat) {
        enc_feat_ids.push_back(tape.leaf(c.w));
        enc_feat_ids.push_back(tape.leaf(c.b));
    }
    for (const auto& c : net.concat_proj) {
        proj_ids.push_back(tape.leaf(c.w));
        proj_ids.push_back(tape.leaf(c.b));
    }
    for (const auto& d : net.dfm_params) {
        dfm_ids.push_back(tape.leaf(d.omega1_w));
        dfm_ids.push_back(tape.leaf(d.omega1_b));
        dfm_ids.push_back(tape.leaf(d.omega2_w));
        dfm_ids.push_back(tape.leaf(d.omega2_b));
    }
    for (const auto& c : net.decoder) {
        dec_ids.push_back(tape.leaf(c.w));
        dec_ids.push_back(tape.leaf(c.b));
    }
    const Tape::NodeId head_w = tape.leaf(net.head.w);
    const Tape::NodeId head_b = tape.leaf(net.head.b);

    const int stages = static_cast<int>(net.cfg.stage_channels.size());
    Tape::NodeId r = g.rgb, t = g.feat;
    for (int s = 0; s < stages; ++s) {
        r = tape.relu(tape.conv2d(r, enc_rgb_ids[2 * s], enc_rgb_ids[2 * s + 1], Padding::same, 2));
        t = tape.relu(tape.conv2d(t, enc_feat_ids[2 * s], enc_feat_ids[2 * s + 1], Padding::same, 2));
        switch (net.cfg.fusion) {
            case Fusion::addition:
                r = tape.add(r, t);
                break;
            case Fusion::concatenation:
                r = tape.conv2d(tape.concat_channels(r, t), proj_ids[2 * s], proj_ids[2 * s + 1],
                                Padding::same, 1);
                break;
            case Fusion::scale_rgb2:
                r = tape.scale(r, 2.0);
                break;
            default: {
                if (net.stage_uses_dfm(s)) {
                    const int ch = net.cfg.stage_channels[static_cast<std::size_t>(s)];
                    dfm::DfmParamNodes nodes;
                    nodes.omega1_w = dfm_ids[4 * s];
                    nodes.omega1_b = dfm_ids[4 * s + 1];
                    nodes.omega2_w = dfm_ids[4 * s + 2];
                    nodes.omega2_b = dfm_ids[4 * s + 3];
                    r = dfm::dfm_attach(tape, r, t, nodes, 3, ch, ch);
                } else {
                    r = tape.add(r, t);
                }
                break;
            }
        }
    }
    Tape::NodeId d = r;
    for (int s = 0; s < stages; ++s) {
        d = tape.relu(tape.conv2d(tape.upsample_nearest2x(d), dec_ids[2 * s], dec_ids[2 * s + 1],
                                  Padding::same, 1));
    }
    g.logits = tape.conv2d(d, head_w, head_b, Padding::same, 1);

    g.param_nodes.reserve(enc_rgb_ids.size() + enc_feat_ids.size() + proj_ids.size() +
                          dfm_ids.size() + dec_ids.size() + 2);
    for (auto id : enc_rgb_ids) g.param_nodes.push_back(id);
    for (auto id : enc_feat_ids) g.param_nodes.push_back(id);
    for (auto id : proj_ids) g.param_nodes.push_back(id);
    for (auto id : dfm_ids) g.param_nodes.push_back(id);
    for (auto id : dec_ids) g.param_nodes.push_back(id);
    g.param_nodes.push_back(head_w);
    g.param_nodes.push_back(head_b);
    return g;
}

namespace {

Tensor rgb_to_tensor(const RgbImage& img) {
    Tensor t({img.height, img.width, 3});
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            const std::size_t i = img.idx(u, v);
            for (int c = 0; c < 3; ++c) t.at(v, u, c) = img.data[i + c] / 255.0;
        }
    }
    return t;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Tensor feature_tensor(Modality m, const DisparityImage& disp, const RgbImage& rgb,
                      const CameraModel& cam) {
    const int h = disp.height, w = disp.width;
    switch (m) {
        case Modality::rgb:
            return rgb_to_tensor(rgb);
        case Modality::disparity: {
            Tensor t({h, w, 1});
            for (int v = 0; v < h; ++v)
                for (int u = 0; u < w; ++u) t.at(v, u, 0) = clamp01(disp.at(u, v) / 64.0);
            return t;
        }
        case Modality::normal: {
            const auto f = feat::normal_image(disp, cam);
            Tensor t({h, w, 3});
            for (int v = 0; v < h; ++v)
                for (int u = 0; u < w; ++u)
                    for (int c = 0; c < 3; ++c) t.at(v, u, c) = (f.map.at(v, u, c) + 1.0) / 2.0;
            return t;
        }
        case Modality::elevation: {
            const auto mask = dt::coarse_road_mask(disp).mask;
            const auto f = feat::elevation_map(disp, cam, mask);
            Tensor t({h, w, 1});
            for (int v = 0; v < h; ++v)
                for (int u = 0; u < w; ++u)
                    t.at(v, u, 0) = clamp01((f.map.at(v, u, 0) + 0.5) / 2.5);
            return t;
        }
        case Modality::hha: {
            const auto mask = dt::coarse_road_mask(disp).mask;
            return feat::hha_image(disp, cam, mask).map;
        }
        case Modality::tdisp: {
            const auto res = dt::run_pipeline(disp);
            Tensor t({h, w, 1});
            for (int v = 0; v < h; ++v)
                for (int u = 0; u < w; ++u)
                    t.at(v, u, 0) = clamp01(res.transformed.at(u, v) / 64.0);
            return t;
        }
    }
    throw RangeError("unknown modality");
}

}  // namespace

Dataset load_split(const std::filesystem::path& data_dir, const std::string& split,
                   Modality modality) {
    namespace fs = std::filesystem;
    const fs::path base = split.empty() ? data_dir : data_dir / split;
    const fs::path disp_dir = base / "disp";
    if (!fs::exists(disp_dir)) throw IoError("no such split directory: " + disp_dir.string());

    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(disp_dir)) {
        if (e.path().extension() == ".pgm") ids.push_back(e.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw EmptyInputError("split has no scenes: " + disp_dir.string());

    CameraModel cam;
    if (fs::exists(data_dir / "camera.txt")) {
        cam = io::read_camera(data_dir / "camera.txt");
    } else {
        const auto first = io::read_pgm16(disp_dir / (ids[0] + ".pgm"));
        cam = synth::scene_camera(first.width, first.height);
    }

    Dataset ds;
    for (const auto& id : ids) {
        TrainItem item;
        const auto disp = io::read_pgm16(disp_dir / (id + ".pgm"));
        const auto rgb = io::read_ppm(base / "rgb" / (id + ".ppm"));
        item.labels = io::read_label_pgm(base / "label" / (id + ".pgm"));
        item.rgb = rgb_to_tensor(rgb);
        item.feat = feature_tensor(modality, disp, rgb, cam);
        ds.items.push_back(std::move(item));
    }
    return ds;
}

namespace {

std::vector<double> class_weights_for(const Dataset& train_set, int classes) {
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(classes), 0);
    std::uint64_t total = 0;
    for (const auto& item : train_set.items) {
        for (auto c : item.labels.classes) {
            if (c == 0 || c >= classes) continue;
            ++counts[c];
            ++total;
        }
    }
    std::vector<double> weights(static_cast<std::size_t>(classes), 0.0);
    int present = 0;
    for (int c = 1; c < classes; ++c) present += counts[c] > 0;
    if (present == 0 || total == 0) throw EmptyInputError("training labels are all unlabeled");
    double sum = 0.0;
    for (int c = 1; c < classes; ++c) {
        if (counts[c] == 0) continue;
        weights[c] = static_cast<double>(total) / (present * static_cast<double>(counts[c]));
        sum += weights[c];
    }
    // Normalize to mean 1 over present classes so lr keeps its usual scale.
    for (int c = 1; c < classes; ++c) weights[c] *= present / sum;
    return weights;
}

}  // namespace

TrainResult train(const NetConfig& cfg, const Dataset& train_set, const Dataset& val_set) {
    if (train_set.items.empty() || val_set.items.empty()) {
        throw EmptyInputError("train/val splits must contain at least one scene each");
    }
    Network net = build(cfg);
    const std::vector<double> weights =
        cfg.class_weighting ? class_weights_for(train_set, cfg.classes) : std::vector<double>{};

    std::vector<Tensor*> params = net.parameters();
    std::vector<Tensor> velocity;
    velocity.reserve(params.size());
    for (Tensor* p : params) velocity.push_back(Tensor::zeros(p->dims()));

    TrainResult result;
    result.loss_curve.reserve(static_cast<std::size_t>(cfg.iterations));
    result.best_val_miou = -1.0;

    Rng order_rng(cfg.seed ^ 0x747261696e5f6f72ull);
    std::vector<std::size_t> order(train_set.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();

    for (int it = 0; it < cfg.iterations; ++it) {
        if (cursor >= order.size()) {
            // Fisher-Yates reshuffle each epoch.
            for (std::size_t i = order.size(); i > 1; --i) {
                const std::size_t j = order_rng.uniform_int(i);
                std::swap(order[i - 1], order[j]);
            }
            cursor = 0;
        }
        const TrainItem& item = train_set.items[order[cursor++]];

        ForwardGraph g = forward(net, item.rgb, item.feat);
        const Tape::NodeId loss_node = g.tape.softmax_ce(g.logits, item.labels, weights, 0);
        const double loss = g.tape.value(loss_node)[0];
        if (!std::isfinite(loss)) {
            throw Error("training diverged (non-finite loss) at iteration " + std::to_string(it));
        }
        result.loss_curve.push_back(loss);
        g.tape.backward(loss_node);

        for (std::size_t p = 0; p < params.size(); ++p) {
            const Tensor& grad = g.tape.grad(g.param_nodes[p]);
            Tensor& vel = velocity[p];
            Tensor& par = *params[p];
            for (std::size_t i = 0; i < par.size(); ++i) {
                vel[i] = cfg.momentum * vel[i] + grad[i];
                par[i] -= cfg.lr * vel[i];
            }
        }

        const bool last = it + 1 == cfg.iterations;
        if ((cfg.eval_interval > 0 && (it + 1) % cfg.eval_interval == 0) || last) {
            const double miou = evaluate_miou(net, val_set);
            if (miou > result.best_val_miou) {
                result.best_val_miou = miou;
                result.best_iteration = it;
                result.net = net;
            }
        }
    }
    if (result.best_iteration < 0) result.net = net;
    return result;
}

Inference infer(const Network& net, const Tensor& rgb, const Tensor& feat) {
    ForwardGraph g = forward(net, rgb, feat);
    const Tensor& logits = g.tape.value(g.logits);
    const int h = logits.dim(0), w = logits.dim(1), cls = logits.dim(2);
    Inference out;
    out.labels = LabelImage(w, h);
    out.probs = Tensor::zeros({h, w, cls});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double mx = logits.at(y, x, 0);
            int arg = 0;
            for (int c = 1; c < cls; ++c) {
                if (logits.at(y, x, c) > mx) {
                    mx = logits.at(y, x, c);
                    arg = c;
                }
            }
            double denom = 0.0;
            for (int c = 0; c < cls; ++c) denom += std::exp(logits.at(y, x, c) - mx);
            for (int c = 0; c < cls; ++c) {
                out.probs.at(y, x, c) = std::exp(logits.at(y, x, c) - mx) / denom;
            }
            out.labels.at(x, y) = static_cast<std::uint8_t>(arg);
        }
    }
    return out;
}

double evaluate_miou(const Network& net, const Dataset& data) {
    metrics::ConfusionCounts counts(net.cfg.classes);
    for (const auto& item : data.items) {
        const Inference inf = infer(net, item.rgb, item.feat);
        counts.merge(metrics::confusion(inf.labels, item.labels, net.cfg.classes));
    }
    double sum = 0.0;
    int n = 0;
    for (int c = 1; c < net.cfg.classes; ++c) {
        if (counts.tp[c] + counts.fn[c] == 0) continue;  // class absent from gt
        sum += metrics::fsc_iou(counts.tp[c], counts.fp[c], counts.fn[c]).iou;
        ++n;
    }
    if (n == 0) throw EmptyInputError("evaluate_miou: no ground-truth classes present");
    return sum / n;
}

void save_model(const Network& net, const std::filesystem::path& path) {
    std::size_t total = net.parameter_count();
    Tensor flat({static_cast<int>(total)});
    std::size_t off = 0;
    for (const Tensor* t : net.parameters()) {
        for (std::size_t i = 0; i < t->size(); ++i) flat[off++] = (*t)[i];
    }
    io::write_tensor(flat, path);
    std::ofstream f(path.string() + ".json");
    if (!f) throw IoError("cannot create " + path.string() + ".json");
    f << config_to_json(net.cfg) << "\n";
}

Network load_model(const std::filesystem::path& path) {
    std::ifstream jf(path.string() + ".json");
    if (!jf) throw IoError("cannot open " + path.string() + ".json");
    std::stringstream ss;
    ss << jf.rdbuf();
    Network net = build(config_from_json(ss.str()));
    const Tensor flat = io::read_tensor(path);
    if (flat.size() != net.parameter_count()) {
        throw FormatError("model parameter count mismatch: file has " +
                          std::to_string(flat.size()) + ", config needs " +
                          std::to_string(net.parameter_count()));
    }
    std::size_t off = 0;
    for (Tensor* t : net.parameters()) {
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = flat[off++];
    }
    return net;
}

namespace {

struct RunOutcome {
    double miou = 0.0;
    double runtime_ms = 0.0;
};

RunOutcome run_once(const NetConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                    const Dataset& test_set) {
    const TrainResult tr = train(cfg, train_set, val_set);
    RunOutcome out;
    out.miou = evaluate_miou(tr.net, test_set);
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& item : test_set.items) {
        (void)infer(tr.net, item.rgb, item.feat);
    }
    const auto t1 = std::chrono::steady_clock::now();
    out.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                     static_cast<double>(test_set.items.size());
    return out;
}

}  // namespace

std::vector<AblationRow> ablation(const std::filesystem::path& data_dir,
                                  const std::vector<Fusion>& variants,
                                  const std::vector<Modality>& modalities,
                                  const std::vector<std::uint64_t>& seeds,
                                  const NetConfig& base_cfg, int threads) {
    if (seeds.size() < 3) throw RangeError("ablation needs at least 3 seeds");
    if (threads < 1) threads = 1;

    std::vector<AblationRow> rows;
    for (const Modality m : modalities) {
        const Dataset train_set = load_split(data_dir, "train", m);
        const Dataset val_set = load_split(data_dir, "val", m);
        const Dataset test_set = load_split(data_dir, "test", m);
        NetConfig sized_cfg = base_cfg;
        sized_cfg.height = train_set.items[0].rgb.dim(0);
        sized_cfg.width = train_set.items[0].rgb.dim(1);

        for (const Fusion f : variants) {
            AblationRow row;
            row.variant = f;
            row.modality = m;
            std::vector<std::future<RunOutcome>> futures;
            std::vector<RunOutcome> outcomes(seeds.size());
            std::size_t next = 0;
            while (next < seeds.size() || !futures.empty()) {
                while (next < seeds.size() && static_cast<int>(futures.size()) < threads) {
                    NetConfig cfg = sized_cfg;
                    cfg.fusion = f;
                    cfg.modality = m;
                    cfg.seed = seeds[next];
                    futures.push_back(std::async(
                        std::launch::async, [cfg, &train_set, &val_set, &test_set] {
                            return run_once(cfg, train_set, val_set, test_set);
                        }));
                    ++next;
                }
                // Futures were launched in seed order; the front one is the oldest.
                outcomes[next - futures.size()] = futures.front().get();
                futures.erase(futures.begin());
            }
            double sum = 0.0, sum_rt = 0.0;
            for (const auto& o : outcomes) {
                row.per_seed_miou.push_back(o.miou);
                sum += o.miou;
                sum_rt += o.runtime_ms;
            }
            row.miou_mean = sum / seeds.size();
            row.runtime_ms = sum_rt / seeds.size();
            double ss = 0.0;
            for (const auto& o : outcomes) ss += (o.miou - row.miou_mean) * (o.miou - row.miou_mean);
            row.miou_std = std::sqrt(ss / seeds.size());
            rows.push_back(std::move(row));
        }
    }
    // Eta vs the addition baseline of the same modality.
    for (auto& row : rows) {
        if (row.variant == Fusion::addition) continue;
        for (const auto& base : rows) {
            if (base.modality == row.modality && base.variant == Fusion::addition) {
                try {
                    row.eta = metrics::eta(100.0 * row.miou_mean, row.runtime_ms,
                                           100.0 * base.miou_mean, base.runtime_ms);
                } catch (const UndefinedMetricError&) {
                    row.eta = std::nullopt;
                }
                break;
            }
        }
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot create " + path.string());
    f << "variant,modality,miou_mean,miou_std,runtime_ms,eta,per_seed_miou\n";
    f.precision(12);
    for (const auto& row : rows) {
        f << to_string(row.variant) << "," << to_string(row.modality) << "," << row.miou_mean
          << "," << row.miou_std << "," << row.runtime_ms << ",";
        if (row.eta.has_value()) f << *row.eta;
        f << ",";
        for (std::size_t i = 0; i < row.per_seed_miou.size(); ++i) {
            if (i) f << ";";
            f << row.per_seed_miou[i];
        }
        f << "\n";
    }
    if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace rf::net
