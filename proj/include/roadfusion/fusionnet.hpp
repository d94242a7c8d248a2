#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "roadfusion/dfm.hpp"
#include "roadfusion/tape.hpp"
#include "roadfusion/tensor.hpp"
#include "roadfusion/types.hpp"

namespace rf::net {

// Fusion strategy applied after each encoder stage (the Table-style ablation
// axis). scale_rgb2 is a test-only reference that outputs 2*F_r, matching
// the DFM identity-initialization contract.
enum class Fusion { addition, concatenation, dfm_first, dfm_last, dfm_all, scale_rgb2 };

Fusion fusion_from_string(const std::string& s);
std::string to_string(Fusion f);

// Second-branch input modality.
enum class Modality { rgb, disparity, normal, elevation, hha, tdisp };

Modality modality_from_string(const std::string& s);
std::string to_string(Modality m);
int modality_channels(Modality m);

struct NetConfig {
    int width = 96;
    int height = 64;
    std::vector<int> stage_channels = {8, 16};
    Fusion fusion = Fusion::addition;
    int classes = 3;
    double lr = 0.2;
    double momentum = 0.9;
    int iterations = 600;
    std::uint64_t seed = 1;
    Modality modality = Modality::tdisp;
    bool class_weighting = true;
    int eval_interval = 50;
};

NetConfig config_from_json(const std::string& json_text);
std::string config_to_json(const NetConfig& cfg);

struct ConvParams {
    Tensor w, b;
};

// Two-branch encoder-decoder at toy scale: per stage a stride-2 3x3 conv +
// ReLU in each branch, fusion into the RGB branch, then a nearest-neighbor
// upsampling decoder and a 1x1 classification head.
struct Network {
    NetConfig cfg;
    int feat_channels = 1;
    std::vector<ConvParams> enc_rgb;
    std::vector<ConvParams> enc_feat;
    std::vector<ConvParams> concat_proj;       // per stage, concatenation variant
    std::vector<dfm::DfmParams> dfm_params;    // per stage, dfm variants
    std::vector<ConvParams> decoder;
    ConvParams head;

    bool stage_uses_dfm(int stage) const;
    bool uses_concat() const { return cfg.fusion == Fusion::concatenation; }
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    std::size_t parameter_count() const;
};

Network build(const NetConfig& cfg);

struct ForwardGraph {
    Tape tape;
    Tape::NodeId rgb = -1;
    Tape::NodeId feat = -1;
    Tape::NodeId logits = -1;
    std::vector<Tape::NodeId> param_nodes;  // same order as Network::parameters()
};

// Records one forward pass to the logits on a fresh tape.
ForwardGraph forward(const Network& net, const Tensor& rgb, const Tensor& feat);

struct TrainItem {
    Tensor rgb;   // H x W x 3, [0,1]
    Tensor feat;  // H x W x {1,3}, normalized
    LabelImage labels;
};

struct Dataset {
    std::vector<TrainItem> items;
};

// Loads one split of a synthetic dataset directory and derives the
// second-branch feature for the given modality.
Dataset load_split(const std::filesystem::path& data_dir, const std::string& split,
                   Modality modality);

struct TrainResult {
    Network net;  // parameters of the best validation checkpoint
    std::vector<double> loss_curve;
    double best_val_miou = 0.0;
    int best_iteration = -1;
};

// Full-scene SGD with momentum; checkpoints the best validation mIoU.
// Deterministic given cfg.seed. Throws if the loss turns non-finite.
TrainResult train(const NetConfig& cfg, const Dataset& train_set, const Dataset& val_set);

struct Inference {
    LabelImage labels;
    Tensor probs;  // H x W x classes
};

Inference infer(const Network& net, const Tensor& rgb, const Tensor& feat);

// Mean IoU over classes 1..classes-1 against ground truth labels.
double evaluate_miou(const Network& net, const Dataset& data);

// Writes <path> (flat f32 parameter tensor) and <path>.json (config).
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

struct AblationRow {
    Fusion variant = Fusion::addition;
    Modality modality = Modality::tdisp;
    std::vector<double> per_seed_miou;
    double miou_mean = 0.0;
    double miou_std = 0.0;
    double runtime_ms = 0.0;         // mean forward time per scene
    std::optional<double> eta;       // vs the addition baseline; empty for the baseline row
};

std::vector<AblationRow> ablation(const std::filesystem::path& data_dir,
                                  const std::vector<Fusion>& variants,
                                  const std::vector<Modality>& modalities,
                                  const std::vector<std::uint64_t>& seeds,
                                  const NetConfig& base_cfg, int threads = 1);

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path);

}  // namespace rf::net
