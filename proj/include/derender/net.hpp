#pragma once

// A small from-scratch autoregressive transformer with a numeric regression
// head, trained to emit scene programs from a rasterised view.
//
// Layout per sample: position 0 holds the image embedding (a two-layer MLP
// over the raster), positions 1..P-1 hold token embeddings of ids[0..P-2],
// and the target at position p is ids[p].  In float mode each [NUM] input
// position additionally carries a standardized regression target supervised
// with MSE; the numeric value is read back at that same position.  Both heads
// share the RMS-normed final hidden state: token logits through a linear
// layer, the numeric value through tanh -> linear -> GELU -> linear.
//
// Everything is deterministic: seeded init, seeded batch order, single
// threaded math, greedy argmax decoding with lowest-id tie-breaks.

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "derender/tokens.hpp"

namespace derender::net {

struct ModelConfig {
    int vocab_size = 0;
    int context = 24;  // maximum positions, including the image slot
    int embed = 128;
    int layers = 2;
    int heads = 4;
    int mlp_hidden = 512;
    int numeric_hidden = 64;
    int image_pixels = 64 * 64;
    int encoder_hidden = 256;
    tok::Mode mode = tok::Mode::float_slots;
    int slot_families = 0;  // numeric standardization groups (by slot ordinal)
    double norm_eps = 1e-6;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

struct TensorSpec {
    std::string name;
    int rows = 0, cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

std::vector<TensorSpec> make_tensor_specs(const ModelConfig& cfg);

// Parameter and gradient buffers keep Eigen's preferred alignment so that
// vectorised kernels take the same code path (and the same summation order)
// no matter where the heap happens to place the buffer.  With plain
// std::vector the address mod 32 varies between allocations and training
// results stop being bit-reproducible.
template <typename T>
using AlignedVec = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Model {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    ModelConfig cfg;
    std::vector<TensorSpec> specs;
    AlignedVec<T> params;                  // all tensors, flat, in spec order
    std::vector<double> slot_mu, slot_sigma;  // per slot family (float mode)

    const TensorSpec& spec(std::string_view name) const;
    Eigen::Map<Mat> tensor(std::string_view name);
    Eigen::Map<const Mat> tensor(std::string_view name) const;
};

template <typename T>
Model<T> init_model(const ModelConfig& cfg, std::uint64_t seed);

// One preprocessed record.
struct TrainSample {
    std::vector<float> image;                    // image_pixels floats
    std::vector<int> ids;                        // [BOS] ... [EOS]
    std::vector<std::pair<int, double>> slots;   // ([NUM] index in ids, exact value); float mode
    std::vector<double> gt_values;               // exact numeric literals in text order (both modes)
};

struct Batch {
    int batch = 0;
    int positions = 0;           // P (image slot + tokens), padded across the batch
    std::vector<float> images;   // batch * image_pixels
    std::vector<int> inputs;     // batch * (P-1), pad-filled
    std::vector<int> targets;    // batch * P, -1 to ignore
    struct Slot {
        int b = 0, p = 0, family = 0;
        double target = 0.0;  // standardized
    };
    std::vector<Slot> slots;
};

template <typename T>
Batch make_batch(const Model<T>& m, const std::vector<const TrainSample*>& samples, int pad_id);

struct LossBreakdown {
    double total = 0.0, ce = 0.0, mse = 0.0;
    long tokens = 0, slots = 0;
};

template <typename T>
LossBreakdown compute_loss(const Model<T>& m, const Batch& batch, double w_ce = 1.0, double w_mse = 1.0);

// grads is resized to params.size(); returns the same breakdown.
template <typename T>
LossBreakdown compute_loss_and_grads(const Model<T>& m, const Batch& batch, AlignedVec<T>& grads,
                                     double w_ce = 1.0, double w_mse = 1.0);

// Teacher-forced forward over a batch; probs receives the (batch*P) x vocab
// token softmax and numeric the (batch*P) regression outputs, both optional.
void full_forward(const Model<float>& m, const Batch& batch, Eigen::MatrixXf* probs, Eigen::VectorXf* numeric);

// Central-difference gradient verification on a synthetic batch: every
// parameter tensor contributes `per_tensor` randomly drawn indices.
struct GradCheckReport {
    double max_rel_err = 0.0;
    long checked = 0;
    std::map<std::string, double> per_tensor;  // tensor name -> max rel err
};
GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed, int per_tensor = 4, double eps = 1e-5);

// Training ----------------------------------------------------------------------

struct TrainConfig {
    int steps = 2000;
    int batch_size = 32;
    double lr_max = 1e-3;
    double lr_min = 1e-5;
    int warmup = 100;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
    double w_ce = 1.0, w_mse = 1.0;
    int val_every = 250;
    int val_max = 512;  // cap on validation samples per evaluation
    std::uint64_t seed = 1;
};

struct TrainData {
    tok::Vocabulary vocab;
    tok::Mode mode = tok::Mode::float_slots;
    std::vector<TrainSample> train, val;
};

struct TrainTraceRow {
    int step = 0;
    double lr = 0.0, total = 0.0, ce = 0.0, mse = 0.0;
    double val_metric = 0.0;
    bool has_val = false;
};

struct TrainResult {
    Model<float> model;
    std::vector<TrainTraceRow> trace;
    double final_val = 0.0;
};

// Adam + linear warmup + cosine decay.  Throws DivergenceDetected on a
// non-finite loss.  Validation metric: decoded-value MSE (teacher-forced in
// float mode, greedy-decoded in char mode).
TrainResult train_model(const ModelConfig& cfg, const TrainConfig& tc, const TrainData& data);

// Decoding ------------------------------------------------------------------------

// Lockstep greedy decode with a KV cache; returns per-sample token ids
// ([BOS] ... [EOS], truncated at the context limit).
std::vector<std::vector<int>> greedy_decode(const Model<float>& m, const std::vector<const float*>& images,
                                            const tok::Vocabulary& vocab, int max_tokens = 0);

// Second pass of the two-pass protocol: run the full stream once more and
// collect de-standardized numeric outputs at each [NUM] position.
std::vector<std::vector<double>> numeric_readout(const Model<float>& m, const std::vector<const float*>& images,
                                                 const std::vector<std::vector<int>>& ids,
                                                 const tok::Vocabulary& vocab);

// Checkpoints -----------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const Model<float>& m, const tok::Vocabulary& vocab,
                     const nlohmann::json& meta);

struct Checkpoint {
    Model<float> model;
    tok::Vocabulary vocab;
    nlohmann::json meta;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace derender::net
