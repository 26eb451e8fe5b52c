#pragma once

// End-to-end run plumbing shared by the CLI and the test harnesses: dataset
// generation to disk, model training from a dataset directory, checkpoint or
// program-file evaluation, and run manifests.  Every run writes a
// manifest.json next to its outputs and guards partial output with a
// `.partial` marker that is removed only on success.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "derender/datagen.hpp"
#include "derender/metrics.hpp"
#include "derender/net.hpp"

namespace derender::pipe {

// $DERENDER_DATA_DIR when set, otherwise ./data.
std::filesystem::path default_data_dir();

// The attribute catalog a task's programs are written against.
scene::AttributeCatalog task_catalog(const std::string& task);

// Marker file guarding a directory whose contents are being produced.
class PartialMarker {
  public:
    explicit PartialMarker(const std::filesystem::path& dir);
    void complete();  // removes the marker; absent call leaves it in place
    ~PartialMarker() = default;

  private:
    std::filesystem::path marker_;
    bool completed_ = false;
};

struct ManifestInfo {
    std::string command;        // subcommand name
    nlohmann::json config;      // effective configuration snapshot
    std::uint64_t seed = 0;
    std::vector<std::string> inputs, outputs;  // paths as given
    double duration_seconds = 0.0;
};
void write_manifest(const std::filesystem::path& dir, const ManifestInfo& info);

// gen ------------------------------------------------------------------------

struct GenSpec {
    std::string task;  // cogent | dot2d | so3 | scene6dof
    long n = 1000;     // records in the requested split
    long n_val = 0;    // dot2d only: records per evaluation split (0 = none)
    std::uint64_t seed = 1;
    std::string split = "train";  // cogent/so3: train | val_id | val_ood
    char condition = 'A';         // cogent
    std::string dist = "checkerboard";       // dot2d: checkerboard | uniform
    std::string region = "id";               // so3: id | gaps
    std::string scene6dof_split = "train";   // train | ood_texture | ood_shape
    int threads = 1;
    nlohmann::json to_json() const;
};

struct GenResult {
    std::vector<std::filesystem::path> files;  // JSONL files written
};
GenResult run_gen(const GenSpec& spec, const std::filesystem::path& out_dir);

// train ----------------------------------------------------------------------

struct TrainSpec {
    std::string mode = "float";  // float | char
    std::string task = "dot2d";  // training is defined for the rasterised dot task
    std::filesystem::path data_dir;
    net::ModelConfig model;  // vocab_size/mode are filled from the data
    net::TrainConfig train;
    nlohmann::json to_json() const;
};

// Pinned dot2d defaults (batch, schedule, model shape); seed is taken from
// the caller.
TrainSpec dot2d_train_defaults(const std::filesystem::path& data_dir, const std::string& mode, std::uint64_t seed);

struct TrainOutcome {
    net::TrainResult result;
    std::filesystem::path checkpoint;  // <out>/checkpoint.bin
    std::filesystem::path trace_csv;   // <out>/metrics.csv
};
TrainOutcome run_train(const TrainSpec& spec, const std::filesystem::path& out_dir);

// Loads a dataset split into training samples (images + token streams +
// exact numeric targets).
net::TrainData load_dot2d_data(const std::filesystem::path& data_dir, const std::string& mode,
                               const std::string& train_file = "train.jsonl",
                               const std::string& val_file = "");

// eval -----------------------------------------------------------------------

struct EvalSpec {
    std::string task;
    std::filesystem::path gt_file;
    std::filesystem::path pred_checkpoint;  // exactly one of checkpoint / pred_file
    std::filesystem::path pred_file;        // JSONL with {"index", "program"} lines
    dsl::RotationRepr three_value_repr = dsl::RotationRepr::ext_euler;
    bool with_chamfer = false;
    int chamfer_points = 256;
    std::uint64_t chamfer_seed = 0;
    int threads = 1;
    nlohmann::json to_json() const;
};

struct EvalOutcome {
    eval::EvaluateResult result;
    std::vector<std::optional<dsl::ProgramText>> predictions;  // nullopt where decode failed outright
};
EvalOutcome run_eval(const EvalSpec& spec, const std::filesystem::path& out_dir);

// Decode helper shared by run_eval and the experiment harness: greedy decode
// + numeric substitution for every record of a rasterised dataset.
std::vector<std::optional<dsl::ProgramText>> decode_dataset(const net::Checkpoint& ck,
                                                            const std::vector<gen::DatasetRecord>& records,
                                                            const std::filesystem::path& data_dir, int threads = 1);

}  // namespace derender::pipe
