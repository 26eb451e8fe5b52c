#pragma once

// Scene-level evaluation: optimal object matching plus the attribute, count,
// pose, chamfer and memorization metrics computed over matched scenes.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "derender/scene.hpp"

namespace derender::eval {

struct Assignment {
    std::vector<std::pair<int, int>> pairs;  // (pred index, gt index), ascending pred index
    std::vector<int> unmatched_pred;
    std::vector<int> unmatched_gt;
    double total_cost = 0.0;  // sum of matched cell costs, accumulated in pair order
};

// Minimum-cost assignment of min(rows, cols) pairs (Jonker-Volgenant style
// shortest augmenting paths).  Cost entries must be finite.
Assignment solve_assignment(const Eigen::MatrixXd& cost);

// Pairwise object cost: location L2 distance plus 1 per mismatched
// categorical attribute (shape, size, color, material).
double object_cost(const scene::ObjectRecord& pred, const scene::ObjectRecord& gt);

Assignment match_objects(const scene::SceneProgram& pred, const scene::SceneProgram& gt);

// Percent accuracies over matched pairs: shape_acc, size_acc, color_acc,
// material_acc, category_acc ("chairs_0055" -> "chairs").  An attribute no gt
// object carries is reported as NaN; with zero matched pairs every defined
// attribute reports 100 (no observed errors; count_error carries the miss).
std::map<std::string, double> attribute_metrics(const Assignment& assign, const scene::SceneProgram& pred,
                                                const scene::SceneProgram& gt);

// Mean |#pred - #gt| over scene pairs.
double count_error(const std::vector<scene::SceneProgram>& preds, const std::vector<scene::SceneProgram>& gts);

struct PoseMetrics {
    double l2 = 0.0;            // mean location error over matched pairs
    double geodesic_deg = 0.0;  // mean rotation error over matched pairs
    int pairs = 0;
};
PoseMetrics pose_metrics(const Assignment& assign, const scene::SceneProgram& pred, const scene::SceneProgram& gt);

// Sum of directed mean squared nearest-neighbour distances (both directions).
double chamfer_points(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b);

// Scene chamfer over surface samples; each object's cloud is seeded by its
// index so chamfer_scene(a, b, ...) == chamfer_scene(b, a, ...) exactly.
// Throws EmptyScene when either side has no objects.
double chamfer_scene(const scene::SceneProgram& pred, const scene::SceneProgram& gt,
                     const scene::AttributeCatalog& catalog, int points_per_object, std::uint64_t seed);

// Per-value likelihood ratio of predicting trained vs untrained values:
// (hits_in_train / |train_values|) / (hits_outside / (value_domain -
// |train_values|)).  1 ~ chance, >1 ~ the model prefers training strings;
// +inf when every prediction is a training string.  value_domain counts all
// representable values (e.g. 1001 for 3-decimal strings in [0,1]) and must
// exceed |train_values|.
double memorization_ratio(const std::vector<std::string>& predicted, const std::set<std::string>& train_values,
                          long value_domain);

// Aggregate report -------------------------------------------------------------

struct MetricReport {
    double l2 = std::numeric_limits<double>::quiet_NaN();
    double geodesic_deg = std::numeric_limits<double>::quiet_NaN();
    double count = std::numeric_limits<double>::quiet_NaN();
    double size_acc = std::numeric_limits<double>::quiet_NaN();
    double color_acc = std::numeric_limits<double>::quiet_NaN();
    double material_acc = std::numeric_limits<double>::quiet_NaN();
    double shape_acc = std::numeric_limits<double>::quiet_NaN();
    double category_acc = std::numeric_limits<double>::quiet_NaN();
    double chamfer = std::numeric_limits<double>::quiet_NaN();
    double malformed_rate = 0.0;

    static std::string csv_header();
    std::string csv_row() const;
};

struct SceneRow {
    long index = 0;
    int pred_objects = 0;
    int gt_objects = 0;
    double count_err = 0.0;
    double l2 = std::numeric_limits<double>::quiet_NaN();
    double geodesic_deg = std::numeric_limits<double>::quiet_NaN();
    double chamfer = std::numeric_limits<double>::quiet_NaN();
    bool malformed = false;
};

struct EvaluateOptions {
    bool with_chamfer = false;
    int chamfer_points = 256;
    std::uint64_t chamfer_seed = 0;
    double chamfer_penalty = std::numeric_limits<double>::infinity();  // empty/malformed scenes
};

struct EvaluateResult {
    MetricReport report;
    std::vector<SceneRow> rows;
};

// Index-aligned prediction/gt scene pairs; nullopt predictions count as
// malformed and score as empty scenes.
EvaluateResult evaluate_scenes(const std::vector<std::optional<scene::SceneProgram>>& preds,
                               const std::vector<scene::SceneProgram>& gts,
                               const scene::AttributeCatalog& catalog, const EvaluateOptions& opts = {});

}  // namespace derender::eval
