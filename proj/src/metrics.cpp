#include "derender/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "derender/common.hpp"
#include "derender/rng.hpp"
#include "derender/rotation.hpp"

namespace derender::eval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Shortest-augmenting-path assignment over an n x m matrix, n <= m.
// Returns col_of_row with exactly n entries.
std::vector<int> solve_rows_le_cols(const Eigen::MatrixXd& a) {
    int n = static_cast<int>(a.rows()), m = static_cast<int>(a.cols());
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(m) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(m) + 1, 0), way(static_cast<std::size_t>(m) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(m) + 1, kInf);
        std::vector<bool> used(static_cast<std::size_t>(m) + 1, false);
        do {
            used[static_cast<std::size_t>(j0)] = true;
            int i0 = p[static_cast<std::size_t>(j0)], j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> col_of_row(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j)
        if (p[static_cast<std::size_t>(j)] != 0) col_of_row[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return col_of_row;
}

}  // namespace

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
    require(cost.allFinite(), Errc::non_finite, "assignment cost matrix has non-finite entries");
    int rows = static_cast<int>(cost.rows()), cols = static_cast<int>(cost.cols());
    Assignment out;
    if (rows == 0 || cols == 0) {
        for (int i = 0; i < rows; ++i) out.unmatched_pred.push_back(i);
        for (int j = 0; j < cols; ++j) out.unmatched_gt.push_back(j);
        return out;
    }

    if (rows <= cols) {
        std::vector<int> col_of_row = solve_rows_le_cols(cost);
        for (int i = 0; i < rows; ++i) out.pairs.emplace_back(i, col_of_row[static_cast<std::size_t>(i)]);
    } else {
        std::vector<int> row_of_col = solve_rows_le_cols(cost.transpose());
        for (int j = 0; j < cols; ++j) out.pairs.emplace_back(row_of_col[static_cast<std::size_t>(j)], j);
        std::sort(out.pairs.begin(), out.pairs.end());
    }

    std::vector<bool> pred_used(static_cast<std::size_t>(rows), false), gt_used(static_cast<std::size_t>(cols), false);
    for (auto [i, j] : out.pairs) {
        pred_used[static_cast<std::size_t>(i)] = true;
        gt_used[static_cast<std::size_t>(j)] = true;
        out.total_cost += cost(i, j);
    }
    for (int i = 0; i < rows; ++i)
        if (!pred_used[static_cast<std::size_t>(i)]) out.unmatched_pred.push_back(i);
    for (int j = 0; j < cols; ++j)
        if (!gt_used[static_cast<std::size_t>(j)]) out.unmatched_gt.push_back(j);
    return out;
}

double object_cost(const scene::ObjectRecord& pred, const scene::ObjectRecord& gt) {
    double c = (pred.location - gt.location).norm();
    if (pred.shape != gt.shape) c += 1.0;
    if (pred.size != gt.size) c += 1.0;
    if (pred.color != gt.color) c += 1.0;
    if (pred.material != gt.material) c += 1.0;
    return c;
}

Assignment match_objects(const scene::SceneProgram& pred, const scene::SceneProgram& gt) {
    Eigen::MatrixXd cost(pred.objects.size(), gt.objects.size());
    for (int i = 0; i < cost.rows(); ++i)
        for (int j = 0; j < cost.cols(); ++j)
            cost(i, j) = object_cost(pred.objects[static_cast<std::size_t>(i)], gt.objects[static_cast<std::size_t>(j)]);
    return solve_assignment(cost);
}

namespace {

std::string shape_category(const std::string& shape) {
    std::size_t us = shape.find('_');
    return us == std::string::npos ? shape : shape.substr(0, us);
}

}  // namespace

std::map<std::string, double> attribute_metrics(const Assignment& assign, const scene::SceneProgram& pred,
                                                const scene::SceneProgram& gt) {
    struct Tally {
        long correct = 0, total = 0;
        bool applicable = false;
    };
    std::map<std::string, Tally> tallies;
    for (auto& name : {"shape_acc", "size_acc", "color_acc", "material_acc", "category_acc"}) tallies[name];

    // An attribute applies when any gt object carries it.
    for (const auto& o : gt.objects) {
        tallies["shape_acc"].applicable |= !o.shape.empty();
        tallies["category_acc"].applicable |= !o.shape.empty();
        tallies["size_acc"].applicable |= !o.size.empty();
        tallies["color_acc"].applicable |= !o.color.empty();
        tallies["material_acc"].applicable |= !o.material.empty();
    }

    for (auto [i, j] : assign.pairs) {
        const auto& p = pred.objects[static_cast<std::size_t>(i)];
        const auto& g = gt.objects[static_cast<std::size_t>(j)];
        auto tally = [&](const char* key, bool hit) {
            ++tallies[key].total;
            tallies[key].correct += hit ? 1 : 0;
        };
        tally("shape_acc", p.shape == g.shape);
        tally("category_acc", shape_category(p.shape) == shape_category(g.shape));
        tally("size_acc", p.size == g.size);
        tally("color_acc", p.color == g.color);
        tally("material_acc", p.material == g.material);
    }

    std::map<std::string, double> out;
    for (const auto& [name, t] : tallies) {
        if (!t.applicable) {
            out[name] = kNaN;
        } else if (t.total == 0) {
            out[name] = 100.0;
        } else {
            out[name] = 100.0 * static_cast<double>(t.correct) / static_cast<double>(t.total);
        }
    }
    return out;
}

double count_error(const std::vector<scene::SceneProgram>& preds, const std::vector<scene::SceneProgram>& gts) {
    require(preds.size() == gts.size(), Errc::length_mismatch, "prediction/gt scene counts differ");
    require(!gts.empty(), Errc::empty_input, "no scenes to score");
    double total = 0.0;
    for (std::size_t k = 0; k < gts.size(); ++k)
        total += std::abs(static_cast<double>(preds[k].objects.size()) - static_cast<double>(gts[k].objects.size()));
    return total / static_cast<double>(gts.size());
}

PoseMetrics pose_metrics(const Assignment& assign, const scene::SceneProgram& pred, const scene::SceneProgram& gt) {
    PoseMetrics out;
    for (auto [i, j] : assign.pairs) {
        const auto& p = pred.objects[static_cast<std::size_t>(i)];
        const auto& g = gt.objects[static_cast<std::size_t>(j)];
        out.l2 += (p.location - g.location).norm();
        out.geodesic_deg += rot::geodesic_deg(p.rotation, g.rotation);
        ++out.pairs;
    }
    if (out.pairs > 0) {
        out.l2 /= out.pairs;
        out.geodesic_deg /= out.pairs;
    }
    return out;
}

double chamfer_points(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b) {
    require(!a.empty() && !b.empty(), Errc::empty_input, "chamfer needs non-empty point sets");
    auto directed = [](const std::vector<Eigen::Vector3d>& from, const std::vector<Eigen::Vector3d>& to) {
        double sum = 0.0;
        for (const auto& p : from) {
            double best = kInf;
            for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
            sum += best;
        }
        return sum / static_cast<double>(from.size());
    };
    return directed(a, b) + directed(b, a);
}

double chamfer_scene(const scene::SceneProgram& pred, const scene::SceneProgram& gt,
                     const scene::AttributeCatalog& catalog, int points_per_object, std::uint64_t seed) {
    require(!pred.objects.empty() && !gt.objects.empty(), Errc::empty_scene, "chamfer of an empty scene");
    auto cloud = [&](const scene::SceneProgram& s) {
        std::vector<Eigen::Vector3d> pts;
        for (std::size_t k = 0; k < s.objects.size(); ++k) {
            auto obj_pts = scene::sample_surface_points(s.objects[k], points_per_object, derive_seed(seed, k), catalog);
            pts.insert(pts.end(), obj_pts.begin(), obj_pts.end());
        }
        return pts;
    };
    return chamfer_points(cloud(pred), cloud(gt));
}

double memorization_ratio(const std::vector<std::string>& predicted, const std::set<std::string>& train_values,
                          long value_domain) {
    require(!predicted.empty(), Errc::empty_input, "no predicted values");
    require(!train_values.empty(), Errc::empty_input, "no training values");
    require(value_domain > static_cast<long>(train_values.size()), Errc::invalid_config,
            "value_domain must exceed the training set size");
    long hits_in = 0;
    for (const auto& p : predicted) hits_in += train_values.count(p) != 0 ? 1 : 0;
    long hits_out = static_cast<long>(predicted.size()) - hits_in;
    double in_rate = static_cast<double>(hits_in) / static_cast<double>(train_values.size());
    double out_rate = static_cast<double>(hits_out) /
                      static_cast<double>(value_domain - static_cast<long>(train_values.size()));
    if (hits_out == 0) {
        return hits_in > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return in_rate / out_rate;
}

// Aggregate -------------------------------------------------------------------

std::string MetricReport::csv_header() {
    return "l2,geodesic_deg,count,size_acc,color_acc,material_acc,shape_acc,category_acc,chamfer,malformed_rate";
}

namespace {

std::string num_cell(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string MetricReport::csv_row() const {
    std::string out;
    const double vals[] = {l2,        geodesic_deg, count,     size_acc, color_acc,
                           material_acc, shape_acc, category_acc, chamfer, malformed_rate};
    for (std::size_t i = 0; i < std::size(vals); ++i) {
        if (i) out += ',';
        out += num_cell(vals[i]);
    }
    return out;
}

EvaluateResult evaluate_scenes(const std::vector<std::optional<scene::SceneProgram>>& preds,
                               const std::vector<scene::SceneProgram>& gts,
                               const scene::AttributeCatalog& catalog, const EvaluateOptions& opts) {
    require(preds.size() == gts.size(), Errc::length_mismatch, "prediction/gt scene counts differ");
    require(!gts.empty(), Errc::empty_input, "no scenes to score");

    EvaluateResult out;
    long malformed = 0;
    double count_sum = 0.0;
    double l2_sum = 0.0, geo_sum = 0.0;
    long pose_pairs = 0;
    std::map<std::string, std::pair<long, long>> attr_pool;  // name -> (correct, total)
    std::map<std::string, bool> attr_applicable;
    double chamfer_sum = 0.0;
    long chamfer_scenes = 0;

    static const scene::SceneProgram kEmpty{};

    for (std::size_t k = 0; k < gts.size(); ++k) {
        const scene::SceneProgram& gt = gts[k];
        bool is_malformed = !preds[k].has_value();
        const scene::SceneProgram& pred = is_malformed ? kEmpty : *preds[k];
        malformed += is_malformed ? 1 : 0;

        SceneRow row;
        row.index = static_cast<long>(k);
        row.malformed = is_malformed;
        row.pred_objects = static_cast<int>(pred.objects.size());
        row.gt_objects = static_cast<int>(gt.objects.size());
        row.count_err = std::abs(row.pred_objects - row.gt_objects);
        count_sum += row.count_err;

        Assignment assign = match_objects(pred, gt);
        PoseMetrics pm = pose_metrics(assign, pred, gt);
        if (pm.pairs > 0) {
            row.l2 = pm.l2;
            row.geodesic_deg = pm.geodesic_deg;
            l2_sum += pm.l2 * pm.pairs;
            geo_sum += pm.geodesic_deg * pm.pairs;
            pose_pairs += pm.pairs;
        }
        for (const auto& [name, acc] : attribute_metrics(assign, pred, gt)) {
            if (std::isnan(acc)) continue;
            attr_applicable[name] = true;
        }
        for (auto [i, j] : assign.pairs) {
            const auto& p = pred.objects[static_cast<std::size_t>(i)];
            const auto& g = gt.objects[static_cast<std::size_t>(j)];
            auto pool = [&](const char* key, bool hit) {
                auto& [correct, total] = attr_pool[key];
                ++total;
                correct += hit ? 1 : 0;
            };
            pool("shape_acc", p.shape == g.shape);
            pool("category_acc", shape_category(p.shape) == shape_category(g.shape));
            pool("size_acc", p.size == g.size);
            pool("color_acc", p.color == g.color);
            pool("material_acc", p.material == g.material);
        }

        if (opts.with_chamfer) {
            if (pred.objects.empty() || gt.objects.empty()) {
                row.chamfer = opts.chamfer_penalty;
            } else {
                row.chamfer = chamfer_scene(pred, gt, catalog, opts.chamfer_points, opts.chamfer_seed);
            }
            chamfer_sum += row.chamfer;
            ++chamfer_scenes;
        }
        out.rows.push_back(row);
    }

    MetricReport& rep = out.report;
    rep.malformed_rate = static_cast<double>(malformed) / static_cast<double>(gts.size());
    rep.count = count_sum / static_cast<double>(gts.size());
    if (pose_pairs > 0) {
        rep.l2 = l2_sum / static_cast<double>(pose_pairs);
        rep.geodesic_deg = geo_sum / static_cast<double>(pose_pairs);
    }
    auto attr_value = [&](const char* key) {
        if (!attr_applicable.count(key)) return kNaN;
        auto it = attr_pool.find(key);
        if (it == attr_pool.end() || it->second.second == 0) return 100.0;
        return 100.0 * static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
    };
    rep.shape_acc = attr_value("shape_acc");
    rep.category_acc = attr_value("category_acc");
    rep.size_acc = attr_value("size_acc");
    rep.color_acc = attr_value("color_acc");
    rep.material_acc = attr_value("material_acc");
    if (opts.with_chamfer && chamfer_scenes > 0) rep.chamfer = chamfer_sum / static_cast<double>(chamfer_scenes);
    return out;
}

}  // namespace derender::eval
