#include "derender/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "derender/common.hpp"
#include "derender/rng.hpp"
#include "derender/rotation.hpp"

namespace derender::gen {

namespace {

constexpr double kPi = std::numbers::pi;

// Place objects in the xy plane with a minimum pairwise separation; after
// `max_tries` rejected draws the last candidate is accepted so generation
// always terminates deterministically.
Eigen::Vector2d place_xy(Rng& rng, const std::vector<Eigen::Vector2d>& placed, double range, double min_dist,
                         int max_tries) {
    Eigen::Vector2d p;
    for (int t = 0; t < max_tries; ++t) {
        p = {rng.uniform(-range, range), rng.uniform(-range, range)};
        bool ok = true;
        for (const auto& q : placed) {
            if ((p - q).norm() < min_dist) {
                ok = false;
                break;
            }
        }
        if (ok) break;
    }
    return p;
}

void sort_front_to_back(scene::SceneProgram& s) {
    std::vector<std::size_t> order = scene::front_to_back_order(s);
    std::vector<scene::ObjectRecord> sorted;
    sorted.reserve(s.objects.size());
    for (std::size_t i : order) sorted.push_back(s.objects[i]);
    s.objects = std::move(sorted);
}

}  // namespace

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val_id: return "val_id";
        case Split::val_ood: return "val_ood";
    }
    return "?";
}

Split split_from_name(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val_id") return Split::val_id;
    if (name == "val_ood") return Split::val_ood;
    fail(Errc::invalid_config, "unknown split: '" + std::string(name) + "'");
}

// CoGenT -----------------------------------------------------------------------

CoGenTCondition CoGenTCondition::condition_a() {
    CoGenTCondition c;
    c.id = 'A';
    c.shape_colors = {
        {"cube", {"gray", "blue", "brown", "yellow"}},
        {"cylinder", {"red", "green", "purple", "cyan"}},
        {"sphere", {"gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"}},
    };
    return c;
}

CoGenTCondition CoGenTCondition::condition_b() {
    CoGenTCondition c = condition_a();
    c.id = 'B';
    std::swap(c.shape_colors["cube"], c.shape_colors["cylinder"]);
    return c;
}

CoGenTCondition CoGenTCondition::from_id(char id) {
    if (id == 'A' || id == 'a') return condition_a();
    if (id == 'B' || id == 'b') return condition_b();
    fail(Errc::invalid_config, std::string("unknown CoGenT condition: '") + id + "'");
}

std::vector<DatasetRecord> gen_cogent(int n, const CoGenTCondition& condition, std::uint64_t seed,
                                      const CogentParams& params, Split split) {
    require(n >= 0, Errc::invalid_config, "record count must be non-negative");
    require(params.min_objects >= 1 && params.max_objects >= params.min_objects, Errc::invalid_config,
            "bad object count range");
    scene::AttributeCatalog catalog = scene::clevr_catalog();
    for (const auto& s : catalog.shapes)
        require(condition.shape_colors.count(s) != 0, Errc::invalid_config,
                "condition has no color set for shape: " + s);

    std::vector<DatasetRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        scene::SceneProgram s;
        s.camera = scene::clevr_camera();
        int count = params.min_objects + static_cast<int>(rng.below(
                        static_cast<std::uint64_t>(params.max_objects - params.min_objects + 1)));
        std::vector<Eigen::Vector2d> placed;
        for (int k = 0; k < count; ++k) {
            scene::ObjectRecord obj;
            obj.shape = rng.pick(catalog.shapes);
            obj.size = rng.pick(catalog.sizes).name;
            obj.color = rng.pick(condition.shape_colors.at(obj.shape));
            obj.material = rng.pick(catalog.materials);
            Eigen::Vector2d xy = place_xy(rng, placed, params.xy_range, params.min_distance,
                                          params.max_placement_tries);
            placed.push_back(xy);
            double z = catalog.size_scale(obj.size);
            obj.location = {xy.x(), xy.y(), z};
            bool rotated = obj.shape == "cube" || (!params.rotate_cubes_only && obj.shape == "cylinder");
            if (rotated) obj.rotation = rot::axis_rotation(2, rng.uniform(-kPi, kPi));
            s.objects.push_back(std::move(obj));
        }
        sort_front_to_back(s);

        dsl::EmitOptions opts;
        opts.shuffle_seed = rng.next_u64();
        opts.rotation_repr = dsl::RotationRepr::scalar_z;
        opts.shuffle_keys = true;
        opts.use_synonyms = true;

        DatasetRecord rec;
        rec.index = i;
        rec.scene = std::move(s);
        rec.program = dsl::emit_program(rec.scene, catalog, opts);
        rec.split = split;
        out.push_back(std::move(rec));
    }
    return out;
}

// dot2d --------------------------------------------------------------------------

bool in_checkerboard(const Eigen::Vector2d& p, const CheckerboardLayout& layout) {
    require(layout.cells_per_side > 0, Errc::invalid_config, "cells_per_side must be positive");
    require(p.x() >= 0.0 && p.x() <= 1.0 && p.y() >= 0.0 && p.y() <= 1.0, Errc::out_of_bounds,
            "point outside the unit square");
    int c = layout.cells_per_side;
    int ix = std::min(static_cast<int>(p.x() * c), c - 1);
    int iy = std::min(static_cast<int>(p.y() * c), c - 1);
    return (ix + iy) % 2 == (layout.keep_parity % 2);
}

std::vector<DatasetRecord> gen_dot2d(int n, DotDistribution dist, const CheckerboardLayout& layout,
                                     std::uint64_t seed) {
    require(n >= 0, Errc::invalid_config, "record count must be non-negative");
    scene::AttributeCatalog catalog = scene::dot_catalog();
    std::vector<DatasetRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        Eigen::Vector2d p;
        if (dist == DotDistribution::checkerboard) {
            do {
                p = {rng.uniform(), rng.uniform()};
            } while (!in_checkerboard(p, layout));
        } else {
            p = {rng.uniform(), rng.uniform()};
        }

        DatasetRecord rec;
        rec.index = i;
        scene::ObjectRecord obj;
        obj.shape = "dot";
        obj.location = {p.x(), p.y(), 0.0};
        rec.scene.objects.push_back(std::move(obj));
        rec.program = dsl::emit_program(rec.scene, catalog, dsl::EmitOptions{});
        if (dist == DotDistribution::checkerboard) {
            rec.split = Split::train;
        } else {
            rec.split = in_checkerboard(p, layout) ? Split::val_id : Split::val_ood;
        }
        out.push_back(std::move(rec));
    }
    return out;
}

// so3 ---------------------------------------------------------------------------

AngleGapSpec AngleGapSpec::defaults() {
    AngleGapSpec spec;
    for (auto& comp : spec.gaps) {
        comp = {{-2.0 * kPi / 3.0, kPi / 20.0}, {0.0, kPi / 20.0}, {2.0 * kPi / 3.0, kPi / 20.0}};
    }
    return spec;
}

namespace {

struct Segment {
    double lo, hi;
};

// [-pi, pi) minus the gaps (id) or the gaps themselves (ood), clipped to the
// base interval and merged.
std::vector<Segment> component_segments(const std::vector<AngleGap>& gaps, So3Region region) {
    std::vector<Segment> raw;
    for (const AngleGap& g : gaps) {
        require(g.half_width >= 0.0, Errc::invalid_config, "gap half-width must be non-negative");
        double lo = std::max(g.center - g.half_width, -kPi);
        double hi = std::min(g.center + g.half_width, kPi);
        if (lo < hi) raw.push_back({lo, hi});
    }
    std::sort(raw.begin(), raw.end(), [](const Segment& a, const Segment& b) { return a.lo < b.lo; });
    std::vector<Segment> merged;
    for (const Segment& s : raw) {
        if (!merged.empty() && s.lo <= merged.back().hi) {
            merged.back().hi = std::max(merged.back().hi, s.hi);
        } else {
            merged.push_back(s);
        }
    }
    if (region == So3Region::gaps) return merged;
    std::vector<Segment> inverse;
    double cursor = -kPi;
    for (const Segment& s : merged) {
        if (s.lo > cursor) inverse.push_back({cursor, s.lo});
        cursor = s.hi;
    }
    if (cursor < kPi) inverse.push_back({cursor, kPi});
    return inverse;
}

double sample_segments(Rng& rng, const std::vector<Segment>& segs) {
    double total = 0.0;
    for (const Segment& s : segs) total += s.hi - s.lo;
    require(total > 0.0, Errc::empty_region, "angle region has zero measure");
    double u = rng.uniform(0.0, total);
    for (const Segment& s : segs) {
        double len = s.hi - s.lo;
        if (u < len) return s.lo + u;
        u -= len;
    }
    return segs.back().hi;  // u == total edge case
}

}  // namespace

std::vector<DatasetRecord> gen_so3(int n, So3Region region, const AngleGapSpec& spec, std::uint64_t seed,
                                   const So3Params& params) {
    require(n >= 0, Errc::invalid_config, "record count must be non-negative");
    scene::AttributeCatalog catalog = scene::so3_catalog();
    std::array<std::vector<Segment>, 3> segments;
    for (int c = 0; c < 3; ++c) segments[c] = component_segments(spec.gaps[c], region);

    std::vector<DatasetRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        scene::ObjectRecord obj;
        obj.shape = rng.pick(catalog.shapes);
        obj.size = rng.pick(catalog.sizes).name;
        obj.color = rng.pick(catalog.colors).name;
        obj.material = rng.pick(catalog.materials);
        Eigen::Vector3d angles;
        for (int c = 0; c < 3; ++c) angles(c) = sample_segments(rng, segments[c]);
        obj.rotation = rot::euler_to_matrix({angles, rot::EulerConvention::extrinsic, {}});
        obj.location = {0, 0, 0};

        DatasetRecord rec;
        rec.index = i;
        rec.scene.camera = scene::clevr_camera();
        rec.scene.objects.push_back(std::move(obj));

        dsl::EmitOptions opts;
        opts.shuffle_seed = rng.next_u64();
        opts.rotation_repr = params.repr;
        opts.shuffle_keys = true;
        opts.use_synonyms = true;
        rec.program = dsl::emit_program(rec.scene, catalog, opts);
        rec.split = region == So3Region::in_distribution ? Split::val_id : Split::val_ood;
        out.push_back(std::move(rec));
    }
    return out;
}

// scene6dof -----------------------------------------------------------------------

const char* scene6dof_split_name(Scene6DofSplit s) {
    switch (s) {
        case Scene6DofSplit::train: return "train";
        case Scene6DofSplit::ood_texture: return "ood_texture";
        case Scene6DofSplit::ood_shape: return "ood_shape";
    }
    return "?";
}

std::vector<DatasetRecord> gen_scene6dof(int n, Scene6DofSplit split, std::uint64_t seed,
                                         const Scene6DofParams& params) {
    require(n >= 0, Errc::invalid_config, "record count must be non-negative");
    require(params.min_objects >= 1 && params.max_objects >= params.min_objects, Errc::invalid_config,
            "bad object count range");
    scene::AttributeCatalog catalog = scene::extended_catalog();

    std::vector<std::string> heldout = scene::extended_heldout_shapes();
    std::vector<std::string> pool;
    if (split == Scene6DofSplit::ood_shape) {
        pool = heldout;
    } else {
        for (const auto& s : catalog.shapes)
            if (std::find(heldout.begin(), heldout.end(), s) == heldout.end()) pool.push_back(s);
    }

    std::vector<DatasetRecord> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        scene::SceneProgram s;
        int count = params.min_objects + static_cast<int>(rng.below(
                        static_cast<std::uint64_t>(params.max_objects - params.min_objects + 1)));
        std::vector<Eigen::Vector2d> placed;
        for (int k = 0; k < count; ++k) {
            scene::ObjectRecord obj;
            obj.shape = rng.pick(pool);
            obj.color = rng.pick(catalog.colors).name;
            Eigen::Vector2d xy = place_xy(rng, placed, params.xy_range, params.min_distance,
                                          params.max_placement_tries);
            placed.push_back(xy);
            obj.location = {xy.x(), xy.y(), scene::shape_half_height(obj.shape)};
            obj.rotation = rot::random_rotation(rng);
            s.objects.push_back(std::move(obj));
        }
        double pitch = rng.uniform(params.pitch_lo_deg, params.pitch_hi_deg);
        double radius = rng.uniform(params.radius_lo, params.radius_hi);
        s.camera = scene::arc_camera(pitch, radius, params.azimuth_deg);
        sort_front_to_back(s);

        dsl::EmitOptions opts;
        opts.shuffle_seed = rng.next_u64();
        opts.rotation_repr = params.repr;
        opts.shuffle_keys = true;
        opts.use_synonyms = false;

        DatasetRecord rec;
        rec.index = i;
        rec.scene = std::move(s);
        rec.program = dsl::emit_program(rec.scene, catalog, opts);
        rec.split = split == Scene6DofSplit::train ? Split::train
                  : split == Scene6DofSplit::ood_texture ? Split::val_id
                                                         : Split::val_ood;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace derender::gen
