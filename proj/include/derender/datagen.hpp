#pragma once

// Controlled-distribution dataset generators.  Each task draws scenes from a
// seeded per-record RNG stream (record i depends only on (seed, i)), emits
// its program text, and returns records ready for the JSONL writer.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "derender/dsl.hpp"
#include "derender/scene.hpp"

namespace derender::gen {

enum class Split { train, val_id, val_ood };
const char* split_name(Split s);
Split split_from_name(std::string_view name);

struct DatasetRecord {
    long index = 0;
    dsl::ProgramText program;
    scene::SceneProgram scene;  // exact (pre-quantisation) values, objects in emission order
    std::string image_path;     // relative to the dataset dir; empty for imageless tasks
    Split split = Split::train;
};

// Blocks-world composition task ------------------------------------------------

// Color-by-shape constraint table for one generation condition.  Cubes and
// cylinders each get half the palette; the halves swap between conditions and
// spheres are unconstrained.
struct CoGenTCondition {
    char id = 'A';
    std::map<std::string, std::vector<std::string>> shape_colors;

    static CoGenTCondition condition_a();
    static CoGenTCondition condition_b();
    static CoGenTCondition from_id(char id);
};

struct CogentParams {
    int min_objects = 3;
    int max_objects = 10;
    double xy_range = 3.0;       // positions uniform in [-range, range]^2
    double min_distance = 1.1;   // 2D centre separation
    int max_placement_tries = 200;
    bool rotate_cubes_only = true;  // when false, cylinders also get a z-rotation
};

std::vector<DatasetRecord> gen_cogent(int n, const CoGenTCondition& condition, std::uint64_t seed,
                                      const CogentParams& params = {}, Split split = Split::train);

// 2D dot regression task -------------------------------------------------------

struct CheckerboardLayout {
    int cells_per_side = 8;
    int keep_parity = 0;  // keep cells with (ix + iy) % 2 == keep_parity
};

bool in_checkerboard(const Eigen::Vector2d& p, const CheckerboardLayout& layout);

enum class DotDistribution { checkerboard, uniform };

// checkerboard: training distribution (rejection-sampled onto kept cells),
// records marked train.  uniform: evaluation distribution over the full
// square, records marked val_id / val_ood by cell membership.
std::vector<DatasetRecord> gen_dot2d(int n, DotDistribution dist, const CheckerboardLayout& layout,
                                     std::uint64_t seed);

// Single-object rotation task ---------------------------------------------------

struct AngleGap {
    double center = 0.0;
    double half_width = 0.0;
};

struct AngleGapSpec {
    std::array<std::vector<AngleGap>, 3> gaps;  // per extrinsic x-y-z Euler component

    // Three gaps per component, centred at -2pi/3, 0, 2pi/3, half-width pi/20.
    static AngleGapSpec defaults();
};

enum class So3Region { in_distribution, gaps };

struct So3Params {
    dsl::RotationRepr repr = dsl::RotationRepr::sixd;
};

std::vector<DatasetRecord> gen_so3(int n, So3Region region, const AngleGapSpec& spec, std::uint64_t seed,
                                   const So3Params& params = {});

// Multi-object 6-DoF furniture task ---------------------------------------------

// ood_texture is a distribution-identical evaluation split (marker only);
// ood_shape draws from the held-out shape names.
enum class Scene6DofSplit { train, ood_texture, ood_shape };
const char* scene6dof_split_name(Scene6DofSplit s);

struct Scene6DofParams {
    int min_objects = 3;
    int max_objects = 5;
    double xy_range = 3.0;
    double min_distance = 1.1;
    int max_placement_tries = 200;
    double pitch_lo_deg = 20.0, pitch_hi_deg = 40.0;
    double radius_lo = 10.0, radius_hi = 14.0;
    double azimuth_deg = 0.0;  // fixed: only pitch and radius vary
    dsl::RotationRepr repr = dsl::RotationRepr::sixd;
};

std::vector<DatasetRecord> gen_scene6dof(int n, Scene6DofSplit split, std::uint64_t seed,
                                         const Scene6DofParams& params = {});

}  // namespace derender::gen
