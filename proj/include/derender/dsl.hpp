#pragma once

// Scene-program text codec.  A program is a sequence of `add(...)` calls, one
// per line, whose keyword arguments describe one object each:
//
//   add(shape='cube', size='large', color='red', material='metal',
//       loc=(2.163, -1.384, 0.350), rotation=-0.126)
//   add(x=0.292, y=0.266)                      # 2D dot records
//
// Numbers carry three decimals.  Emission orders objects front-to-back and
// shuffles the keyword order per line with a seeded RNG; parsing accepts keys
// in any order and resolves attribute synonyms through the catalog.

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "derender/scene.hpp"

namespace derender::dsl {

// How a rotation is written out.  Three-value forms are ambiguous to read
// back, so parsing takes the expected representation as an option.
enum class RotationRepr {
    scalar_z,    // single angle, rotation about +z
    ext_euler,   // extrinsic x-y-z Tait-Bryan angles (3 values)
    int_euler,   // intrinsic x-y-z Tait-Bryan angles (3 values)
    axis_angle,  // axis * angle rotation vector (3 values)
    sixd,        // first two rotation-matrix columns (6 values)
};

const char* rotation_repr_name(RotationRepr r);
RotationRepr rotation_repr_from_name(std::string_view name);

struct ProgramText {
    std::vector<std::string> lines;

    std::string str() const;  // lines joined with '\n', trailing newline when non-empty
    static ProgramText from_string(std::string_view text);

    bool operator==(const ProgramText&) const = default;
};

enum class Ordering { front_to_back, as_given };

struct EmitOptions {
    std::uint64_t shuffle_seed = 0;
    Ordering ordering = Ordering::front_to_back;
    RotationRepr rotation_repr = RotationRepr::ext_euler;
    bool shuffle_keys = true;    // seeded per-line permutation of the kwargs
    bool use_synonyms = false;   // sample attribute spellings from the synonym sets
};

struct ParseOptions {
    // Representation assumed for 3-value rotation tuples; 1-value tuples are
    // always scalar_z and 6-value tuples are always sixd.
    RotationRepr three_value_repr = RotationRepr::ext_euler;
};

// Three-decimal fixed-point formatting, round-half-away-from-zero, no
// exponent, "-0.000" normalised to "0.000".  Throws NonFinite.
std::string format_number(double x);

// The value format_number(x) reads back as: the canonical 3-decimal
// quantisation applied to every serialised number.
double quantize_number(double x);

// Values serialised for a rotation under `repr` (before formatting), and the
// inverse map.  rotation_from_values throws ArityError on a wrong count and
// UnserializableRotation when repr is scalar_z but r is not a z-rotation
// (checked by rotation_values).
std::vector<double> rotation_values(const Eigen::Matrix3d& r, RotationRepr repr);
Eigen::Matrix3d rotation_from_values(std::span<const double> values, RotationRepr repr);

// Object order emission will use (front-to-back or as stored).
std::vector<std::size_t> emission_order(const scene::SceneProgram& s, const EmitOptions& opts);

ProgramText emit_program(const scene::SceneProgram& s, const scene::AttributeCatalog& catalog,
                         const EmitOptions& opts = {});

// Same text plus the exact (pre-quantisation) values of every number in the
// order they appear in the text; used to build numeric training targets.
struct EmittedProgram {
    ProgramText text;
    std::vector<double> values;
};
EmittedProgram emit_program_with_values(const scene::SceneProgram& s, const scene::AttributeCatalog& catalog,
                                        const EmitOptions& opts = {});

scene::SceneProgram parse_program(const ProgramText& text, const scene::AttributeCatalog& catalog,
                                  const ParseOptions& opts = {});
scene::SceneProgram parse_program(const ProgramText& text, const scene::AttributeIndex& index,
                                  const ParseOptions& opts = {});

// Round-trip equality modulo 3-decimal quantisation: attributes exact,
// locations equal to the quantised originals, rotations within
// `rot_tol_deg` geodesic of the quantised serialisation.  `parsed` must be in
// emission order.  Returns false and fills `why` (if given) on mismatch.
bool round_trip_equal(const scene::SceneProgram& original, const scene::SceneProgram& parsed,
                      const EmitOptions& opts, double rot_tol_deg = 0.25, std::string* why = nullptr);

}  // namespace derender::dsl
