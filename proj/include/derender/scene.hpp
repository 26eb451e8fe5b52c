#pragma once

// Scene-side vocabulary and geometry: attribute catalogs (shape / size /
// color / material words plus synonyms), object and camera records, and
// surface-point sampling for the shape proxies.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "derender/rng.hpp"

namespace derender::scene {

enum class AttrKind { shape, size, color, material };

const char* attr_kind_name(AttrKind k);

struct SizeEntry {
    std::string name;  // canonical, lowercase
    double scale = 1.0;
};

struct ColorEntry {
    std::string name;                     // canonical, lowercase
    std::array<double, 3> rgb{0, 0, 0};   // sRGB in [0, 1]
};

struct ResolvedAttr {
    AttrKind kind;
    std::string canonical;
};

class AttributeCatalog {
  public:
    std::vector<std::string> shapes;      // canonical names
    std::vector<SizeEntry> sizes;
    std::vector<ColorEntry> colors;
    std::vector<std::string> materials;

    // canonical -> aliases (lowercase).  Aliases must not collide with any
    // canonical name or other alias.
    std::map<std::string, std::vector<std::string>> synonyms;

    // canonical -> exact program-text spelling, for names whose display form
    // is not all-lowercase (e.g. "olive green" -> "Olive Green").
    std::map<std::string, std::string> display;

    // Throws InvalidConfig when canonical names are not unique/lowercase or
    // synonyms are ambiguous.  Called by the preset constructors.
    void validate() const;

    bool has(AttrKind kind, std::string_view canonical) const;
    std::optional<ResolvedAttr> try_resolve(std::string_view term) const;

    // Case-insensitive lookup of a canonical name, display name or synonym.
    // Throws UnknownAttribute when nothing matches.
    ResolvedAttr resolve(std::string_view term) const;

    // Same, but the term must resolve within one attribute kind.
    std::string resolve_in_kind(std::string_view term, AttrKind kind) const;

    const std::string& display_name(const std::string& canonical) const;

    // display name + aliases, the spellings emission may choose from.
    std::vector<std::string> spellings(const std::string& canonical) const;

    double size_scale(const std::string& canonical) const;
};

// Prebuilt lookup table over a catalog's canonical names, display forms and
// synonyms; use this instead of AttributeCatalog::resolve in hot loops.
class AttributeIndex {
  public:
    explicit AttributeIndex(const AttributeCatalog& catalog);
    std::optional<ResolvedAttr> find(std::string_view term) const;
    ResolvedAttr resolve(std::string_view term) const;
    std::string resolve_in_kind(std::string_view term, AttrKind kind) const;

  private:
    std::map<std::string, ResolvedAttr> terms_;
};

// Preset catalogs ------------------------------------------------------------

// Blocks-world catalog: 3 shapes, 2 sizes, 8 colors, 2 materials, with the
// usual synonym set (ball/block, big/tiny, metallic/shiny/matte).
AttributeCatalog clevr_catalog();

// Single pseudo-shape "dot" for the 2D regression task.
AttributeCatalog dot_catalog();

// Five airplane proxies with the blocks-world sizes/colors/materials.
AttributeCatalog so3_catalog();

// 138 furniture proxies (56 chairs, 35 sofas, 47 tables) with a 133-entry
// named color palette and no size/material words.
AttributeCatalog extended_catalog();

// The 133-color palette by itself (canonical name, display name, rgb).
struct PaletteEntry {
    std::string display;
    std::array<double, 3> rgb;
};
const std::vector<PaletteEntry>& color_palette_133();

// Names held out of extended-catalog training scenes (last ~20% of each
// furniture category); ood_shape_marker scenes draw from exactly these.
std::vector<std::string> extended_heldout_shapes();

// Records --------------------------------------------------------------------

struct ObjectRecord {
    std::string shape;     // canonical shape name (required)
    std::string size;      // canonical size name, empty when the task has none
    std::string color;     // canonical color name, empty when absent
    std::string material;  // canonical material name, empty when absent
    Eigen::Vector3d location{0, 0, 0};
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

struct CameraRecord {
    Eigen::Vector3d position{0, 0, 0};
    Eigen::Vector3d look_at{0, 0, 0};
    double pitch_deg = 0.0;
    double radius = 0.0;
    double azimuth_deg = 0.0;
};

// Fixed blocks-world camera on its usual arc.
CameraRecord clevr_camera();

// Camera at (pitch, radius, azimuth) on an arc looking at the origin.
CameraRecord arc_camera(double pitch_deg, double radius, double azimuth_deg);

struct SceneProgram {
    std::vector<ObjectRecord> objects;
    CameraRecord camera;
};

// Indices of `objects` sorted by increasing distance to the camera
// (front-to-back; ties keep the original order).
std::vector<std::size_t> front_to_back_order(const SceneProgram& s);

// Geometry -------------------------------------------------------------------

struct BoxExtents {
    double hx = 1.0, hy = 1.0, hz = 1.0;
};

enum class GeometryKind { sphere, cube, cylinder, box, point };

struct ShapeGeometry {
    GeometryKind kind;
    BoxExtents box;  // used when kind == box
};

// Geometry proxy for any canonical shape name used by the preset catalogs.
// Throws UnknownShape for unrecognised names.
ShapeGeometry shape_geometry(const std::string& canonical);

// Half-height of a shape at unit scale (used to rest objects on the floor).
double shape_half_height(const std::string& canonical);

// n points uniform on the object's surface, scaled by its size, rotated and
// translated into world frame.  Deterministic in (object, n, seed).
std::vector<Eigen::Vector3d> sample_surface_points(const ObjectRecord& obj, int n, std::uint64_t seed,
                                                   const AttributeCatalog& catalog);

}  // namespace derender::scene
