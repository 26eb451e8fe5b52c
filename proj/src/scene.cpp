#include "derender/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "derender/common.hpp"

namespace derender::scene {

namespace {

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool is_lower(std::string_view s) {
    for (char c : s)
        if (std::isupper(static_cast<unsigned char>(c))) return false;
    return true;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

const char* attr_kind_name(AttrKind k) {
    switch (k) {
        case AttrKind::shape: return "shape";
        case AttrKind::size: return "size";
        case AttrKind::color: return "color";
        case AttrKind::material: return "material";
    }
    return "?";
}

void AttributeCatalog::validate() const {
    std::map<std::string, AttrKind> seen;
    auto add = [&](const std::string& name, AttrKind kind) {
        require(!name.empty(), Errc::invalid_config, "empty attribute name");
        require(is_lower(name), Errc::invalid_config, "canonical name not lowercase: " + name);
        require(seen.emplace(name, kind).second, Errc::invalid_config, "duplicate canonical name: " + name);
    };
    for (const auto& s : shapes) add(s, AttrKind::shape);
    for (const auto& s : sizes) add(s.name, AttrKind::size);
    for (const auto& s : colors) add(s.name, AttrKind::color);
    for (const auto& s : materials) add(s, AttrKind::material);

    std::map<std::string, std::string> alias_owner;
    for (const auto& [canonical, aliases] : synonyms) {
        require(seen.count(canonical) != 0, Errc::invalid_config, "synonym for unknown canonical name: " + canonical);
        for (const auto& a : aliases) {
            require(is_lower(a), Errc::invalid_config, "synonym not lowercase: " + a);
            require(seen.count(a) == 0, Errc::invalid_config, "synonym collides with canonical name: " + a);
            require(alias_owner.emplace(a, canonical).second, Errc::invalid_config, "ambiguous synonym: " + a);
        }
    }
    for (const auto& [canonical, disp] : display) {
        require(seen.count(canonical) != 0, Errc::invalid_config, "display name for unknown canonical name: " + canonical);
        require(to_lower(disp) == canonical, Errc::invalid_config, "display form must lowercase to its canonical name: " + disp);
    }
}

AttributeIndex::AttributeIndex(const AttributeCatalog& c) {
    auto add = [&](std::string_view term, AttrKind kind, const std::string& canonical) {
        terms_.emplace(to_lower(term), ResolvedAttr{kind, canonical});
    };
    for (const auto& s : c.shapes) add(s, AttrKind::shape, s);
    for (const auto& s : c.sizes) add(s.name, AttrKind::size, s.name);
    for (const auto& s : c.colors) add(s.name, AttrKind::color, s.name);
    for (const auto& s : c.materials) add(s, AttrKind::material, s);
    for (const auto& [canonical, aliases] : c.synonyms) {
        auto it = terms_.find(canonical);
        if (it == terms_.end()) continue;  // validate() reports this case
        for (const auto& a : aliases) add(a, it->second.kind, canonical);
    }
}

std::optional<ResolvedAttr> AttributeIndex::find(std::string_view term) const {
    auto it = terms_.find(to_lower(term));
    if (it == terms_.end()) return std::nullopt;
    return it->second;
}

ResolvedAttr AttributeIndex::resolve(std::string_view term) const {
    auto r = find(term);
    require(r.has_value(), Errc::unknown_attribute, "unknown attribute term: '" + std::string(term) + "'");
    return *r;
}

std::string AttributeIndex::resolve_in_kind(std::string_view term, AttrKind kind) const {
    ResolvedAttr r = resolve(term);
    require(r.kind == kind, Errc::unknown_attribute,
            "'" + std::string(term) + "' is a " + attr_kind_name(r.kind) + ", not a " + attr_kind_name(kind));
    return r.canonical;
}

bool AttributeCatalog::has(AttrKind kind, std::string_view canonical) const {
    switch (kind) {
        case AttrKind::shape: return std::find(shapes.begin(), shapes.end(), canonical) != shapes.end();
        case AttrKind::size:
            return std::any_of(sizes.begin(), sizes.end(), [&](const SizeEntry& e) { return e.name == canonical; });
        case AttrKind::color:
            return std::any_of(colors.begin(), colors.end(), [&](const ColorEntry& e) { return e.name == canonical; });
        case AttrKind::material: return std::find(materials.begin(), materials.end(), canonical) != materials.end();
    }
    return false;
}

std::optional<ResolvedAttr> AttributeCatalog::try_resolve(std::string_view term) const {
    return AttributeIndex(*this).find(term);
}

ResolvedAttr AttributeCatalog::resolve(std::string_view term) const {
    auto r = try_resolve(term);
    require(r.has_value(), Errc::unknown_attribute, "unknown attribute term: '" + std::string(term) + "'");
    return *r;
}

std::string AttributeCatalog::resolve_in_kind(std::string_view term, AttrKind kind) const {
    ResolvedAttr r = resolve(term);
    require(r.kind == kind, Errc::unknown_attribute,
            "'" + std::string(term) + "' is a " + attr_kind_name(r.kind) + ", not a " + attr_kind_name(kind));
    return r.canonical;
}

const std::string& AttributeCatalog::display_name(const std::string& canonical) const {
    auto it = display.find(canonical);
    return it == display.end() ? canonical : it->second;
}

std::vector<std::string> AttributeCatalog::spellings(const std::string& canonical) const {
    std::vector<std::string> out{display_name(canonical)};
    auto it = synonyms.find(canonical);
    if (it != synonyms.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    return out;
}

double AttributeCatalog::size_scale(const std::string& canonical) const {
    if (canonical.empty()) return 1.0;
    for (const auto& e : sizes)
        if (e.name == canonical) return e.scale;
    fail(Errc::unknown_attribute, "unknown size: " + canonical);
}

// Preset catalogs ------------------------------------------------------------

AttributeCatalog clevr_catalog() {
    AttributeCatalog c;
    c.shapes = {"cube", "cylinder", "sphere"};
    c.sizes = {{"large", 0.7}, {"small", 0.35}};
    c.colors = {
        {"gray", {87 / 255.0, 87 / 255.0, 87 / 255.0}},   {"red", {173 / 255.0, 35 / 255.0, 35 / 255.0}},
        {"blue", {42 / 255.0, 75 / 255.0, 215 / 255.0}},  {"green", {29 / 255.0, 105 / 255.0, 20 / 255.0}},
        {"brown", {129 / 255.0, 74 / 255.0, 25 / 255.0}}, {"purple", {129 / 255.0, 38 / 255.0, 192 / 255.0}},
        {"cyan", {41 / 255.0, 208 / 255.0, 208 / 255.0}}, {"yellow", {255 / 255.0, 238 / 255.0, 51 / 255.0}},
    };
    c.materials = {"metal", "rubber"};
    c.synonyms = {
        {"cube", {"block"}},  {"sphere", {"ball"}},
        {"large", {"big"}},   {"small", {"tiny"}},
        {"metal", {"metallic", "shiny"}},
        {"rubber", {"matte"}},
    };
    c.validate();
    return c;
}

AttributeCatalog dot_catalog() {
    AttributeCatalog c;
    c.shapes = {"dot"};
    c.validate();
    return c;
}

AttributeCatalog so3_catalog() {
    AttributeCatalog base = clevr_catalog();
    AttributeCatalog c;
    c.shapes = {"airliner", "biplane", "fighter", "jet", "utility"};
    c.sizes = base.sizes;
    c.colors = base.colors;
    c.materials = base.materials;
    c.synonyms = {
        {"large", {"big"}},
        {"small", {"tiny"}},
        {"metal", {"metallic", "shiny"}},
        {"rubber", {"matte"}},
    };
    c.validate();
    return c;
}

namespace {

// 133 named palette colors (display form, sRGB hex).  Names keep their usual
// capitalisation for program text; apostrophes and parentheses are dropped so
// every name stays representable inside single-quoted DSL strings.
struct RawColor {
    const char* name;
    unsigned hex;
};

constexpr RawColor kPalette133[] = {
    {"Almond", 0xEFDBC5},      {"Antique Brass", 0xCD9575},  {"Apricot", 0xFDD9B5},
    {"Aquamarine", 0x78DBE2},  {"Asparagus", 0x87A96B},      {"Atomic Tangerine", 0xFFA474},
    {"Banana Mania", 0xFAE7B5}, {"Beaver", 0x9F8170},        {"Bittersweet", 0xFD7C6E},
    {"Black", 0x000000},       {"Blizzard Blue", 0xACE5EE},  {"Blue", 0x1F75FE},
    {"Blue Bell", 0xA2A2D0},   {"Blue Gray", 0x6699CC},      {"Blue Green", 0x0D98BA},
    {"Blue Violet", 0x7366BD}, {"Blush", 0xDE5D83},          {"Brick Red", 0xCB4154},
    {"Brown", 0xB4674D},       {"Burnt Orange", 0xFF7F49},   {"Burnt Sienna", 0xEA7E5D},
    {"Cadet Blue", 0xB0B7C6},  {"Canary", 0xFFFF99},         {"Caribbean Green", 0x1CD3A2},
    {"Carnation Pink", 0xFFAACC}, {"Cerise", 0xDD4492},      {"Cerulean", 0x1DACD6},
    {"Chestnut", 0xBC5D58},    {"Copper", 0xDD9475},         {"Cornflower", 0x9ACEEB},
    {"Cotton Candy", 0xFFBCD9}, {"Dandelion", 0xFDDB6D},     {"Denim", 0x2B6CC4},
    {"Desert Sand", 0xEFCDB8}, {"Eggplant", 0x6E5160},       {"Electric Lime", 0xCEFF1D},
    {"Fern", 0x71BC78},        {"Forest Green", 0x6DAE81},   {"Fuchsia", 0xC364C5},
    {"Fuzzy Wuzzy", 0xCC6666}, {"Gold", 0xE7C697},           {"Goldenrod", 0xFCD975},
    {"Granny Smith Apple", 0xA8E4A0}, {"Gray", 0x95918C},    {"Green", 0x1CAC78},
    {"Green Blue", 0x1164B4},  {"Green Yellow", 0xF0E891},   {"Hot Magenta", 0xFF1DCE},
    {"Inchworm", 0xB2EC5D},    {"Indigo", 0x5D76CB},         {"Jazzberry Jam", 0xCA3767},
    {"Jungle Green", 0x3BB08F}, {"Laser Lemon", 0xFEFE22},   {"Lavender", 0xFCB4D5},
    {"Lemon Yellow", 0xFFF44F}, {"Macaroni and Cheese", 0xFFBD88}, {"Magenta", 0xF664AF},
    {"Magic Mint", 0xAAF0D1},  {"Mahogany", 0xCD4A4C},       {"Maize", 0xEDD19C},
    {"Manatee", 0x979AAA},     {"Mango Tango", 0xFF8243},    {"Maroon", 0xC8385A},
    {"Mauvelous", 0xEF98AA},   {"Melon", 0xFDBCB4},          {"Midnight Blue", 0x1A4876},
    {"Mountain Meadow", 0x30BA8F}, {"Mulberry", 0xC54B8C},   {"Navy Blue", 0x1974D2},
    {"Neon Carrot", 0xFFA343}, {"Olive Green", 0xBAB86C},    {"Orange", 0xFF7538},
    {"Orange Red", 0xFF2B2B},  {"Orange Yellow", 0xF8D568},  {"Orchid", 0xE6A8D7},
    {"Outer Space", 0x414A4C}, {"Outrageous Orange", 0xFF6E4A}, {"Pacific Blue", 0x1CA9C9},
    {"Peach", 0xFFCFAB},       {"Periwinkle", 0xC5D0E6},     {"Piggy Pink", 0xFDDDE6},
    {"Pine Green", 0x158078},  {"Pink Flamingo", 0xFC74FD},  {"Pink Sherbert", 0xF78FA7},
    {"Plum", 0x8E4585},        {"Purple Heart", 0x7442C8},   {"Purple Mountains Majesty", 0x9D81BA},
    {"Purple Pizzazz", 0xFE4EDA}, {"Radical Red", 0xFF496C}, {"Raw Sienna", 0xD68A59},
    {"Raw Umber", 0x714B23},   {"Razzle Dazzle Rose", 0xFF48D0}, {"Razzmatazz", 0xE3256B},
    {"Red", 0xEE204D},         {"Red Orange", 0xFF5349},     {"Red Violet", 0xC0448F},
    {"Robins Egg Blue", 0x1FCECB}, {"Royal Purple", 0x7851A9}, {"Salmon", 0xFF9BAA},
    {"Scarlet", 0xFC2847},     {"Screamin Green", 0x76FF7A}, {"Sea Green", 0x9FE2BF},
    {"Sepia", 0xA5694F},       {"Shadow", 0x8A795D},         {"Shamrock", 0x45CEA2},
    {"Shocking Pink", 0xFB7EFD}, {"Silver", 0xCDC5C2},       {"Sky Blue", 0x80DAEB},
    {"Spring Green", 0xECEABE}, {"Sunglow", 0xFFCF48},       {"Sunset Orange", 0xFD5E53},
    {"Tan", 0xFAA76C},         {"Teal Blue", 0x18A7B5},      {"Thistle", 0xEBC7DF},
    {"Tickle Me Pink", 0xFC89AC}, {"Timberwolf", 0xDBD7D2},  {"Tropical Rain Forest", 0x17806D},
    {"Tumbleweed", 0xDEAA88},  {"Turquoise Blue", 0x77DDE7}, {"Unmellow Yellow", 0xFFFF66},
    {"Violet", 0x926EAE},      {"Violet Blue", 0x324AB2},    {"Violet Red", 0xF75394},
    {"Vivid Tangerine", 0xFFA089}, {"Vivid Violet", 0x8F509D}, {"White", 0xFFFFFF},
    {"Wild Blue Yonder", 0xA2ADD0}, {"Wild Strawberry", 0xFF43A4}, {"Wild Watermelon", 0xFC6C85},
    {"Wisteria", 0xCDA4DE},    {"Yellow", 0xFCE883},         {"Yellow Green", 0xC5E384},
    {"Yellow Orange", 0xFFAE42},
};

static_assert(std::size(kPalette133) == 133, "palette must hold exactly 133 colors");

constexpr int kNumChairs = 56;
constexpr int kNumSofas = 35;
constexpr int kNumTables = 47;

std::string furniture_name(const char* category, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d", category, i);
    return buf;
}

std::vector<std::string> furniture_names() {
    std::vector<std::string> names;
    for (int i = 1; i <= kNumChairs; ++i) names.push_back(furniture_name("chairs", i));
    for (int i = 1; i <= kNumSofas; ++i) names.push_back(furniture_name("sofas", i));
    for (int i = 1; i <= kNumTables; ++i) names.push_back(furniture_name("tables", i));
    return names;
}

}  // namespace

const std::vector<PaletteEntry>& color_palette_133() {
    static const std::vector<PaletteEntry> palette = [] {
        std::vector<PaletteEntry> out;
        for (const RawColor& r : kPalette133) {
            out.push_back(PaletteEntry{
                r.name,
                {((r.hex >> 16) & 0xff) / 255.0, ((r.hex >> 8) & 0xff) / 255.0, (r.hex & 0xff) / 255.0}});
        }
        return out;
    }();
    return palette;
}

AttributeCatalog extended_catalog() {
    AttributeCatalog c;
    c.shapes = furniture_names();
    for (const PaletteEntry& p : color_palette_133()) {
        std::string canonical = to_lower(p.display);
        c.colors.push_back({canonical, p.rgb});
        if (canonical != p.display) c.display[canonical] = p.display;
    }
    c.validate();
    return c;
}

std::vector<std::string> extended_heldout_shapes() {
    std::vector<std::string> names;
    for (int i = 46; i <= kNumChairs; ++i) names.push_back(furniture_name("chairs", i));
    for (int i = 29; i <= kNumSofas; ++i) names.push_back(furniture_name("sofas", i));
    for (int i = 39; i <= kNumTables; ++i) names.push_back(furniture_name("tables", i));
    return names;
}

// Cameras ---------------------------------------------------------------------

CameraRecord clevr_camera() {
    CameraRecord cam;
    cam.position = {7.481, -6.508, 5.343};
    cam.look_at = {0, 0, 0};
    cam.radius = cam.position.norm();
    cam.pitch_deg = std::asin(cam.position.z() / cam.radius) * 180.0 / std::numbers::pi;
    cam.azimuth_deg = std::atan2(cam.position.y(), cam.position.x()) * 180.0 / std::numbers::pi;
    return cam;
}

CameraRecord arc_camera(double pitch_deg, double radius, double azimuth_deg) {
    require(radius > 0.0, Errc::invalid_config, "camera radius must be positive");
    CameraRecord cam;
    cam.pitch_deg = pitch_deg;
    cam.radius = radius;
    cam.azimuth_deg = azimuth_deg;
    double p = pitch_deg * std::numbers::pi / 180.0;
    double a = azimuth_deg * std::numbers::pi / 180.0;
    cam.position = radius * Eigen::Vector3d(std::cos(p) * std::cos(a), std::cos(p) * std::sin(a), std::sin(p));
    cam.look_at = {0, 0, 0};
    return cam;
}

std::vector<std::size_t> front_to_back_order(const SceneProgram& s) {
    std::vector<std::size_t> order(s.objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double da = (s.objects[a].location - s.camera.position).squaredNorm();
        double db = (s.objects[b].location - s.camera.position).squaredNorm();
        return da < db;
    });
    return order;
}

// Geometry --------------------------------------------------------------------

namespace {

BoxExtents hashed_box(const std::string& name, double lo_x, double hi_x, double lo_y, double hi_y, double lo_z,
                      double hi_z) {
    Rng rng(mix64(fnv1a(name)));
    return BoxExtents{rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y), rng.uniform(lo_z, hi_z)};
}

bool has_prefix(const std::string& s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

bool is_airplane(const std::string& s) {
    return s == "airliner" || s == "biplane" || s == "fighter" || s == "jet" || s == "utility";
}

}  // namespace

ShapeGeometry shape_geometry(const std::string& canonical) {
    if (canonical == "sphere") return {GeometryKind::sphere, {}};
    if (canonical == "cube") return {GeometryKind::cube, {}};
    if (canonical == "cylinder") return {GeometryKind::cylinder, {}};
    if (canonical == "dot") return {GeometryKind::point, {}};
    if (is_airplane(canonical)) return {GeometryKind::box, hashed_box(canonical, 0.6, 1.2, 0.5, 1.0, 0.15, 0.35)};
    if (has_prefix(canonical, "chairs_")) return {GeometryKind::box, hashed_box(canonical, 0.25, 0.45, 0.25, 0.45, 0.45, 0.75)};
    if (has_prefix(canonical, "sofas_")) return {GeometryKind::box, hashed_box(canonical, 0.8, 1.2, 0.35, 0.5, 0.35, 0.5)};
    if (has_prefix(canonical, "tables_")) return {GeometryKind::box, hashed_box(canonical, 0.5, 0.9, 0.35, 0.7, 0.3, 0.45)};
    fail(Errc::unknown_shape, "no geometry proxy for shape: " + canonical);
}

double shape_half_height(const std::string& canonical) {
    ShapeGeometry g = shape_geometry(canonical);
    switch (g.kind) {
        case GeometryKind::sphere:
        case GeometryKind::cube:
        case GeometryKind::cylinder: return 1.0;
        case GeometryKind::box: return g.box.hz;
        case GeometryKind::point: return 0.0;
    }
    return 0.0;
}

namespace {

Eigen::Vector3d sample_sphere(Rng& rng) {
    double z = rng.uniform(-1.0, 1.0);
    double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

Eigen::Vector3d sample_box(Rng& rng, const BoxExtents& b) {
    // Pick a face proportionally to its area, then a point uniform on it.
    double ax = b.hy * b.hz, ay = b.hx * b.hz, az = b.hx * b.hy;  // per-face area / 4
    double total = 2 * (ax + ay + az);
    double u = rng.uniform(0.0, total);
    double s = rng.uniform(-1.0, 1.0), t = rng.uniform(-1.0, 1.0);
    if (u < 2 * ax) {
        double sign = (u < ax) ? 1.0 : -1.0;
        return {sign * b.hx, s * b.hy, t * b.hz};
    }
    u -= 2 * ax;
    if (u < 2 * ay) {
        double sign = (u < ay) ? 1.0 : -1.0;
        return {s * b.hx, sign * b.hy, t * b.hz};
    }
    u -= 2 * ay;
    double sign = (u < az) ? 1.0 : -1.0;
    return {s * b.hx, t * b.hy, sign * b.hz};
}

Eigen::Vector3d sample_cylinder(Rng& rng) {
    // Unit radius, half-height 1: side area 4*pi, each cap pi.
    double u = rng.uniform(0.0, 6.0 * std::numbers::pi);
    if (u < 4.0 * std::numbers::pi) {
        double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        return {std::cos(phi), std::sin(phi), rng.uniform(-1.0, 1.0)};
    }
    double sign = (u < 5.0 * std::numbers::pi) ? 1.0 : -1.0;
    double r = std::sqrt(rng.uniform());
    double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {r * std::cos(phi), r * std::sin(phi), sign};
}

}  // namespace

std::vector<Eigen::Vector3d> sample_surface_points(const ObjectRecord& obj, int n, std::uint64_t seed,
                                                   const AttributeCatalog& catalog) {
    require(n > 0, Errc::invalid_config, "surface sample count must be positive");
    ShapeGeometry geom = shape_geometry(obj.shape);
    double scale = catalog.size_scale(obj.size);
    Rng rng(seed);
    std::vector<Eigen::Vector3d> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d p;
        switch (geom.kind) {
            case GeometryKind::sphere: p = sample_sphere(rng); break;
            case GeometryKind::cube: p = sample_box(rng, BoxExtents{1, 1, 1}); break;
            case GeometryKind::cylinder: p = sample_cylinder(rng); break;
            case GeometryKind::box: p = sample_box(rng, geom.box); break;
            case GeometryKind::point: p = {0, 0, 0}; break;
        }
        out.push_back(obj.rotation * (scale * p) + obj.location);
    }
    return out;
}

}  // namespace derender::scene
