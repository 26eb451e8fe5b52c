#include "derender/dsl.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "derender/common.hpp"
#include "derender/rng.hpp"
#include "derender/rotation.hpp"

namespace derender::dsl {

namespace {

enum class Key { shape, size, color, material, loc, rotation, x, y };

const char* key_name(Key k) {
    switch (k) {
        case Key::shape: return "shape";
        case Key::size: return "size";
        case Key::color: return "color";
        case Key::material: return "material";
        case Key::loc: return "loc";
        case Key::rotation: return "rotation";
        case Key::x: return "x";
        case Key::y: return "y";
    }
    return "?";
}

bool identity_rotation(const Eigen::Matrix3d& r) {
    return (r - Eigen::Matrix3d::Identity()).norm() < 1e-15;
}

}  // namespace

const char* rotation_repr_name(RotationRepr r) {
    switch (r) {
        case RotationRepr::scalar_z: return "scalar_z";
        case RotationRepr::ext_euler: return "ext_euler";
        case RotationRepr::int_euler: return "int_euler";
        case RotationRepr::axis_angle: return "axis_angle";
        case RotationRepr::sixd: return "sixd";
    }
    return "?";
}

RotationRepr rotation_repr_from_name(std::string_view name) {
    if (name == "scalar_z") return RotationRepr::scalar_z;
    if (name == "ext_euler") return RotationRepr::ext_euler;
    if (name == "int_euler") return RotationRepr::int_euler;
    if (name == "axis_angle") return RotationRepr::axis_angle;
    if (name == "sixd") return RotationRepr::sixd;
    fail(Errc::invalid_config, "unknown rotation representation: '" + std::string(name) + "'");
}

std::string ProgramText::str() const {
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

ProgramText ProgramText::from_string(std::string_view text) {
    ProgramText out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            out.lines.emplace_back(text.substr(start));
            break;
        }
        out.lines.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

std::string format_number(double x) {
    require(std::isfinite(x), Errc::non_finite, "cannot format a non-finite number");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", x);
    std::string s(buf);
    if (s == "-0.000") return "0.000";
    return s;
}

double quantize_number(double x) {
    return std::strtod(format_number(x).c_str(), nullptr);
}

std::vector<double> rotation_values(const Eigen::Matrix3d& r, RotationRepr repr) {
    switch (repr) {
        case RotationRepr::scalar_z: {
            double theta = std::atan2(r(1, 0), r(0, 0));
            require((r - rot::axis_rotation(2, theta)).norm() <= 1e-9, Errc::unserializable_rotation,
                    "rotation is not a pure z-rotation");
            return {theta};
        }
        case RotationRepr::ext_euler: {
            rot::EulerAngles e = rot::matrix_to_euler(r, rot::EulerConvention::extrinsic);
            return {e.angles(0), e.angles(1), e.angles(2)};
        }
        case RotationRepr::int_euler: {
            rot::EulerAngles e = rot::matrix_to_euler(r, rot::EulerConvention::intrinsic);
            return {e.angles(0), e.angles(1), e.angles(2)};
        }
        case RotationRepr::axis_angle: {
            Eigen::Vector3d v = rot::matrix_to_rotvec(r);
            return {v(0), v(1), v(2)};
        }
        case RotationRepr::sixd: {
            auto f = rot::matrix_to_sixd(r).flat();
            return {f.begin(), f.end()};
        }
    }
    fail(Errc::unserializable_rotation, "unknown rotation representation");
}

Eigen::Matrix3d rotation_from_values(std::span<const double> v, RotationRepr repr) {
    auto want = [&](std::size_t n) {
        require(v.size() == n, Errc::arity_error,
                std::string("rotation repr ") + rotation_repr_name(repr) + " takes " + std::to_string(n) +
                    " values, got " + std::to_string(v.size()));
    };
    switch (repr) {
        case RotationRepr::scalar_z:
            want(1);
            return rot::axis_rotation(2, v[0]);
        case RotationRepr::ext_euler:
            want(3);
            return rot::euler_to_matrix({{v[0], v[1], v[2]}, rot::EulerConvention::extrinsic, {}});
        case RotationRepr::int_euler:
            want(3);
            return rot::euler_to_matrix({{v[0], v[1], v[2]}, rot::EulerConvention::intrinsic, {}});
        case RotationRepr::axis_angle:
            want(3);
            return rot::rotvec_to_matrix({v[0], v[1], v[2]});
        case RotationRepr::sixd:
            want(6);
            return rot::sixd_to_matrix({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}});
    }
    fail(Errc::unserializable_rotation, "unknown rotation representation");
}

std::vector<std::size_t> emission_order(const scene::SceneProgram& s, const EmitOptions& opts) {
    if (opts.ordering == Ordering::front_to_back) return scene::front_to_back_order(s);
    std::vector<std::size_t> order(s.objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    return order;
}

namespace {

struct Emitter {
    const scene::AttributeCatalog& catalog;
    const EmitOptions& opts;
    std::vector<double>* values;  // exact serialised numbers, in text order

    std::string number(double x) {
        if (values) values->push_back(x);
        return format_number(x);
    }

    std::string spelling(scene::AttrKind kind, const std::string& canonical, Rng& rng) {
        require(catalog.has(kind, canonical), Errc::unknown_attribute,
                std::string("object ") + scene::attr_kind_name(kind) + " '" + canonical + "' is not in the catalog");
        std::vector<std::string> forms = catalog.spellings(canonical);
        if (!opts.use_synonyms) return forms[0];
        return forms[rng.below(forms.size())];
    }

    std::string emit_line(const scene::ObjectRecord& obj, std::size_t line_index) {
        Rng rng(derive_seed(opts.shuffle_seed, line_index));
        require(obj.location.allFinite(), Errc::non_finite, "object location is not finite");

        if (obj.shape == "dot") {
            require(catalog.has(scene::AttrKind::shape, "dot"), Errc::unknown_attribute,
                    "catalog has no 'dot' shape");
            // 2D records keep the fixed x, y key order.
            return "add(x=" + number(obj.location.x()) + ", y=" + number(obj.location.y()) + ")";
        }

        std::vector<Key> keys{Key::shape};
        if (!obj.size.empty()) keys.push_back(Key::size);
        if (!obj.color.empty()) keys.push_back(Key::color);
        if (!obj.material.empty()) keys.push_back(Key::material);
        if (!obj.location.isZero(0.0)) keys.push_back(Key::loc);
        if (!identity_rotation(obj.rotation)) keys.push_back(Key::rotation);
        if (opts.shuffle_keys) rng.shuffle(keys);

        std::string line = "add(";
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (i) line += ", ";
            line += key_name(keys[i]);
            line += '=';
            switch (keys[i]) {
                case Key::shape: line += "'" + spelling(scene::AttrKind::shape, obj.shape, rng) + "'"; break;
                case Key::size: line += "'" + spelling(scene::AttrKind::size, obj.size, rng) + "'"; break;
                case Key::color: line += "'" + spelling(scene::AttrKind::color, obj.color, rng) + "'"; break;
                case Key::material: line += "'" + spelling(scene::AttrKind::material, obj.material, rng) + "'"; break;
                case Key::loc:
                    line += "(" + number(obj.location.x()) + ", " + number(obj.location.y()) + ", " +
                            number(obj.location.z()) + ")";
                    break;
                case Key::rotation: {
                    std::vector<double> vals = rotation_values(obj.rotation, opts.rotation_repr);
                    if (vals.size() == 1) {
                        line += number(vals[0]);
                    } else {
                        line += "(";
                        for (std::size_t j = 0; j < vals.size(); ++j) {
                            if (j) line += ", ";
                            line += number(vals[j]);
                        }
                        line += ")";
                    }
                    break;
                }
                default: break;
            }
        }
        line += ")";
        return line;
    }
};

}  // namespace

EmittedProgram emit_program_with_values(const scene::SceneProgram& s, const scene::AttributeCatalog& catalog,
                                        const EmitOptions& opts) {
    EmittedProgram out;
    Emitter em{catalog, opts, &out.values};
    std::vector<std::size_t> order = emission_order(s, opts);
    for (std::size_t k = 0; k < order.size(); ++k) out.text.lines.push_back(em.emit_line(s.objects[order[k]], k));
    return out;
}

ProgramText emit_program(const scene::SceneProgram& s, const scene::AttributeCatalog& catalog,
                         const EmitOptions& opts) {
    Emitter em{catalog, opts, nullptr};
    ProgramText out;
    std::vector<std::size_t> order = emission_order(s, opts);
    for (std::size_t k = 0; k < order.size(); ++k) out.lines.push_back(em.emit_line(s.objects[order[k]], k));
    return out;
}

// Parsing ---------------------------------------------------------------------

namespace {

struct Value {
    enum class Kind { str, num, tuple } kind;
    std::string text;           // str
    double number = 0.0;        // num
    std::vector<double> items;  // tuple
};

struct Scanner {
    std::string_view s;
    std::size_t pos = 0;
    int line_no;

    [[noreturn]] void err(const std::string& msg) const {
        fail(Errc::syntax_error,
             "line " + std::to_string(line_no) + ", column " + std::to_string(pos + 1) + ": " + msg);
    }

    bool done() const { return pos >= s.size(); }
    char peek() const { return done() ? '\0' : s[pos]; }

    void ws() {
        while (!done() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\r')) ++pos;
    }

    void expect(char c, const char* what) {
        if (peek() != c) err(std::string("expected ") + what);
        ++pos;
    }

    std::string ident() {
        std::size_t start = pos;
        while (!done() && (std::islower(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
        if (pos == start) err("expected an identifier");
        return std::string(s.substr(start, pos - start));
    }

    double number() {
        std::size_t start = pos;
        if (peek() == '-') ++pos;
        std::size_t digits = 0;
        while (!done() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos, ++digits;
        if (peek() == '.') {
            ++pos;
            while (!done() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos, ++digits;
        }
        if (digits == 0) err("expected a number");
        double out = 0.0;
        auto r = std::from_chars(s.data() + start, s.data() + pos, out);
        if (r.ec != std::errc() || r.ptr != s.data() + pos) err("malformed number");
        return out;
    }

    std::string quoted() {
        expect('\'', "a quoted string");
        std::size_t start = pos;
        while (!done() && s[pos] != '\'') ++pos;
        if (done()) err("unterminated string");
        std::string out(s.substr(start, pos - start));
        ++pos;
        return out;
    }

    Value value() {
        char c = peek();
        if (c == '\'') return Value{Value::Kind::str, quoted(), 0.0, {}};
        if (c == '(') {
            ++pos;
            Value v{Value::Kind::tuple, "", 0.0, {}};
            ws();
            if (peek() == ')') err("empty tuple");
            while (true) {
                v.items.push_back(number());
                ws();
                if (peek() == ',') {
                    ++pos;
                    ws();
                    continue;
                }
                expect(')', "')' to close the tuple");
                break;
            }
            return v;
        }
        return Value{Value::Kind::num, "", number(), {}};
    }
};

Key key_from_name(const std::string& name, const Scanner& sc) {
    if (name == "shape") return Key::shape;
    if (name == "size") return Key::size;
    if (name == "color") return Key::color;
    if (name == "material") return Key::material;
    if (name == "loc") return Key::loc;
    if (name == "rotation") return Key::rotation;
    if (name == "x") return Key::x;
    if (name == "y") return Key::y;
    sc.err("unknown keyword '" + name + "'");
}

struct ParsedLine {
    std::array<bool, 8> has{};
    std::array<Value, 8> vals;
    int line_no;
};

ParsedLine scan_line(const std::string& line, int line_no) {
    Scanner sc{line, 0, line_no};
    ParsedLine out;
    out.line_no = line_no;
    sc.ws();
    if (sc.ident() != "add") sc.err("a statement must be an add(...) call");
    sc.ws();
    sc.expect('(', "'(' after add");
    sc.ws();
    if (sc.peek() != ')') {
        while (true) {
            std::string key_text = sc.ident();
            Key key = key_from_name(key_text, sc);
            sc.ws();
            sc.expect('=', "'=' after keyword");
            sc.ws();
            std::size_t slot = static_cast<std::size_t>(key);
            require(!out.has[slot], Errc::duplicate_key,
                    "line " + std::to_string(line_no) + ": duplicate keyword '" + key_text + "'");
            out.vals[slot] = sc.value();
            out.has[slot] = true;
            sc.ws();
            if (sc.peek() == ',') {
                ++sc.pos;
                sc.ws();
                continue;
            }
            break;
        }
    }
    sc.expect(')', "')' to close add");
    sc.ws();
    if (!sc.done()) sc.err("trailing characters after ')'");
    return out;
}

scene::ObjectRecord build_object(const ParsedLine& pl, const scene::AttributeIndex& index,
                                 const ParseOptions& opts) {
    auto has = [&](Key k) { return pl.has[static_cast<std::size_t>(k)]; };
    auto val = [&](Key k) -> const Value& { return pl.vals[static_cast<std::size_t>(k)]; };
    auto where = [&] { return "line " + std::to_string(pl.line_no) + ": "; };

    scene::ObjectRecord obj;

    if (has(Key::x) || has(Key::y)) {
        require(has(Key::x) && has(Key::y), Errc::arity_error, where() + "a 2D record needs both x and y");
        for (Key k : {Key::shape, Key::size, Key::color, Key::material, Key::loc, Key::rotation})
            require(!has(k), Errc::arity_error, where() + "a 2D record takes only x and y");
        require(val(Key::x).kind == Value::Kind::num && val(Key::y).kind == Value::Kind::num, Errc::syntax_error,
                where() + "x and y must be scalars");
        obj.shape = "dot";
        obj.location = {val(Key::x).number, val(Key::y).number, 0.0};
        return obj;
    }

    require(has(Key::shape), Errc::syntax_error, where() + "object record is missing shape");
    auto categorical = [&](Key k, scene::AttrKind kind) -> std::string {
        const Value& v = val(k);
        require(v.kind == Value::Kind::str, Errc::syntax_error,
                where() + std::string(key_name(k)) + " must be a quoted string");
        try {
            return index.resolve_in_kind(v.text, kind);
        } catch (const Error& e) {
            fail(e.code(), where() + e.what());
        }
    };
    obj.shape = categorical(Key::shape, scene::AttrKind::shape);
    if (has(Key::size)) obj.size = categorical(Key::size, scene::AttrKind::size);
    if (has(Key::color)) obj.color = categorical(Key::color, scene::AttrKind::color);
    if (has(Key::material)) obj.material = categorical(Key::material, scene::AttrKind::material);

    if (has(Key::loc)) {
        const Value& v = val(Key::loc);
        require(v.kind == Value::Kind::tuple, Errc::syntax_error, where() + "loc must be a tuple");
        require(v.items.size() == 3, Errc::arity_error, where() + "loc takes exactly 3 values");
        obj.location = {v.items[0], v.items[1], v.items[2]};
    }

    if (has(Key::rotation)) {
        const Value& v = val(Key::rotation);
        std::vector<double> items;
        if (v.kind == Value::Kind::num) {
            items = {v.number};
        } else if (v.kind == Value::Kind::tuple) {
            items = v.items;
        } else {
            fail(Errc::syntax_error, where() + "rotation must be a number or a tuple");
        }
        RotationRepr repr;
        if (items.size() == 1) {
            repr = RotationRepr::scalar_z;
        } else if (items.size() == 6) {
            repr = RotationRepr::sixd;
        } else if (items.size() == 3) {
            repr = opts.three_value_repr;
            require(repr == RotationRepr::ext_euler || repr == RotationRepr::int_euler ||
                        repr == RotationRepr::axis_angle,
                    Errc::arity_error,
                    where() + "got a 3-value rotation but the expected representation is " +
                        rotation_repr_name(repr));
        } else {
            fail(Errc::arity_error, where() + "rotation takes 1, 3 or 6 values, got " + std::to_string(items.size()));
        }
        try {
            obj.rotation = rotation_from_values(items, repr);
        } catch (const Error& e) {
            fail(e.code(), where() + e.what());
        }
    }
    return obj;
}

bool blank(const std::string& line) {
    for (char c : line)
        if (c != ' ' && c != '\t' && c != '\r') return false;
    return true;
}

}  // namespace

scene::SceneProgram parse_program(const ProgramText& text, const scene::AttributeIndex& index,
                                  const ParseOptions& opts) {
    scene::SceneProgram s;
    for (std::size_t i = 0; i < text.lines.size(); ++i) {
        if (blank(text.lines[i])) continue;
        ParsedLine pl = scan_line(text.lines[i], static_cast<int>(i + 1));
        s.objects.push_back(build_object(pl, index, opts));
    }
    return s;
}

scene::SceneProgram parse_program(const ProgramText& text, const scene::AttributeCatalog& catalog,
                                  const ParseOptions& opts) {
    return parse_program(text, scene::AttributeIndex(catalog), opts);
}

bool round_trip_equal(const scene::SceneProgram& original, const scene::SceneProgram& parsed,
                      const EmitOptions& opts, double rot_tol_deg, std::string* why) {
    auto mismatch = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    std::vector<std::size_t> order = emission_order(original, opts);
    if (parsed.objects.size() != order.size())
        return mismatch("object count " + std::to_string(parsed.objects.size()) + " != " + std::to_string(order.size()));
    for (std::size_t k = 0; k < order.size(); ++k) {
        const scene::ObjectRecord& o = original.objects[order[k]];
        const scene::ObjectRecord& p = parsed.objects[k];
        std::string at = "object " + std::to_string(k) + ": ";
        if (o.shape != p.shape) return mismatch(at + "shape '" + p.shape + "' != '" + o.shape + "'");
        if (o.size != p.size) return mismatch(at + "size '" + p.size + "' != '" + o.size + "'");
        if (o.color != p.color) return mismatch(at + "color '" + p.color + "' != '" + o.color + "'");
        if (o.material != p.material) return mismatch(at + "material '" + p.material + "' != '" + o.material + "'");
        for (int c = 0; c < 3; ++c) {
            double want = quantize_number(o.location(c));
            if (p.location(c) != want)
                return mismatch(at + "loc[" + std::to_string(c) + "] " + std::to_string(p.location(c)) + " != " +
                                std::to_string(want));
        }
        double gap = rot::geodesic_deg(o.rotation, p.rotation);
        if (!(gap <= rot_tol_deg))
            return mismatch(at + "rotation differs by " + std::to_string(gap) + " deg");
    }
    return true;
}

}  // namespace derender::dsl
