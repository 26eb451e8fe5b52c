#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <string>
#include <vector>

#include "derender/common.hpp"
#include "derender/dsl.hpp"
#include "derender/rng.hpp"
#include "derender/rotation.hpp"
#include "derender/scene.hpp"

using namespace derender;

namespace {

scene::SceneProgram random_scene(const scene::AttributeCatalog& cat, Rng& rng, int max_objects,
                                 bool z_rotation_only) {
    scene::SceneProgram s;
    s.camera = scene::clevr_camera();
    int n = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_objects)));
    for (int i = 0; i < n; ++i) {
        scene::ObjectRecord o;
        o.shape = rng.pick(cat.shapes);
        if (!cat.sizes.empty()) o.size = rng.pick(cat.sizes).name;
        if (!cat.colors.empty()) o.color = rng.pick(cat.colors).name;
        if (!cat.materials.empty()) o.material = rng.pick(cat.materials);
        o.location = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 1)};
        if (z_rotation_only) {
            o.rotation = rot::axis_rotation(2, rng.uniform(-3.14, 3.14));
        } else {
            o.rotation = rot::random_rotation(rng);
        }
        s.objects.push_back(o);
    }
    return s;
}

}  // namespace

TEST_CASE("dsl: format_number pinned cases") {
    CHECK(dsl::format_number(0.5) == "0.500");
    CHECK(dsl::format_number(-1.3844) == "-1.384");
    CHECK(dsl::format_number(2.0) == "2.000");
    CHECK(dsl::format_number(0.0) == "0.000");
    CHECK(dsl::format_number(-0.0) == "0.000");
    CHECK(dsl::format_number(-0.0004) == "0.000");  // never "-0.000"
    CHECK(dsl::format_number(0.2921) == "0.292");
    CHECK(dsl::format_number(0.2929) == "0.293");
    CHECK(dsl::format_number(-2.1634999) == "-2.163");
    CHECK(dsl::format_number(1234.56789) == "1234.568");
    CHECK(dsl::format_number(1e-9) == "0.000");
    CHECK_THROWS_AS(dsl::format_number(std::nan("")), Error);
    try {
        dsl::format_number(std::numeric_limits<double>::infinity());
        FAIL("expected non_finite");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::non_finite);
    }
}

TEST_CASE("dsl: format_number properties over random draws") {
    Rng rng(41);
    std::regex shape(R"(-?\d+\.\d{3})");
    for (int i = 0; i < 5000; ++i) {
        double x = rng.uniform(-100, 100);
        std::string s = dsl::format_number(x);
        CHECK(std::regex_match(s, shape));
        double back = std::strtod(s.c_str(), nullptr);
        CHECK(std::abs(back - x) <= 0.0005 + 1e-12);
        CHECK(back == dsl::quantize_number(x));
        // Quantisation is idempotent.
        CHECK(dsl::quantize_number(back) == back);
        CHECK(dsl::format_number(back) == s);
    }
}

TEST_CASE("dsl: parses the blocks-world example line with synonyms") {
    auto cat = scene::clevr_catalog();
    auto text = dsl::ProgramText::from_string(
        "add(color='green', size='tiny', material='shiny', shape='cylinder', loc=(2.163, -1.384, 0.350))");
    auto s = dsl::parse_program(text, cat);
    REQUIRE(s.objects.size() == 1);
    const auto& o = s.objects[0];
    CHECK(o.shape == "cylinder");
    CHECK(o.size == "small");
    CHECK(o.color == "green");
    CHECK(o.material == "metal");
    CHECK(o.location.x() == doctest::Approx(2.163).epsilon(1e-12));
    CHECK(o.location.y() == doctest::Approx(-1.384).epsilon(1e-12));
    CHECK(o.location.z() == doctest::Approx(0.350).epsilon(1e-12));
    CHECK((o.rotation - Eigen::Matrix3d::Identity()).norm() == 0.0);  // missing rotation -> identity
}

TEST_CASE("dsl: parses the dot example and emits it back byte-exactly") {
    auto cat = scene::dot_catalog();
    auto text = dsl::ProgramText::from_string("add(x=0.292, y=0.266)");
    auto s = dsl::parse_program(text, cat);
    REQUIRE(s.objects.size() == 1);
    CHECK(s.objects[0].shape == "dot");
    CHECK(s.objects[0].location.x() == doctest::Approx(0.292).epsilon(1e-12));
    CHECK(s.objects[0].location.y() == doctest::Approx(0.266).epsilon(1e-12));
    CHECK(s.objects[0].location.z() == 0.0);

    dsl::EmitOptions opts;
    opts.shuffle_keys = false;
    opts.ordering = dsl::Ordering::as_given;
    auto out = dsl::emit_program(s, cat, opts);
    REQUIRE(out.lines.size() == 1);
    CHECK(out.lines[0] == "add(x=0.292, y=0.266)");
    CHECK(out.str() == "add(x=0.292, y=0.266)\n");
}

TEST_CASE("dsl: empty program parses to an empty scene and emits empty text") {
    auto cat = scene::clevr_catalog();
    auto s = dsl::parse_program(dsl::ProgramText{}, cat);
    CHECK(s.objects.empty());
    CHECK(dsl::ProgramText::from_string("").lines.empty());
    CHECK(dsl::ProgramText{}.str().empty());
    scene::SceneProgram empty;
    empty.camera = scene::clevr_camera();
    CHECK(dsl::emit_program(empty, cat).lines.empty());
}

TEST_CASE("dsl: sixd rotation serialises the first two columns; identity is omitted") {
    auto cat = scene::clevr_catalog();
    scene::SceneProgram s;
    s.camera = scene::clevr_camera();
    scene::ObjectRecord o;
    o.shape = "cube";
    o.size = "large";
    o.color = "red";
    o.material = "metal";
    o.location = {1.0, 2.0, 0.7};
    s.objects.push_back(o);
    dsl::EmitOptions opts;
    opts.shuffle_keys = false;
    opts.rotation_repr = dsl::RotationRepr::sixd;
    auto text = dsl::emit_program(s, cat, opts);
    REQUIRE(text.lines.size() == 1);
    // Identity rotations stay out of the canonical program entirely.
    CHECK(text.lines[0].find("rotation=") == std::string::npos);

    s.objects[0].rotation = rot::axis_rotation(2, 3.14159265358979323846 / 2.0);
    text = dsl::emit_program(s, cat, opts);
    REQUIRE(text.lines.size() == 1);
    CHECK(text.lines[0].find("rotation=(0.000, 1.000, 0.000, -1.000, 0.000, 0.000)") != std::string::npos);
}

TEST_CASE("dsl: front-to-back emission puts the nearer object first") {
    auto cat = scene::clevr_catalog();
    scene::SceneProgram s;
    s.camera = scene::arc_camera(30.0, 10.0, 0.0);
    for (double d : {8.0, 5.0}) {
        scene::ObjectRecord o;
        o.shape = "sphere";
        o.size = "small";
        o.color = d < 6 ? std::string("red") : std::string("blue");
        o.material = "rubber";
        // Place along the camera ray so distances are unambiguous.
        o.location = s.camera.position - d * s.camera.position.normalized();
        s.objects.push_back(o);
    }
    auto order = dsl::emission_order(s, {});
    REQUIRE(order.size() == 2);
    CHECK(order[0] == 1);  // distance 5 first
    CHECK(order[1] == 0);
    dsl::EmitOptions opts;
    opts.shuffle_keys = false;
    auto text = dsl::emit_program(s, cat, opts);
    CHECK(text.lines[0].find("'red'") != std::string::npos);
    CHECK(text.lines[1].find("'blue'") != std::string::npos);

    dsl::EmitOptions keep;
    keep.ordering = dsl::Ordering::as_given;
    auto order2 = dsl::emission_order(s, keep);
    CHECK(order2 == std::vector<std::size_t>{0, 1});
}

TEST_CASE("dsl: rotation_values round trips every representation") {
    Rng rng(42);
    for (auto repr : {dsl::RotationRepr::ext_euler, dsl::RotationRepr::int_euler,
                      dsl::RotationRepr::axis_angle, dsl::RotationRepr::sixd}) {
        for (int i = 0; i < 200; ++i) {
            Eigen::Matrix3d r = rot::random_rotation(rng);
            auto vals = dsl::rotation_values(r, repr);
            CHECK(vals.size() == (repr == dsl::RotationRepr::sixd ? 6u : 3u));
            Eigen::Matrix3d back = dsl::rotation_from_values(vals, repr);
            CHECK(rot::geodesic_deg(r, back) < 1e-8);
        }
    }
    // scalar_z round trips z-rotations and rejects general rotations.
    for (int i = 0; i < 100; ++i) {
        double a = rng.uniform(-3.14, 3.14);
        Eigen::Matrix3d r = rot::axis_rotation(2, a);
        auto vals = dsl::rotation_values(r, dsl::RotationRepr::scalar_z);
        REQUIRE(vals.size() == 1);
        CHECK(vals[0] == doctest::Approx(a).epsilon(1e-9));
        CHECK(rot::geodesic_deg(dsl::rotation_from_values(vals, dsl::RotationRepr::scalar_z), r) < 1e-9);
    }
    Eigen::Matrix3d tilted = rot::axis_rotation(0, 0.5);
    try {
        dsl::rotation_values(tilted, dsl::RotationRepr::scalar_z);
        FAIL("expected unserializable_rotation");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::unserializable_rotation);
    }
    // Wrong arity raises.
    std::vector<double> two{0.1, 0.2};
    CHECK_THROWS_AS(dsl::rotation_from_values(two, dsl::RotationRepr::ext_euler), Error);
}

TEST_CASE("dsl: round trip across catalogs, representations, and seeds") {
    Rng rng(43);
    struct Case {
        scene::AttributeCatalog cat;
        dsl::RotationRepr repr;
        bool z_only;
    };
    std::vector<Case> cases;
    for (auto repr : {dsl::RotationRepr::ext_euler, dsl::RotationRepr::int_euler,
                      dsl::RotationRepr::axis_angle, dsl::RotationRepr::sixd}) {
        cases.push_back({scene::clevr_catalog(), repr, false});
        cases.push_back({scene::so3_catalog(), repr, false});
        cases.push_back({scene::extended_catalog(), repr, false});
    }
    cases.push_back({scene::clevr_catalog(), dsl::RotationRepr::scalar_z, true});
    cases.push_back({scene::dot_catalog(), dsl::RotationRepr::scalar_z, true});

    for (auto& c : cases) {
        bool dot = c.cat.shapes.size() == 1 && c.cat.shapes[0] == "dot";
        for (int i = 0; i < 60; ++i) {
            scene::SceneProgram s = random_scene(c.cat, rng, dot ? 1 : 5, c.z_only);
            if (dot) {
                for (auto& o : s.objects) {
                    o.location.z() = 0;
                    o.rotation = Eigen::Matrix3d::Identity();
                    o.location.x() = rng.uniform(0, 1);
                    o.location.y() = rng.uniform(0, 1);
                }
            }
            dsl::EmitOptions opts;
            opts.shuffle_seed = rng.next_u64();
            opts.rotation_repr = c.repr;
            opts.use_synonyms = (i % 3 == 0);
            auto text = dsl::emit_program(s, c.cat, opts);
            dsl::ParseOptions popts;
            if (c.repr != dsl::RotationRepr::sixd && c.repr != dsl::RotationRepr::scalar_z)
                popts.three_value_repr = c.repr;
            auto parsed = dsl::parse_program(text, c.cat, popts);
            std::string why;
            bool ok = dsl::round_trip_equal(s, parsed, opts, 0.25, &why);
            if (!ok) {
                CAPTURE(text.str());
                CAPTURE(why);
            }
            CHECK(ok);
        }
    }
}

TEST_CASE("dsl: emission is deterministic and key shuffling permutes but preserves meaning") {
    auto cat = scene::clevr_catalog();
    Rng rng(44);
    scene::SceneProgram s = random_scene(cat, rng, 4, true);
    dsl::EmitOptions a;
    a.shuffle_seed = 9;
    a.rotation_repr = dsl::RotationRepr::scalar_z;
    auto t1 = dsl::emit_program(s, cat, a);
    auto t2 = dsl::emit_program(s, cat, a);
    CHECK(t1 == t2);

    dsl::EmitOptions b = a;
    b.shuffle_seed = 10;
    auto t3 = dsl::emit_program(s, cat, b);
    auto p1 = dsl::parse_program(t1, cat);
    auto p3 = dsl::parse_program(t3, cat);
    REQUIRE(p1.objects.size() == p3.objects.size());
    for (std::size_t i = 0; i < p1.objects.size(); ++i) {
        CHECK(p1.objects[i].shape == p3.objects[i].shape);
        CHECK((p1.objects[i].location - p3.objects[i].location).norm() == 0.0);
    }
    // Over many seeds, at least one line actually changes key order.
    bool shuffled = false;
    for (std::uint64_t seed = 0; seed < 32 && !shuffled; ++seed) {
        dsl::EmitOptions o = a;
        o.shuffle_seed = seed;
        shuffled = dsl::emit_program(s, cat, o).lines[0] != t1.lines[0];
    }
    CHECK(shuffled);
}

TEST_CASE("dsl: synonym emission stays parseable and hits alias spellings") {
    auto cat = scene::clevr_catalog();
    Rng rng(45);
    bool saw_alias = false;
    for (int i = 0; i < 40; ++i) {
        scene::SceneProgram s = random_scene(cat, rng, 4, true);
        dsl::EmitOptions opts;
        opts.shuffle_seed = static_cast<std::uint64_t>(i);
        opts.rotation_repr = dsl::RotationRepr::scalar_z;
        opts.use_synonyms = true;
        auto text = dsl::emit_program(s, cat, opts);
        for (const auto& line : text.lines) {
            if (line.find("'ball'") != std::string::npos || line.find("'big'") != std::string::npos ||
                line.find("'shiny'") != std::string::npos || line.find("'block'") != std::string::npos ||
                line.find("'tiny'") != std::string::npos)
                saw_alias = true;
        }
        auto parsed = dsl::parse_program(text, cat);
        std::string why;
        CHECK(dsl::round_trip_equal(s, parsed, opts, 0.25, &why));
    }
    CHECK(saw_alias);
}

TEST_CASE("dsl: parse errors carry the right codes") {
    auto cat = scene::clevr_catalog();
    auto code_of = [&](const std::string& text) {
        try {
            dsl::parse_program(dsl::ProgramText::from_string(text), cat);
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::io_error;  // sentinel: "did not throw"
    };
    CHECK(code_of("move(shape='cube')") == Errc::syntax_error);
    CHECK(code_of("add(shape='cube'") == Errc::syntax_error);
    CHECK(code_of("add shape='cube')") == Errc::syntax_error);
    CHECK(code_of("add(shape=cube)") == Errc::syntax_error);
    CHECK(code_of("add(='cube')") == Errc::syntax_error);
    CHECK(code_of("add(shape='cube', shape='sphere')") == Errc::duplicate_key);
    CHECK(code_of("add(shape='torus')") == Errc::unknown_attribute);
    CHECK(code_of("add(color='taupe', shape='cube')") == Errc::unknown_attribute);
    CHECK(code_of("add(shape='cube', loc=(1.0, 2.0))") == Errc::arity_error);
    CHECK(code_of("add(shape='cube', loc=(1.0, 2.0, 3.0, 4.0))") == Errc::arity_error);
    CHECK(code_of("add(shape='cube', rotation=(0.1, 0.2))") == Errc::arity_error);
    CHECK(code_of("add(wrench='left')") == Errc::syntax_error);

    auto dot = scene::dot_catalog();
    auto dot_code = [&](const std::string& text) {
        try {
            dsl::parse_program(dsl::ProgramText::from_string(text), dot);
        } catch (const Error& e) {
            return e.code();
        }
        return Errc::io_error;
    };
    CHECK(dot_code("add(x=0.5)") == Errc::arity_error);
    CHECK(dot_code("add(x=0.1, y=0.2, x=0.3)") == Errc::duplicate_key);
}

TEST_CASE("dsl: three-value rotations honour the declared representation") {
    auto cat = scene::so3_catalog();
    Rng rng(46);
    int disagreements = 0;
    for (int i = 0; i < 40; ++i) {
        scene::SceneProgram s = random_scene(cat, rng, 1, false);
        dsl::EmitOptions opts;
        opts.rotation_repr = dsl::RotationRepr::axis_angle;
        opts.shuffle_seed = static_cast<std::uint64_t>(i);
        auto text = dsl::emit_program(s, cat, opts);
        dsl::ParseOptions right;
        right.three_value_repr = dsl::RotationRepr::axis_angle;
        auto good = dsl::parse_program(text, cat, right);
        CHECK(rot::geodesic_deg(good.objects[0].rotation, s.objects[0].rotation) < 0.25);
        // Misreading as extrinsic Euler usually lands somewhere else entirely.
        auto wrong = dsl::parse_program(text, cat, {});
        if (rot::geodesic_deg(wrong.objects[0].rotation, s.objects[0].rotation) > 1.0) disagreements++;
    }
    CHECK(disagreements > 30);
}

TEST_CASE("dsl: program text joins lines with LF and a trailing newline") {
    dsl::ProgramText t;
    t.lines = {"add(x=0.100, y=0.200)", "add(x=0.300, y=0.400)"};
    CHECK(t.str() == "add(x=0.100, y=0.200)\nadd(x=0.300, y=0.400)\n");
    auto back = dsl::ProgramText::from_string(t.str());
    CHECK(back == t);
    // Splitting preserves interior blank segments; the parser skips them.
    auto padded = dsl::ProgramText::from_string("\nadd(x=0.100, y=0.200)\n\n");
    REQUIRE(padded.lines.size() == 3);
    CHECK(padded.lines[0].empty());
    CHECK(padded.lines[2].empty());
    auto parsed = dsl::parse_program(padded, scene::dot_catalog(), {});
    CHECK(parsed.objects.size() == 1);
}
