#include "doctest.h"

#include <algorithm>
#include <string>
#include <vector>

#include "derender/common.hpp"
#include "derender/dsl.hpp"
#include "derender/rng.hpp"
#include "derender/rotation.hpp"
#include "derender/scene.hpp"
#include "derender/tokens.hpp"

using namespace derender;

namespace {

scene::SceneProgram random_clevr_scene(Rng& rng) {
    auto cat = scene::clevr_catalog();
    scene::SceneProgram s;
    s.camera = scene::clevr_camera();
    int n = 1 + static_cast<int>(rng.below(5));
    for (int i = 0; i < n; ++i) {
        scene::ObjectRecord o;
        o.shape = rng.pick(cat.shapes);
        o.size = rng.pick(cat.sizes).name;
        o.color = rng.pick(cat.colors).name;
        o.material = rng.pick(cat.materials);
        o.location = {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 1)};
        o.rotation = rot::random_rotation(rng);
        s.objects.push_back(o);
    }
    return s;
}

}  // namespace

TEST_CASE("tokens: vocabulary layout pins the special ids") {
    for (auto mode : {tok::Mode::float_slots, tok::Mode::chars}) {
        auto vocab = tok::build_vocabulary(scene::clevr_catalog(), mode);
        CHECK(vocab.tokens[0] == tok::Vocabulary::kPad);
        CHECK(vocab.tokens[1] == tok::Vocabulary::kBos);
        CHECK(vocab.tokens[2] == tok::Vocabulary::kEos);
        CHECK(vocab.tokens[3] == tok::Vocabulary::kNum);
        CHECK(vocab.pad_id == 0);
        CHECK(vocab.bos_id == 1);
        CHECK(vocab.eos_id == 2);
        CHECK(vocab.num_id == 3);
        CHECK(vocab.id("[NUM]") == 3);
        // index covers every token, bijectively.
        CHECK(vocab.index.size() == vocab.tokens.size());
        for (int i = 0; i < vocab.size(); ++i)
            CHECK(vocab.id(vocab.tokens[static_cast<std::size_t>(i)]) == i);
        CHECK_THROWS_AS(vocab.id("definitely-not-a-token"), Error);
    }
}

TEST_CASE("tokens: mode names round trip") {
    CHECK(tok::mode_from_name("float") == tok::Mode::float_slots);
    CHECK(tok::mode_from_name("char") == tok::Mode::chars);
    CHECK(tok::mode_from_name(tok::mode_name(tok::Mode::float_slots)) == tok::Mode::float_slots);
    CHECK(tok::mode_from_name(tok::mode_name(tok::Mode::chars)) == tok::Mode::chars);
    CHECK_THROWS_AS(tok::mode_from_name("bits"), Error);
}

TEST_CASE("tokens: float mode masks the dot example into two [NUM] slots") {
    auto cat = scene::dot_catalog();
    auto vocab = tok::build_vocabulary(cat, tok::Mode::float_slots);
    auto text = dsl::ProgramText::from_string("add(x=0.292, y=0.266)");
    auto stream = tok::encode(text, vocab, tok::Mode::float_slots);
    REQUIRE(stream.slots.size() == 2);
    CHECK(stream.slots[0].second == doctest::Approx(0.292).epsilon(1e-12));
    CHECK(stream.slots[1].second == doctest::Approx(0.266).epsilon(1e-12));
    int nums = 0;
    for (int id : stream.ids) nums += (id == vocab.num_id);
    CHECK(nums == 2);
    CHECK(stream.ids.front() == vocab.bos_id);
    CHECK(stream.ids.back() == vocab.eos_id);
    // Slot positions point at the [NUM] ids, strictly increasing.
    for (std::size_t k = 0; k < stream.slots.size(); ++k) {
        CHECK(stream.ids[static_cast<std::size_t>(stream.slots[k].first)] == vocab.num_id);
        if (k) CHECK(stream.slots[k].first > stream.slots[k - 1].first);
    }
}

TEST_CASE("tokens: char mode spells digits and leaves no slots") {
    auto cat = scene::dot_catalog();
    auto vocab = tok::build_vocabulary(cat, tok::Mode::chars);
    auto text = dsl::ProgramText::from_string("add(x=0.292, y=0.266)");
    auto stream = tok::encode(text, vocab, tok::Mode::chars);
    CHECK(stream.slots.empty());
    for (int id : stream.ids) CHECK(id != vocab.num_id);
    // The digit sequence 2,9,2 appears in order as single-char tokens.
    std::vector<std::string> toks;
    for (int id : stream.ids) toks.push_back(vocab.tokens[static_cast<std::size_t>(id)]);
    auto it = std::find(toks.begin(), toks.end(), "9");
    REQUIRE(it != toks.end());
    CHECK(*(it - 1) == "2");
    CHECK(*(it + 1) == "2");
    // Round trip through decode (no numbers needed in char mode).
    auto back = tok::decode_two_pass(stream.ids, {}, vocab);
    CHECK(back == text);
}

TEST_CASE("tokens: decode substitutes numeric outputs in reading order") {
    auto cat = scene::dot_catalog();
    auto vocab = tok::build_vocabulary(cat, tok::Mode::float_slots);
    auto text = dsl::ProgramText::from_string("add(x=0.292, y=0.266)");
    auto stream = tok::encode(text, vocab, tok::Mode::float_slots);
    std::vector<double> numbers = {0.5, 0.25};
    auto out = tok::decode_two_pass(stream.ids, numbers, vocab);
    REQUIRE(out.lines.size() == 1);
    CHECK(out.lines[0] == "add(x=0.500, y=0.250)");

    std::vector<double> wrong = {0.5};
    try {
        tok::decode_two_pass(stream.ids, wrong, vocab);
        FAIL("expected slot_mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::slot_mismatch);
    }
    std::vector<double> extra = {0.5, 0.25, 0.1};
    CHECK_THROWS_AS(tok::decode_two_pass(stream.ids, extra, vocab), Error);
}

TEST_CASE("tokens: encode/decode round trips random programs in both modes") {
    Rng rng(51);
    auto cat = scene::clevr_catalog();
    for (auto mode : {tok::Mode::float_slots, tok::Mode::chars}) {
        auto vocab = tok::build_vocabulary(cat, mode);
        for (int i = 0; i < 120; ++i) {
            auto s = random_clevr_scene(rng);
            dsl::EmitOptions opts;
            opts.shuffle_seed = rng.next_u64();
            opts.rotation_repr = dsl::RotationRepr::sixd;
            opts.use_synonyms = (i % 2 == 0);
            auto text = dsl::emit_program(s, cat, opts);
            auto stream = tok::encode(text, vocab, mode);
            std::vector<double> numbers;
            for (auto& [pos, val] : stream.slots) numbers.push_back(val);
            auto back = tok::decode_two_pass(stream.ids, numbers, vocab);
            CHECK(back == text);
        }
    }
}

TEST_CASE("tokens: float-mode slot values carry the exact literal values") {
    auto cat = scene::clevr_catalog();
    auto vocab = tok::build_vocabulary(cat, tok::Mode::float_slots);
    auto text = dsl::ProgramText::from_string(
        "add(shape='cube', size='large', color='red', material='metal', loc=(2.163, -1.384, 0.350), "
        "rotation=-0.126)");
    auto stream = tok::encode(text, vocab, tok::Mode::float_slots);
    REQUIRE(stream.slots.size() == 4);
    CHECK(stream.slots[0].second == doctest::Approx(2.163).epsilon(1e-12));
    CHECK(stream.slots[1].second == doctest::Approx(-1.384).epsilon(1e-12));
    CHECK(stream.slots[2].second == doctest::Approx(0.350).epsilon(1e-12));
    CHECK(stream.slots[3].second == doctest::Approx(-0.126).epsilon(1e-12));
}

TEST_CASE("tokens: digits inside catalog names do not become numeric slots") {
    auto cat = scene::extended_catalog();
    auto vocab = tok::build_vocabulary(cat, tok::Mode::float_slots);
    auto text = dsl::ProgramText::from_string(
        "add(shape='chairs_0001', color='Olive Green', loc=(0.100, 0.200, 0.300), "
        "rotation=(1.000, 0.000, 0.000, 0.000, 1.000, 0.000))");
    auto stream = tok::encode(text, vocab, tok::Mode::float_slots);
    // Exactly the 3 loc values and 6 rotation values are slots; the shape name
    // token keeps its digits.
    CHECK(stream.slots.size() == 9);
    bool has_shape_token = false;
    for (int id : stream.ids) has_shape_token |= vocab.tokens[static_cast<std::size_t>(id)] == "chairs_0001";
    CHECK(has_shape_token);
    auto back = tok::decode_two_pass(stream.ids, [&] {
        std::vector<double> v;
        for (auto& [p, x] : stream.slots) v.push_back(x);
        return v;
    }(), vocab);
    CHECK(back == text);
}

TEST_CASE("tokens: unencodable text raises") {
    auto cat = scene::dot_catalog();
    for (auto mode : {tok::Mode::float_slots, tok::Mode::chars}) {
        auto vocab = tok::build_vocabulary(cat, mode);
        auto bad = dsl::ProgramText::from_string("add(x=0.100, y=0.200) #?!");
        try {
            tok::encode(bad, vocab, mode);
            FAIL("expected unencodable_text");
        } catch (const Error& e) {
            CHECK(e.code() == Errc::unencodable_text);
        }
    }
    // Char-mode vocabulary cannot encode a bare [NUM] literal either.
    auto vocab = tok::build_vocabulary(cat, tok::Mode::chars);
    CHECK_THROWS_AS(tok::encode(dsl::ProgramText::from_string("add(x=[NUM], y=0.100)"), vocab,
                                tok::Mode::chars),
                    Error);
}

TEST_CASE("tokens: vocabularies are deterministic and mode-stable") {
    auto a = tok::build_vocabulary(scene::clevr_catalog(), tok::Mode::float_slots);
    auto b = tok::build_vocabulary(scene::clevr_catalog(), tok::Mode::float_slots);
    CHECK(a.tokens == b.tokens);
    auto c = tok::build_vocabulary(scene::clevr_catalog(), tok::Mode::chars);
    CHECK(a.tokens == c.tokens);  // same inventory across modes
}
