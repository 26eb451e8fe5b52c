#pragma once

// Program-text <-> token-id streams, in the two numeric regimes under study:
//
//   float_slots: every numeric literal becomes the single [NUM] mask token
//                and its value travels in a parallel list of floats;
//   chars:       numeric literals are spelled out digit by digit.
//
// Decoding is two-pass: first the token ids are joined back into text with
// [NUM] placeholders, then the numeric outputs are substituted in reading
// order with 3-decimal formatting.

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "derender/dsl.hpp"
#include "derender/scene.hpp"

namespace derender::tok {

enum class Mode { float_slots, chars };

const char* mode_name(Mode m);
Mode mode_from_name(std::string_view name);

struct Vocabulary {
    std::vector<std::string> tokens;  // id -> text; specials occupy ids 0..3
    std::unordered_map<std::string, int> index;

    int pad_id = 0, bos_id = 1, eos_id = 2, num_id = 3;

    static constexpr const char* kPad = "[PAD]";
    static constexpr const char* kBos = "[BOS]";
    static constexpr const char* kEos = "[EOS]";
    static constexpr const char* kNum = "[NUM]";

    int size() const { return static_cast<int>(tokens.size()); }
    int id(const std::string& token) const;           // throws UnencodableText
    static Vocabulary from_tokens(std::vector<std::string> tokens);
};

// Token inventory for a catalog: specials, structural pieces ("add(", ", ",
// quotes, digits, '-', '.', newline), argument keywords, and every canonical
// name / display form / synonym as a whole-word token.  The inventory is the
// same for both modes; in float mode numeric literals match [NUM] instead of
// digit tokens.
Vocabulary build_vocabulary(const scene::AttributeCatalog& catalog, Mode mode);

struct TokenStream {
    std::vector<int> ids;  // [BOS] ... [EOS]
    // (position in ids, literal value) for each [NUM], strictly increasing
    // positions; empty in char mode.
    std::vector<std::pair<int, double>> slots;
    Mode mode = Mode::float_slots;
};

// Greedy longest-match tokenisation.  In float mode a maximal numeric literal
// ("-?digits[.digits]") longer than any vocabulary match at that position
// becomes [NUM] + slot value.  Throws UnencodableText when stuck.
TokenStream encode(const dsl::ProgramText& text, const Vocabulary& vocab, Mode mode);

// ids + numeric outputs -> text.  Specials are skipped; the k-th [NUM] takes
// format_number(numbers[k]).  Throws SlotMismatch when the counts differ.
dsl::ProgramText decode_two_pass(std::span<const int> ids, std::span<const double> numbers,
                                 const Vocabulary& vocab);

}  // namespace derender::tok
