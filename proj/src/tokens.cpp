#include "derender/tokens.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "derender/common.hpp"

namespace derender::tok {

const char* mode_name(Mode m) { return m == Mode::float_slots ? "float" : "char"; }

Mode mode_from_name(std::string_view name) {
    if (name == "float" || name == "float_slots") return Mode::float_slots;
    if (name == "char" || name == "chars") return Mode::chars;
    fail(Errc::invalid_config, "unknown numeric mode: '" + std::string(name) + "'");
}

int Vocabulary::id(const std::string& token) const {
    auto it = index.find(token);
    require(it != index.end(), Errc::unencodable_text, "token not in vocabulary: '" + token + "'");
    return it->second;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> toks) {
    Vocabulary v;
    v.tokens = std::move(toks);
    for (int i = 0; i < v.size(); ++i) {
        require(v.index.emplace(v.tokens[i], i).second, Errc::invalid_config,
                "duplicate token: '" + v.tokens[i] + "'");
    }
    v.pad_id = v.id(kPad);
    v.bos_id = v.id(kBos);
    v.eos_id = v.id(kEos);
    v.num_id = v.id(kNum);
    return v;
}

Vocabulary build_vocabulary(const scene::AttributeCatalog& catalog, Mode) {
    std::vector<std::string> toks{Vocabulary::kPad, Vocabulary::kBos, Vocabulary::kEos, Vocabulary::kNum};
    for (const char* t : {"\n", "add(", ")", "(", ", ", "=", "'", "-", "."}) toks.emplace_back(t);
    for (char d = '0'; d <= '9'; ++d) toks.emplace_back(1, d);
    for (const char* t : {"shape", "size", "color", "material", "loc", "rotation", "x", "y"}) toks.emplace_back(t);

    std::set<std::string> words;
    auto add_spellings = [&](const std::string& canonical) {
        for (const std::string& s : catalog.spellings(canonical)) words.insert(s);
    };
    for (const auto& s : catalog.shapes) add_spellings(s);
    for (const auto& s : catalog.sizes) add_spellings(s.name);
    for (const auto& s : catalog.colors) add_spellings(s.name);
    for (const auto& s : catalog.materials) add_spellings(s);

    for (const std::string& w : words) {
        // Keyword strings double as word tokens when they collide (e.g. a
        // hypothetical color named "x"); don't insert twice.
        if (std::find(toks.begin(), toks.end(), w) == toks.end()) toks.push_back(w);
    }
    return Vocabulary::from_tokens(std::move(toks));
}

namespace {

// Length of a maximal numeric literal at s[pos], or 0.
std::size_t numeral_length(std::string_view s, std::size_t pos) {
    std::size_t p = pos;
    if (p < s.size() && s[p] == '-') ++p;
    std::size_t digits = 0;
    while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) ++p, ++digits;
    if (digits == 0) return 0;
    if (p < s.size() && s[p] == '.') {
        std::size_t q = p + 1, frac = 0;
        while (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q]))) ++q, ++frac;
        if (frac > 0) p = q;
    }
    return p - pos;
}

// Tokens grouped by first byte, longest first, for greedy matching.
struct Matcher {
    std::array<std::vector<std::pair<std::string_view, int>>, 256> by_first;

    explicit Matcher(const Vocabulary& v) {
        for (int i = 0; i < v.size(); ++i) {
            const std::string& t = v.tokens[i];
            if (t.empty() || (t.front() == '[' && t.back() == ']')) continue;  // specials never match text
            by_first[static_cast<unsigned char>(t.front())].emplace_back(t, i);
        }
        for (auto& bucket : by_first)
            std::sort(bucket.begin(), bucket.end(),
                      [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    }

    // (token id, length) of the longest vocabulary match at s[pos], or (-1, 0).
    std::pair<int, std::size_t> longest(std::string_view s, std::size_t pos) const {
        for (const auto& [t, id] : by_first[static_cast<unsigned char>(s[pos])]) {
            if (s.compare(pos, t.size(), t) == 0) return {id, t.size()};
        }
        return {-1, 0};
    }
};

}  // namespace

TokenStream encode(const dsl::ProgramText& text, const Vocabulary& vocab, Mode mode) {
    Matcher matcher(vocab);
    std::string s = text.str();
    TokenStream out;
    out.mode = mode;
    out.ids.push_back(vocab.bos_id);
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto [match_id, match_len] = matcher.longest(s, pos);
        if (mode == Mode::float_slots) {
            std::size_t num_len = numeral_length(s, pos);
            if (num_len > match_len) {
                double value = 0.0;
                auto r = std::from_chars(s.data() + pos, s.data() + pos + num_len, value);
                require(r.ec == std::errc(), Errc::unencodable_text, "unreadable numeric literal");
                out.slots.emplace_back(static_cast<int>(out.ids.size()), value);
                out.ids.push_back(vocab.num_id);
                pos += num_len;
                continue;
            }
        }
        require(match_id >= 0, Errc::unencodable_text,
                "no token matches text at offset " + std::to_string(pos) + ": '" + s.substr(pos, 12) + "'");
        out.ids.push_back(match_id);
        pos += match_len;
    }
    out.ids.push_back(vocab.eos_id);
    return out;
}

dsl::ProgramText decode_two_pass(std::span<const int> ids, std::span<const double> numbers,
                                 const Vocabulary& vocab) {
    // Pass 1: count slots and validate ids; pass 2: splice numbers into text.
    std::size_t slots = 0;
    for (int id : ids) {
        require(id >= 0 && id < vocab.size(), Errc::data_error, "token id out of range: " + std::to_string(id));
        if (id == vocab.num_id) ++slots;
    }
    require(slots == numbers.size(), Errc::slot_mismatch,
            "stream has " + std::to_string(slots) + " numeric slots but " + std::to_string(numbers.size()) +
                " numbers were provided");

    std::string out;
    std::size_t k = 0;
    for (int id : ids) {
        if (id == vocab.pad_id || id == vocab.bos_id || id == vocab.eos_id) continue;
        if (id == vocab.num_id) {
            out += dsl::format_number(numbers[k++]);
            continue;
        }
        out += vocab.tokens[static_cast<std::size_t>(id)];
    }
    return dsl::ProgramText::from_string(out);
}

}  // namespace derender::tok
