#pragma once

// Shared error machinery and small helpers used across the library.

#include <stdexcept>
#include <string>

namespace derender {

// Every recoverable failure in the library throws `Error` with one of these
// codes.  The CLI maps them onto process exit codes (config -> 2, data -> 3,
// divergence -> 4), and tests assert on them.
enum class Errc {
    unknown_attribute,
    unknown_shape,
    syntax_error,
    arity_error,
    duplicate_key,
    unserializable_rotation,
    non_finite,
    non_unit_axis,
    degenerate_sixd,
    empty_region,
    unencodable_text,
    slot_mismatch,
    context_overflow,
    divergence_detected,
    malformed_generation,
    length_mismatch,
    empty_scene,
    empty_input,
    out_of_bounds,
    missing_column,
    invalid_config,
    data_error,
    io_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

    Errc code() const { return code_; }

  private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool ok, Errc code, const std::string& message) {
    if (!ok) fail(code, message);
}

}  // namespace derender
