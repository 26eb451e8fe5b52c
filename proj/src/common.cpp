#include "derender/common.hpp"

namespace derender {

const char* errc_name(Errc c) {
    switch (c) {
        case Errc::unknown_attribute: return "UnknownAttribute";
        case Errc::unknown_shape: return "UnknownShape";
        case Errc::syntax_error: return "SyntaxError";
        case Errc::arity_error: return "ArityError";
        case Errc::duplicate_key: return "DuplicateKey";
        case Errc::unserializable_rotation: return "UnserializableRotation";
        case Errc::non_finite: return "NonFinite";
        case Errc::non_unit_axis: return "NonUnitAxis";
        case Errc::degenerate_sixd: return "DegenerateSixD";
        case Errc::empty_region: return "EmptyRegion";
        case Errc::unencodable_text: return "UnencodableText";
        case Errc::slot_mismatch: return "SlotMismatch";
        case Errc::context_overflow: return "ContextOverflow";
        case Errc::divergence_detected: return "DivergenceDetected";
        case Errc::malformed_generation: return "MalformedGeneration";
        case Errc::length_mismatch: return "LengthMismatch";
        case Errc::empty_scene: return "EmptyScene";
        case Errc::empty_input: return "EmptyInput";
        case Errc::out_of_bounds: return "OutOfBounds";
        case Errc::missing_column: return "MissingColumn";
        case Errc::invalid_config: return "InvalidConfig";
        case Errc::data_error: return "DataError";
        case Errc::io_error: return "IoError";
    }
    return "UnknownError";
}

}  // namespace derender
