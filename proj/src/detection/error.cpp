#include "tomato/error.hpp"

namespace tomato {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::contract: return "contract-violation";
        case Errc::shape_mismatch: return "shape-mismatch";
        case Errc::format: return "format-error";
        case Errc::validation: return "validation-error";
        case Errc::not_found: return "not-found";
        case Errc::no_remedy_defined: return "no-remedy-defined";
        case Errc::load: return "load-error";
        case Errc::config: return "configuration-error";
        case Errc::input: return "invalid-image";
        case Errc::backend: return "backend-error";
        case Errc::storage: return "storage-error";
        case Errc::unauthorized: return "unauthorized";
        case Errc::payload_too_large: return "payload-too-large";
    }
    return "unknown";
}

}  // namespace tomato
