#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tomato {

enum class Errc {
    contract,
    shape_mismatch,
    format,
    validation,
    not_found,
    no_remedy_defined,
    load,
    config,
    input,
    backend,
    storage,
    unauthorized,
    payload_too_large,
};

// Machine-readable code, e.g. "shape-mismatch".
std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }
    std::string_view code_name() const noexcept { return errc_name(code_); }

private:
    Errc code_;
};

}  // namespace tomato
