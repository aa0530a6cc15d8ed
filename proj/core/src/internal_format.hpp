#pragma once

// Internal number formatting shared by the CSV/JSON writers. Shortest
// round-trip form keeps outputs compact and byte-stable across runs.

#include <charconv>
#include <string>
#include <system_error>

namespace feedersim::detail {

inline std::string format_double(double value) {
    char buf[40];
    const auto result = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, result.ptr);
}

}  // namespace feedersim::detail
