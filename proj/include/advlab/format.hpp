#pragma once

#include <charconv>
#include <string>

namespace advlab {

// Shortest round-trip decimal form; keeps CSV output byte-stable and
// parse(format(x)) == x.
inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace advlab
