#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace floodcpf {

using i64 = std::int64_t;
using u64 = std::uint64_t;
using Shape = std::vector<i64>;

[[noreturn]] inline void fail(const std::string& msg) { throw std::runtime_error(msg); }

inline void check(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

inline i64 numel(const Shape& s) {
    i64 n = 1;
    for (i64 e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ')';
    return os.str();
}

}  // namespace floodcpf
