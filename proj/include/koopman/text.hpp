#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>

#include "koopman/errors.hpp"

namespace koopman {

// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw Error(ErrorCode::Io, "format_double: conversion failed");
    return {buf, end};
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) {
        throw Error(ErrorCode::Validation, "not a number: '" + std::string(s) + "'");
    }
    return v;
}

// Fixed significant digits for human-readable tables.
inline std::string format_sig(double v, int digits = 4) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

}  // namespace koopman
