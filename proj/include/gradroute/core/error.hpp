#pragma once

#include <stdexcept>
#include <string>

namespace gradroute {

// Caller misuse: bad shapes, non-scalar loss, action after episode end, ...
class usage_error : public std::runtime_error {
public:
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration: unknown preset, unresolvable mask site, ...
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file: wrong IDX magic, truncated checkpoint, ...
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gradroute
