#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "config.hpp"
#include "errors.hpp"

namespace tunnelex {

namespace detail {

struct BuiltinText {
    std::string_view name;
    std::string_view yaml;
};

// Generated at configure time from scenarios/*.yaml.
inline constexpr BuiltinText kBuiltins[] = {
#include <tunnelex/builtin_scenarios.inc>
};

}  // namespace detail

inline std::vector<std::string> list_builtins() {
    std::vector<std::string> names;
    for (const auto& b : detail::kBuiltins) names.emplace_back(b.name);
    return names;
}

inline bool is_builtin(std::string_view name) {
    for (const auto& b : detail::kBuiltins)
        if (b.name == name) return true;
    return false;
}

inline std::string builtin_text(std::string_view name) {
    for (const auto& b : detail::kBuiltins)
        if (b.name == name) return std::string(b.yaml);
    fail(ErrorKind::config, "no builtin scenario named '" + std::string(name) + "'");
}

inline ScenarioConfig load_builtin(std::string_view name) { return parse_scenario_text(builtin_text(name)); }

// A path to a YAML file, or the name of a builtin.
inline ScenarioConfig load_scenario(const std::string& ref) {
    if (is_builtin(ref)) return load_builtin(ref);
    return load_scenario_file(ref);
}

}  // namespace tunnelex
