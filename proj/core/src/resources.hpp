#pragma once

#include <optional>
#include <string_view>

namespace emobench::resources {

/// Built-in text resources (prompt templates, default dictionary and
/// cleanup rules) compiled into the library from core/templates and core/data.
std::optional<std::string_view> find(std::string_view key);

}  // namespace emobench::resources
