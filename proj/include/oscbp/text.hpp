#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace oscbp::text {

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string_view trim(std::string_view s);

/// Plain comma split; fields are trimmed. No quoting support.
std::vector<std::string> split(std::string_view line, char sep = ',');

}  // namespace oscbp::text
