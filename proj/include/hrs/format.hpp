#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hrs {

/// Shortest-safe decimal form: 17 significant digits, round-trips exactly.
std::string format_real(double x);

/// Fixed six decimals with trailing zeros trimmed.
std::string format_fixed6(double x);

std::vector<std::string> split_csv_line(std::string_view line);

std::vector<double> parse_real_list(const std::string& text);

}  // namespace hrs
