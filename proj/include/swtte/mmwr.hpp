#pragma once

#include <optional>
#include <string_view>

namespace swtte::mmwr {

/// 2021 MMWR week containing the given ISO date (YYYY-MM-DD). Week 1 of 2021
/// runs Sunday Jan 3 through Saturday Jan 9; 2021 has 52 weeks.
std::optional<int> week_2021(std::string_view iso_date);

/// Week-ending (Saturday) date of a 2021 MMWR week, as YYYY-MM-DD.
std::optional<std::string_view> week_ending_2021(int week);

}  // namespace swtte::mmwr
