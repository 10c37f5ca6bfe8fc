#include "swtte/mmwr.hpp"

#include <array>
#include <chrono>
#include <charconv>
#include <string>

namespace swtte::mmwr {
namespace {

// Saturday week-ending dates for 2021 MMWR weeks 1..52.
constexpr std::array<std::string_view, 52> kWeekEnding = {
    "2021-01-09", "2021-01-16", "2021-01-23", "2021-01-30", "2021-02-06", "2021-02-13",
    "2021-02-20", "2021-02-27", "2021-03-06", "2021-03-13", "2021-03-20", "2021-03-27",
    "2021-04-03", "2021-04-10", "2021-04-17", "2021-04-24", "2021-05-01", "2021-05-08",
    "2021-05-15", "2021-05-22", "2021-05-29", "2021-06-05", "2021-06-12", "2021-06-19",
    "2021-06-26", "2021-07-03", "2021-07-10", "2021-07-17", "2021-07-24", "2021-07-31",
    "2021-08-07", "2021-08-14", "2021-08-21", "2021-08-28", "2021-09-04", "2021-09-11",
    "2021-09-18", "2021-09-25", "2021-10-02", "2021-10-09", "2021-10-16", "2021-10-23",
    "2021-10-30", "2021-11-06", "2021-11-13", "2021-11-20", "2021-11-27", "2021-12-04",
    "2021-12-11", "2021-12-18", "2021-12-25", "2022-01-01"};

}  // namespace

std::optional<int> week_2021(std::string_view iso_date) {
  if (iso_date.size() != 10 || iso_date[4] != '-' || iso_date[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  auto num = [](std::string_view s, auto& v) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
  };
  if (!num(iso_date.substr(0, 4), y) || !num(iso_date.substr(5, 2), m) ||
      !num(iso_date.substr(8, 2), d))
    return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) return std::nullopt;
  const sys_days start = sys_days{year{2021} / January / 3};
  const auto offset = (sys_days{ymd} - start).count();
  if (offset < 0 || offset >= 52 * 7) return std::nullopt;
  return static_cast<int>(offset / 7) + 1;
}

std::optional<std::string_view> week_ending_2021(int week) {
  if (week < 1 || week > 52) return std::nullopt;
  return kWeekEnding[static_cast<std::size_t>(week - 1)];
}

}  // namespace swtte::mmwr
