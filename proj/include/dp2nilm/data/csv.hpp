#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/data/timeseries.hpp"

namespace dp2nilm::data {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

/// Reads header-less `epoch_seconds,watts` rows. Timestamps are snapped to the
/// sample grid starting at the first row; missing slots are forward-filled and
/// readings above `max_power_w` are clamped to it.
inline TimeSeries ingest_csv(const std::string& path, double sample_period_s,
                             std::optional<double> max_power_w = std::nullopt) {
  if (!(sample_period_s > 0.0)) throw ConfigError("sample period must be positive");
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  TimeSeries ts{sample_period_s, {}, 0};
  std::string line;
  std::size_t line_no = 0;
  std::int64_t first = 0;
  std::int64_t last_slot = -1;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view row = detail::trim(line);
    if (row.empty()) continue;
    const auto comma = row.find(',');
    std::int64_t epoch = 0;
    double watts = 0.0;
    if (comma == std::string_view::npos || !detail::parse_number(row.substr(0, comma), epoch) ||
        !detail::parse_number(row.substr(comma + 1), watts) || !std::isfinite(watts)) {
      throw DataError(path + ":" + std::to_string(line_no) + ": unparseable row '" +
                      std::string(row) + "'");
    }
    if (max_power_w) watts = std::min(watts, *max_power_w);
    if (last_slot < 0) {
      first = epoch;
      ts.start_epoch_s = epoch;
    }
    const auto slot = static_cast<std::int64_t>(
        std::llround(static_cast<double>(epoch - first) / sample_period_s));
    if (slot <= last_slot) {
      if (slot < 0 || (last_slot >= 0 && slot < last_slot)) {
        throw DataError(path + ":" + std::to_string(line_no) + ": timestamps out of order");
      }
      ts.values.back() = watts;  // duplicate slot, latest reading wins
      continue;
    }
    const double fill = ts.values.empty() ? watts : ts.values.back();
    while (static_cast<std::int64_t>(ts.values.size()) < slot) ts.values.push_back(fill);
    ts.values.push_back(watts);
    last_slot = slot;
  }
  if (ts.values.empty()) throw DataError(path + ": no readings");
  return ts;
}

}  // namespace dp2nilm::data
