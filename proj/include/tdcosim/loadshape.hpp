#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tdcosim {

/// Minute-indexed load multipliers at 1-min resolution.
struct LoadshapeSeries {
  std::string id;
  int first_minute = 0;
  std::vector<double> samples;

  int end_minute() const { return first_minute + static_cast<int>(samples.size()); }
  bool covers(int start, int length) const { return start >= first_minute && start + length <= end_minute(); }
  /// Multiplier at `minute`; throws InputError outside the series.
  double at(int minute) const;
};

/// Named loadshapes plus an optional fallback for loads that name none.
struct LoadshapeSet {
  std::map<std::string, LoadshapeSeries> shapes;
  std::optional<std::string> default_id;

  /// Multiplier for a load with the given (optional) shape id. Loads without
  /// an id and without a default shape stay at 1.0.
  double multiplier(const std::optional<std::string>& id, int minute) const;
  bool covers(const std::optional<std::string>& id, int start, int length) const;
};

}  // namespace tdcosim
