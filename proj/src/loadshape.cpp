#include "tdcosim/loadshape.hpp"

#include "tdcosim/error.hpp"

namespace tdcosim {

double LoadshapeSeries::at(int minute) const {
  if (minute < first_minute || minute >= end_minute()) {
    throw InputError("loadshape '" + id + "' has no sample for minute " + std::to_string(minute));
  }
  return samples[static_cast<std::size_t>(minute - first_minute)];
}

namespace {

const LoadshapeSeries* lookup(const LoadshapeSet& set, const std::optional<std::string>& id) {
  const auto& key = id ? id : set.default_id;
  if (!key) return nullptr;
  const auto it = set.shapes.find(*key);
  if (it == set.shapes.end()) throw InputError("unknown loadshape '" + *key + "'");
  return &it->second;
}

}  // namespace

double LoadshapeSet::multiplier(const std::optional<std::string>& id, int minute) const {
  const auto* s = lookup(*this, id);
  return s ? s->at(minute) : 1.0;
}

bool LoadshapeSet::covers(const std::optional<std::string>& id, int start, int length) const {
  const auto* s = lookup(*this, id);
  return !s || s->covers(start, length);
}

}  // namespace tdcosim
