#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace demoval {

// Per-demonstration running mean value and update count. count == 0
// implies value == 0.
struct ValueEntry {
  double value = 0.0;
  std::int64_t count = 0;

  bool operator==(const ValueEntry&) const = default;
};

// Value table keyed by demo id, ordered for deterministic iteration and
// serialization.
class ValueTable {
 public:
  ValueTable() = default;
  explicit ValueTable(const std::vector<std::string>& ids);

  bool has(const std::string& id) const { return entries_.count(id) != 0; }
  std::size_t size() const { return entries_.size(); }

  // Throws std::out_of_range on unknown id.
  const ValueEntry& at(const std::string& id) const { return entries_.at(id); }
  ValueEntry& at(const std::string& id) { return entries_.at(id); }

  void set(const std::string& id, double value, std::int64_t count);

  std::vector<std::string> ids() const;

  // Ids sorted ascending by value, ties broken by id. Reverse for the
  // descending order.
  std::vector<std::string> ids_by_value_ascending() const;

  const std::map<std::string, ValueEntry>& entries() const { return entries_; }

  bool operator==(const ValueTable& other) const = default;

 private:
  std::map<std::string, ValueEntry> entries_;
};

}  // namespace demoval
