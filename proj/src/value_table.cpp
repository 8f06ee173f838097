#include "demoval/value_table.hpp"

#include <algorithm>

namespace demoval {

ValueTable::ValueTable(const std::vector<std::string>& ids) {
  for (const auto& id : ids) entries_[id] = ValueEntry{};
}

void ValueTable::set(const std::string& id, double value, std::int64_t count) {
  entries_[id] = ValueEntry{value, count};
}

std::vector<std::string> ValueTable::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) out.push_back(id);
  return out;
}

std::vector<std::string> ValueTable::ids_by_value_ascending() const {
  std::vector<std::string> out = ids();
  std::sort(out.begin(), out.end(),
            [this](const std::string& a, const std::string& b) {
              const double va = entries_.at(a).value;
              const double vb = entries_.at(b).value;
              if (va != vb) return va < vb;
              return a < b;
            });
  return out;
}

}  // namespace demoval
