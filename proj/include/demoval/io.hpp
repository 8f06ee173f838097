#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "demoval/types.hpp"
#include "demoval/value_table.hpp"

namespace demoval {

// Shortest decimal representation that round-trips the exact double.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);
// Writes via a temp file + rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

// JSON Lines, one object per example: {"id","input","label","sensitive"?}.
Dataset load_examples_jsonl(const std::filesystem::path& path);
void save_examples_jsonl(const std::filesystem::path& path,
                         const Dataset& examples);

CandidatePool pool_from_examples(const Dataset& examples);

// CSV with header demo_id,value,count. Values use round-trip formatting so
// a parsed table compares equal field-by-field.
void write_value_table_csv(const std::filesystem::path& path,
                           const ValueTable& table);
ValueTable read_value_table_csv(const std::filesystem::path& path);

}  // namespace demoval
