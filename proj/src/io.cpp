#include "demoval/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "demoval/error.hpp"

namespace demoval {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

Dataset load_examples_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) +
                    ": invalid JSON: " + e.what());
    }
    LabeledExample ex;
    try {
      ex.id = obj.at("id").get<std::string>();
      ex.input = obj.at("input").get<std::string>();
      ex.label = obj.at("label").get<std::string>();
      if (obj.contains("sensitive") && !obj["sensitive"].is_null()) {
        ex.sensitive = obj["sensitive"].get<int>();
      }
    } catch (const json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) +
                    ": bad example record: " + e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void save_examples_jsonl(const std::filesystem::path& path,
                         const Dataset& examples) {
  std::string buf;
  for (const auto& ex : examples) {
    json obj{{"id", ex.id}, {"input", ex.input}, {"label", ex.label}};
    if (ex.sensitive.has_value()) obj["sensitive"] = *ex.sensitive;
    buf += obj.dump();
    buf += '\n';
  }
  write_file_atomic(path, buf);
}

CandidatePool pool_from_examples(const Dataset& examples) {
  CandidatePool pool;
  pool.demos.reserve(examples.size());
  for (const auto& ex : examples) {
    pool.demos.push_back(Demonstration{ex.id, ex.input, ex.label});
  }
  return pool;
}

void write_value_table_csv(const std::filesystem::path& path,
                           const ValueTable& table) {
  std::string buf = "demo_id,value,count\n";
  for (const auto& [id, entry] : table.entries()) {
    buf += id;
    buf += ',';
    buf += format_double(entry.value);
    buf += ',';
    buf += std::to_string(entry.count);
    buf += '\n';
  }
  write_file_atomic(path, buf);
}

ValueTable read_value_table_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "demo_id,value,count") {
    throw IoError(path.string() + ": expected header demo_id,value,count");
  }
  ValueTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto first = line.find(',');
    const auto second = line.rfind(',');
    if (first == std::string::npos || second == first) {
      throw IoError(path.string() + ":" + std::to_string(lineno) +
                    ": malformed row");
    }
    const std::string id = line.substr(0, first);
    const std::string value_str = line.substr(first + 1, second - first - 1);
    const std::string count_str = line.substr(second + 1);
    double value = 0.0;
    std::int64_t count = 0;
    const auto vres = std::from_chars(
        value_str.data(), value_str.data() + value_str.size(), value);
    const auto cres = std::from_chars(
        count_str.data(), count_str.data() + count_str.size(), count);
    if (vres.ec != std::errc{} || cres.ec != std::errc{}) {
      throw IoError(path.string() + ":" + std::to_string(lineno) +
                    ": malformed number");
    }
    table.set(id, value, count);
  }
  return table;
}

}  // namespace demoval
