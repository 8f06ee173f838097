#include "demoval/prompt.hpp"

#include <cstring>

#include "demoval/digest.hpp"
#include "demoval/error.hpp"

namespace demoval {

namespace {

std::string substitute(const std::string& tmpl, const std::string& name,
                       const std::string& value) {
  const std::string placeholder = "{" + name + "}";
  if (tmpl.find(placeholder) == std::string::npos) {
    throw TemplateError("template is missing placeholder " + placeholder);
  }
  std::string out = tmpl;
  std::size_t pos = 0;
  while ((pos = out.find(placeholder, pos)) != std::string::npos) {
    out.replace(pos, placeholder.size(), value);
    pos += value.size();
  }
  return out;
}

void append_length_delimited(std::string& buf, const std::string& field) {
  const std::uint64_t n = field.size();
  for (int shift = 0; shift < 64; shift += 8) {
    buf.push_back(static_cast<char>((n >> shift) & 0xff));
  }
  buf.append(field);
}

}  // namespace

std::string render_demo(const TaskSpec& task, const Demonstration& demo) {
  return substitute(substitute(task.demo_template, "input", demo.input),
                    "label", demo.label);
}

std::string render_query(const TaskSpec& task, const std::string& input) {
  return substitute(task.query_template, "input", input);
}

std::string assemble_prompt(const PromptSpec& spec) {
  if (spec.task == nullptr) throw ConfigError("assemble_prompt: null task");
  const TaskSpec& task = *spec.task;
  std::string out = task.instruction;
  for (const auto& demo : spec.demos) {
    out += task.separator;
    out += render_demo(task, demo);
  }
  out += task.separator;
  out += render_query(task, spec.query_input);
  return out;
}

std::string canonical_key(const std::string& prompt_text,
                          const std::string& model_id,
                          const std::string& decode_params) {
  std::string buf;
  buf.reserve(prompt_text.size() + model_id.size() + decode_params.size() + 24);
  append_length_delimited(buf, model_id);
  append_length_delimited(buf, decode_params);
  append_length_delimited(buf, prompt_text);
  return sha256_hex(buf);
}

}  // namespace demoval
