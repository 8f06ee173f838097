#pragma once

#include <string>

#include "demoval/types.hpp"

namespace demoval {

// Renders one demonstration through the task's demo template.
std::string render_demo(const TaskSpec& task, const Demonstration& demo);

// Renders the query line through the task's query template.
std::string render_query(const TaskSpec& task, const std::string& input);

// Deterministic prompt text: instruction, rendered demos in order, and the
// rendered query, joined by the task separator. Zero demos renders
// instruction + query only.
std::string assemble_prompt(const PromptSpec& spec);

// Collision-resistant cache key over (prompt text, model id, decode
// params). Length-delimited fields feed SHA-256, so distinct field splits
// can never collide.
std::string canonical_key(const std::string& prompt_text,
                          const std::string& model_id,
                          const std::string& decode_params);

}  // namespace demoval
