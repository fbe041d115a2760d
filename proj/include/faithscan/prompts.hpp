#pragma once

#include <string_view>

// Prompt templates bundled with the library, byte-identical to assets/prompts.
namespace faithscan::prompts {

std::string_view visual_nli_template();
std::string_view reflection_template();
std::string_view inference_template();
std::string_view ptrue_fewshot_template();
std::string_view ptrue_test_template();
std::string_view selfcheck_template();

}  // namespace faithscan::prompts
