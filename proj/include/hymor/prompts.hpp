#pragma once

#include <string>
#include <string_view>

namespace hymor::prompts {

// Instruction sent with every image to the chat model.
extern const std::string_view kCoarseRecognition;

// Judge template with {PRED} and {GT} placeholders.
extern const std::string_view kJudgeTemplate;

std::string render_judge_prompt(std::string_view prediction, std::string_view ground_truth);

}  // namespace hymor::prompts
