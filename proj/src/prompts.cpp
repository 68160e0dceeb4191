#include "hymor/prompts.hpp"

namespace hymor::prompts {

const std::string_view kCoarseRecognition =
    "Identify the main object in the image. Output the category and the name of the main object "
    "in the image in JSON format with the keys \"category\" and \"name\". The category can only be "
    "one of \"plant\", \"animal\" or \"other\".\n"
    "\n"
    "Example output:\n"
    "\n"
    "{\"category\": \"animal\", \"name\": \"Dog\"}\n"
    "\n"
    "Now generate the output for the given image.";

const std::string_view kJudgeTemplate =
    "Given two English nouns, prediction and label, determine their semantic relationship. Output A "
    "if they are synonyms (i.e., they refer to the same concept). Output B if either prediction is a "
    "hypernym of label, or label is a hypernym of prediction. Output C if neither of the above "
    "applies. Respond with a single uppercase letter: A, B, or C.\n"
    "\n"
    "Examples:\n"
    "\n"
    "prediction = car, label = automobile → Output: A;\n"
    "\n"
    "prediction = vegetable, label = bokchoy → Output: B;\n"
    "\n"
    "prediction = bokchoy, label = vegetable → Output: B;\n"
    "\n"
    "prediction = airplane, label = football → Output: C.\n"
    "\n"
    "Now evaluate: prediction = {PRED}, label = {GT}";

namespace {

void replace_first(std::string& text, std::string_view token, std::string_view value) {
  const auto pos = text.find(token);
  if (pos != std::string::npos) text.replace(pos, token.size(), value);
}

}  // namespace

std::string render_judge_prompt(std::string_view prediction, std::string_view ground_truth) {
  std::string out(kJudgeTemplate);
  // GT first: a prediction containing the literal "{GT}" must not be rewritten.
  replace_first(out, "{GT}", ground_truth);
  replace_first(out, "{PRED}", prediction);
  return out;
}

}  // namespace hymor::prompts
