#pragma once

#include "ambi/llm_gateway.hpp"
#include "ambi/types.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ambi {

// Prompt builders are pure: identical inputs give byte-identical requests.
// Prompts about a question start their user_text with "QUESTION: <question>"
// so scripted fixtures can key on the question being processed.

inline constexpr std::string_view kConstraintPrecedenceRule =
    "When an additional constraint conflicts with the question or with a clarification, the "
    "additional constraint wins: keep it exactly as the user stated it and drop the conflicting "
    "part.";

inline constexpr std::string_view kQuestionHeader = "QUESTION: ";

PromptRequest build_detection_prompt(std::string_view question, std::string_view schema_text,
                                     std::string_view clarification_context = {});

PromptRequest build_clarification_prompt(const DetectedAmbiguity& ambiguity,
                                         const std::vector<SchemaSnippet>& evidence,
                                         std::string_view question);

using AnsweredQuestion = std::pair<ClarificationQuestion, UserAnswer>;

PromptRequest build_refinement_prompt(std::string_view question,
                                      const std::vector<AnsweredQuestion>& answers,
                                      const std::vector<std::string>& constraints);

PromptRequest build_merge_prompt(const PreferenceEntry& existing, const PreferenceEntry& incoming);

PromptRequest build_generation_prompt(std::string_view question, std::string_view schema_text,
                                      std::string_view dialect);

}  // namespace ambi
