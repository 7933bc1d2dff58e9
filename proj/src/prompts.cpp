#include "ambi/prompts.hpp"

#include "text_util.hpp"

#include <sstream>

namespace ambi {

namespace {

constexpr int kStructuredMaxTokens = 1024;
constexpr int kLineMaxTokens = 512;

constexpr std::string_view kDetectionSystemIntro =
    "You review natural-language questions that will be translated into SQL and point out the "
    "phrases that make the translation ambiguous.\n\n"
    "A phrase is ambiguous when it supports more than one reasonable reading and the readings "
    "would lead to different SQL queries or different answers. Phrases that are fully "
    "determined by the question and the schema are not ambiguous.\n\n"
    "Classify every ambiguous phrase with exactly one label from this taxonomy:\n\n";

constexpr std::string_view kDetectionExamples =
    "Worked examples:\n\n"
    "Question: \"Which city is the largest one?\"\n"
    "Answer: [{\"phrase\": \"largest\", \"category\": \"unclear_schema_reference\", "
    "\"rationale\": \"The user does not say whether largest refers to city.area or to "
    "city.population.\"}]\n"
    "(DB-related: two columns can serve the ranking.)\n\n"
    "Question: \"How many tickets were sold after the 2018 World Cup?\"\n"
    "Answer: [{\"phrase\": \"after the 2018 World Cup\", \"category\": "
    "\"ambiguous_temporal_spatial_scope\", \"rationale\": \"It may mean after the final match "
    "(2018-07-15) or after the calendar year 2018.\"}]\n"
    "(LLM-related: the cut-off date has to be reasoned out at some granularity.)\n\n"
    "Question: \"List the names of all customers.\"\n"
    "Answer: []\n\n";

constexpr std::string_view kDetectionRules =
    "Rules:\n"
    "- Copy each phrase verbatim from the question; it must be a substring of the question.\n"
    "- Use only the labels listed above for \"category\".\n"
    "- In the rationale, name the candidate columns as table.column when the ambiguity is about "
    "the schema or stored values.\n"
    "- If clarifications already given settle an ambiguity, do not report it again.\n"
    "- Reply with a JSON list only: [{\"phrase\": ..., \"category\": ..., \"rationale\": ...}]. "
    "Reply [] when the question is unambiguous.\n";

constexpr std::string_view kClarifySystem =
    "You turn one detected ambiguity into a single multiple-choice clarification question for a "
    "user who knows neither SQL nor the database schema.\n\n"
    "Reply with one JSON object:\n"
    "{\"question\": \"...\", \"options\": [{\"display\": \"...\", \"resolution\": \"...\", "
    "\"column\": \"table.column\"}]}\n\n"
    "Requirements:\n"
    "- Between 2 and 6 options, each a distinct interpretation.\n"
    "- \"display\" is the short text shown in a dropdown.\n"
    "- \"resolution\" is one standalone declarative sentence that states the chosen "
    "interpretation precisely enough to be inserted verbatim into the rewritten question.\n"
    "- \"column\" is optional and only allowed when the option selects a database column listed "
    "in the snippets.\n"
    "- Keep the question brief and add a short description of what differs between options.\n";

constexpr std::string_view kRefineSystem =
    "You rewrite a database question so that it no longer contains the ambiguities the user has "
    "clarified.\n\n"
    "Rules:\n"
    "1. Keep the intent and every condition of the question.\n"
    "2. Insert the resolution sentence of every selected clarification verbatim.\n"
    "3. Add every additional constraint to the question.\n"
    "4. ";

constexpr std::string_view kRefineSystemTail =
    "\n5. Reply with exactly one line: the rewritten question, without quotes or commentary.\n";

constexpr std::string_view kMergeSystem =
    "You maintain a user's recorded preferences for interpreting database questions.\n\n"
    "Two preferences conflict when they are filed under the same target and prescribe different "
    "interpretations of it, so that both cannot be applied at once. On conflict the newer "
    "preference expresses the user's current intent; the merged preference keeps what the newer "
    "one states and keeps details of the earlier one only where the newer one is silent.\n\n"
    "Example:\n"
    "TARGET: column:ranked 2\n"
    "EARLIER PREFERENCE: Use the position column of the results table for the ranking.\n"
    "NEWER PREFERENCE: Use the rank column of the results table for the ranking.\n"
    "MERGED: Use the rank column of the results table for the ranking.\n"
    "(The user switched from the 'position' column to the 'rank' column, so only rank is "
    "kept.)\n\n"
    "Reply with exactly one line: the merged preference.\n";

constexpr std::string_view kGenerateSystem =
    "You translate a natural-language question into one SQL query for the given database. Use "
    "only tables and columns from the schema. Reply with the SQL query only.\n";

std::string category_guidance(AmbiguityCategory category) {
    switch (category) {
        case AmbiguityCategory::UnclearSchemaReference:
            return "Offer one option per candidate table or column, using the database snippets "
                   "as evidence. Set \"column\" on each option that selects a column.";
        case AmbiguityCategory::UnclearValueReference:
            return "Offer the stored values (from the snippets) that the phrase could denote and "
                   "ask which one the question means.";
        case AmbiguityCategory::MissingSqlKeywords:
            return "Offer the SQL operations the phrase could imply (for example sorting, "
                   "grouping or filtering) in plain language.";
        case AmbiguityCategory::UnclearKnowledgeSource:
            return "Ask where the information should come from: a database column or the "
                   "model's general knowledge.";
        case AmbiguityCategory::InsufficientReasoningContext:
            return "Offer concrete completions of the missing context so the question can be "
                   "answered in exactly one way.";
        case AmbiguityCategory::ConflictingKnowledge:
            return "Point out the conflicting assumption and offer corrected readings of the "
                   "question.";
        case AmbiguityCategory::AmbiguousTemporalSpatialScope:
            return "Offer options at distinct granularities, such as the start date, the end "
                   "date, or the year, each annotated with the exact time reference (a concrete "
                   "date, year or named area) in both display and resolution.";
    }
    return {};
}

void write_snippet(std::ostringstream& out, const SchemaSnippet& snippet) {
    out << "- " << snippet.table << "." << snippet.column;
    if (snippet.description && !snippet.description->empty()) out << " (" << *snippet.description << ")";
    out << ": ";
    if (snippet.values.empty()) {
        out << "no sample values";
    } else {
        for (std::size_t i = 0; i < snippet.values.size(); ++i) {
            if (i > 0) out << ", ";
            out << snippet.values[i];
        }
    }
    out << "\n";
}

}  // namespace

PromptRequest build_detection_prompt(std::string_view question, std::string_view schema_text,
                                     std::string_view clarification_context) {
    PromptRequest request;
    request.stage = Stage::Detect;
    request.decode = {0.0, kStructuredMaxTokens};

    std::string system(kDetectionSystemIntro);
    system += render_taxonomy();
    system += kDetectionExamples;
    system += kDetectionRules;
    request.system_text = std::move(system);

    std::ostringstream user;
    user << kQuestionHeader << question << "\n\nDATABASE SCHEMA:\n" << schema_text;
    if (!trim(clarification_context).empty()) {
        user << "\nCLARIFICATIONS ALREADY GIVEN:\n" << clarification_context;
    }
    request.user_text = user.str();
    return request;
}

PromptRequest build_clarification_prompt(const DetectedAmbiguity& ambiguity,
                                         const std::vector<SchemaSnippet>& evidence,
                                         std::string_view question) {
    PromptRequest request;
    request.stage = Stage::Clarify;
    request.decode = {0.0, kStructuredMaxTokens};
    request.system_text = std::string(kClarifySystem);

    const CategoryCard& card = category_card(ambiguity.category);
    std::ostringstream user;
    user << kQuestionHeader << question << "\n"
         << "AMBIGUOUS PHRASE: " << ambiguity.phrase << "\n"
         << "CATEGORY: " << category_label(ambiguity.category) << " ("
         << category_display_name(ambiguity.category) << ", "
         << dimension_display_name(card.dimension) << ")\n"
         << "CATEGORY DEFINITION: " << card.definition << "\n"
         << "RATIONALE: " << ambiguity.rationale << "\n"
         << "GUIDANCE: " << category_guidance(ambiguity.category) << "\n";
    if (is_db_related(ambiguity.category)) {
        user << "DATABASE SNIPPETS:\n";
        if (evidence.empty()) {
            user << "(none available; derive the options from the rationale)\n";
        } else {
            for (const SchemaSnippet& snippet : evidence) write_snippet(user, snippet);
        }
    } else if (evidence.empty()) {
        user << "Derive the options from the rationale and general knowledge.\n";
    } else {
        user << "RELATED DATABASE CONTENT:\n";
        for (const SchemaSnippet& snippet : evidence) write_snippet(user, snippet);
    }
    request.user_text = user.str();
    return request;
}

PromptRequest build_refinement_prompt(std::string_view question,
                                      const std::vector<AnsweredQuestion>& answers,
                                      const std::vector<std::string>& constraints) {
    PromptRequest request;
    request.stage = Stage::Refine;
    request.decode = {0.0, kLineMaxTokens};
    request.system_text = std::string(kRefineSystem) + std::string(kConstraintPrecedenceRule) +
                          std::string(kRefineSystemTail);

    std::ostringstream user;
    user << kQuestionHeader << question << "\n\nCLARIFICATIONS:\n";
    if (answers.empty()) user << "(none)\n";
    for (const auto& [clarification, answer] : answers) {
        const ClarificationOption* option = clarification.find_option(answer.selected_key);
        user << "- About \"" << clarification.phrase << "\": " << clarification.text << "\n";
        if (option) {
            user << "  Selected: " << option->display << "\n"
                 << "  Resolution: " << option->resolution << "\n";
        }
    }
    user << "\nADDITIONAL CONSTRAINTS:\n";
    if (constraints.empty()) user << "(none)\n";
    for (const std::string& constraint : constraints) user << "- " << constraint << "\n";
    if (answers.empty() && constraints.empty()) {
        user << "\nThere is nothing to apply: return the question unchanged.\n";
    }
    request.user_text = user.str();
    return request;
}

PromptRequest build_merge_prompt(const PreferenceEntry& existing, const PreferenceEntry& incoming) {
    PromptRequest request;
    request.stage = Stage::Merge;
    request.decode = {0.0, kLineMaxTokens};
    request.system_text = std::string(kMergeSystem);

    std::ostringstream user;
    user << "TARGET: " << incoming.target_key << "\n"
         << "EARLIER PREFERENCE (version " << existing.version << "): " << existing.resolution
         << "\n"
         << "NEWER PREFERENCE: " << incoming.resolution << "\n";
    request.user_text = user.str();
    return request;
}

PromptRequest build_generation_prompt(std::string_view question, std::string_view schema_text,
                                      std::string_view dialect) {
    PromptRequest request;
    request.stage = Stage::Generate;
    request.decode = {0.0, kStructuredMaxTokens};
    request.system_text = std::string(kGenerateSystem);

    std::ostringstream user;
    user << kQuestionHeader << question << "\n\nSQL DIALECT: " << dialect
         << "\n\nDATABASE SCHEMA:\n" << schema_text;
    request.user_text = user.str();
    return request;
}

}  // namespace ambi
