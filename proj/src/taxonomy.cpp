#include "ambi/taxonomy.hpp"

#include "ambi/errors.hpp"
#include "text_util.hpp"

#include <sstream>

namespace ambi {

namespace {

constexpr std::array<CategoryCard, kCategoryCount> kCards = {{
    {AmbiguityCategory::UnclearSchemaReference, Dimension::DbRelated,
     "The question does not pin down which table or column should drive a filter, "
     "ranking or aggregation, so several schema elements fit equally well.",
     "\"Who is the oldest user?\" - oldest could be computed from the age column or from "
     "the registration date."},
    {AmbiguityCategory::UnclearValueReference, Dimension::DbRelated,
     "The question names a value that differs from how the value is stored, so the "
     "WHERE condition cannot be written literally without losing or corrupting rows.",
     "\"Find customers in New York City\" - the table may store the city as \"NYC\"."},
    {AmbiguityCategory::MissingSqlKeywords, Dimension::DbRelated,
     "A word that fixes the intended SQL operation is missing, leaving the choice of "
     "sorting, grouping or filtering open.",
     "\"Show me users by registration date\" - ORDER BY, GROUP BY or a WHERE filter on "
     "the date are all plausible."},
    {AmbiguityCategory::UnclearKnowledgeSource, Dimension::LlmRelated,
     "It is not stated whether a fact should come from the database or be inferred by "
     "the language model.",
     "\"How many female employees are there?\" - use a gender column, or infer gender "
     "from first names?"},
    {AmbiguityCategory::InsufficientReasoningContext, Dimension::LlmRelated,
     "The question omits information the model needs in order to reason toward a "
     "single answer.",
     "\"Convert the totals at the current exchange rate\" - neither the currency pair "
     "nor the reference date is given."},
    {AmbiguityCategory::ConflictingKnowledge, Dimension::LlmRelated,
     "The question presupposes something that contradicts real-world facts or the "
     "database contents.",
     "\"List the medal winners of the 1940 Olympic Games\" - those games were never "
     "held."},
    {AmbiguityCategory::AmbiguousTemporalSpatialScope, Dimension::LlmRelated,
     "A time or place constraint is underspecified and can be read at more than one "
     "granularity.",
     "\"Matches played after the 2018 World Cup\" - after the final match, or after "
     "the calendar year 2018?"},
}};

constexpr std::array<std::string_view, kCategoryCount> kLabels = {
    "unclear_schema_reference",      "unclear_value_reference",
    "missing_sql_keywords",          "unclear_knowledge_source",
    "insufficient_reasoning_context", "conflicting_knowledge",
    "ambiguous_temporal_spatial_scope",
};

constexpr std::array<std::string_view, kCategoryCount> kDisplayNames = {
    "Unclear schema reference",       "Unclear value reference",
    "Missing SQL-related keywords",   "Unclear knowledge source",
    "Insufficient reasoning context", "Conflicting knowledge",
    "Ambiguous temporal/spatial scope",
};

std::string normalize_label(std::string_view label) {
    std::string out;
    out.reserve(label.size());
    for (char c : trim(label)) {
        char lower = ascii_lower(c);
        if (lower == ' ' || lower == '-' || lower == '/' || lower == '_' || lower == '\t') {
            if (!out.empty() && out.back() != '_') out.push_back('_');
        } else {
            out.push_back(lower);
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

}  // namespace

std::string_view category_label(AmbiguityCategory category) {
    return kLabels[category_index(category)];
}

std::string_view category_display_name(AmbiguityCategory category) {
    return kDisplayNames[category_index(category)];
}

std::string_view dimension_label(Dimension dimension) {
    return dimension == Dimension::DbRelated ? "db_related" : "llm_related";
}

std::string_view dimension_display_name(Dimension dimension) {
    return dimension == Dimension::DbRelated ? "DB-related ambiguity" : "LLM-related ambiguity";
}

std::string_view dimension_definition(Dimension dimension) {
    if (dimension == Dimension::DbRelated) {
        return "The question refers to schema elements or stored values in a vague or "
               "underspecified way, so the retrieved data may be wrong or incomplete.";
    }
    return "The question depends on knowledge or reasoning beyond the stored data and "
           "leaves that reasoning open to misuse.";
}

AmbiguityCategory parse_category(std::string_view label) {
    const std::string normalized = normalize_label(label);
    for (AmbiguityCategory category : kAllCategories) {
        if (normalized == category_label(category) ||
            normalized == normalize_label(category_display_name(category))) {
            return category;
        }
    }
    throw UnknownCategory(std::string(label));
}

Dimension dimension_of(AmbiguityCategory category) {
    return kCards[category_index(category)].dimension;
}

const CategoryCard& category_card(AmbiguityCategory category) {
    return kCards[category_index(category)];
}

std::string render_taxonomy() {
    std::ostringstream out;
    for (Dimension dimension : kAllDimensions) {
        out << "## " << dimension_display_name(dimension) << "\n"
            << dimension_definition(dimension) << "\n";
        for (const CategoryCard& card : kCards) {
            if (card.dimension != dimension) continue;
            out << "- " << category_label(card.category) << " ("
                << category_display_name(card.category) << "): " << card.definition << "\n"
                << "  Example: " << card.exemplar << "\n";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace ambi
