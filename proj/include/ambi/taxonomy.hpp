#pragma once

#include <array>
#include <string>
#include <string_view>

namespace ambi {

enum class Dimension { DbRelated, LlmRelated };

enum class AmbiguityCategory {
    UnclearSchemaReference,
    UnclearValueReference,
    MissingSqlKeywords,
    UnclearKnowledgeSource,
    InsufficientReasoningContext,
    ConflictingKnowledge,
    AmbiguousTemporalSpatialScope,
};

inline constexpr std::size_t kCategoryCount = 7;

inline constexpr std::array<AmbiguityCategory, kCategoryCount> kAllCategories = {
    AmbiguityCategory::UnclearSchemaReference,
    AmbiguityCategory::UnclearValueReference,
    AmbiguityCategory::MissingSqlKeywords,
    AmbiguityCategory::UnclearKnowledgeSource,
    AmbiguityCategory::InsufficientReasoningContext,
    AmbiguityCategory::ConflictingKnowledge,
    AmbiguityCategory::AmbiguousTemporalSpatialScope,
};

inline constexpr std::array<Dimension, 2> kAllDimensions = {Dimension::DbRelated,
                                                            Dimension::LlmRelated};

struct CategoryCard {
    AmbiguityCategory category;
    Dimension dimension;
    std::string_view definition;
    std::string_view exemplar;
};

/// Stable snake_case label used in files, payloads and prompts.
std::string_view category_label(AmbiguityCategory category);
/// Human-readable name, e.g. "Ambiguous temporal/spatial scope".
std::string_view category_display_name(AmbiguityCategory category);

std::string_view dimension_label(Dimension dimension);
std::string_view dimension_display_name(Dimension dimension);
std::string_view dimension_definition(Dimension dimension);

/// Case-insensitive; spaces, hyphens and "/" are treated like underscores.
/// Throws UnknownCategory when nothing in the closed set matches.
AmbiguityCategory parse_category(std::string_view label);

Dimension dimension_of(AmbiguityCategory category);

const CategoryCard& category_card(AmbiguityCategory category);

inline std::size_t category_index(AmbiguityCategory category) {
    return static_cast<std::size_t>(category);
}

inline bool is_db_related(AmbiguityCategory category) {
    return dimension_of(category) == Dimension::DbRelated;
}

/// Taxonomy block shared by the prompts: both dimensions, then one entry per
/// category card. Every category label occurs in it exactly once.
std::string render_taxonomy();

}  // namespace ambi
