#include "ambi/errors.hpp"
#include "ambi/taxonomy.hpp"

#include <gtest/gtest.h>

#include <set>
#include <string>

using namespace ambi;

TEST(Taxonomy, LabelsRoundTrip) {
    std::set<std::string> labels;
    for (AmbiguityCategory c : kAllCategories) {
        const std::string label(category_label(c));
        EXPECT_EQ(parse_category(label), c);
        labels.insert(label);
    }
    EXPECT_EQ(labels.size(), kCategoryCount);
}

TEST(Taxonomy, ParseIsLenientAboutSeparatorsAndCase) {
    EXPECT_EQ(parse_category("Unclear Schema Reference"), AmbiguityCategory::UnclearSchemaReference);
    EXPECT_EQ(parse_category("  ambiguous-temporal/spatial scope "),
              AmbiguityCategory::AmbiguousTemporalSpatialScope);
    EXPECT_EQ(parse_category("MISSING_SQL_KEYWORDS"), AmbiguityCategory::MissingSqlKeywords);
}

TEST(Taxonomy, DisplayNamesParseBack) {
    for (AmbiguityCategory c : kAllCategories) {
        EXPECT_EQ(parse_category(category_display_name(c)), c) << category_display_name(c);
    }
}

TEST(Taxonomy, UnknownLabelThrowsWithLabel) {
    try {
        parse_category("vague_wording");
        FAIL() << "expected UnknownCategory";
    } catch (const UnknownCategory& e) {
        EXPECT_EQ(e.label(), "vague_wording");
    }
    EXPECT_THROW(parse_category(""), UnknownCategory);
}

TEST(Taxonomy, DimensionSplitIsThreeAndFour) {
    int db = 0;
    int llm = 0;
    for (AmbiguityCategory c : kAllCategories) {
        (dimension_of(c) == Dimension::DbRelated ? db : llm) += 1;
        EXPECT_EQ(is_db_related(c), dimension_of(c) == Dimension::DbRelated);
    }
    EXPECT_EQ(db, 3);
    EXPECT_EQ(llm, 4);
    EXPECT_EQ(dimension_of(AmbiguityCategory::UnclearValueReference), Dimension::DbRelated);
    EXPECT_EQ(dimension_of(AmbiguityCategory::ConflictingKnowledge), Dimension::LlmRelated);
}

TEST(Taxonomy, CardsAreComplete) {
    for (AmbiguityCategory c : kAllCategories) {
        const CategoryCard& card = category_card(c);
        EXPECT_EQ(card.category, c);
        EXPECT_EQ(card.dimension, dimension_of(c));
        EXPECT_FALSE(card.definition.empty());
        EXPECT_FALSE(card.exemplar.empty());
        EXPECT_EQ(kAllCategories[category_index(c)], c);
    }
}

TEST(Taxonomy, RenderMentionsEveryLabelOnce) {
    const std::string text = render_taxonomy();
    for (AmbiguityCategory c : kAllCategories) {
        const std::string label(category_label(c));
        const auto first = text.find(label);
        ASSERT_NE(first, std::string::npos) << label;
        EXPECT_EQ(text.find(label, first + 1), std::string::npos) << label;
    }
    EXPECT_EQ(render_taxonomy(), text);
}
