#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace booster {

enum class QueryForm { SQL, Template, Plan };

struct SchematicType {
    QueryForm form = QueryForm::SQL;
    bool anonymized = false;
    friend auto operator<=>(const SchematicType&, const SchematicType&) = default;
};

// "sql", "sql-anon", "template", "template-anon", "plan", "plan-anon".
std::string to_string(SchematicType t);
std::optional<SchematicType> parse_schematic_type(std::string_view s);

inline constexpr std::array<SchematicType, 6> kAllSchematicTypes = {{
    {QueryForm::SQL, false},
    {QueryForm::SQL, true},
    {QueryForm::Template, false},
    {QueryForm::Template, true},
    {QueryForm::Plan, false},
    {QueryForm::Plan, true},
}};

}  // namespace booster
