#pragma once

// Prompt datasets for two-hop questions: the modified Compositional
// Celebrities set, its fictitious-subject twin and the fictitious-attribute
// set, plus the category specs that index the A1/A2 activation vectors.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hoplens/error.hpp"

namespace hoplens {

inline constexpr std::size_t kCountryCount = 117;
inline constexpr std::size_t kFictitiousNameCount = 100;
inline constexpr std::size_t kAttributeNameCount = 1000;

struct QuestionTypeInfo {
  std::string_view name;
  std::string_view question_template;  // "<name>" is replaced by the subject
  std::string_view suffix;
  bool sign_suffix = false;  // suffix gets "-" appended for negative coordinates
};

/// The 14 country-attribute question types, in table order.
std::span<const QuestionTypeInfo> original_question_types();
/// fruit_color, fruit_letter, vegetable_letter.
std::span<const QuestionTypeInfo> fictitious_attribute_types();
/// Throws Error naming the type when it is unknown.
const QuestionTypeInfo& question_type_info(std::string_view question_type);
bool is_attribute_type(std::string_view question_type);

std::string question_text(const QuestionTypeInfo& info, std::string_view subject);

/// raw_question + " " + suffix. Rejects text that already carries the suffix.
std::string apply_suffix(std::string_view question_type, std::string_view raw_question,
                         bool negative_coordinate = false);

struct CategoryMember {
  std::string term;
  std::string surface;  // text used for representative-token matching
  bool operator==(const CategoryMember&) const = default;
};

struct CategorySpec {
  std::string name;
  std::vector<CategoryMember> members;

  std::size_t size() const { return members.size(); }
  std::optional<std::size_t> index_of(std::string_view term) const;
  bool operator==(const CategorySpec&) const = default;
};

struct AnswerMap {
  std::string question_type;
  std::map<std::string, std::string> mapping;  // A1 term -> A2 term

  /// Column index in a2 of the image of every a1 member, in a1 order.
  /// Throws when the map is not total over a1 or leaves a2.
  std::vector<std::size_t> indices(const CategorySpec& a1, const CategorySpec& a2) const;
  bool operator==(const AnswerMap&) const = default;
};

struct CategoryBundle {
  std::string question_type;
  CategorySpec a1;
  CategorySpec a2;
  AnswerMap map;
  bool operator==(const CategoryBundle&) const = default;
};

struct PromptRecord {
  std::string prompt_id;
  std::string question_type;
  std::string subject;
  std::string prompt_text;
  std::optional<std::string> gold_a1;
  std::optional<std::string> gold_a2;
  bool is_fictitious = false;
  bool operator==(const PromptRecord&) const = default;
};

/// One line of cc.jsonl: {"name", "country", "answers": {type: answer|null}}.
/// A type key that is absent means the celebrity is not asked that question;
/// a null or empty answer is a missing field.
struct CelebrityRow {
  std::string name;
  std::string country;
  std::map<std::string, std::optional<std::string>> answers;
  std::size_t line = 0;
};

/// Throws Error naming the row for malformed JSON, missing name/country or an
/// unknown question type.
std::vector<CelebrityRow> parse_celebrity_source(std::istream& in);
std::vector<CelebrityRow> read_celebrity_source(const std::filesystem::path& path);

struct LoadResult {
  std::vector<PromptRecord> records;  // grouped by question type in table order
  std::size_t warnings = 0;
  std::vector<std::string> warning_messages;
};

LoadResult load_compositional_celebrities(std::span<const CelebrityRow> rows);

/// Gold A2 member for one answer: the first digit for calling codes, the
/// answer itself otherwise.
std::string a2_term(std::string_view question_type, std::string_view answer);

std::span<const std::string_view> embedded_fictitious_names();

std::vector<PromptRecord> build_fictitious_subjects(std::span<const std::string> names);
std::vector<PromptRecord> build_fictitious_subjects();

/// Exactly 1000 names; throws otherwise.
std::vector<PromptRecord> build_fictitious_attributes(std::span<const std::string> names);

/// First `count` distinct names in source order; throws when fewer exist.
std::vector<std::string> distinct_names(std::span<const CelebrityRow> rows, std::size_t count);

struct AttributeLists {
  std::vector<std::pair<std::string, std::string>> fruits;  // fruit, color
  std::vector<std::string> vegetables;
  std::vector<std::string> colors;
};

AttributeLists read_attribute_lists(const std::filesystem::path& fixture_dir);
std::vector<std::string> read_lines(const std::filesystem::path& path);

CategoryBundle build_category_spec(std::span<const CelebrityRow> rows,
                                   std::string_view question_type);
CategoryBundle build_category_spec(const AttributeLists& lists, std::string_view question_type);

nlohmann::json to_json(const PromptRecord& record);
nlohmann::json to_json(const CategoryBundle& bundle);
CategoryBundle category_bundle_from_json(const nlohmann::json& j);
CategoryBundle load_category_bundle(const std::filesystem::path& path);

}  // namespace hoplens
