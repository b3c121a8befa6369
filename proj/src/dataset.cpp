#include "hoplens/dataset.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace hoplens {

using json = nlohmann::json;

namespace {

constexpr std::array<QuestionTypeInfo, 14> kOriginalTypes{{
    {"callingcode", "What is the calling code of the birthplace of <name>?",
     "The calling code is +"},
    {"tld", "What is the top-level domain of the birthplace of <name>?",
     "The top-level domain is ."},
    {"rounded_lng", "What is the (rounded down) longitude of the birthplace of <name>?",
     "The longitude is ", true},
    {"rounded_lat", "What is the (rounded down) latitude of the birthplace of <name>?",
     "The latitude is ", true},
    {"currency_short", "What is the currency abbreviation in the birthplace of <name>?",
     "The abbreviation is \""},
    {"currency", "What is the currency in the birthplace of <name>?", "The currency name is \""},
    {"ccn3", "What is the 3166-1 numeric code for the birthplace of <name>?",
     "The numeric code is "},
    {"capital", "What is the capital of the birthplace of <name>?", "The capital is"},
    {"currency_symbol", "What is the currency symbol in the birthplace of <name>?",
     "The symbol is \""},
    {"rus_common_name", "What is the Russian name of the birthplace of <name>?",
     "The common name in Russian is \""},
    {"jpn_common_name", "What is the Japanese name of the birthplace of <name>?",
     "The common name in Japanese is \""},
    {"urd_common_name", "What is the Urdu name of the birthplace of <name>?",
     "The common name in Urdu is \""},
    {"spa_common_name", "What is the Spanish name of the birthplace of <name>?",
     "The common name in Spanish is \""},
    {"est_common_name", "What is the Estonian name of the birthplace of <name>?",
     "The common name in Estonian is \""},
}};

constexpr std::array<QuestionTypeInfo, 3> kAttributeTypes{{
    {"fruit_color", "What is the color of the favorite fruit of <name>?",
     "The name of the color is"},
    {"fruit_letter", "What is the first letter of the name of the favorite fruit of <name>?",
     "The first letter is"},
    {"vegetable_letter",
     "What is the first letter of the name of the favorite vegetable of <name>?",
     "The first letter is"},
}};

constexpr std::array<std::string_view, kFictitiousNameCount> kFictitiousNames{
    "Scarlett Evans",    "Oliver Morgan",     "Eleanor Clark",     "Finley Cooper",
    "Violet Gray",       "Carter Edwards",    "Alice Brooks",      "Samuel Parker",
    "Willow Moore",      "Henry Mitchell",    "Isla Bennett",      "Leo Turner",
    "Evelyn Carter",     "Wyatt Peterson",    "Harper Garcia",     "Lucas Ramirez",
    "Luna Patel",        "Logan Martin",      "Scarlett Lopez",    "Aiden Sanchez",
    "Chloe Lee",         "Owen Perez",        "Riley Daniels",     "Liam Davis",
    "Nora Robinson",     "Caleb Wright",      "Hazel Young",       "Elijah Thompson",
    "Aurora Jones",      "Ryan Lewis",        "Zoey Walker",       "Dylan Baker",
    "Penelope Harris",   "Gabriel Allen",     "Charlotte Campbell", "Nicholas Taylor",
    "Amelia Jackson",    "Jackson Moore",     "Evelyn Garcia",     "Matthew Ramirez",
    "Luna Lopez",        "Benjamin Daniels",  "Maya Bennett",      "Alexander Turner",
    "Ava Davis",         "Ethan Johnson",     "Riley Brooks",      "William Peterson",
    "Aurora Sanchez",    "Noah Lewis",        "Zoey Baker",        "Dylan Harris",
    "Penelope Allen",    "Gabriel Campbell",  "Charlotte Taylor",  "Nicholas Jackson",
    "Amelia Moore",      "Jackson Garcia",    "Evelyn Ramirez",    "Matthew Lopez",
    "Luna Daniels",      "Benjamin Bennett",  "Maya Turner",       "Alexander Davis",
    "Ava Johnson",       "Ethan Brooks",      "Riley Peterson",    "William Sanchez",
    "Aurora Lewis",      "Noah Baker",        "Zoey Harris",       "Dylan Allen",
    "Penelope Campbell", "Gabriel Taylor",    "Charlotte Jackson", "Nicholas Moore",
    "Amelia Garcia",     "Jackson Ramirez",   "Evelyn Lopez",      "Matthew Daniels",
    "Luna Bennett",      "Benjamin Turner",   "Maya Davis",        "Alexander Johnson",
    "Ava Brooks",        "Ethan Peterson",    "Riley Sanchez",     "William Lewis",
    "Aurora Baker",      "Noah Harris",       "Zoey Allen",        "Dylan Campbell",
    "Penelope Taylor",   "Gabriel Jackson",   "Charlotte Moore",   "Nicholas Garcia",
    "Amelia Ramirez",    "Jackson Lopez",     "Evelyn Daniels",    "Matthew Bennett",
};

bool ends_with(std::string_view text, std::string_view tail) {
  return text.size() >= tail.size() && text.substr(text.size() - tail.size()) == tail;
}

std::string trim_right(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

std::string numbered_id(std::string_view prefix, std::size_t index, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, index);
  return std::string(prefix) + "-" + buf;
}

bool negative_answer(std::string_view answer) { return !answer.empty() && answer.front() == '-'; }

// Text following the suffix when the model answers with this term.
std::string a2_surface(std::string_view question_type, std::string_view term) {
  std::string_view s = term;
  if (question_type == "tld" && !s.empty() && s.front() == '.') s.remove_prefix(1);
  if ((question_type == "rounded_lat" || question_type == "rounded_lng") && !s.empty() &&
      s.front() == '-')
    s.remove_prefix(1);
  return std::string(s);
}

std::string first_letter(std::string_view word) {
  if (word.empty()) throw Error("empty attribute member");
  const char c = word.front();
  return std::string(1, static_cast<char>(c >= 'a' && c <= 'z' ? c - 'a' + 'A' : c));
}

}  // namespace

std::span<const QuestionTypeInfo> original_question_types() { return kOriginalTypes; }
std::span<const QuestionTypeInfo> fictitious_attribute_types() { return kAttributeTypes; }

const QuestionTypeInfo& question_type_info(std::string_view question_type) {
  for (const auto& t : kOriginalTypes)
    if (t.name == question_type) return t;
  for (const auto& t : kAttributeTypes)
    if (t.name == question_type) return t;
  throw Error("unknown question type '" + std::string(question_type) + "'");
}

bool is_attribute_type(std::string_view question_type) {
  return std::any_of(kAttributeTypes.begin(), kAttributeTypes.end(),
                     [&](const auto& t) { return t.name == question_type; });
}

std::string question_text(const QuestionTypeInfo& info, std::string_view subject) {
  std::string text(info.question_template);
  const auto pos = text.find("<name>");
  text.replace(pos, 6, subject);
  return text;
}

std::string apply_suffix(std::string_view question_type, std::string_view raw_question,
                         bool negative_coordinate) {
  const auto& info = question_type_info(question_type);
  const std::string bare = trim_right(info.suffix);
  if (ends_with(trim_right(raw_question), bare) ||
      (info.sign_suffix && ends_with(raw_question, bare + " -")))
    throw Error("question already ends with the '" + std::string(question_type) + "' suffix");
  std::string text(raw_question);
  text += ' ';
  text += info.suffix;
  if (info.sign_suffix && negative_coordinate) text += '-';
  return text;
}

std::optional<std::size_t> CategorySpec::index_of(std::string_view term) const {
  for (std::size_t i = 0; i < members.size(); ++i)
    if (members[i].term == term) return i;
  return std::nullopt;
}

std::vector<std::size_t> AnswerMap::indices(const CategorySpec& a1, const CategorySpec& a2) const {
  std::vector<std::size_t> out;
  out.reserve(a1.size());
  for (const auto& member : a1.members) {
    const auto it = mapping.find(member.term);
    if (it == mapping.end())
      throw Error("answer map for '" + question_type + "' is not total: no image for '" +
                  member.term + "'");
    const auto j = a2.index_of(it->second);
    if (!j)
      throw Error("answer map for '" + question_type + "' maps '" + member.term + "' to '" +
                  it->second + "', which is not an A2 member");
    out.push_back(*j);
  }
  return out;
}

std::vector<CelebrityRow> parse_celebrity_source(std::istream& in) {
  std::vector<CelebrityRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_right(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("source row " + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    CelebrityRow row;
    row.line = line_no;
    try {
      row.name = j.at("name").get<std::string>();
      row.country = j.at("country").get<std::string>();
      for (const auto& [type, answer] : j.at("answers").items()) {
        if (std::none_of(kOriginalTypes.begin(), kOriginalTypes.end(),
                         [&](const auto& t) { return t.name == type; }))
          throw Error("source row " + std::to_string(line_no) + ": unknown question type '" +
                      type + "'");
        if (answer.is_null())
          row.answers[type] = std::nullopt;
        else
          row.answers[type] = answer.is_string() ? answer.get<std::string>() : answer.dump();
      }
    } catch (const json::exception& e) {
      throw Error("source row " + std::to_string(line_no) + ": " + e.what());
    }
    if (row.name.empty() || row.country.empty())
      throw Error("source row " + std::to_string(line_no) + ": empty name or country");
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CelebrityRow> read_celebrity_source(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open source '" + path.string() + "'");
  return parse_celebrity_source(in);
}

std::string a2_term(std::string_view question_type, std::string_view answer) {
  if (question_type == "callingcode") {
    for (char c : answer)
      if (c >= '1' && c <= '9') return std::string(1, c);
    throw Error("calling code '" + std::string(answer) + "' has no leading digit");
  }
  return std::string(answer);
}

LoadResult load_compositional_celebrities(std::span<const CelebrityRow> rows) {
  LoadResult result;
  for (const auto& info : kOriginalTypes) {
    std::size_t index = 0;
    for (const auto& row : rows) {
      const auto it = row.answers.find(std::string(info.name));
      if (it == row.answers.end()) continue;
      if (!it->second || it->second->empty()) {
        ++result.warnings;
        result.warning_messages.push_back("source row " + std::to_string(row.line) + ": missing '" +
                                          std::string(info.name) + "' answer for " + row.name +
                                          "; skipped");
        continue;
      }
      const std::string& answer = *it->second;
      PromptRecord rec;
      rec.prompt_id = numbered_id(info.name, index++, 5);
      rec.question_type = std::string(info.name);
      rec.subject = row.name;
      rec.prompt_text = apply_suffix(info.name, question_text(info, row.name),
                                     info.sign_suffix && negative_answer(answer));
      rec.gold_a1 = row.country;
      rec.gold_a2 = a2_term(info.name, answer);
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

std::span<const std::string_view> embedded_fictitious_names() { return kFictitiousNames; }

std::vector<PromptRecord> build_fictitious_subjects(std::span<const std::string> names) {
  std::vector<PromptRecord> records;
  records.reserve(kOriginalTypes.size() * names.size());
  for (const auto& info : kOriginalTypes) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      PromptRecord rec;
      rec.prompt_id = numbered_id("fn_" + std::string(info.name), i, 3);
      rec.question_type = std::string(info.name);
      rec.subject = names[i];
      rec.prompt_text = apply_suffix(info.name, question_text(info, names[i]));
      rec.is_fictitious = true;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<PromptRecord> build_fictitious_subjects() {
  std::vector<std::string> names(kFictitiousNames.begin(), kFictitiousNames.end());
  return build_fictitious_subjects(names);
}

std::vector<PromptRecord> build_fictitious_attributes(std::span<const std::string> names) {
  if (names.size() != kAttributeNameCount)
    throw Error("fictitious attributes need exactly " + std::to_string(kAttributeNameCount) +
                " names, got " + std::to_string(names.size()));
  std::vector<PromptRecord> records;
  records.reserve(kAttributeTypes.size() * names.size());
  for (const auto& info : kAttributeTypes) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      PromptRecord rec;
      rec.prompt_id = numbered_id(info.name, i, 4);
      rec.question_type = std::string(info.name);
      rec.subject = names[i];
      rec.prompt_text = apply_suffix(info.name, question_text(info, names[i]));
      rec.is_fictitious = true;
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<std::string> distinct_names(std::span<const CelebrityRow> rows, std::size_t count) {
  std::vector<std::string> names;
  std::unordered_set<std::string> seen;
  for (const auto& row : rows) {
    if (names.size() == count) break;
    if (seen.insert(row.name).second) names.push_back(row.name);
  }
  if (names.size() < count)
    throw Error("source has " + std::to_string(names.size()) + " distinct names, need " +
                std::to_string(count));
  return names;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto trimmed = trim_right(line);
    if (!trimmed.empty() && trimmed.front() != '#') lines.push_back(std::move(trimmed));
  }
  return lines;
}

AttributeLists read_attribute_lists(const std::filesystem::path& fixture_dir) {
  AttributeLists lists;
  for (const auto& line : read_lines(fixture_dir / "fruits.txt")) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error("fruits.txt: expected '<fruit>\\t<color>', got '" + line + "'");
    lists.fruits.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  lists.vegetables = read_lines(fixture_dir / "vegetables.txt");
  lists.colors = read_lines(fixture_dir / "colors.txt");
  return lists;
}

namespace {

CategorySpec make_spec(std::string name, const std::vector<std::string>& terms,
                       std::string_view question_type = {}) {
  CategorySpec spec{std::move(name), {}};
  std::set<std::string> seen;
  for (const auto& term : terms) {
    if (!seen.insert(term).second) throw Error("duplicate category member '" + term + "'");
    std::string surface = question_type.empty() ? term : a2_surface(question_type, term);
    if (surface.empty())
      throw Error("question type '" + std::string(question_type) + "' has an answer ('" + term +
                  "') with no representative token; exclude this type");
    spec.members.push_back({term, std::move(surface)});
  }
  if (spec.size() < 2)
    throw Error("category '" + spec.name + "' needs at least 2 members, has " +
                std::to_string(spec.size()));
  return spec;
}

}  // namespace

CategoryBundle build_category_spec(std::span<const CelebrityRow> rows,
                                   std::string_view question_type) {
  const auto& info = question_type_info(question_type);
  if (is_attribute_type(question_type))
    throw Error("'" + std::string(question_type) + "' is built from attribute lists");

  std::set<std::string> countries;
  for (const auto& row : rows)
    if (std::any_of(row.answers.begin(), row.answers.end(),
                    [](const auto& kv) { return kv.second && !kv.second->empty(); }))
      countries.insert(row.country);
  if (countries.size() != kCountryCount)
    throw Error("source covers " + std::to_string(countries.size()) + " countries, expected " +
                std::to_string(kCountryCount));

  CategoryBundle bundle;
  bundle.question_type = std::string(question_type);
  bundle.map.question_type = bundle.question_type;
  std::set<std::string> finals;
  for (const auto& row : rows) {
    const auto it = row.answers.find(std::string(info.name));
    if (it == row.answers.end() || !it->second || it->second->empty()) continue;
    const std::string term = a2_term(question_type, *it->second);
    const auto [pos, inserted] = bundle.map.mapping.emplace(row.country, term);
    if (!inserted && pos->second != term)
      throw Error("source row " + std::to_string(row.line) + ": '" + row.country + "' has '" +
                  std::string(question_type) + "' answers '" + pos->second + "' and '" + term +
                  "'");
    finals.insert(term);
  }

  bundle.a1 = make_spec("countries", {countries.begin(), countries.end()});
  bundle.a2 = make_spec(std::string(question_type), {finals.begin(), finals.end()}, question_type);
  (void)bundle.map.indices(bundle.a1, bundle.a2);
  return bundle;
}

CategoryBundle build_category_spec(const AttributeLists& lists, std::string_view question_type) {
  if (!is_attribute_type(question_type))
    throw Error("'" + std::string(question_type) + "' is not a fictitious-attribute type");
  CategoryBundle bundle;
  bundle.question_type = std::string(question_type);
  bundle.map.question_type = bundle.question_type;

  std::vector<std::string> a1_terms;
  std::set<std::string> letters;
  if (question_type == "vegetable_letter") {
    a1_terms = lists.vegetables;
  } else {
    for (const auto& [fruit, color] : lists.fruits) a1_terms.push_back(fruit);
  }
  bundle.a1 = make_spec(question_type == "vegetable_letter" ? "vegetables" : "fruits", a1_terms);

  if (question_type == "fruit_color") {
    for (const auto& [fruit, color] : lists.fruits) bundle.map.mapping[fruit] = color;
    bundle.a2 = make_spec("colors", lists.colors);
  } else {
    for (const auto& term : a1_terms) {
      bundle.map.mapping[term] = first_letter(term);
      letters.insert(first_letter(term));
    }
    bundle.a2 = make_spec("letters", {letters.begin(), letters.end()});
  }
  (void)bundle.map.indices(bundle.a1, bundle.a2);
  return bundle;
}

json to_json(const PromptRecord& r) {
  auto opt = [](const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); };
  return {{"prompt_id", r.prompt_id}, {"question_type", r.question_type},
          {"subject", r.subject},     {"prompt_text", r.prompt_text},
          {"gold_a1", opt(r.gold_a1)}, {"gold_a2", opt(r.gold_a2)},
          {"is_fictitious", r.is_fictitious}};
}

namespace {

json spec_to_json(const CategorySpec& spec) {
  json members = json::array();
  for (const auto& m : spec.members) members.push_back({{"term", m.term}, {"surface", m.surface}});
  return {{"name", spec.name}, {"size", spec.size()}, {"members", std::move(members)}};
}

CategorySpec spec_from_json(const json& j) {
  CategorySpec spec;
  spec.name = j.at("name").get<std::string>();
  for (const auto& m : j.at("members"))
    spec.members.push_back({m.at("term").get<std::string>(), m.at("surface").get<std::string>()});
  return spec;
}

}  // namespace

json to_json(const CategoryBundle& b) {
  return {{"question_type", b.question_type},
          {"a1", spec_to_json(b.a1)},
          {"a2", spec_to_json(b.a2)},
          {"answer_map", b.map.mapping}};
}

CategoryBundle category_bundle_from_json(const json& j) {
  try {
    CategoryBundle b;
    b.question_type = j.at("question_type").get<std::string>();
    b.a1 = spec_from_json(j.at("a1"));
    b.a2 = spec_from_json(j.at("a2"));
    b.map.question_type = b.question_type;
    b.map.mapping = j.at("answer_map").get<std::map<std::string, std::string>>();
    return b;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed category file: ") + e.what());
  }
}

CategoryBundle load_category_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open category file '" + path.string() + "'");
  try {
    return category_bundle_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error("'" + path.string() + "': " + e.what());
  }
}

}  // namespace hoplens
