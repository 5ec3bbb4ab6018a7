#include "tutorbench/quizset.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "tutorbench/errors.hpp"
#include "tutorbench/util.hpp"

namespace tutorbench {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string record_label(const json& rec, size_t index) {
  if (rec.is_object() && rec.contains("id") && rec["id"].is_number_integer()) {
    return "record id " + std::to_string(rec["id"].get<long long>());
  }
  return "record #" + std::to_string(index);
}

}  // namespace

QuizSet parse_quizset(const std::string& json_text, const QuizLoadOptions& opts) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw MalformedDocument("quiz document is not valid JSON at byte offset " +
                            std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_array()) {
    throw MalformedDocument("quiz document must be a JSON array of records");
  }

  static const std::set<std::string> kKnown = {"id", "question", "student_answer", "correct"};

  QuizSet set;
  std::set<int> seen_ids;
  for (size_t i = 0; i < doc.size(); ++i) {
    const json& rec = doc[i];
    const std::string label = record_label(rec, i);
    if (!rec.is_object()) {
      throw MalformedDocument(label + ": expected a JSON object");
    }
    for (const auto& [key, _] : rec.items()) {
      if (!kKnown.count(key) && !opts.allow_unknown_fields) {
        throw UnknownField(label + ": unknown field \"" + key + "\"");
      }
    }
    for (const char* field : {"id", "question", "student_answer", "correct"}) {
      if (!rec.contains(field)) {
        throw MissingField(label + ": missing field \"" + field + "\"");
      }
    }
    if (!rec["id"].is_number_integer()) {
      throw MalformedDocument(label + ": \"id\" must be an integer");
    }
    long long id = rec["id"].get<long long>();
    if (id <= 0 || id > std::numeric_limits<int>::max()) {
      throw MalformedDocument(label + ": \"id\" must be a positive 32-bit integer");
    }
    if (!rec["question"].is_string() || !rec["student_answer"].is_string()) {
      throw MalformedDocument(label + ": \"question\" and \"student_answer\" must be strings");
    }
    if (!rec["correct"].is_boolean()) {
      throw MalformedDocument(label + ": \"correct\" must be a boolean");
    }

    QuizItem item;
    item.id = static_cast<int>(id);
    item.question = rec["question"].get<std::string>();
    item.student_answer = rec["student_answer"].get<std::string>();
    item.correct = rec["correct"].get<bool>();

    if (is_blank(item.question)) {
      throw EmptyText(label + ": \"question\" is empty");
    }
    if (is_blank(item.student_answer)) {
      throw EmptyText(label + ": \"student_answer\" is empty");
    }
    if (!seen_ids.insert(item.id).second) {
      throw DuplicateId(item.id);
    }
    set.items.push_back(std::move(item));
  }

  set.source_digest = sha256_hex(canonical_serialize(set));
  return set;
}

QuizSet load_quizset(const std::filesystem::path& path, const QuizLoadOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MalformedDocument("cannot open quiz file: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_quizset(buf.str(), opts);
}

std::string canonical_serialize(const QuizSet& set) {
  ordered_json arr = ordered_json::array();
  for (const QuizItem& item : set.items) {
    ordered_json rec;
    rec["id"] = item.id;
    rec["question"] = item.question;
    rec["student_answer"] = item.student_answer;
    rec["correct"] = item.correct;
    arr.push_back(std::move(rec));
  }
  return arr.dump(2) + "\n";
}

}  // namespace tutorbench
