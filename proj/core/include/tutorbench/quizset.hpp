#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace tutorbench {

/// One quiz question together with the student's answer and a correctness
/// label. Text fields are opaque UTF-8, stored exactly as loaded.
struct QuizItem {
  int id = 0;
  std::string question;
  std::string student_answer;
  bool correct = false;

  friend bool operator==(const QuizItem&, const QuizItem&) = default;
};

/// An ordered quiz dataset. Item order is preserved from the source file so
/// every model sees bit-identical input. `source_digest` is the SHA-256 of
/// the canonical serialization.
struct QuizSet {
  std::vector<QuizItem> items;
  std::string source_digest;

  friend bool operator==(const QuizSet&, const QuizSet&) = default;
};

struct QuizLoadOptions {
  /// Records with fields beyond {id, question, student_answer, correct} are
  /// rejected unless this is set, so schema drift is caught early.
  bool allow_unknown_fields = false;
};

/// Parse and validate a quiz dataset from a JSON array.
/// Throws MalformedDocument, MissingField, DuplicateId, EmptyText or
/// UnknownField; each message names the offending record or byte offset.
QuizSet parse_quizset(const std::string& json_text, const QuizLoadOptions& opts = {});

/// parse_quizset() over the contents of `path`.
QuizSet load_quizset(const std::filesystem::path& path, const QuizLoadOptions& opts = {});

/// Canonical serialization: key order (id, question, student_answer, correct),
/// two-space indentation, trailing newline. Byte-identical for equal sets.
std::string canonical_serialize(const QuizSet& set);

}  // namespace tutorbench
