#pragma once

#include <string>
#include <string_view>

#include "tutorbench/provider.hpp"
#include "tutorbench/quizset.hpp"

namespace tutorbench {

/// The frozen template version shipped with the project.
inline constexpr std::string_view kPaperV1 = "paper-v1";

/// System instruction text for the tutoring task under `version`.
/// Throws UnknownTemplateVersion.
std::string_view tutor_system_text(std::string_view version = kPaperV1);

/// System instruction text for the pairwise evaluation task under `version`.
std::string_view judge_system_text(std::string_view version = kPaperV1);

/// A fully rendered prompt for one tutoring call. Rendering is pure: the same
/// (QuizSet, version) always produces identical bytes.
struct TutorPrompt {
  std::string system_text;
  std::string user_text;  // canonical quiz serialization
  std::string template_version;
};

/// A fully rendered prompt for one pairwise judgment. `output_a`/`output_b`
/// are embedded unmodified; swapping the pair swaps only labels and outputs.
struct JudgePrompt {
  std::string system_text;
  std::string quiz_text;
  std::string output_a;
  std::string output_b;
  std::string label_a;
  std::string label_b;
  std::string template_version;

  /// The user message: quiz, output A, output B in that order, then the
  /// decision-line instruction with real model names.
  std::string user_text() const;
};

/// Throws EmptyQuizSet for a set with no items.
TutorPrompt render_tutor_prompt(const QuizSet& set, std::string_view version = kPaperV1);

/// Render the judge prompt for transcripts `a` (Model A) and `b` (Model B).
/// Throws DigestMismatch if the transcripts cover different quiz versions and
/// SelfComparison if they come from the same model.
JudgePrompt render_judge_prompt(const QuizSet& set, const Transcript& a, const Transcript& b,
                                std::string_view version = kPaperV1);

}  // namespace tutorbench
