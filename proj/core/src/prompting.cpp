#include "tutorbench/prompting.hpp"

#include "tutorbench/errors.hpp"

namespace tutorbench {

namespace {

// Frozen "paper-v1" templates. Golden copies live in core/assets/prompts/ and
// the test suite checks these constants against them byte-for-byte.
constexpr std::string_view kTutorSystemPaperV1 =
    R"(You are an intelligent tutoring assistant specialized in data structures.

You will be given 10 data structure questions, each accompanied by a student's answer and whether the answer is correct or incorrect.

Your task is to:

1. Identify the key knowledge points involved in each question (e.g., recursion, linked list traversal, binary search tree insertion).
2. Analyze the student's performance across these questions to infer which knowledge areas are:
   - mastered
   - partially understood
   - not yet grasped.
3. Provide a detailed and personalized learning analysis, including:
   - Strengths and weaknesses for each identified knowledge point
   - Likely misconceptions or reasoning errors the student may have
   - Specific, actionable learning or review strategies tailored to the student's level
   - Recommended practice problems or resources, if applicable.

Format your output into clear sections with appropriate subheadings and bullet points. Use precise, instructional language suitable for a university-level student.
)";

constexpr std::string_view kJudgeSystemPaperV1 =
    R"(You are a strict and consistent evaluator of personalized learning feedback.

Task

You will be given:

1. A question set file containing:
   - 10 data structure questions
   - A student's answers
   - Whether each answer is correct or incorrect
2. Model A's personalized guidance output for this student.
3. Model B's personalized guidance output for this student.

Your task:

- Compare the output from Model A with the output from Model B.
- Evaluate the contents relative to each other across the following five dimensions:
   1. Accuracy of knowledge diagnosis
   2. Specificity and actionability of feedback
   3. Identification of misconceptions
   4. Instructional clarity
   5. Appropriateness to the student's current level
- Use relative judgment, not absolute scores.
- Focus your comparison on semantic meaning, argument structure, logical coherence, evidence strength, and depth of insight, not on superficial details like sentence length, formatting, or stylistic phrasing.
- After comparing all five dimensions, decide the overall winner:
   - +1 → Model A is better overall for this pair
   - -1 → Model B is better overall for this pair
   - 0 → They are equally good (or differences are negligible)

Important Rules

- Always use the full range of possible decisions.
- If neither output is very good, still pick the better one unless they are truly equal.
- Focus on differences, not similarities.
- Be strict: small weaknesses should matter if the other output does better.
- Do not output explanations or reasoning — only your decision.

Output Format

Name of Model A vs. Name of Model B: +1/0/-1
)";

void require_known_version(std::string_view version) {
  if (version != kPaperV1) {
    throw UnknownTemplateVersion("unknown prompt template version \"" + std::string(version) +
                                 "\"");
  }
}

}  // namespace

std::string_view tutor_system_text(std::string_view version) {
  require_known_version(version);
  return kTutorSystemPaperV1;
}

std::string_view judge_system_text(std::string_view version) {
  require_known_version(version);
  return kJudgeSystemPaperV1;
}

TutorPrompt render_tutor_prompt(const QuizSet& set, std::string_view version) {
  require_known_version(version);
  if (set.items.empty()) {
    throw EmptyQuizSet("cannot render a tutoring prompt for an empty quiz set");
  }
  TutorPrompt prompt;
  prompt.system_text = std::string(tutor_system_text(version));
  prompt.user_text = canonical_serialize(set);
  prompt.template_version = std::string(version);
  return prompt;
}

std::string JudgePrompt::user_text() const {
  std::string out;
  out.reserve(quiz_text.size() + output_a.size() + output_b.size() + 256);
  out += "Question set file:\n\n";
  out += quiz_text;
  out += "\nModel A (";
  out += label_a;
  out += ") output:\n\n";
  out += output_a;
  out += "\n\nModel B (";
  out += label_b;
  out += ") output:\n\n";
  out += output_b;
  out += "\n\nOutput Format\n\n";
  out += label_a;
  out += " vs. ";
  out += label_b;
  out += ": +1/0/-1\n";
  return out;
}

JudgePrompt render_judge_prompt(const QuizSet& set, const Transcript& a, const Transcript& b,
                                std::string_view version) {
  require_known_version(version);
  if (a.model_name == b.model_name) {
    throw SelfComparison("cannot compare \"" + a.model_name + "\" against itself");
  }
  if (a.quiz_digest != b.quiz_digest || a.quiz_digest != set.source_digest) {
    throw DigestMismatch("transcripts do not cover this quiz version (set " + set.source_digest +
                         ", a " + a.quiz_digest + ", b " + b.quiz_digest + ")");
  }
  JudgePrompt prompt;
  prompt.system_text = std::string(judge_system_text(version));
  prompt.quiz_text = canonical_serialize(set);
  prompt.output_a = a.response_text;
  prompt.output_b = b.response_text;
  prompt.label_a = a.model_name;
  prompt.label_b = b.model_name;
  prompt.template_version = std::string(version);
  return prompt;
}

}  // namespace tutorbench
