#pragma once

#include <string>
#include <string_view>

#include "mtf/core.hpp"

namespace mtf::scorer {

/// Rationalization puts the score on the first line, chain-of-thought on the last.
enum class PromptMode : std::uint8_t { Rationalization, Cot };

/// VISION sends the image alongside the prompt; TEXT_ONLY substitutes a dense caption.
enum class TeacherPath : std::uint8_t { Vision, TextOnly };

std::string_view to_string(PromptMode m);
PromptMode parse_prompt_mode(std::string_view s);
std::string_view to_string(TeacherPath p);
TeacherPath parse_teacher_path(std::string_view s);

struct PromptTemplate {
    Metric metric;
    std::string_view body;
    PromptMode mode;
    std::string_view suffix;
};

std::string_view metric_prompt(Metric m);
std::string_view mode_suffix(PromptMode mode);
PromptTemplate prompt_template(Metric m, PromptMode mode);

/// Instruction used to obtain a dense caption from a captioning model.
std::string_view dense_caption_prompt();

/// Layout: body, blank line, ["Image Description: ..." blank line,] "Caption: ...",
/// blank line, mode suffix. TEXT_ONLY throws MissingDenseCaption without one.
std::string assemble_prompt(Metric metric, const ImageTextPair& pair, PromptMode mode, TeacherPath path);

/// Extracts the score from generated text. Rationalization reads the first
/// nonempty line; CoT reads upward from the last nonempty line. Within a line
/// the first maximal run of decimal digits wins, so "Score: 92" and "92/100"
/// both give 92. A '-' directly before the digits makes the value negative.
/// Throws NoScoreFound or OutOfRange.
QualityScore parse_score(std::string_view raw, PromptMode mode);

/// "User: {prompt} Assistant: {output}"
std::string format_instruction(std::string_view prompt, std::string_view output);

}  // namespace mtf::scorer
