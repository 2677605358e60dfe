#include "mtf/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <optional>
#include <vector>

namespace mtf::scorer {

namespace {

constexpr std::string_view kItmPrompt =
    "Please evaluate if the provided text caption accurately represents the main features and objects of the image. "
    "The caption doesn't need to detail every aspect of the image, but it should capture its primary theme. Rate the "
    "overall quality of the text caption's match to the image on a scale of 1-100, considering the criteria "
    "mentioned.";

constexpr std::string_view kOdfPrompt =
    "Please evaluate the text caption to determine if it provides detailed descriptions of objects that align with "
    "the image description. Specifically, assess if the caption sufficiently describes the color, size, position, "
    "shape, material, etc., of the objects. Afterward, rate the caption's overall accuracy in capturing object "
    "details from the image on a scale of 1-100, based on the criteria provided.";

constexpr std::string_view kCtqPrompt =
    "Please evaluate the text caption based on the following criteria: Grammatical Correctness, Diversity of "
    "Vocabulary (e.g., the range and uniqueness of words used), Fluency (e.g., smoothness and natural flow of "
    "sentences), Readability, Length, and Structure. Assign an overall quality score on a scale of 1-100.";

constexpr std::string_view kSuPrompt =
    "Please evaluate the given text caption in relation to its corresponding image description. Your goal is to "
    "determine if the text caption provides additional semantic information that isn't readily apparent just from "
    "the image itself.\n"
    "\n"
    "For example:\n"
    "\n"
    "1. If the image description mentions \"a man\" but the caption elaborates he is a \"homeless man\" or a "
    "\"businessman,\" then the caption is enriching the semantic context.\n"
    "\n"
    "2. If the caption introduces concepts like the mathematical tangent function, which require in-depth knowledge "
    "to deduce, it is imparting external semantics.\n"
    "\n"
    "3. Captions revealing specific location addresses, festival details, or other nuanced data not easy to infer "
    "from the image also provide external semantic information.\n"
    "\n"
    "4. Directly identifying specific entities in the image such as buildings, people, bird species, animal breeds, "
    "car models, engines, etc., in the caption introduces additional insights.\n"
    "\n"
    "5. Should the image act as a contextual backdrop and the caption describes elements not explicitly showcased in "
    "the image, it has semantic depth.\n"
    "\n"
    "6. Lastly, if the caption depicts relationships between the subjects in the image, which need commonsense "
    "knowledge to understand, it should be considered semantically rich.\n"
    "\n"
    "Please assess and determine the extent of semantic enrichment the caption provides over the image description. "
    "Rate the text caption's semantic depth on a scale from 1 to 100.";

constexpr std::string_view kRationalizationSuffix =
    "Please first output a single line containing the value indicating the scores. In the subsequent line, please "
    "provide a comprehensive explanation of your evaluation, avoiding any potential bias.";

constexpr std::string_view kCotSuffix =
    "Please think step by step to first output your reasons to give such a score. In the subsequent line, please "
    "output a single line containing the value indicating the scores.";

constexpr std::string_view kDenseCaptionPrompt =
    "Please generate a dense caption in 4-6 sentences for describing the image in detail as much as you can.";

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// First maximal digit run in `line`, saturated to long long.
std::optional<long long> first_integer(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && !is_digit(line[i])) ++i;
    if (i == line.size()) return std::nullopt;
    const bool negative = i > 0 && line[i - 1] == '-' && (i == 1 || !std::isalnum(static_cast<unsigned char>(line[i - 2])));
    constexpr long long kCap = std::numeric_limits<long long>::max() / 10 - 10;
    long long value = 0;
    for (; i < line.size() && is_digit(line[i]); ++i) {
        if (value < kCap) value = value * 10 + (line[i] - '0');
    }
    return negative ? -value : value;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        start = nl + 1;
    }
    return lines;
}

QualityScore checked(long long value) {
    if (value < kMinScore || value > kMaxScore) {
        throw Error(ErrorCode::OutOfRange, "score " + std::to_string(value) + " outside [0,100]", {{"value", value}});
    }
    return QualityScore(value);
}

}  // namespace

std::string_view to_string(PromptMode m) { return m == PromptMode::Rationalization ? "rationalization" : "cot"; }

PromptMode parse_prompt_mode(std::string_view s) {
    const auto k = lower(s);
    if (k == "rationalization") return PromptMode::Rationalization;
    if (k == "cot") return PromptMode::Cot;
    throw Error(ErrorCode::InvalidArgument, "unknown prompt mode '" + std::string(s) + "'");
}

std::string_view to_string(TeacherPath p) { return p == TeacherPath::Vision ? "vision" : "text_only"; }

TeacherPath parse_teacher_path(std::string_view s) {
    const auto k = lower(s);
    if (k == "vision") return TeacherPath::Vision;
    if (k == "text_only" || k == "text-only") return TeacherPath::TextOnly;
    throw Error(ErrorCode::InvalidArgument, "unknown teacher path '" + std::string(s) + "'");
}

std::string_view metric_prompt(Metric m) {
    switch (m) {
        case Metric::ITM: return kItmPrompt;
        case Metric::ODF: return kOdfPrompt;
        case Metric::CTQ: return kCtqPrompt;
        case Metric::SU: return kSuPrompt;
    }
    return {};
}

std::string_view mode_suffix(PromptMode mode) {
    return mode == PromptMode::Rationalization ? kRationalizationSuffix : kCotSuffix;
}

PromptTemplate prompt_template(Metric m, PromptMode mode) { return {m, metric_prompt(m), mode, mode_suffix(mode)}; }

std::string_view dense_caption_prompt() { return kDenseCaptionPrompt; }

std::string assemble_prompt(Metric metric, const ImageTextPair& pair, PromptMode mode, TeacherPath path) {
    if (path == TeacherPath::TextOnly && !pair.dense_caption) {
        throw Error(ErrorCode::MissingDenseCaption, "pair '" + pair.id + "' has no dense caption for the text-only path",
                    {{"id", pair.id}});
    }
    const auto tmpl = prompt_template(metric, mode);
    std::string out;
    out.reserve(tmpl.body.size() + tmpl.suffix.size() + pair.caption.size() + 64);
    out += tmpl.body;
    out += "\n\n";
    if (path == TeacherPath::TextOnly) {
        out += "Image Description: ";
        out += *pair.dense_caption;
        out += "\n\n";
    }
    out += "Caption: ";
    out += pair.caption;
    out += "\n\n";
    out += tmpl.suffix;
    return out;
}

QualityScore parse_score(std::string_view raw, PromptMode mode) {
    const auto lines = split_lines(raw);
    if (mode == PromptMode::Rationalization) {
        for (auto line : lines) {
            if (is_blank(line)) continue;
            if (auto v = first_integer(line)) return checked(*v);
            break;
        }
    } else {
        for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
            if (is_blank(*it)) continue;
            if (auto v = first_integer(*it)) return checked(*v);
        }
    }
    std::string preview(raw.substr(0, 80));
    throw Error(ErrorCode::NoScoreFound, "no integer score in generated text", {{"raw", preview}});
}

std::string format_instruction(std::string_view prompt, std::string_view output) {
    std::string out = "User: ";
    out += prompt;
    out += " Assistant: ";
    out += output;
    return out;
}

}  // namespace mtf::scorer
