#pragma once

#include <map>
#include <string>
#include <string_view>

namespace planvl::prompts {

// Stage-1 image filter prompt (operating text; replies end in \boxed{1} or \boxed{0}).
extern const char* const kFilterImage;

// Judge prompt template; slots: {question}, {critical_points_text}, {summary}.
extern const char* const kEvaluationTemplate;

// Intent tagger; replies with a JSON array of labels.
extern const char* const kIntentTagger;

// Instruction generator; slots: {demonstrations}, {diversification}, {count}.
extern const char* const kSynthesisTemplate;

// Default diversification text (phi_div); overridable via a template file.
extern const char* const kDiversificationDefault;

// CPT stage prompts.
extern const char* const kCptExtractTemplate;      // slots: {instruction}
extern const char* const kCptVerifyTemplate;       // slots: {instruction}, {claim}
extern const char* const kCptCorrectTemplate;      // slots: {claim}, {query}
extern const char* const kCptReconstructTemplate;  // slots: {instruction}, {points}
extern const char* const kCptReconstructRetryNote;

// Style rewriter; slots: {exemplars}, {instruction}, {response}.
extern const char* const kRewriteTemplate;

// Replaces every "{name}" whose name is a key in `slots`; unknown braces are
// left untouched (templates legitimately contain literal brackets).
std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& slots);

// Reads a template file if path is nonempty, else returns the default.
std::string load_template_or(const std::string& path, const char* fallback);

}  // namespace planvl::prompts
