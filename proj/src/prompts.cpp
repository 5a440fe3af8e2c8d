#include "planvl/prompts.hpp"

#include <filesystem>

#include "planvl/store.hpp"

namespace planvl::prompts {

const char* const kFilterImage =
    R"(You are an urban planning expert. Please determine if the image below is a "complete and independent urban or territorial spatial planning map."

Please first provide a brief description of the image, then determine if it is a planning map.

Judgment criteria:
1. It must be a complete planning map, not a part or screenshot of a planning map
2. The planning map should be the main content of the image, occupying the main area of the image
3. It should not contain many page elements unrelated to the planning map (such as large text descriptions, tables, etc.)
4. It should have typical features of planning maps:
   - Clear visual structure of spatial layout or land zoning
   - Essential planning map elements such as legend, scale, direction indicator, map title, planning unit, etc.

Please note:
- If the image is a scan of an entire document page, and the planning map is only part of the page, it should be determined as not meeting the requirements
- If the image contains multiple planning maps, it should also be determined as not meeting the requirements
- If the image content is blurry and difficult to recognize the planning content, it should be determined as not meeting the requirements

After analyzing the image, please output in the following format:

Analysis: [Provide your analysis here]
Determination: If it is a complete and independent planning map, please output: \boxed{1}
If it is not a complete and independent planning map, please output: \boxed{0})";

const char* const kEvaluationTemplate =
    R"(Please evaluate the following answer based on the question, the list of scoring points, and the image content.

Question: {question}

Scoring Points List: {critical_points_text}

Answer to be Evaluated: {summary}

Scoring Criteria:
Please check whether the model's answer covers each scoring point:
- For each scoring point, if the model's answer includes relevant content, give 1 point.
- If the scoring point is not covered or is incorrectly described, give 0 points.
- The scoring points are mutually exclusive, and each point can earn a maximum of 1 point.

Please score according to the following format:
1. Scoring Point 1: [0/1] – Briefly explain whether this point is covered and provide reasoning
2. Scoring Point 2: [0/1] – Briefly explain whether this point is covered and provide reasoning
...

Final Score: X/Y (X is the total score, Y is the total number of scoring points))";

const char* const kIntentTagger =
    R"(You are an intent tagger for urban-planning questions. Identify the semantic components underlying the query below and reply with ONLY a JSON array of short snake_case intent labels (for example ["spatial_analysis", "location_identification"]).

Query: {instruction})";

const char* const kSynthesisTemplate =
    R"(You are an urban planning expert writing new questions about the attached planning map.

Below are demonstration pairs of (task type, exemplar question) drawn from expert seed data:
{demonstrations}

{diversification}

Write {count} new questions about THIS map. Output them as a numbered list, one question per line:
1. <question>
2. <question>
...)";

const char* const kDiversificationDefault =
    R"(Diversification requirements: cover varied task types from the demonstrations, progress from simpler perception questions to complex multi-step reasoning, and avoid repeating the wording of any exemplar.)";

const char* const kCptExtractTemplate =
    R"(Answer the question below about the attached planning map by first listing the atomic factual claims your answer rests on.

Question: {instruction}

Output one claim per line in exactly this structured format, and after each claim output its key noun phrase (the shortest map element name the claim is about):
Critical Point 1: <claim>
Key Phrase 1: <key noun phrase>
Critical Point 2: <claim>
Key Phrase 2: <key noun phrase>
...)";

const char* const kCptVerifyTemplate =
    R"(You are verifying a single factual claim against the attached planning map.

Original question: {instruction}
Claim: "{claim}"

Look only at the map. Is the claim supported?
Reply in exactly this format:
VERDICT: YES or VERDICT: NO
CONFIDENCE: <a number between 0 and 1>)";

const char* const kCptCorrectTemplate =
    R"(A claim about the attached planning map failed verification.

Failed claim: "{claim}"
Verification question that failed: {query}

Look at the map and write the corrected claim. Reply with ONLY the corrected claim text on a single line.)";

const char* const kCptReconstructTemplate =
    R"(Compose a fluent, professional answer to the question below using STRICTLY and ONLY the verified points listed. Every point must be represented in the answer; do not add new facts.

Question: {instruction}

Verified points:
{points})";

const char* const kCptReconstructRetryNote =
    "\n\nIMPORTANT: your previous draft omitted some points. Mention every key phrase verbatim.";

const char* const kRewriteTemplate =
    R"(Rewrite the draft answer below in the communication style of a professional urban planner. Preserve every factual statement; change only tone, structure, and wording.

Style exemplars:
{exemplars}

Question: {instruction}

Draft answer:
{response}

Reply with ONLY the rewritten answer.)";

std::string substitute(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const std::string name(tmpl.substr(i + 1, close - i - 1));
        auto it = slots.find(name);
        if (it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i];
    ++i;
  }
  return out;
}

std::string load_template_or(const std::string& path, const char* fallback) {
  if (path.empty()) return fallback;
  if (!std::filesystem::exists(path)) {
    throw IoError("template file does not exist: " + path);
  }
  return read_file(path);
}

}  // namespace planvl::prompts
