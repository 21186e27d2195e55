#include "alignkit/data.h"

#include <cctype>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace alignkit {

namespace {

constexpr std::string_view kAssistantMarker = "\n\nAssistant:";

// Splits a transcript at its LAST assistant marker. Multi-turn dialogues keep
// every earlier turn inside the prompt.
std::pair<std::string, std::string> split_transcript(const std::string& transcript,
                                                     const char* field) {
    size_t pos = transcript.rfind(kAssistantMarker);
    if (pos == std::string::npos) {
        throw RecordError(RecordError::Kind::Marker,
                          std::string("no \"\\n\\nAssistant:\" marker in field \"") + field + "\"");
    }
    size_t split = pos + kAssistantMarker.size();
    return {transcript.substr(0, split), transcript.substr(split)};
}

std::string require_string_field(const nlohmann::json& obj, const char* field) {
    auto it = obj.find(field);
    if (it == obj.end()) {
        throw RecordError(RecordError::Kind::Schema,
                          std::string("missing field \"") + field + "\"");
    }
    if (!it->is_string()) {
        throw RecordError(RecordError::Kind::Schema,
                          std::string("field \"") + field + "\" is not a string");
    }
    return it->get<std::string>();
}

char ascii_lower(char c) {
    unsigned char u = static_cast<unsigned char>(c);
    return (u >= 'A' && u <= 'Z') ? static_cast<char>(u - 'A' + 'a') : c;
}

bool ascii_alpha(char c) {
    unsigned char u = static_cast<unsigned char>(c);
    return (u >= 'A' && u <= 'Z') || (u >= 'a' && u <= 'z');
}

bool matches_any_keyword(const std::string& text, const std::vector<std::string>& keywords) {
    for (const auto& keyword : keywords) {
        if (contains_whole_word(text, keyword)) return true;
    }
    return false;
}

}  // namespace

PreferenceRecord parse_hh_record(const std::string& json_line, int64_t source_index) {
    nlohmann::json obj = nlohmann::json::parse(json_line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
        throw RecordError(RecordError::Kind::Schema, "line is not a JSON object");
    }

    std::string chosen_transcript = require_string_field(obj, "chosen");
    std::string rejected_transcript = require_string_field(obj, "rejected");

    auto [chosen_prompt, chosen_response] = split_transcript(chosen_transcript, "chosen");
    auto [rejected_prompt, rejected_response] = split_transcript(rejected_transcript, "rejected");
    if (chosen_prompt != rejected_prompt) {
        throw RecordError(RecordError::Kind::Consistency,
                          "chosen and rejected transcripts have different prompts");
    }

    PreferenceRecord record;
    record.prompt = std::move(chosen_prompt);
    record.chosen = std::move(chosen_response);
    record.rejected = std::move(rejected_response);
    record.source_index = source_index;
    return record;
}

std::pair<std::vector<PreferenceRecord>, LoadStats> load_jsonl(const std::string& path,
                                                               const std::string& split) {
    namespace fs = std::filesystem;
    fs::path file_path(path);
    if (fs::is_directory(file_path)) {
        if (split.empty()) {
            throw ContractError("path \"" + path + "\" is a directory; a split name is required");
        }
        file_path /= split + ".jsonl";
    }

    std::ifstream in(file_path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open \"" + file_path.string() + "\" for reading");
    }

    std::vector<PreferenceRecord> records;
    LoadStats stats;
    std::string line;
    int64_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        try {
            records.push_back(parse_hh_record(line, line_number));
            ++stats.loaded;
        } catch (const RecordError& e) {
            ++stats.skipped;
            ++stats.reasons[e.kind_name()];
        }
    }
    return {std::move(records), std::move(stats)};
}

bool contains_whole_word(const std::string& text, const std::string& word) {
    if (word.empty() || word.size() > text.size()) return false;
    for (size_t i = 0; i + word.size() <= text.size(); ++i) {
        bool match = true;
        for (size_t j = 0; j < word.size(); ++j) {
            if (ascii_lower(text[i + j]) != ascii_lower(word[j])) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        bool left_ok = i == 0 || !ascii_alpha(text[i - 1]);
        bool right_ok = i + word.size() == text.size() || !ascii_alpha(text[i + word.size()]);
        if (left_ok && right_ok) return true;
    }
    return false;
}

std::vector<EvalPrompt> filter_harmful_prompts(const std::vector<PreferenceRecord>& records,
                                               const std::vector<std::string>& keywords) {
    if (keywords.empty()) {
        throw ContractError("filter_harmful_prompts requires at least one keyword");
    }
    std::vector<EvalPrompt> prompts;
    for (const auto& record : records) {
        if (matches_any_keyword(record.prompt, keywords)) {
            prompts.push_back({record.prompt, "harmless-eval", record.source_index});
        }
    }
    return prompts;
}

std::vector<EvalPrompt> select_benign_prompts(const std::vector<PreferenceRecord>& records,
                                              const std::vector<std::string>& keywords) {
    if (keywords.empty()) {
        throw ContractError("select_benign_prompts requires at least one keyword");
    }
    std::vector<EvalPrompt> prompts;
    for (const auto& record : records) {
        if (!matches_any_keyword(record.prompt, keywords)) {
            prompts.push_back({record.prompt, "helpful-eval", record.source_index});
        }
    }
    return prompts;
}

}  // namespace alignkit
