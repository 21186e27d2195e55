#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "alignkit/errors.h"

namespace alignkit {

/// One preference pair. prompt ends with the dialogue marker
/// "\n\nAssistant:" so responses can be appended verbatim.
struct PreferenceRecord {
    std::string prompt;
    std::string chosen;    // preferred response (no leading marker)
    std::string rejected;  // dispreferred response
    int64_t source_index = 0;  // 1-based line number in the source file
};

/// A prompt selected for evaluation.
struct EvalPrompt {
    std::string text;
    std::string category;  // "harmless-eval" or "helpful-eval"
    int64_t source_index = 0;
};

/// Skip bookkeeping for load_jsonl. reasons maps RecordError kind names
/// ("schema", "marker", "consistency") to counts; unparseable JSON counts
/// as "schema".
struct LoadStats {
    int64_t loaded = 0;
    int64_t skipped = 0;
    std::map<std::string, int64_t> reasons;
};

/// Parses one JSONL line of the {"chosen": ..., "rejected": ...} transcript
/// format. Both transcripts are split at their own last "\n\nAssistant:"
/// marker; the text before it (marker included) is the prompt and must agree
/// between the two transcripts.
///
/// Throws RecordError: Kind::Schema for invalid JSON or missing/non-string
/// fields, Kind::Marker when a transcript has no marker, Kind::Consistency
/// when the two prompts differ.
PreferenceRecord parse_hh_record(const std::string& json_line, int64_t source_index = 0);

/// Loads a JSONL preference file. If path is a directory, reads
/// <path>/<split>.jsonl. Bad lines are skipped and tallied in LoadStats;
/// record order and 1-based source_index follow the file.
/// Throws IoError when the file cannot be read, ContractError when path is a
/// directory and split is empty.
std::pair<std::vector<PreferenceRecord>, LoadStats> load_jsonl(
    const std::string& path, const std::string& split = "");

/// True when word occurs in text delimited by non-alphabetic characters
/// (or string edges). Matching is case-insensitive over ASCII letters.
bool contains_whole_word(const std::string& text, const std::string& word);

/// Prompts whose text contains at least one keyword as a whole word, tagged
/// "harmless-eval". Order follows records. Throws ContractError when
/// keywords is empty.
std::vector<EvalPrompt> filter_harmful_prompts(
    const std::vector<PreferenceRecord>& records,
    const std::vector<std::string>& keywords);

/// Complement of filter_harmful_prompts: prompts matching no keyword,
/// tagged "helpful-eval".
std::vector<EvalPrompt> select_benign_prompts(
    const std::vector<PreferenceRecord>& records,
    const std::vector<std::string>& keywords);

/// Order-preserving random subset of n items (selection sampling).
/// Throws SizeError when n exceeds items.size().
template <typename T>
std::vector<T> sample_subset(const std::vector<T>& items, size_t n, uint64_t seed);

}  // namespace alignkit

#include "alignkit/rng.h"

namespace alignkit {

template <typename T>
std::vector<T> sample_subset(const std::vector<T>& items, size_t n, uint64_t seed) {
    if (n > items.size()) {
        throw SizeError("cannot sample " + std::to_string(n) + " items from a population of " +
                        std::to_string(items.size()));
    }
    Rng rng(seed);
    std::vector<T> out;
    out.reserve(n);
    size_t remaining = n;
    for (size_t i = 0; i < items.size() && remaining > 0; ++i) {
        if (rng.below(items.size() - i) < remaining) {
            out.push_back(items[i]);
            --remaining;
        }
    }
    return out;
}

}  // namespace alignkit
