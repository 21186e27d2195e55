#pragma once

#include <string>
#include <vector>

namespace alignkit {

// Byte-level tokenizer: every UTF-8 byte maps to its own id, so no vocabulary
// has to be learned and round trips are exact.
inline constexpr int kPadId = 256;
inline constexpr int kBosId = 257;
inline constexpr int kEosId = 258;
inline constexpr int kVocabSize = 259;

std::vector<int> tokenize(const std::string& text);

/// Inverse of tokenize; ids outside the byte range (specials) are dropped.
std::string detokenize(const std::vector<int>& ids);

}  // namespace alignkit
