#include "alignkit/tokenizer.h"

namespace alignkit {

std::vector<int> tokenize(const std::string& text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (char c : text) {
        ids.push_back(static_cast<int>(static_cast<unsigned char>(c)));
    }
    return ids;
}

std::string detokenize(const std::vector<int>& ids) {
    std::string text;
    text.reserve(ids.size());
    for (int id : ids) {
        if (id >= 0 && id < 256) {
            text.push_back(static_cast<char>(static_cast<unsigned char>(id)));
        }
    }
    return text;
}

}  // namespace alignkit
