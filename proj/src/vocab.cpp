#include "sparsevid/vocab.hpp"

#include <sstream>

#include "sparsevid/errors.hpp"

namespace sparsevid {

const std::vector<std::string>& vocabulary() {
    static const std::vector<std::string> words = {
        "<null>",
        // colors
        "red", "green", "blue", "yellow", "white", "magenta",
        // shapes
        "circle", "square",
        // motion
        "moves", "still",
        "left", "right", "up", "down",
        // glue
        "and",
    };
    return words;
}

int vocab_size() { return static_cast<int>(vocabulary().size()); }

std::vector<int> tokenize(const std::string& prompt) {
    std::vector<int> ids;
    std::istringstream iss(prompt);
    std::string word;
    const auto& words = vocabulary();
    while (iss >> word) {
        int id = -1;
        for (size_t i = 0; i < words.size(); ++i)
            if (words[i] == word) {
                id = static_cast<int>(i);
                break;
            }
        if (id < 0) throw ArgumentError("tokenize: unknown word '" + word + "'");
        ids.push_back(id);
    }
    if (ids.empty()) ids.push_back(kNullToken);
    return ids;
}

std::string detokenize(const std::vector<int>& tokens) {
    std::string out;
    const auto& words = vocabulary();
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] < 0 || tokens[i] >= vocab_size())
            throw ArgumentError("detokenize: token id out of range");
        if (i) out += ' ';
        out += words[tokens[i]];
    }
    return out;
}

}  // namespace sparsevid
