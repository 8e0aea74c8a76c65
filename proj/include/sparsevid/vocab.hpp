#pragma once

#include <string>
#include <vector>

namespace sparsevid {

// Closed vocabulary of scene-descriptor tokens. Token 0 is the null token;
// an empty prompt maps to {kNullToken} and is the classifier-free-guidance
// unconditional embedding.
inline constexpr int kNullToken = 0;

const std::vector<std::string>& vocabulary();
int vocab_size();

// Whitespace tokenization against the fixed vocabulary.
// Unknown word -> ArgumentError. Empty prompt -> {kNullToken}.
std::vector<int> tokenize(const std::string& prompt);

std::string detokenize(const std::vector<int>& tokens);

}  // namespace sparsevid
