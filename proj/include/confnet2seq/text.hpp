#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace confnet2seq::text {

// ASCII case folding; bytes >= 0x80 pass through untouched so UTF-8
// sequences survive.
std::string fold_case(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

// Lowercase then whitespace-split. Punctuation stays attached to its word.
std::vector<std::string> tokenize(std::string_view s);

std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

}  // namespace confnet2seq::text
