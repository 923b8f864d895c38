#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace convflow::text {

std::string trim(std::string_view s);

/// Trims and collapses every whitespace run to a single space.
std::string collapse_whitespace(std::string_view s);

/// Joins fragments with single spaces after collapsing each.
std::string join_fragments(std::span<const std::string> fragments);

/// Replaces typographic UTF-8 punctuation (ellipsis, curly quotes, dashes)
/// with ASCII equivalents. Other non-ASCII bytes pass through.
std::string asciify_punctuation(std::string_view s);

/// Lowercase word tokens. Letters, digits and non-ASCII bytes are word
/// characters; apostrophes and hyphens are kept only inside a word.
std::vector<std::string> tokenize(std::string_view s);

/// True when the text ends in '.', '!' or '?' that is not part of an
/// ellipsis ("..." or U+2026). Trailing quotes and brackets are ignored.
bool ends_with_terminal(std::string_view s);

bool ends_with_ellipsis(std::string_view s);

std::string to_lower_ascii(std::string_view s);

}  // namespace convflow::text
