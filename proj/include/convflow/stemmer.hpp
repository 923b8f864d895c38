#pragma once

#include <string>
#include <string_view>

namespace convflow::text {

/// Porter (1980) suffix-stripping stemmer for lowercase English words.
/// Tokens containing anything but a-z are returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace convflow::text
