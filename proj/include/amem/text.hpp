#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace amem {

// Lowercased maximal runs of ASCII letters/digits. Bytes >= 0x80 count as
// token characters so UTF-8 words stay whole; everything else separates.
std::vector<std::string> alnum_tokens(std::string_view text);

// Lowercase ASCII; runs of anything else collapse to one '_', trimmed.
// "Action & Adventure" -> "action_adventure".
std::string slugify(std::string_view text);

}  // namespace amem
