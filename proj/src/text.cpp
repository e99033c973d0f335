#include "amem/text.hpp"

namespace amem {
namespace {

bool is_token_char(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

char lower(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

}  // namespace

std::vector<std::string> alnum_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (is_token_char(c)) {
            current.push_back(lower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

std::string slugify(std::string_view text) {
    std::string out;
    bool pending_sep = false;
    for (unsigned char c : text) {
        if (is_token_char(c)) {
            if (pending_sep && !out.empty()) {
                out.push_back('_');
            }
            pending_sep = false;
            out.push_back(lower(c));
        } else {
            pending_sep = true;
        }
    }
    return out;
}

}  // namespace amem
