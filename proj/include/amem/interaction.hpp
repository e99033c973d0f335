#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace amem {

struct Interaction {
    std::string item_id;
    std::string title;
    std::string category;
    std::int64_t timestamp = 0;
    bool operator==(const Interaction&) const = default;
};

// Interactions of one user, ascending timestamp (ties in file order).
struct UserHistory {
    std::string user_id;
    std::vector<Interaction> items;

    std::size_t size() const noexcept { return items.size(); }
    bool operator==(const UserHistory&) const = default;
};

struct ItemInfo {
    std::string item_id;
    std::string title;
    std::string category;
    bool operator==(const ItemInfo&) const = default;
};

}  // namespace amem
