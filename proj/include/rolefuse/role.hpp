#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace rolefuse {

/// Entity role in a meme. The enumerator order is the reporting order and
/// the tie-break order everywhere.
enum class Role : unsigned char { kHero = 0, kVillain = 1, kVictim = 2, kOther = 3 };

inline constexpr std::size_t kNumRoles = 4;
inline constexpr std::array<Role, kNumRoles> kAllRoles = {Role::kHero, Role::kVillain,
                                                          Role::kVictim, Role::kOther};

constexpr std::size_t index(Role r) { return static_cast<std::size_t>(r); }

/// Lowercase name used in dataset files ("hero", "villain", ...).
std::string_view role_name(Role r);

/// Uppercase name used inside BIO tags ("HERO", ...).
std::string_view role_tag_name(Role r);

std::optional<Role> parse_role(std::string_view name);

std::optional<Role> parse_role_tag_name(std::string_view name);

}  // namespace rolefuse
