#include "rolefuse/role.hpp"

namespace rolefuse {

namespace {
constexpr std::array<std::string_view, kNumRoles> kNames = {"hero", "villain", "victim",
                                                            "other"};
constexpr std::array<std::string_view, kNumRoles> kTagNames = {"HERO", "VILLAIN", "VICTIM",
                                                               "OTHER"};
}  // namespace

std::string_view role_name(Role r) { return kNames[index(r)]; }

std::string_view role_tag_name(Role r) { return kTagNames[index(r)]; }

std::optional<Role> parse_role(std::string_view name) {
  for (Role r : kAllRoles) {
    if (kNames[index(r)] == name) return r;
  }
  return std::nullopt;
}

std::optional<Role> parse_role_tag_name(std::string_view name) {
  for (Role r : kAllRoles) {
    if (kTagNames[index(r)] == name) return r;
  }
  return std::nullopt;
}

}  // namespace rolefuse
