#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace resdiv {

// Kind of module that produced a residual-stream contribution.
enum class Role { kEmbedding = 0, kAttention = 1, kMlp = 2 };

inline constexpr std::array<Role, 3> kAllRoles = {Role::kEmbedding, Role::kAttention,
                                                  Role::kMlp};
inline constexpr std::size_t kNumRoles = kAllRoles.size();

constexpr std::string_view role_name(Role role) {
  switch (role) {
    case Role::kEmbedding:
      return "emb";
    case Role::kAttention:
      return "attn";
    case Role::kMlp:
      return "mlp";
  }
  return "?";
}

constexpr std::optional<Role> parse_role(std::string_view name) {
  for (Role r : kAllRoles) {
    if (role_name(r) == name) return r;
  }
  return std::nullopt;
}

constexpr std::size_t role_index(Role role) { return static_cast<std::size_t>(role); }

}  // namespace resdiv
