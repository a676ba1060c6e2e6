#pragma once

#include <array>
#include <string_view>
#include <vector>

namespace derail {

enum class Channel { text = 0, user = 1, score = 2 };

inline constexpr std::array<Channel, 3> kAllChannels{Channel::text, Channel::user, Channel::score};

std::string_view to_string(Channel c);
// Single-letter tag used in parameter names and reports: t, u, s.
char channel_tag(Channel c);

enum class Variant { T, TU, TS, TSU };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

// Active channels in canonical order (text first).
std::vector<Channel> channels_of(Variant v);
bool uses(Variant v, Channel c);

}  // namespace derail
