#include "derail/channels.hpp"

#include <string>

#include "derail/error.hpp"

namespace derail {

std::string_view to_string(Channel c) {
  switch (c) {
    case Channel::text: return "text";
    case Channel::user: return "user";
    case Channel::score: return "score";
  }
  return "text";
}

char channel_tag(Channel c) {
  switch (c) {
    case Channel::text: return 't';
    case Channel::user: return 'u';
    case Channel::score: return 's';
  }
  return 't';
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::T: return "T";
    case Variant::TU: return "TU";
    case Variant::TS: return "TS";
    case Variant::TSU: return "TSU";
  }
  return "T";
}

Variant variant_from_string(std::string_view s) {
  if (s.starts_with("FGCN-")) s.remove_prefix(5);
  if (s.ends_with("+")) s.remove_suffix(1);
  if (s == "T") return Variant::T;
  if (s == "TU") return Variant::TU;
  if (s == "TS") return Variant::TS;
  if (s == "TSU") return Variant::TSU;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected T, TU, TS or TSU)");
}

std::vector<Channel> channels_of(Variant v) {
  switch (v) {
    case Variant::T: return {Channel::text};
    case Variant::TU: return {Channel::text, Channel::user};
    case Variant::TS: return {Channel::text, Channel::score};
    case Variant::TSU: return {Channel::text, Channel::user, Channel::score};
  }
  return {Channel::text};
}

bool uses(Variant v, Channel c) {
  for (Channel x : channels_of(v)) {
    if (x == c) return true;
  }
  return false;
}

}  // namespace derail
