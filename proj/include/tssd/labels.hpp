#pragma once

#include <string>
#include <string_view>

namespace tssd {

/// Class index used by the networks: 0 = spoof, 1 = bona fide.
enum class Label : int { spoof = 0, bonafide = 1, unknown = -1 };

inline std::string_view to_string(Label label) {
  switch (label) {
    case Label::spoof: return "spoof";
    case Label::bonafide: return "bonafide";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

inline int class_index(Label label) { return static_cast<int>(label); }

}  // namespace tssd
