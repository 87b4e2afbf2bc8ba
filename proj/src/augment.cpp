#include "dssl/augment.hpp"

namespace dssl {

std::string to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::kNone:
      return "none";
    case AugmentKind::kWeak:
      return "weak";
    case AugmentKind::kStrong:
      return "strong";
  }
  return "none";
}

AugmentKind augment_kind_from_string(const std::string& s) {
  if (s == "none") return AugmentKind::kNone;
  if (s == "weak") return AugmentKind::kWeak;
  if (s == "strong") return AugmentKind::kStrong;
  throw ArgumentError("unknown augmentation kind '" + s + "' (expected none|weak|strong)");
}

void AugmentSpec::validate() const {
  if (!(scale_range.first > 0.0 && scale_range.first <= scale_range.second)) {
    throw ArgumentError("scale_range: need 0 < lo <= hi");
  }
  if (!(crop_scale_range.first > 0.0 && crop_scale_range.first <= crop_scale_range.second &&
        crop_scale_range.second <= 1.0)) {
    throw ArgumentError("crop_scale_range: need 0 < lo <= hi <= 1");
  }
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) throw ArgumentError("hflip_prob: need [0, 1]");
  if (!(rotation_degrees >= 0.0 && rotation_degrees <= 45.0)) {
    throw ArgumentError("rotation_degrees: need [0, 45]");
  }
}

}  // namespace dssl
