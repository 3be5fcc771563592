#pragma once

#include <vector>

namespace vlsa {

/// Masked positions per modality, each sorted ascending and relative to the
/// start of that modality's segment. Video indices run over all frames
/// (frame * patches_per_frame + patch).
struct MaskPlan {
  std::vector<int> video;
  std::vector<int> text;
  std::vector<int> audio;

  bool empty() const { return video.empty() && text.empty() && audio.empty(); }
  bool operator==(const MaskPlan&) const = default;
};

}  // namespace vlsa
