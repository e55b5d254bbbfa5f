#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dmpp/common.hpp"
#include "dmpp/domain.hpp"
#include "dmpp/tensor.hpp"

namespace dmpp {

enum class Variant { Naive, Image, Text, Full };

/// RGB raster with a spatial bounding box tying pixels to coordinates.
/// Pixels are stored row-major as height x width x 3 values in [0, 1];
/// row 0 corresponds to s2 = geo_min[1] (the southern edge).
struct RasterMap {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;
  Vec2 geo_min = {0.0, 0.0};
  Vec2 geo_max = {1.0, 1.0};

  double pixel(int row, int col, int channel) const {
    return rgb[(static_cast<std::size_t>(row) * width + col) * 3 + channel];
  }
  bool georeferences(const Vec2& s) const {
    return s[0] >= geo_min[0] && s[0] <= geo_max[0] && s[1] >= geo_min[1] &&
           s[1] <= geo_max[1];
  }
};

/// One social/traffic record: active interval, location, free text.
struct EventDescription {
  double t_start = 0.0;
  double t_end = 0.0;
  Vec2 location = {0.0, 0.0};
  std::vector<std::string> words;
};

/// word -> index map with PAD=0 and UNK=1 always present.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  std::map<std::string, int> index;

  std::size_t size() const { return index.size() + 2; }
  int lookup(const std::string& word) const {
    auto it = index.find(word);
    return it == index.end() ? kUnk : it->second;
  }
};

/// Per-representative-point feature bundle fed to the network.
struct ContextSnapshot {
  Vec3 position = {0.0, 0.0, 0.0};  // normalized (tau_j, r_j)
  std::optional<nn::Tensor> image_patch;   // out_px x out_px x 3
  std::optional<std::vector<int>> token_ids;  // length N_s
};

/// Reads the patch_px x patch_px block centered at `location` (edge rows and
/// columns clamp to the raster border) and 2x2-average-pools it down to
/// out_px x out_px x 3. Requires patch_px == 2 * out_px.
nn::Tensor extract_image_patch(const RasterMap& map, const Vec2& location,
                               int patch_px, int out_px);

/// Among descriptions active at time point[0] (t_start < tau < t_end) and
/// within `radius` of the spatial location, returns the spatially closest;
/// ties break on earlier t_start, then input order. nullopt when none apply.
std::optional<EventDescription> select_description(
    const std::vector<EventDescription>& descs, const Vec3& point,
    double radius);

/// Vocabulary of the max_words most frequent words (ties broken
/// lexicographically) plus the reserved PAD/UNK entries.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t max_words);

/// First token_len words mapped to indices (unknown -> UNK), padded with PAD.
std::vector<int> encode_tokens(const Vocabulary& vocab,
                               const std::vector<std::string>& words,
                               std::size_t token_len);

struct SnapshotConfig {
  Variant variant = Variant::Naive;
  int patch_px = 20;
  int out_px = 10;
  std::size_t token_len = 5;
  double description_radius = 0.05;  // raw spatial units
};

/// One snapshot per representative point. Feature extraction runs in raw
/// coordinates (the raster georeference and description records are raw), so
/// the transform maps each normalized grid point back before lookup; the
/// stored position stays normalized. Throws ConfigError when a modality the
/// variant needs is missing.
std::vector<ContextSnapshot> build_snapshots(
    const RepPointGrid& grid, const NormalizationTransform& transform,
    const SnapshotConfig& config, const RasterMap* map,
    const std::vector<EventDescription>* descs, const Vocabulary* vocab);

inline bool variant_uses_image(Variant v) {
  return v == Variant::Image || v == Variant::Full;
}
inline bool variant_uses_text(Variant v) {
  return v == Variant::Text || v == Variant::Full;
}

}  // namespace dmpp
