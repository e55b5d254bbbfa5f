#include "dmpp/context.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace dmpp {

nn::Tensor extract_image_patch(const RasterMap& map, const Vec2& location,
                               int patch_px, int out_px) {
  if (patch_px != 2 * out_px)
    throw ConfigError("extract_image_patch: patch_px must be 2 * out_px");
  if (!map.georeferences(location))
    throw DataError("extract_image_patch: location outside the raster georeference");

  // Pixel column/row containing the location; the patch spans patch_px
  // pixels around it and clamps at the raster border.
  const double fx = (location[0] - map.geo_min[0]) /
                    (map.geo_max[0] - map.geo_min[0]);
  const double fy = (location[1] - map.geo_min[1]) /
                    (map.geo_max[1] - map.geo_min[1]);
  const int cx = std::min(map.width - 1, static_cast<int>(fx * map.width));
  const int cy = std::min(map.height - 1, static_cast<int>(fy * map.height));
  const int x0 = cx - patch_px / 2;
  const int y0 = cy - patch_px / 2;

  auto clamped = [&](int row, int col, int ch) {
    row = std::clamp(row, 0, map.height - 1);
    col = std::clamp(col, 0, map.width - 1);
    return map.pixel(row, col, ch);
  };

  nn::Tensor out({static_cast<std::size_t>(out_px),
                  static_cast<std::size_t>(out_px), 3});
  for (int oy = 0; oy < out_px; ++oy) {
    for (int ox = 0; ox < out_px; ++ox) {
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            sum += clamped(y0 + 2 * oy + dy, x0 + 2 * ox + dx, c);
        out[(static_cast<std::size_t>(oy) * out_px + ox) * 3 + c] = 0.25 * sum;
      }
    }
  }
  return out;
}

std::optional<EventDescription> select_description(
    const std::vector<EventDescription>& descs, const Vec3& point,
    double radius) {
  if (!(radius > 0.0)) throw ConfigError("select_description: radius must be positive");
  const double tau = point[0];
  const Vec2 r = {point[1], point[2]};

  const EventDescription* best = nullptr;
  double best_dist = 0.0;
  for (const EventDescription& d : descs) {
    if (!(d.t_start < tau && tau < d.t_end)) continue;
    const double dx = d.location[0] - r[0];
    const double dy = d.location[1] - r[1];
    const double dist = std::sqrt(dx * dx + dy * dy);
    if (!(dist < radius)) continue;
    if (best == nullptr || dist < best_dist ||
        (dist == best_dist && d.t_start < best->t_start)) {
      best = &d;
      best_dist = dist;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t max_words) {
  if (max_words < 1) throw ConfigError("build_vocabulary: max_words must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& sentence : corpus)
    for (const auto& word : sentence) ++counts[word];

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_words) ranked.resize(max_words);

  Vocabulary vocab;
  int next = 2;  // 0 and 1 are PAD and UNK
  for (const auto& [word, count] : ranked) vocab.index.emplace(word, next++);
  return vocab;
}

std::vector<int> encode_tokens(const Vocabulary& vocab,
                               const std::vector<std::string>& words,
                               std::size_t token_len) {
  if (token_len < 1) throw ConfigError("encode_tokens: token_len must be >= 1");
  std::vector<int> ids(token_len, Vocabulary::kPad);
  const std::size_t n = std::min(token_len, words.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.lookup(words[i]);
  return ids;
}

std::vector<ContextSnapshot> build_snapshots(
    const RepPointGrid& grid, const NormalizationTransform& transform,
    const SnapshotConfig& config, const RasterMap* map,
    const std::vector<EventDescription>* descs, const Vocabulary* vocab) {
  const bool want_image = variant_uses_image(config.variant);
  const bool want_text = variant_uses_text(config.variant);
  if (want_image && map == nullptr)
    throw ConfigError("build_snapshots: variant needs a raster map");
  if (want_text && (descs == nullptr || vocab == nullptr))
    throw ConfigError("build_snapshots: variant needs descriptions and a vocabulary");

  std::vector<ContextSnapshot> snapshots(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    ContextSnapshot& snap = snapshots[j];
    snap.position = grid.points[j];
    const Vec3 raw = transform.to_raw(grid.points[j]);
    if (want_image) {
      snap.image_patch = extract_image_patch(*map, {raw[1], raw[2]},
                                             config.patch_px, config.out_px);
    }
    if (want_text) {
      const auto chosen =
          select_description(*descs, raw, config.description_radius);
      snap.token_ids = encode_tokens(
          *vocab, chosen ? chosen->words : std::vector<std::string>{},
          config.token_len);
    }
  }
  return snapshots;
}

}  // namespace dmpp
