#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dmpp/context.hpp"
#include "dmpp/eval.hpp"
#include "dmpp/model.hpp"
#include "dmpp/train.hpp"

namespace dmpp {

/// Complete declarative description of a run, mirrored by the JSON config
/// file field for field.
struct RunConfig {
  SpatioTemporalDomain domain;  // raw units
  ModelConfig model;
  TrainConfig training;
  double val_fraction = 0.125;  // tail share of the training window
  bool warm_start_output_bias = true;
  std::size_t vocab_max_words = 200;
  std::string events_path;
  std::string raster_path;
  std::string descriptions_path;
  double description_radius = 0.05;  // raw spatial units
  std::uint64_t seed = 0;
  // Synthetic ground truth: explicit weights win over the generated pattern.
  std::vector<double> synth_weights;
  double synth_target_count = 2000.0;
};

RunConfig load_run_config(const std::string& path);

/// Lowercases and splits on non-alphanumeric characters.
std::vector<std::string> tokenize(const std::string& text);

// Events: CSV with header "t,s1,s2", one event per line, values parsed
// strictly (non-finite rejected), output sorted by time (stable).
std::vector<Event> load_events_csv(const std::string& path);
void save_events_csv(const std::string& path, std::span<const Event> events);

// Raster: plain PPM (P3) plus a sidecar file <path>.geo holding one line
// "geo: s1_min s2_min s1_max s2_max".
RasterMap load_raster(const std::string& path);
void save_raster(const std::string& path, const RasterMap& map);

// Descriptions: CSV with header "t_start,t_end,s1,s2,text"; the text field
// may be double-quoted with embedded commas and "" escapes.
std::vector<EventDescription> load_descriptions(const std::string& path);

/// Checkpoint contents before a model is rebuilt around them.
struct LoadedCheckpoint {
  int format_version = 0;
  RunConfig config;
  std::vector<std::pair<std::string, nn::Tensor>> params;
  std::vector<EpochRecord> history;
};

/// Structured JSON with 64-bit values hex-encoded, so a round trip restores
/// every parameter bit for bit.
void save_checkpoint(const std::string& path, const DmppModel& model,
                     const RunConfig& config,
                     const std::vector<EpochRecord>& history);
LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copies checkpoint tensors into the model by name. Throws ConfigError on a
/// variant mismatch or any missing/extra/misshapen tensor.
void apply_checkpoint(DmppModel& model, const RunConfig& run_config,
                      const LoadedCheckpoint& checkpoint);

/// Time-based split of normalized events: train up to the validation
/// boundary, validation up to train_end, test after. Regions tile the
/// domain accordingly.
struct EventSplit {
  std::vector<Event> train;
  std::vector<Event> val;
  std::vector<Event> test;
  Box train_region;
  Box val_region;
  Box test_region;
  double val_start = 0.0;
};
EventSplit split_events(std::span<const Event> normalized_events,
                        const SpatioTemporalDomain& norm_domain,
                        double val_fraction);

/// Model plus data ready for a command: context files loaded per the
/// variant, events (optionally) loaded, normalized and split, output bias
/// warm-started from the training split when configured.
struct Workspace {
  RunConfig config;
  DmppModel model;
  EventSplit split;
  std::size_t total_events = 0;
};
Workspace assemble_workspace(const RunConfig& config, bool need_events,
                             const std::string& events_override = {});

struct SynthResult {
  std::vector<Event> events_raw;
  std::vector<double> weights;
  double expected_count = 0.0;
};

/// Ground-truth mixture over the configured grid, sampled by thinning across
/// the full domain. Throws ConfigError on a weight-count mismatch or a
/// nonpositive weight.
SynthResult synth_generate(const RunConfig& config,
                           std::span<const double> weights, std::uint64_t seed);

/// The weight pattern `synth` uses when the config gives none: two smooth
/// spatial bumps over a floor, constant in time, scaled so the expected
/// event count hits config.synth_target_count.
std::vector<double> default_synth_weights(const RunConfig& config);

/// Random patches/tokens for self-contained gradient checks of the image and
/// text paths (no data files involved).
std::vector<ContextSnapshot> synthetic_snapshots(const RepPointGrid& grid,
                                                 const nn::NetworkConfig& net,
                                                 std::uint64_t seed);

}  // namespace dmpp
