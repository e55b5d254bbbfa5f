#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dmpp/model.hpp"

namespace dmpp {

struct TrainConfig {
  double learning_rate = 0.01;
  double adam_beta1 = 0.01;
  double adam_beta2 = 0.9;
  double adam_epsilon = 1e-8;
  double l2_lambda = 0.001;
  std::size_t batch_size = 16;
  int max_epochs = 50;
  int patience = 10;  // epochs without validation improvement before stopping
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adam moments, one slot per parameter tensor.
struct AdamState {
  struct Slot {
    nn::Tensor m;
    nn::Tensor v;
  };
  std::vector<Slot> slots;
  long step = 0;

  static AdamState for_store(const nn::ParameterStore& store);
};

/// One ascent step from the gradients currently held in the store. The L2
/// penalty gradient 2*lambda*theta is subtracted first, for weight tensors
/// only (never biases or kernel/log_sigma). Throws NumericalError naming the
/// parameter on a non-finite gradient.
void adam_step(AdamState& state, nn::ParameterStore& store,
               const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_objective = 0.0;
  double val_loglike_per_event = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val = 0.0;
};

/// Mini-batch Adam ascent on the exact log-likelihood over train_region.
/// Each epoch shuffles the events with the seeded RNG, then scores val_events
/// with the window-restricted log-likelihood per event over val_region (the
/// same restriction the test metric uses). The parameters achieving the best
/// validation score are restored at return. Progress lines
/// "epoch,train_objective,val_loglike_per_event" go to `progress` when set.
/// When val_events is empty the per-event train objective stands in for the
/// validation score.
TrainResult train(DmppModel& model, std::span<const Event> train_events,
                  std::span<const Event> val_events, const Box& train_region,
                  const Box& val_region, const TrainConfig& config,
                  std::ostream* progress = nullptr);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

/// Compares the analytic objective gradient against central finite
/// differences (step 1e-5) on `sample` randomly chosen parameter entries
/// plus all three log_sigma entries. Meant for small instances (N <= 10,
/// J <= 16). Dropout, if active, uses common random numbers on both sides.
/// A coordinate whose difference interval straddles a ReLU kink makes the
/// quadratic error model of the central difference invalid while the tape
/// stays exact; such coordinates are detected by comparing the two one-sided
/// slopes (no reference to the analytic value) and reported as skipped.
GradCheckReport gradient_check_model(DmppModel& model,
                                     std::span<const Event> events,
                                     const Box& region, std::size_t sample,
                                     std::uint64_t seed,
                                     nn::Mode mode = nn::Mode::Eval);

/// Adds `delta` to every bias tensor. Freshly initialized biases are exactly
/// zero, which parks ReLU units whose whole receptive field is inactive
/// right on the kink; a finite-difference step then straddles it. Gradient
/// checks call this first to probe a generic operating point.
void offset_biases(nn::ParameterStore& store, double delta);

}  // namespace dmpp
