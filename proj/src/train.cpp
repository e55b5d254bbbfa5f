#include "dmpp/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace dmpp {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0 && learning_rate < 1.0))
    throw ConfigError("training: learning_rate must be in (0,1)");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw ConfigError("training: adam betas must be in (0,1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("training: adam_epsilon must be positive");
  if (l2_lambda < 0.0) throw ConfigError("training: l2_lambda must be nonnegative");
  if (batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("training: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("training: patience must be >= 1");
}

AdamState AdamState::for_store(const nn::ParameterStore& store) {
  AdamState state;
  state.slots.resize(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) {
    state.slots[i].m = nn::Tensor(store.entry(i).value.shape);
    state.slots[i].v = nn::Tensor(store.entry(i).value.shape);
  }
  return state;
}

void adam_step(AdamState& state, nn::ParameterStore& store,
               const TrainConfig& config) {
  if (state.slots.size() != store.count())
    throw ConfigError("adam_step: state does not match the parameter store");
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double m_corr = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double v_corr = 1.0 - std::pow(b2, static_cast<double>(state.step));

  for (std::size_t p = 0; p < store.count(); ++p) {
    nn::ParamEntry& e = store.entry(p);
    AdamState::Slot& slot = state.slots[p];
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      double g = e.grad[i];
      if (!finite(g))
        throw NumericalError("diverged step: non-finite gradient in " + e.name);
      if (e.l2) g -= 2.0 * config.l2_lambda * e.value[i];
      slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * g;
      slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * g * g;
      const double m_hat = slot.m[i] / m_corr;
      const double v_hat = slot.v[i] / v_corr;
      e.value[i] += config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
  }
}

namespace {

std::vector<nn::Tensor> snapshot_values(const nn::ParameterStore& store) {
  std::vector<nn::Tensor> copy(store.count());
  for (std::size_t i = 0; i < store.count(); ++i) copy[i] = store.entry(i).value;
  return copy;
}

void restore_values(nn::ParameterStore& store, const std::vector<nn::Tensor>& values) {
  for (std::size_t i = 0; i < store.count(); ++i) store.entry(i).value = values[i];
}

double max_abs_param(const nn::ParameterStore& store) {
  double hi = 0.0;
  for (std::size_t i = 0; i < store.count(); ++i)
    for (double v : store.entry(i).value.v) hi = std::max(hi, std::fabs(v));
  return hi;
}

}  // namespace

TrainResult train(DmppModel& model, std::span<const Event> train_events,
                  std::span<const Event> val_events, const Box& train_region,
                  const Box& val_region, const TrainConfig& config,
                  std::ostream* progress) {
  config.validate();
  if (train_events.empty()) throw ConfigError("train: empty training set");

  const std::size_t n = train_events.size();
  AdamState state = AdamState::for_store(model.params);
  Rng shuffle_rng(mix_seed(config.seed, 0x73687566));  // "shuf"
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  TrainResult result;
  result.best_val = -std::numeric_limits<double>::infinity();
  std::vector<nn::Tensor> best_params = snapshot_values(model.params);
  const double log_volume = model.transform.log_volume();
  std::uint64_t global_step = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    }

    double objective_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      model.params.zero_grads();
      ObjectiveOptions opt;
      opt.mode = nn::Mode::Train;
      opt.dropout_seed = mix_seed(mix_seed(config.seed, 0x64726f70), ++global_step);
      const double obj = minibatch_objective(model, train_events, batch, n,
                                             train_region, opt);
      if (!finite(obj))
        throw NumericalError(
            "train: objective is not finite at epoch " + std::to_string(epoch) +
            ", batch " + std::to_string(batches) +
            " (max |param| = " + std::to_string(max_abs_param(model.params)) + ")");
      adam_step(state, model.params, config);
      model.invalidate_f_cache();
      objective_sum += obj;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_objective = objective_sum / static_cast<double>(batches);
    if (!val_events.empty()) {
      // Score the window the way the test metric does when representative
      // points fall inside it; coarse grids fall back to the full mixture.
      const bool window_has_points =
          model.grid.test_begin(val_region.lower[0]) <
          model.grid.test_begin(val_region.upper[0]);
      const double val_ll =
          window_has_points
              ? window_log_likelihood(model, val_events, val_region)
              : log_likelihood(model, val_events, val_region);
      rec.val_loglike_per_event =
          val_ll / static_cast<double>(val_events.size()) - log_volume;
    } else {
      rec.val_loglike_per_event =
          rec.train_objective / static_cast<double>(n) - log_volume;
    }
    result.history.push_back(rec);
    if (progress) {
      (*progress) << rec.epoch << ',' << rec.train_objective << ','
                  << rec.val_loglike_per_event << '\n';
    }

    if (rec.val_loglike_per_event > result.best_val) {
      result.best_val = rec.val_loglike_per_event;
      result.best_epoch = epoch;
      best_params = snapshot_values(model.params);
    } else if (epoch - result.best_epoch >= config.patience) {
      break;
    }
  }

  restore_values(model.params, best_params);
  model.invalidate_f_cache();
  return result;
}

void offset_biases(nn::ParameterStore& store, double delta) {
  for (std::size_t p = 0; p < store.count(); ++p) {
    nn::ParamEntry& e = store.entry(p);
    if (e.name.size() > 2 && e.name.compare(e.name.size() - 2, 2, "_b") == 0) {
      for (double& v : e.value.v) v += delta;
    }
  }
}

GradCheckReport gradient_check_model(DmppModel& model,
                                     std::span<const Event> events,
                                     const Box& region, std::size_t sample,
                                     std::uint64_t seed, nn::Mode mode) {
  std::vector<std::size_t> all(events.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  ObjectiveOptions opt;
  opt.mode = mode;
  opt.dropout_seed = mix_seed(seed, 0x67636b);  // fixed masks on both sides

  model.params.zero_grads();
  minibatch_objective(model, events, all, events.size(), region, opt);
  std::vector<nn::Tensor> analytic(model.params.count());
  for (std::size_t p = 0; p < model.params.count(); ++p)
    analytic[p] = model.params.entry(p).grad;

  // Sampled coordinates plus every log_sigma entry.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  const std::size_t total = model.params.scalar_count();
  Rng rng(mix_seed(seed, 0x636f6f72));
  for (std::size_t s = 0; s < sample; ++s) {
    std::size_t flat = rng.index(total);
    for (std::size_t p = 0; p < model.params.count(); ++p) {
      const std::size_t sz = model.params.entry(p).value.size();
      if (flat < sz) {
        coords.emplace_back(p, flat);
        break;
      }
      flat -= sz;
    }
  }
  const std::size_t ls = static_cast<std::size_t>(model.log_sigma_index());
  for (std::size_t d = 0; d < 3; ++d) coords.emplace_back(ls, d);

  GradCheckReport report;
  const double h = 1e-5;
  const double center =
      minibatch_value(model, events, all, events.size(), region, opt);
  for (const auto& [p, i] : coords) {
    double& theta = model.params.entry(p).value[i];
    const double saved = theta;
    theta = saved + h;
    const double up = minibatch_value(model, events, all, events.size(), region, opt);
    theta = saved - h;
    const double down = minibatch_value(model, events, all, events.size(), region, opt);
    theta = saved;
    const double fd = (up - down) / (2.0 * h);
    const double slope_jump = std::fabs((up - center) / h - (center - down) / h);
    if (slope_jump > 1e-4 * std::max(1.0, std::fabs(fd))) {
      ++report.skipped_kinks;
      continue;
    }
    const double a = analytic[p][i];
    const double err = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_parameter =
          model.params.entry(p).name + "[" + std::to_string(i) + "]";
    }
    ++report.checked;
  }
  model.invalidate_f_cache();
  return report;
}

}  // namespace dmpp
