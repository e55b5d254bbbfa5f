// Command-line front end: synth, train, predict, simulate, evaluate,
// gradcheck. Exit codes: 0 ok, 1 usage/config error, 2 data error,
// 3 numerical failure. Diagnostics go to stderr; `train` streams progress
// lines to stdout.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmpp/eval.hpp"
#include "dmpp/io.hpp"
#include "dmpp/train.hpp"

namespace {

using dmpp::Box;
using dmpp::RunConfig;
using nlohmann::json;

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

RunConfig load_config(const CommonOptions& common) {
  RunConfig cfg = dmpp::load_run_config(common.config_path);
  if (common.seed_set) cfg.seed = common.seed;
  cfg.training.seed = cfg.seed;
  return cfg;
}

dmpp::Partition parse_partition(const std::string& spec, const dmpp::DmppModel& model) {
  if (spec.empty() || spec == "default")
    return dmpp::build_eval_partition(model.domain);
  int nx = 0, ny = 0, nt = 0;
  if (std::sscanf(spec.c_str(), "%dx%dx%d", &nx, &ny, &nt) != 3)
    throw dmpp::ConfigError("bad --partition '" + spec + "', expected default or NXxNYxNB");
  return dmpp::build_partition(model.test_region(), nx, ny, nt);
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw dmpp::DataError("cannot write " + path);
  out << j.dump(1) << '\n';
}

std::string strip_extension(const std::string& path) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path;
  return path.substr(0, dot);
}

int run_synth(const CommonOptions& common, const std::string& out_path,
              const std::string& truth_path) {
  const RunConfig cfg = load_config(common);
  const std::vector<double> weights = cfg.synth_weights.empty()
                                          ? dmpp::default_synth_weights(cfg)
                                          : cfg.synth_weights;
  const dmpp::SynthResult result = dmpp::synth_generate(cfg, weights, cfg.seed);
  const std::string out = out_path.empty() ? cfg.events_path : out_path;
  if (out.empty())
    throw dmpp::ConfigError("synth: no output path (give --out or paths.events)");
  dmpp::save_events_csv(out, result.events_raw);

  if (!truth_path.empty()) {
    const auto norm_dom = dmpp::normalized_domain(cfg.domain);
    const auto grid = dmpp::build_grid(norm_dom, cfg.model.time_points,
                                       cfg.model.space_per_axis);
    const dmpp::KernelParams kernel = dmpp::initial_kernel(cfg.model, grid);
    json truth;
    truth["expected_count"] = result.expected_count;
    truth["event_count"] = result.events_raw.size();
    truth["weights"] = result.weights;
    truth["kernel"] = {{"log_sigma", kernel.log_sigma},
                       {"support_width", kernel.support_w}};
    truth["seed"] = cfg.seed;
    write_json(truth_path, truth);
  }
  std::cerr << "synth: wrote " << result.events_raw.size() << " events to " << out
            << " (expected " << result.expected_count << ")\n";
  return 0;
}

int run_train(const CommonOptions& common, const std::string& checkpoint_path) {
  const RunConfig cfg = load_config(common);
  dmpp::Workspace ws = dmpp::assemble_workspace(cfg, true);
  if (ws.split.train.empty())
    throw dmpp::DataError("train: no events before the validation boundary");
  const dmpp::TrainResult result =
      dmpp::train(ws.model, ws.split.train, ws.split.val, ws.split.train_region,
                  ws.split.val_region, cfg.training, &std::cout);
  dmpp::save_checkpoint(checkpoint_path, ws.model, cfg, result.history);
  std::cerr << "train: best validation LogLike " << result.best_val << " at epoch "
            << result.best_epoch << "; checkpoint " << checkpoint_path << "\n";
  return 0;
}

int run_predict(const CommonOptions& common, const std::string& checkpoint_path,
                const std::string& out_prefix, const std::string& partition_spec,
                const std::string& events_override) {
  const RunConfig cfg = load_config(common);
  const dmpp::LoadedCheckpoint ckpt = dmpp::load_checkpoint(checkpoint_path);
  dmpp::Workspace ws = dmpp::assemble_workspace(cfg, true, events_override);
  dmpp::apply_checkpoint(ws.model, cfg, ckpt);

  const dmpp::Partition part = parse_partition(partition_spec, ws.model);
  const dmpp::CountGrid pred = dmpp::predict_counts(dmpp::test_view(ws.model), part);

  const std::string counts_path = out_prefix + "_counts.csv";
  std::ofstream counts(counts_path);
  if (!counts) throw dmpp::DataError("cannot write " + counts_path);
  counts << "cell_r,bin_t,expected\n";
  char buf[40];
  for (int r = 0; r < part.cell_count(); ++r) {
    for (int t = 0; t < part.bin_count(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", pred.at(r, t));
      counts << r << ',' << t << ',' << buf << '\n';
    }
  }

  const dmpp::TestScore score = dmpp::test_log_likelihood(
      ws.model, ws.split.test, ws.model.test_region());
  const double log_volume = ws.model.transform.log_volume();
  json out;
  out["n_test"] = score.event_count;
  out["loglike_total"] =
      score.total - static_cast<double>(score.event_count) * log_volume;
  out["loglike_per_event"] = score.per_event - log_volume;
  write_json(out_prefix + "_loglike.json", out);
  std::cerr << "predict: wrote " << part.box_count() << " cells to " << counts_path
            << "\n";
  return 0;
}

int run_simulate(const CommonOptions& common, const std::string& checkpoint_path,
                 const std::string& out_path) {
  const RunConfig cfg = load_config(common);
  const dmpp::LoadedCheckpoint ckpt = dmpp::load_checkpoint(checkpoint_path);
  dmpp::Workspace ws = dmpp::assemble_workspace(cfg, false);
  dmpp::apply_checkpoint(ws.model, cfg, ckpt);

  const auto simulated = dmpp::simulate_thinning(
      dmpp::test_view(ws.model), ws.model.test_region(), cfg.seed);
  std::vector<dmpp::Event> raw;
  raw.reserve(simulated.size());
  for (const dmpp::Event& ev : simulated) {
    const dmpp::Vec3 x = ws.model.transform.to_raw(ev.point());
    raw.push_back(dmpp::Event{x[0], {x[1], x[2]}});
  }
  dmpp::save_events_csv(out_path, raw);
  std::cerr << "simulate: wrote " << raw.size() << " events to " << out_path << "\n";
  return 0;
}

void dump_attention(const dmpp::DmppModel& model, const std::string& prefix) {
  const std::size_t begin = model.test_begin();
  if (dmpp::variant_uses_image(model.net.variant)) {
    std::ofstream out(prefix + "_attention_image.csv");
    out << "j,row,col,weight\n";
    for (std::size_t j = begin; j < model.rep_count(); ++j) {
      const auto enc = dmpp::nn::image_attention_forward(
          model.params, model.net, *model.snapshots[j].image_patch);
      const std::size_t px = enc.attention.shape[0];
      for (std::size_t row = 0; row < px; ++row)
        for (std::size_t col = 0; col < px; ++col)
          out << j << ',' << row << ',' << col << ','
              << enc.attention[row * px + col] << '\n';
    }
  }
  if (dmpp::variant_uses_text(model.net.variant)) {
    std::ofstream out(prefix + "_attention_text.csv");
    out << "j,pos,token_id,weight\n";
    for (std::size_t j = begin; j < model.rep_count(); ++j) {
      const auto& ids = *model.snapshots[j].token_ids;
      const auto enc =
          dmpp::nn::text_attention_forward(model.params, model.net, ids);
      for (std::size_t p = 0; p < ids.size(); ++p)
        out << j << ',' << p << ',' << ids[p] << ',' << enc.attention[p] << '\n';
    }
  }
}

int run_evaluate(const CommonOptions& common, const std::string& checkpoint_path,
                 const std::string& out_path, const std::string& partition_spec,
                 const std::string& events_override, bool hp_only,
                 std::string attention_prefix) {
  const RunConfig cfg = load_config(common);
  dmpp::Workspace ws = dmpp::assemble_workspace(cfg, true, events_override);

  // The HP baseline observes everything up to the train/test boundary and is
  // fitted in raw units, so its LogLike is directly comparable to the
  // log-Jacobian-corrected model scores.
  const std::size_t n_observed = ws.split.train.size() + ws.split.val.size();
  const std::vector<dmpp::Event> observed_dummy(n_observed);
  const Box raw_train{{cfg.domain.t_min, cfg.domain.s_min[0], cfg.domain.s_min[1]},
                      {cfg.domain.train_end, cfg.domain.s_max[0], cfg.domain.s_max[1]}};
  const Box raw_test{{cfg.domain.train_end, cfg.domain.s_min[0], cfg.domain.s_min[1]},
                     {cfg.domain.t_max, cfg.domain.s_max[0], cfg.domain.s_max[1]}};
  const dmpp::HpModel hp = dmpp::fit_hp(observed_dummy, raw_train);
  const std::size_t n_test = ws.split.test.size();
  const double hp_ll = dmpp::hp_log_likelihood(hp, ws.split.test, raw_test);
  const double hp_ll_per_event =
      n_test == 0 ? hp_ll : hp_ll / static_cast<double>(n_test);

  json metrics;
  metrics["n_test"] = n_test;
  metrics["hp_loglike_per_event"] = hp_ll_per_event;

  dmpp::Partition part{};
  bool have_partition = false;
  if (n_test > 0) {
    part = parse_partition(partition_spec, ws.model);
    have_partition = true;
    const dmpp::CountGrid actual = dmpp::count_events(ws.split.test, part);
    dmpp::CountGrid hp_grid;
    hp_grid.partition = part;
    hp_grid.values.assign(part.box_count(), 0.0);
    const double norm_rate =
        static_cast<double>(n_observed) /
        (ws.model.domain.train_end - ws.model.domain.t_min);
    for (int r = 0; r < part.cell_count(); ++r)
      for (int t = 0; t < part.bin_count(); ++t)
        hp_grid.at(r, t) = norm_rate * part.box(r, t).volume();
    metrics["hp_mape"] = dmpp::mape(actual, hp_grid);

    if (!hp_only) {
      const dmpp::LoadedCheckpoint ckpt = dmpp::load_checkpoint(checkpoint_path);
      dmpp::apply_checkpoint(ws.model, cfg, ckpt);
      const dmpp::CountGrid pred =
          dmpp::predict_counts(dmpp::test_view(ws.model), part);
      metrics["mape"] = dmpp::mape(actual, pred);
      const dmpp::TestScore score = dmpp::test_log_likelihood(
          ws.model, ws.split.test, ws.model.test_region());
      metrics["loglike_per_event"] =
          score.per_event - ws.model.transform.log_volume();
    }
  } else if (!hp_only) {
    const dmpp::LoadedCheckpoint ckpt = dmpp::load_checkpoint(checkpoint_path);
    dmpp::apply_checkpoint(ws.model, cfg, ckpt);
    const dmpp::TestScore score = dmpp::test_log_likelihood(
        ws.model, ws.split.test, ws.model.test_region());
    metrics["loglike_per_event"] = score.per_event - ws.model.transform.log_volume();
  }
  (void)have_partition;

  write_json(out_path, metrics);
  if (!hp_only && ws.model.net.variant != dmpp::Variant::Naive) {
    if (attention_prefix.empty()) attention_prefix = strip_extension(out_path);
    dump_attention(ws.model, attention_prefix);
  }
  std::cerr << "evaluate: wrote " << out_path << "\n";
  return 0;
}

int run_gradcheck(const CommonOptions& common, std::size_t sample) {
  RunConfig cfg = load_config(common);
  // Fixed desk-size instance: J = 8 representative points, 4x4 patches,
  // five events.
  cfg.model.time_points = 2;
  cfg.model.space_per_axis = 2;
  cfg.model.net.image_px = 4;

  const auto norm_dom = dmpp::normalized_domain(cfg.domain);
  const auto grid = dmpp::build_grid(norm_dom, cfg.model.time_points,
                                     cfg.model.space_per_axis);
  std::vector<dmpp::ContextSnapshot> snaps;
  if (cfg.model.net.variant != dmpp::Variant::Naive)
    snaps = dmpp::synthetic_snapshots(grid, cfg.model.net, cfg.seed);
  dmpp::DmppModel model = dmpp::make_model(cfg.domain, cfg.model,
                                           std::move(snaps), cfg.seed);
  dmpp::offset_biases(model.params, 0.05);  // off the exact ReLU kinks

  dmpp::Rng rng(dmpp::mix_seed(cfg.seed, 0x67636576));
  std::vector<dmpp::Event> events(5);
  const Box region = model.training_region();
  for (dmpp::Event& ev : events) {
    ev.t = rng.uniform(region.lower[0], region.upper[0]);
    ev.s = {rng.uniform(region.lower[1], region.upper[1]),
            rng.uniform(region.lower[2], region.upper[2])};
  }

  const dmpp::GradCheckReport report = dmpp::gradient_check_model(
      model, events, region, sample, cfg.seed, dmpp::nn::Mode::Train);
  std::printf("gradcheck: max relative error %.3e (%s, %zu coordinates)\n",
              report.max_rel_error, report.worst_parameter.c_str(),
              report.checked);
  if (report.max_rel_error > 1e-4) {
    std::cerr << "gradcheck: FAILED threshold 1e-4\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep mixture point process toolkit"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string checkpoint_path, out_path, truth_path, partition_spec = "default";
  std::string events_override, attention_prefix;
  bool hp_only = false;
  std::size_t sample = 100;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "run configuration (JSON)")
        ->required();
    cmd->add_option("--seed", common.seed, "override the config seed")
        ->each([&](const std::string&) { common.seed_set = true; });
  };

  CLI::App* synth = app.add_subcommand("synth", "generate events from a known mixture");
  add_common(synth);
  synth->add_option("--out", out_path, "events CSV (default: paths.events)");
  synth->add_option("--truth", truth_path, "ground-truth descriptor JSON");

  CLI::App* train = app.add_subcommand("train", "fit the model");
  add_common(train);
  train->add_option("--checkpoint", checkpoint_path, "checkpoint to write")->required();

  CLI::App* predict = app.add_subcommand("predict", "expected counts over a partition");
  add_common(predict);
  predict->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  predict->add_option("--out", out_path, "output prefix")->required();
  predict->add_option("--partition", partition_spec, "default or NXxNYxNB");
  predict->add_option("--events", events_override, "events CSV override");

  CLI::App* simulate = app.add_subcommand("simulate", "sample events by thinning");
  add_common(simulate);
  simulate->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  simulate->add_option("--out", out_path, "events CSV to write")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "test metrics and baselines");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint_path, "trained checkpoint");
  evaluate->add_option("--out", out_path, "metrics JSON to write")->required();
  evaluate->add_option("--partition", partition_spec, "default or NXxNYxNB");
  evaluate->add_option("--events", events_override, "events CSV override");
  evaluate->add_flag("--hp-only", hp_only, "score the HP baseline only");
  evaluate->add_option("--attention-prefix", attention_prefix,
                       "prefix for attention dump CSVs");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(gradcheck);
  gradcheck->add_option("--sample", sample, "sampled parameter coordinates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(common, out_path, truth_path);
    if (train->parsed()) return run_train(common, checkpoint_path);
    if (predict->parsed())
      return run_predict(common, checkpoint_path, out_path, partition_spec,
                         events_override);
    if (simulate->parsed()) return run_simulate(common, checkpoint_path, out_path);
    if (evaluate->parsed())
      return run_evaluate(common, checkpoint_path, out_path, partition_spec,
                          events_override, hp_only, attention_prefix);
    if (gradcheck->parsed()) return run_gradcheck(common, sample);
  } catch (const dmpp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const dmpp::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const dmpp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
