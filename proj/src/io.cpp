#include "dmpp/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace dmpp {

using nlohmann::json;

namespace {

double parse_double_strict(const std::string& field, const std::string& where) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end || !finite(value))
    throw DataError(where + ": bad numeric field '" + field + "'");
  return value;
}

std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' '))
    s.pop_back();
  return s;
}

std::vector<std::string> split_plain(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// CSV field splitter handling double-quoted fields with "" escapes.
std::vector<std::string> split_quoted(const std::string& line,
                                      const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw DataError(where + ": unterminated quote");
  out.push_back(cur);
  return out;
}

std::string hex_double(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

double parse_hex_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size())
    throw DataError(where + ": bad float literal '" + s + "'");
  return v;
}

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

Variant variant_from_string(const std::string& s) {
  if (s == "naive") return Variant::Naive;
  if (s == "image") return Variant::Image;
  if (s == "text") return Variant::Text;
  if (s == "full") return Variant::Full;
  throw ConfigError("config: unknown variant '" + s + "'");
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::Naive: return "naive";
    case Variant::Image: return "image";
    case Variant::Text: return "text";
    case Variant::Full: return "full";
  }
  return "naive";
}

KernelFamily family_from_string(const std::string& s) {
  if (s == "uniform") return KernelFamily::Uniform;
  if (s == "gaussian") return KernelFamily::Gaussian;
  if (s == "compact_gaussian") return KernelFamily::CompactGaussian;
  throw ConfigError("config: unknown kernel family '" + s + "'");
}

std::string family_to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::Uniform: return "uniform";
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::CompactGaussian: return "compact_gaussian";
  }
  return "gaussian";
}

json run_config_to_json(const RunConfig& c) {
  json j;
  j["domain"] = {{"t_min", c.domain.t_min},       {"t_max", c.domain.t_max},
                 {"train_end", c.domain.train_end}, {"s1_min", c.domain.s_min[0]},
                 {"s1_max", c.domain.s_max[0]},   {"s2_min", c.domain.s_min[1]},
                 {"s2_max", c.domain.s_max[1]}};
  j["variant"] = variant_to_string(c.model.net.variant);
  j["grid"] = {{"time_points", c.model.time_points},
               {"space_per_axis", c.model.space_per_axis}};
  j["kernel"] = {{"family", family_to_string(c.model.kernel_family)},
                 {"support_width", c.model.support_w},
                 {"sigma_scale", c.model.sigma_scale},
                 {"sigma_init", c.model.sigma_init}};
  const nn::NetworkConfig& n = c.model.net;
  j["network"] = {{"fusion_layers", n.fusion_layers},
                  {"fusion_units", n.fusion_units},
                  {"attention_dim", n.attention_dim},
                  {"attention_rows", n.attention_rows},
                  {"image_px", n.image_px},
                  {"image_conv_channels", n.image_conv_channels},
                  {"image_fc_width", n.image_fc_width},
                  {"token_len", n.token_len},
                  {"embed_dim", n.embed_dim},
                  {"text_hidden", n.text_hidden},
                  {"text_conv_channels", n.text_conv_channels},
                  {"text_fc_width", n.text_fc_width},
                  {"dropout", n.dropout_rate},
                  {"unused_image_branch", n.unused_image_branch}};
  const TrainConfig& t = c.training;
  j["training"] = {{"learning_rate", t.learning_rate},
                   {"adam_beta1", t.adam_beta1},
                   {"adam_beta2", t.adam_beta2},
                   {"adam_epsilon", t.adam_epsilon},
                   {"l2_lambda", t.l2_lambda},
                   {"batch_size", t.batch_size},
                   {"max_epochs", t.max_epochs},
                   {"patience", t.patience}};
  j["val_fraction"] = c.val_fraction;
  j["warm_start_output_bias"] = c.warm_start_output_bias;
  j["vocab_max_words"] = c.vocab_max_words;
  j["paths"] = {{"events", c.events_path},
                {"raster", c.raster_path},
                {"descriptions", c.descriptions_path}};
  j["description_radius"] = c.description_radius;
  j["seed"] = c.seed;
  json synth;
  if (!c.synth_weights.empty()) synth["weights"] = c.synth_weights;
  synth["target_count"] = c.synth_target_count;
  j["synth"] = synth;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  if (j.contains("domain")) {
    const json& d = j.at("domain");
    c.domain.t_min = get_or(d, "t_min", 0.0);
    c.domain.t_max = get_or(d, "t_max", 1.0);
    c.domain.train_end = get_or(d, "train_end", 0.8);
    c.domain.s_min = {get_or(d, "s1_min", 0.0), get_or(d, "s2_min", 0.0)};
    c.domain.s_max = {get_or(d, "s1_max", 1.0), get_or(d, "s2_max", 1.0)};
  }
  c.model.net.variant = variant_from_string(get_or<std::string>(j, "variant", "naive"));
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    c.model.time_points = get_or(g, "time_points", 24);
    c.model.space_per_axis = get_or(g, "space_per_axis", 4);
  }
  if (j.contains("kernel")) {
    const json& k = j.at("kernel");
    c.model.kernel_family =
        family_from_string(get_or<std::string>(k, "family", "compact_gaussian"));
    c.model.support_w = get_or(k, "support_width", 2.0);
    c.model.sigma_scale = get_or(k, "sigma_scale", 1.0);
    if (k.contains("sigma_init")) {
      const auto v = k.at("sigma_init").get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("config: sigma_init needs 3 entries");
      c.model.sigma_init = {v[0], v[1], v[2]};
    }
  }
  if (j.contains("network")) {
    const json& n = j.at("network");
    nn::NetworkConfig& net = c.model.net;
    net.fusion_layers = get_or(n, "fusion_layers", net.fusion_layers);
    net.fusion_units = get_or(n, "fusion_units", net.fusion_units);
    net.attention_dim = get_or(n, "attention_dim", net.attention_dim);
    net.attention_rows = get_or(n, "attention_rows", net.attention_rows);
    net.image_px = get_or(n, "image_px", net.image_px);
    net.image_conv_channels = get_or(n, "image_conv_channels", net.image_conv_channels);
    net.image_fc_width = get_or(n, "image_fc_width", net.image_fc_width);
    net.token_len = get_or(n, "token_len", net.token_len);
    net.embed_dim = get_or(n, "embed_dim", net.embed_dim);
    net.text_hidden = get_or(n, "text_hidden", net.text_hidden);
    net.text_conv_channels = get_or(n, "text_conv_channels", net.text_conv_channels);
    net.text_fc_width = get_or(n, "text_fc_width", net.text_fc_width);
    net.dropout_rate = get_or(n, "dropout", net.dropout_rate);
    net.unused_image_branch = get_or(n, "unused_image_branch", net.unused_image_branch);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    c.training.learning_rate = get_or(t, "learning_rate", c.training.learning_rate);
    c.training.adam_beta1 = get_or(t, "adam_beta1", c.training.adam_beta1);
    c.training.adam_beta2 = get_or(t, "adam_beta2", c.training.adam_beta2);
    c.training.adam_epsilon = get_or(t, "adam_epsilon", c.training.adam_epsilon);
    c.training.l2_lambda = get_or(t, "l2_lambda", c.training.l2_lambda);
    c.training.batch_size = get_or(t, "batch_size", c.training.batch_size);
    c.training.max_epochs = get_or(t, "max_epochs", c.training.max_epochs);
    c.training.patience = get_or(t, "patience", c.training.patience);
  }
  c.val_fraction = get_or(j, "val_fraction", c.val_fraction);
  c.warm_start_output_bias =
      get_or(j, "warm_start_output_bias", c.warm_start_output_bias);
  c.vocab_max_words = get_or<std::size_t>(j, "vocab_max_words", c.vocab_max_words);
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    c.events_path = get_or<std::string>(p, "events", "");
    c.raster_path = get_or<std::string>(p, "raster", "");
    c.descriptions_path = get_or<std::string>(p, "descriptions", "");
  }
  c.description_radius = get_or(j, "description_radius", c.description_radius);
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  if (j.contains("synth")) {
    const json& s = j.at("synth");
    if (s.contains("weights"))
      c.synth_weights = s.at("weights").get<std::vector<double>>();
    c.synth_target_count = get_or(s, "target_count", c.synth_target_count);
  }
  return c;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError("config error in " + path + ": " + e.what());
  }
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

std::vector<Event> load_events_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open events file: " + path);
  std::vector<Event> events;
  std::string line;
  if (!std::getline(in, line)) return events;  // empty file: empty list
  if (rstrip(line) != "t,s1,s2")
    throw DataError(path + ": line 1: expected header 't,s1,s2'");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = rstrip(line);
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(line_no);
    const auto fields = split_plain(line, ',');
    if (fields.size() != 3) throw DataError(where + ": expected 3 fields");
    Event ev;
    ev.t = parse_double_strict(fields[0], where);
    ev.s = {parse_double_strict(fields[1], where),
            parse_double_strict(fields[2], where)};
    events.push_back(ev);
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return events;
}

void save_events_csv(const std::string& path, std::span<const Event> events) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write events file: " + path);
  out << "t,s1,s2\n";
  for (const Event& ev : events) {
    out << format_g17(ev.t) << ',' << format_g17(ev.s[0]) << ','
        << format_g17(ev.s[1]) << '\n';
  }
}

namespace {

std::string next_ppm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      while (in.get(c) && c != '\n') {
      }
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += c;
  }
  return tok;
}

long ppm_int(std::istream& in, const std::string& path) {
  const std::string tok = next_ppm_token(in);
  if (tok.empty()) throw DataError(path + ": truncated PPM");
  long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw DataError(path + ": bad PPM token '" + tok + "'");
  return v;
}

}  // namespace

RasterMap load_raster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open raster file: " + path);
  if (next_ppm_token(in) != "P3") throw DataError(path + ": expected plain PPM (P3)");
  RasterMap map;
  map.width = static_cast<int>(ppm_int(in, path));
  map.height = static_cast<int>(ppm_int(in, path));
  const long maxval = ppm_int(in, path);
  if (map.width < 1 || map.height < 1 || maxval < 1)
    throw DataError(path + ": bad PPM dimensions");
  const std::size_t n = static_cast<std::size_t>(map.width) * map.height * 3;
  map.rgb.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const long v = ppm_int(in, path);
    if (v < 0 || v > maxval) throw DataError(path + ": pixel value out of range");
    map.rgb[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }

  const std::string geo_path = path + ".geo";
  std::ifstream geo(geo_path);
  if (!geo) throw DataError(path + ": missing georeference sidecar " + geo_path);
  std::string line;
  std::getline(geo, line);
  std::istringstream ls(line);
  std::string tag;
  ls >> tag;
  double a, b, c, d;
  if (tag != "geo:" || !(ls >> a >> b >> c >> d))
    throw DataError(geo_path + ": expected 'geo: s1_min s2_min s1_max s2_max'");
  if (!(a < c && b < d)) throw DataError(geo_path + ": degenerate georeference box");
  map.geo_min = {a, b};
  map.geo_max = {c, d};
  return map;
}

void save_raster(const std::string& path, const RasterMap& map) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write raster file: " + path);
  out << "P3\n" << map.width << ' ' << map.height << "\n255\n";
  for (std::size_t i = 0; i < map.rgb.size(); ++i) {
    const int v = std::clamp(static_cast<int>(std::lround(map.rgb[i] * 255.0)), 0, 255);
    out << v << (i % 12 == 11 ? '\n' : ' ');
  }
  out << '\n';
  std::ofstream geo(path + ".geo");
  if (!geo) throw DataError("cannot write georeference sidecar for " + path);
  geo << "geo: " << format_g17(map.geo_min[0]) << ' ' << format_g17(map.geo_min[1])
      << ' ' << format_g17(map.geo_max[0]) << ' ' << format_g17(map.geo_max[1])
      << '\n';
}

std::vector<EventDescription> load_descriptions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open descriptions file: " + path);
  std::vector<EventDescription> out;
  std::string line;
  if (!std::getline(in, line)) return out;
  if (rstrip(line) != "t_start,t_end,s1,s2,text")
    throw DataError(path + ": line 1: expected header 't_start,t_end,s1,s2,text'");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = rstrip(line);
    if (line.empty()) continue;
    const std::string where = path + ": line " + std::to_string(line_no);
    const auto fields = split_quoted(line, where);
    if (fields.size() != 5) throw DataError(where + ": expected 5 fields");
    EventDescription d;
    d.t_start = parse_double_strict(fields[0], where);
    d.t_end = parse_double_strict(fields[1], where);
    d.location = {parse_double_strict(fields[2], where),
                  parse_double_strict(fields[3], where)};
    if (d.t_start > d.t_end) throw DataError(where + ": t_start exceeds t_end");
    d.words = tokenize(fields[4]);
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const DmppModel& model,
                     const RunConfig& config,
                     const std::vector<EpochRecord>& history) {
  json j;
  j["format_version"] = kCheckpointVersion;
  j["config"] = run_config_to_json(config);
  json hist = json::array();
  for (const EpochRecord& r : history) {
    hist.push_back({{"epoch", r.epoch},
                    {"train_objective", hex_double(r.train_objective)},
                    {"val_loglike_per_event", hex_double(r.val_loglike_per_event)}});
  }
  j["history"] = hist;
  json params = json::array();
  for (std::size_t p = 0; p < model.params.count(); ++p) {
    const nn::ParamEntry& e = model.params.entry(p);
    if (!e.value.all_finite())
      throw NumericalError("checkpoint: non-finite values in " + e.name);
    json values = json::array();
    for (double v : e.value.v) values.push_back(hex_double(v));
    params.push_back({{"name", e.name}, {"shape", e.value.shape}, {"values", values}});
  }
  j["parameters"] = params;

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << j.dump(1) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint parse error in " + path + ": " + e.what());
  }
  LoadedCheckpoint ckpt;
  try {
    ckpt.format_version = j.at("format_version").get<int>();
    if (ckpt.format_version != kCheckpointVersion)
      throw ConfigError("checkpoint " + path + ": format version " +
                        std::to_string(ckpt.format_version) +
                        " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    ckpt.config = run_config_from_json(j.at("config"));
    for (const json& r : j.at("history")) {
      EpochRecord rec;
      rec.epoch = r.at("epoch").get<int>();
      rec.train_objective =
          parse_hex_double(r.at("train_objective").get<std::string>(), path);
      rec.val_loglike_per_event =
          parse_hex_double(r.at("val_loglike_per_event").get<std::string>(), path);
      ckpt.history.push_back(rec);
    }
    for (const json& p : j.at("parameters")) {
      nn::Tensor t;
      t.shape = p.at("shape").get<std::vector<std::size_t>>();
      const json& values = p.at("values");
      t.v.reserve(values.size());
      for (const json& v : values)
        t.v.push_back(parse_hex_double(v.get<std::string>(), path));
      if (t.v.size() != nn::Tensor::count(t.shape))
        throw DataError("checkpoint " + path + ": tensor size mismatch");
      ckpt.params.emplace_back(p.at("name").get<std::string>(), std::move(t));
    }
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + " is malformed: " + e.what());
  }
  return ckpt;
}

void apply_checkpoint(DmppModel& model, const RunConfig& run_config,
                      const LoadedCheckpoint& ckpt) {
  if (ckpt.config.model.net.variant != run_config.model.net.variant)
    throw ConfigError("checkpoint was trained with variant '" +
                      variant_to_string(ckpt.config.model.net.variant) +
                      "' but the run is configured for '" +
                      variant_to_string(run_config.model.net.variant) + "'");
  if (ckpt.config.model.time_points != run_config.model.time_points ||
      ckpt.config.model.space_per_axis != run_config.model.space_per_axis)
    throw ConfigError("checkpoint grid does not match the configured grid");
  if (ckpt.params.size() != model.params.count())
    throw ConfigError("checkpoint parameter count does not match the model");
  for (const auto& [name, tensor] : ckpt.params) {
    const int idx = model.params.find(name);
    if (idx < 0) throw ConfigError("checkpoint holds unknown parameter " + name);
    nn::Tensor& dst = model.params.value(idx);
    if (dst.shape != tensor.shape)
      throw ConfigError("checkpoint parameter " + name + " has the wrong shape");
    dst.v = tensor.v;
  }
  model.invalidate_f_cache();
}

EventSplit split_events(std::span<const Event> normalized_events,
                        const SpatioTemporalDomain& norm_domain,
                        double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must be in [0,1)");
  EventSplit split;
  const double T = norm_domain.train_end;
  split.val_start = T - val_fraction * (T - norm_domain.t_min);
  for (const Event& ev : normalized_events) {
    if (ev.t <= split.val_start) {
      split.train.push_back(ev);
    } else if (ev.t <= T) {
      split.val.push_back(ev);
    } else {
      split.test.push_back(ev);
    }
  }
  const Vec2 lo = norm_domain.s_min;
  const Vec2 hi = norm_domain.s_max;
  split.train_region = {{norm_domain.t_min, lo[0], lo[1]}, {split.val_start, hi[0], hi[1]}};
  split.val_region = {{split.val_start, lo[0], lo[1]}, {T, hi[0], hi[1]}};
  split.test_region = {{T, lo[0], lo[1]}, {norm_domain.t_max, hi[0], hi[1]}};
  return split;
}

Workspace assemble_workspace(const RunConfig& config, bool need_events,
                             const std::string& events_override) {
  config.domain.validate();
  Workspace ws;
  ws.config = config;
  ModelConfig mc = config.model;
  const Variant variant = mc.net.variant;

  std::vector<ContextSnapshot> snapshots;
  if (variant != Variant::Naive) {
    const SpatioTemporalDomain norm_dom = normalized_domain(config.domain);
    const RepPointGrid grid =
        build_grid(norm_dom, mc.time_points, mc.space_per_axis);
    const NormalizationTransform tf = normalization_for(config.domain);

    RasterMap raster;
    std::vector<EventDescription> descs;
    Vocabulary vocab;
    if (variant_uses_image(variant)) {
      if (config.raster_path.empty())
        throw ConfigError("variant needs a raster map but paths.raster is empty");
      raster = load_raster(config.raster_path);
    }
    if (variant_uses_text(variant)) {
      if (config.descriptions_path.empty())
        throw ConfigError(
            "variant needs descriptions but paths.descriptions is empty");
      descs = load_descriptions(config.descriptions_path);
      std::vector<std::vector<std::string>> corpus;
      corpus.reserve(descs.size());
      for (const EventDescription& d : descs) corpus.push_back(d.words);
      vocab = build_vocabulary(corpus, config.vocab_max_words);
      mc.net.vocab_size = static_cast<int>(vocab.size());
    }

    SnapshotConfig sc;
    sc.variant = variant;
    sc.patch_px = 2 * mc.net.image_px;
    sc.out_px = mc.net.image_px;
    sc.token_len = static_cast<std::size_t>(mc.net.token_len);
    sc.description_radius = config.description_radius;
    snapshots = build_snapshots(grid, tf, sc,
                                variant_uses_image(variant) ? &raster : nullptr,
                                variant_uses_text(variant) ? &descs : nullptr,
                                variant_uses_text(variant) ? &vocab : nullptr);
  }

  ws.model = make_model(config.domain, mc, std::move(snapshots), config.seed);

  if (need_events) {
    const std::string path =
        events_override.empty() ? config.events_path : events_override;
    if (path.empty()) throw ConfigError("no events file configured");
    const std::vector<Event> raw = load_events_csv(path);
    auto [norm, tf] = normalize(raw, config.domain);
    ws.total_events = norm.size();
    ws.split = split_events(norm, ws.model.domain, config.val_fraction);
    if (config.warm_start_output_bias && !ws.split.train.empty()) {
      warm_start_output_bias(ws.model, ws.split.train.size(),
                             ws.split.train_region);
    }
  } else {
    ws.split.train_region = ws.model.training_region();
    ws.split.val_region = ws.model.training_region();
    ws.split.test_region = ws.model.test_region();
  }
  return ws;
}

std::vector<double> default_synth_weights(const RunConfig& config) {
  const SpatioTemporalDomain norm_dom = normalized_domain(config.domain);
  const RepPointGrid grid =
      build_grid(norm_dom, config.model.time_points, config.model.space_per_axis);
  const KernelParams kernel = initial_kernel(config.model, grid);

  auto bump = [](const Vec2& r, double cx, double cy, double width) {
    const double dx = r[0] - cx;
    const double dy = r[1] - cy;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
  };
  std::vector<double> weights(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const Vec2 r = {grid.points[j][1], grid.points[j][2]};
    weights[j] = 0.25 + bump(r, 0.30, 0.35, 0.18) + 0.8 * bump(r, 0.72, 0.68, 0.13);
  }

  const Box everything{{norm_dom.t_min, 0.0, 0.0}, {norm_dom.t_max, 1.0, 1.0}};
  double expected = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j)
    expected += weights[j] * kernel_box_integral(kernel, grid.points[j], everything);
  if (!(expected > 0.0))
    throw ConfigError("synth: configured kernels have no mass over the domain");
  const double scale = config.synth_target_count / expected;
  for (double& w : weights) w *= scale;
  return weights;
}

SynthResult synth_generate(const RunConfig& config,
                           std::span<const double> weights, std::uint64_t seed) {
  const SpatioTemporalDomain norm_dom = normalized_domain(config.domain);
  const RepPointGrid grid =
      build_grid(norm_dom, config.model.time_points, config.model.space_per_axis);
  if (weights.size() != grid.size())
    throw ConfigError("synth: expected " + std::to_string(grid.size()) +
                      " weights, got " + std::to_string(weights.size()));
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (!(weights[j] > 0.0))
      throw ConfigError("synth: weight " + std::to_string(j) + " is not positive");
  }

  const KernelParams kernel = initial_kernel(config.model, grid);
  const MixtureView view{&grid, kernel, weights, 0, grid.size()};
  const Box everything{{norm_dom.t_min, 0.0, 0.0}, {norm_dom.t_max, 1.0, 1.0}};

  SynthResult result;
  result.weights.assign(weights.begin(), weights.end());
  result.expected_count = view_integral(view, everything);

  const NormalizationTransform tf = normalization_for(config.domain);
  for (const Event& ev : simulate_thinning(view, everything, seed)) {
    const Vec3 raw = tf.to_raw(ev.point());
    result.events_raw.push_back(Event{raw[0], {raw[1], raw[2]}});
  }
  return result;
}

std::vector<ContextSnapshot> synthetic_snapshots(const RepPointGrid& grid,
                                                 const nn::NetworkConfig& net,
                                                 std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x736e6170));
  std::vector<ContextSnapshot> snaps(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    snaps[j].position = grid.points[j];
    if (variant_uses_image(net.variant)) {
      nn::Tensor patch({static_cast<std::size_t>(net.image_px),
                        static_cast<std::size_t>(net.image_px),
                        static_cast<std::size_t>(net.image_channels)});
      for (double& v : patch.v) v = rng.uniform();
      snaps[j].image_patch = std::move(patch);
    }
    if (variant_uses_text(net.variant)) {
      std::vector<int> ids(static_cast<std::size_t>(net.token_len));
      for (int& id : ids)
        id = static_cast<int>(rng.index(static_cast<std::size_t>(net.vocab_size)));
      snaps[j].token_ids = std::move(ids);
    }
  }
  return snaps;
}

}  // namespace dmpp
