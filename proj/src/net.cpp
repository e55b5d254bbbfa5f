#include "dmpp/net.hpp"

#include <cmath>

#include "dmpp/common.hpp"

namespace dmpp::nn {

void NetworkConfig::validate() const {
  if (fusion_layers < 1) throw ConfigError("network: fusion_layers must be >= 1");
  if (fusion_units < 1) throw ConfigError("network: fusion_units must be >= 1");
  if (attention_dim < 1 || attention_rows < 1)
    throw ConfigError("network: attention dimensions must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("network: dropout_rate must be in [0,1)");
  if (variant_uses_image(variant) && (image_px < 1 || image_channels < 1))
    throw ConfigError("network: invalid image dimensions");
  if (variant_uses_text(variant) &&
      (token_len < 1 || vocab_size < 2 || embed_dim < 1 || text_hidden < 1))
    throw ConfigError("network: invalid text dimensions");
}

int ParameterStore::add(const std::string& name, std::vector<std::size_t> shape,
                        bool l2, std::size_t fan_in, std::size_t fan_out) {
  if (by_name_.count(name)) throw ConfigError("parameter registered twice: " + name);
  ParamEntry e;
  e.name = name;
  e.value = Tensor(shape);
  e.grad = Tensor(std::move(shape));
  e.l2 = l2;
  e.fan_in = fan_in;
  e.fan_out = fan_out;
  entries_.push_back(std::move(e));
  const int idx = static_cast<int>(entries_.size()) - 1;
  by_name_.emplace(name, idx);
  return idx;
}

int ParameterStore::find(std::string_view name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

int ParameterStore::require(std::string_view name) const {
  const int idx = find(name);
  if (idx < 0) throw ConfigError("unknown parameter: " + std::string(name));
  return idx;
}

void ParameterStore::zero_grads() {
  for (ParamEntry& e : entries_) e.grad.fill(0.0);
}

void ParameterStore::zero_values() {
  for (ParamEntry& e : entries_) e.value.fill(0.0);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const ParamEntry& e : entries_) n += e.value.size();
  return n;
}

namespace {

using S = std::vector<std::size_t>;

std::size_t uz(int v) { return static_cast<std::size_t>(v); }

void add_dense(ParameterStore& s, const std::string& prefix, int out, int in) {
  s.add(prefix + "_w", S{uz(out), uz(in)}, true, uz(in), uz(out));
  s.add(prefix + "_b", S{uz(out)}, false);
}

void add_conv2d(ParameterStore& s, const std::string& prefix, int cin, int cout) {
  s.add(prefix + "_w", S{3, 3, uz(cin), uz(cout)}, true, 9 * uz(cin), 9 * uz(cout));
  s.add(prefix + "_b", S{uz(cout)}, false);
}

void add_conv1d(ParameterStore& s, const std::string& prefix, int cin, int cout) {
  s.add(prefix + "_w", S{3, uz(cin), uz(cout)}, true, 3 * uz(cin), 3 * uz(cout));
  s.add(prefix + "_b", S{uz(cout)}, false);
}

}  // namespace

void register_network_params(ParameterStore& store, const NetworkConfig& cfg) {
  cfg.validate();
  add_dense(store, "fus/pos1", 32, 3);
  add_dense(store, "fus/pos2", 32, 32);

  int fusion_in = 32;
  if (variant_uses_image(cfg.variant)) {
    add_conv2d(store, "img/conv_in", cfg.image_channels, cfg.image_channels);
    if (cfg.unused_image_branch)
      add_conv2d(store, "img/convq", cfg.image_channels, cfg.image_channels);
    store.add("img/attn_m1", S{uz(cfg.attention_dim), uz(cfg.image_channels)},
              true, uz(cfg.image_channels), uz(cfg.attention_dim));
    store.add("img/attn_m2", S{uz(cfg.attention_rows), uz(cfg.attention_dim)},
              true, uz(cfg.attention_dim), uz(cfg.attention_rows));
    add_conv2d(store, "img/conv1", cfg.image_channels, cfg.image_conv_channels);
    add_conv2d(store, "img/conv2", cfg.image_conv_channels, cfg.image_conv_channels);
    add_conv2d(store, "img/conv3", cfg.image_conv_channels, cfg.image_conv_channels);
    const int flat = cfg.image_px * cfg.image_px * cfg.image_conv_channels;
    add_dense(store, "img/fc1", cfg.image_fc_width, flat);
    add_dense(store, "img/fc2", cfg.image_fc_width, cfg.image_fc_width);
    fusion_in += cfg.image_fc_width;
  }
  if (variant_uses_text(cfg.variant)) {
    store.add("txt/embed", S{uz(cfg.vocab_size), uz(cfg.embed_dim)}, true,
              uz(cfg.vocab_size), uz(cfg.embed_dim));
    add_conv1d(store, "txt/conv_in", cfg.embed_dim, cfg.text_hidden);
    store.add("txt/attn_t1", S{uz(cfg.attention_dim), uz(cfg.text_hidden)},
              true, uz(cfg.text_hidden), uz(cfg.attention_dim));
    store.add("txt/attn_t2", S{uz(cfg.attention_rows), uz(cfg.attention_dim)},
              true, uz(cfg.attention_dim), uz(cfg.attention_rows));
    add_conv1d(store, "txt/conv1", cfg.text_hidden, cfg.text_conv_channels);
    add_conv1d(store, "txt/conv2", cfg.text_conv_channels, cfg.text_conv_channels);
    add_conv1d(store, "txt/conv3", cfg.text_conv_channels, cfg.text_conv_channels);
    add_dense(store, "txt/fc1", cfg.text_fc_width,
              cfg.token_len * cfg.text_conv_channels);
    add_dense(store, "txt/fc2", cfg.text_fc_width, cfg.text_fc_width);
    fusion_in += cfg.text_fc_width;
  }

  int in = fusion_in;
  for (int l = 0; l < cfg.fusion_layers; ++l) {
    add_dense(store, "fus/h" + std::to_string(l), cfg.fusion_units, in);
    in = cfg.fusion_units;
  }
  add_dense(store, "fus/out", 1, cfg.fusion_units);
}

void initialize_parameters(ParameterStore& store, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x494e4954));  // "INIT"
  for (std::size_t i = 0; i < store.count(); ++i) {
    ParamEntry& e = store.entry(i);
    if (e.fan_in == 0 && e.fan_out == 0) continue;  // biases and foreign tensors
    const double bound =
        std::sqrt(6.0 / static_cast<double>(e.fan_in + e.fan_out));
    for (double& v : e.value.v) v = rng.uniform(-bound, bound);
  }
}

namespace {

Tape::Id leaf_of(Tape& tape, const ParameterStore& store, std::string_view name) {
  const int idx = store.require(name);
  return tape.leaf(store.value(idx), idx);
}

Tape::Id dense_relu(Tape& tape, const ParameterStore& store,
                    const std::string& prefix, Tape::Id x) {
  return tape.relu(tape.dense(leaf_of(tape, store, prefix + "_w"), x,
                              leaf_of(tape, store, prefix + "_b")));
}

}  // namespace

EncoderTapeResult build_image_encoder(Tape& tape, const ParameterStore& store,
                                      const NetworkConfig& cfg,
                                      const Tensor& patch) {
  const std::size_t px = uz(cfg.image_px);
  const std::size_t ch = uz(cfg.image_channels);
  if (patch.shape != S{px, px, ch})
    throw ConfigError("image attention: patch shape mismatch");

  const Tape::Id input = tape.constant(patch);
  const Tape::Id p = tape.relu(tape.conv2d_same3(
      input, leaf_of(tape, store, "img/conv_in_w"),
      leaf_of(tape, store, "img/conv_in_b")));
  if (cfg.unused_image_branch) {
    // Parallel branch of the original architecture; nothing consumes it, so
    // it contributes no gradient.
    tape.relu(tape.conv2d_same3(input, tape.constant(store.value(store.require("img/convq_w"))),
                                tape.constant(store.value(store.require("img/convq_b")))));
  }

  const std::size_t positions = px * px;
  const Tape::Id p_rows = tape.reshape(p, S{positions, ch});
  const Tape::Id pre1 = tape.matmul_nt(leaf_of(tape, store, "img/attn_m1"), p_rows);
  const Tape::Id pre2 =
      tape.matmul(leaf_of(tape, store, "img/attn_m2"), tape.tanh_op(pre1));
  const Tape::Id attn = tape.reshape(tape.softmax_all(pre2), S{positions});

  Tape::Id h = tape.scale_rows(p, attn);
  h = tape.relu(tape.conv2d_same3(h, leaf_of(tape, store, "img/conv1_w"),
                                  leaf_of(tape, store, "img/conv1_b")));
  h = tape.relu(tape.conv2d_same3(h, leaf_of(tape, store, "img/conv2_w"),
                                  leaf_of(tape, store, "img/conv2_b")));
  h = tape.relu(tape.conv2d_same3(h, leaf_of(tape, store, "img/conv3_w"),
                                  leaf_of(tape, store, "img/conv3_b")));
  h = tape.reshape(h, S{positions * uz(cfg.image_conv_channels)});
  h = dense_relu(tape, store, "img/fc1", h);
  h = dense_relu(tape, store, "img/fc2", h);

  return {h, attn};
}

EncoderTapeResult build_text_encoder(Tape& tape, const ParameterStore& store,
                                     const NetworkConfig& cfg,
                                     const std::vector<int>& token_ids,
                                     Mode mode, std::uint64_t dropout_seed) {
  if (token_ids.size() != uz(cfg.token_len))
    throw ConfigError("text attention: token count mismatch");

  const Tape::Id emb =
      tape.gather_rows(leaf_of(tape, store, "txt/embed"), token_ids);
  const Tape::Id hidden = tape.relu(tape.conv1d_same3(
      emb, leaf_of(tape, store, "txt/conv_in_w"),
      leaf_of(tape, store, "txt/conv_in_b")));

  const Tape::Id pre1 =
      tape.matmul_nt(leaf_of(tape, store, "txt/attn_t1"), hidden);
  const Tape::Id pre2 =
      tape.matmul(leaf_of(tape, store, "txt/attn_t2"), tape.tanh_op(pre1));
  const Tape::Id attn =
      tape.reshape(tape.softmax_all(pre2), S{uz(cfg.token_len)});

  Tape::Id h = tape.scale_rows(hidden, attn);
  h = tape.relu(tape.conv1d_same3(h, leaf_of(tape, store, "txt/conv1_w"),
                                  leaf_of(tape, store, "txt/conv1_b")));
  h = tape.relu(tape.conv1d_same3(h, leaf_of(tape, store, "txt/conv2_w"),
                                  leaf_of(tape, store, "txt/conv2_b")));
  h = tape.relu(tape.conv1d_same3(h, leaf_of(tape, store, "txt/conv3_w"),
                                  leaf_of(tape, store, "txt/conv3_b")));
  h = tape.reshape(h, S{uz(cfg.token_len) * uz(cfg.text_conv_channels)});

  const double rate = mode == Mode::Train ? cfg.dropout_rate : 0.0;
  h = dense_relu(tape, store, "txt/fc1", h);
  h = tape.dropout(h, rate, mix_seed(dropout_seed, 1));
  h = dense_relu(tape, store, "txt/fc2", h);
  h = tape.dropout(h, rate, mix_seed(dropout_seed, 2));

  return {h, attn};
}

Tape::Id build_fusion(Tape& tape, const ParameterStore& store,
                      const NetworkConfig& cfg, const ContextSnapshot& snap,
                      Mode mode, std::uint64_t dropout_seed,
                      EncoderTapeResult* image_out,
                      EncoderTapeResult* text_out) {
  Tensor pos(S{3});
  pos[0] = snap.position[0];
  pos[1] = snap.position[1];
  pos[2] = snap.position[2];
  Tape::Id p = tape.constant(std::move(pos));
  p = dense_relu(tape, store, "fus/pos1", p);
  p = dense_relu(tape, store, "fus/pos2", p);

  std::vector<Tape::Id> parts{p};
  if (variant_uses_image(cfg.variant)) {
    if (!snap.image_patch)
      throw ConfigError("fusion: variant needs an image patch but the snapshot has none");
    const EncoderTapeResult img =
        build_image_encoder(tape, store, cfg, *snap.image_patch);
    parts.push_back(img.features);
    if (image_out) *image_out = img;
  }
  if (variant_uses_text(cfg.variant)) {
    if (!snap.token_ids)
      throw ConfigError("fusion: variant needs token ids but the snapshot has none");
    const EncoderTapeResult txt = build_text_encoder(
        tape, store, cfg, *snap.token_ids, mode, mix_seed(dropout_seed, 0x74787464));
    parts.push_back(txt.features);
    if (text_out) *text_out = txt;
  }

  Tape::Id h = parts.size() == 1 ? parts[0] : tape.concat(parts);
  for (int l = 0; l < cfg.fusion_layers; ++l) {
    h = dense_relu(tape, store, "fus/h" + std::to_string(l), h);
  }
  const Tape::Id z = tape.dense(leaf_of(tape, store, "fus/out_w"), h,
                                leaf_of(tape, store, "fus/out_b"));
  return tape.softplus(z);
}

EncoderOutputs image_attention_forward(const ParameterStore& store,
                                       const NetworkConfig& cfg,
                                       const Tensor& patch) {
  Tape tape;
  const EncoderTapeResult r = build_image_encoder(tape, store, cfg, patch);
  EncoderOutputs out;
  out.features = tape.value(r.features);
  out.attention = tape.value(r.attention);
  out.attention.shape = {uz(cfg.image_px), uz(cfg.image_px)};
  return out;
}

EncoderOutputs text_attention_forward(const ParameterStore& store,
                                      const NetworkConfig& cfg,
                                      const std::vector<int>& token_ids,
                                      Mode mode, std::uint64_t dropout_seed) {
  Tape tape;
  const EncoderTapeResult r =
      build_text_encoder(tape, store, cfg, token_ids, mode, dropout_seed);
  return {tape.value(r.features), tape.value(r.attention)};
}

double fusion_forward(const ParameterStore& store, const NetworkConfig& cfg,
                      const ContextSnapshot& snap, Mode mode,
                      std::uint64_t dropout_seed) {
  Tape tape;
  const Tape::Id f = build_fusion(tape, store, cfg, snap, mode, dropout_seed);
  return tape.value(f)[0];
}

void backward_into(Tape& tape, Tape::Id root, double seed, ParameterStore& store) {
  tape.backward(root, seed);
  tape.for_each_leaf_grad([&](int param_index, const Tensor& grad) {
    Tensor& sink = store.grad(param_index);
    for (std::size_t i = 0; i < grad.size(); ++i) sink[i] += grad[i];
  });
}

}  // namespace dmpp::nn
