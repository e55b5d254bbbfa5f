#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dmpp/context.hpp"
#include "dmpp/tape.hpp"
#include "dmpp/tensor.hpp"

namespace dmpp::nn {

enum class Mode { Train, Eval };

/// Sizes of every block of the mixture-weight network.
struct NetworkConfig {
  Variant variant = Variant::Naive;
  int fusion_layers = 4;        // hidden layers after the concatenation
  int fusion_units = 32;        // units per fusion layer
  int attention_dim = 32;       // d_a
  int attention_rows = 1;       // r
  int image_px = 10;            // square patch side after pooling
  int image_channels = 3;
  int image_conv_channels = 8;  // channels of the post-attention conv stack
  int image_fc_width = 512;
  int token_len = 5;
  int vocab_size = 202;         // embedding rows, PAD/UNK included
  int embed_dim = 16;
  int text_hidden = 16;         // width of the hidden word vectors
  int text_conv_channels = 8;
  int text_fc_width = 8;
  double dropout_rate = 0.1;    // text branch only
  bool unused_image_branch = false;  // second conv branch of the image block;
                                     // computed but never consumed downstream

  void validate() const;
};

/// Named parameter tensor with a gradient slot of identical shape. `l2`
/// marks tensors subject to weight decay (weights yes, biases and kernel
/// bandwidths no). fan_in/fan_out drive the init scale.
struct ParamEntry {
  std::string name;
  Tensor value;
  Tensor grad;
  bool l2 = false;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
};

class ParameterStore {
 public:
  int add(const std::string& name, std::vector<std::size_t> shape, bool l2,
          std::size_t fan_in = 0, std::size_t fan_out = 0);
  int find(std::string_view name) const;     // -1 when absent
  int require(std::string_view name) const;  // throws ConfigError when absent

  std::size_t count() const { return entries_.size(); }
  ParamEntry& entry(std::size_t i) { return entries_[i]; }
  const ParamEntry& entry(std::size_t i) const { return entries_[i]; }
  Tensor& value(int i) { return entries_[static_cast<std::size_t>(i)].value; }
  const Tensor& value(int i) const { return entries_[static_cast<std::size_t>(i)].value; }
  Tensor& grad(int i) { return entries_[static_cast<std::size_t>(i)].grad; }

  void zero_grads();
  void zero_values();
  std::size_t scalar_count() const;

 private:
  std::vector<ParamEntry> entries_;
  std::map<std::string, int, std::less<>> by_name_;
};

/// Registers every parameter tensor the variant needs, in a fixed order.
void register_network_params(ParameterStore& store, const NetworkConfig& config);

/// Weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero. Entries with
/// no fan information (e.g. externally added tensors) are left untouched.
void initialize_parameters(ParameterStore& store, std::uint64_t seed);

struct EncoderTapeResult {
  Tape::Id features = -1;
  Tape::Id attention = -1;
};

EncoderTapeResult build_image_encoder(Tape& tape, const ParameterStore& store,
                                      const NetworkConfig& config,
                                      const Tensor& patch);

EncoderTapeResult build_text_encoder(Tape& tape, const ParameterStore& store,
                                     const NetworkConfig& config,
                                     const std::vector<int>& token_ids,
                                     Mode mode, std::uint64_t dropout_seed);

/// Records the full forward pass for one snapshot and returns the scalar
/// node id of f = softplus(final linear unit). Optional out-params expose
/// the encoder feature/attention nodes for inspection.
Tape::Id build_fusion(Tape& tape, const ParameterStore& store,
                      const NetworkConfig& config, const ContextSnapshot& snap,
                      Mode mode, std::uint64_t dropout_seed,
                      EncoderTapeResult* image_out = nullptr,
                      EncoderTapeResult* text_out = nullptr);

struct EncoderOutputs {
  Tensor features;
  Tensor attention;  // (H,W) for images, (N_s) for text
};

EncoderOutputs image_attention_forward(const ParameterStore& store,
                                       const NetworkConfig& config,
                                       const Tensor& patch);

EncoderOutputs text_attention_forward(const ParameterStore& store,
                                      const NetworkConfig& config,
                                      const std::vector<int>& token_ids,
                                      Mode mode = Mode::Eval,
                                      std::uint64_t dropout_seed = 0);

double fusion_forward(const ParameterStore& store, const NetworkConfig& config,
                      const ContextSnapshot& snap, Mode mode = Mode::Eval,
                      std::uint64_t dropout_seed = 0);

/// Runs backward from a scalar node and adds the leaf adjoints into the
/// store's gradient slots. Repeated calls accumulate.
void backward_into(Tape& tape, Tape::Id root, double seed, ParameterStore& store);

}  // namespace dmpp::nn
