// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "moce/gate.hpp"
#include "moce/graph.hpp"
#include "moce/rng.hpp"
#include "moce/tensor.hpp"

namespace moce::model {

struct LossWeights {
  double imbalance = 0.01;
  double importance = 0.01;
  double load = 0.01;
  double distill = 0.01;
};

struct ModelConfig {
  int image_size = 32;
  int patch_size = 8;
  int channels = 1;
  int encoder_depth = 4;
  int decoder_depth = 1;
  int embed_dim = 32;
  int decoder_dim = 32;
  int heads = 4;
  double mask_ratio = 0.75;
  int experts = 8;         // N per expert bank
  int active_experts = 1;  // K
  std::vector<int> moe_layers;  // encoder blocks whose MLP is an expert bank
  double noise_scale = 0.0;     // gate noise std; 0 resolves to sqrt(1/N)
  LossWeights loss_weights;

  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * channels; }
  int encoder_hidden() const { return 4 * embed_dim; }
  int decoder_hidden() const { return 4 * decoder_dim; }
  double resolved_noise_scale() const;
  bool is_moe_layer(int block) const;
  void validate() const;
};

// Token ids covering [0, num_tokens) exactly once; |masked| =
// round(mask_ratio * num_tokens), drawn uniformly without replacement.
struct MaskSpec {
  std::vector<int> visible;
  std::vector<int> masked;
  std::uint64_t seed = 0;

  static MaskSpec all_visible(int num_tokens);
};

MaskSpec random_mask(int num_tokens, double mask_ratio, std::uint64_t seed);

// Image (h x w x c, channel-last, values in [0,1]) to tokens
// ((h/p)*(w/p) x p*p*c); token 0 is the top-left patch, patch pixels
// row-major channel-last. unpatchify is the exact inverse.
Tensor patchify(const Tensor& image, int patch_size);
Tensor unpatchify(const Tensor& tokens, int image_size, int patch_size, int channels);

enum class RoutingMode { kDense, kTokenGate, kClusterGate, kExpertAverage };

// Pre-drawn gate noise, one rows x N tensor per MoE layer (in moe_layers
// order). Training draws these up front, in batch order, so shard-parallel
// execution cannot reorder the noise stream.
struct GateNoise {
  std::vector<Tensor> per_layer;
};

GateNoise draw_gate_noise(const ModelConfig& cfg, RoutingMode mode, int visible_tokens, Rng& rng);

struct ForwardOptions {
  RoutingMode mode = RoutingMode::kDense;
  int cluster_id = -1;              // cluster-gate mode
  const Tensor* centroids = nullptr;  // cluster-gate mode, d x m
  const GateNoise* noise = nullptr;   // nullptr = noise off
  bool with_decoder = true;
};

struct LayerRouting {
  int block = -1;
  nn::Value probs;   // rows x N pre-TopK softmax the decision used
  nn::Value logits;  // rows x N clean logits (load-loss input)
  std::vector<GateDecision> decisions;  // one per image (cluster) or per token
};

struct ForwardResult {
  nn::Value latents;  // V x E encoder output
  nn::Value pooled;   // 1 x E mean over encoder output tokens
  nn::Value pred;     // T x P predicted patch pixels (with_decoder only)
  std::vector<LayerRouting> routing;
};

// Masked-autoencoder transformer whose designated encoder MLP layers are
// expert banks. Parameters live in a name-keyed registry; dotted names are
// the serialization contract ("encoder.block3.mlp.expert5.w1", ...).
class MaeNetwork {
 public:
  explicit MaeNetwork(ModelConfig cfg);
  static MaeNetwork init(ModelConfig cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  const std::map<std::string, Tensor>& params() const { return params_; }
  std::map<std::string, Tensor>& mutable_params() { return params_; }
  const Tensor& param(const std::string& name) const;
  Tensor& mutable_param(const std::string& name);
  std::size_t parameter_count() const;

 private:
  void build_registry();
  ModelConfig cfg_;
  std::map<std::string, Tensor> params_;
};

// Binds one network's parameters into one graph (as gradient leaves when
// trainable, constants otherwise) and builds forward passes on it. Several
// binders may share a graph; the distillation dense path uses a second,
// non-trainable binder so no gradient reaches it.
class NetBinder {
 public:
  NetBinder(const MaeNetwork& net, nn::Graph& graph, bool trainable);

  nn::Value leaf(const std::string& name);
  const std::map<std::string, nn::Value>& leaves() const { return leaves_; }
  const MaeNetwork& net() const { return *net_; }
  nn::Graph& graph() { return *graph_; }

  // tokens: T x P patchified image. Encoder consumes mask.visible only.
  ForwardResult forward(const Tensor& tokens, const MaskSpec& mask, const ForwardOptions& opt);

 private:
  nn::Value attention(nn::Value x, const std::string& prefix, int dim);
  nn::Value dense_mlp(nn::Value h, const std::string& prefix);
  nn::Value expert_mlp(nn::Value h, const std::string& prefix, int expert);
  nn::Value moe_mlp(nn::Value h, int block, const ForwardOptions& opt, int noise_slot,
                    LayerRouting* routing);

  const MaeNetwork* net_;
  nn::Graph* graph_;
  bool trainable_;
  std::map<std::string, nn::Value> leaves_;
};

// Mean squared error over masked tokens' pixels only; visible tokens are
// excluded by construction.
nn::Value mae_loss(nn::Value pred, const Tensor& target_tokens, const MaskSpec& mask);

// Inference-mode whole-image forward; returns predicted tokens (T x P).
Tensor predict_tokens(const MaeNetwork& net, const Tensor& tokens, const MaskSpec& mask,
                      RoutingMode mode, int cluster_id = -1, const Tensor* centroids = nullptr);

// Encoder features for a set of images: all patches visible, noise off,
// mean-pooled per image, columns normalized to unit length. d x n output.
// Dense (non-MoE) networks only; clustering and deployment both key off the
// dense MAE's features.
Tensor extract_features(const MaeNetwork& net, const std::vector<Tensor>& images);

}  // namespace moce::model
