// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/net.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace moce::model {

double ModelConfig::resolved_noise_scale() const {
  return noise_scale > 0.0 ? noise_scale : std::sqrt(1.0 / experts);
}

bool ModelConfig::is_moe_layer(int block) const {
  return std::find(moe_layers.begin(), moe_layers.end(), block) != moe_layers.end();
}

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0) {
    throw Error("config: image size " + std::to_string(image_size) +
                " not divisible by patch size " + std::to_string(patch_size));
  }
  if (channels <= 0) throw Error("config: channels must be positive");
  if (encoder_depth <= 0 || decoder_depth <= 0) throw Error("config: depths must be positive");
  if (embed_dim <= 0 || decoder_dim <= 0) throw Error("config: dims must be positive");
  if (heads <= 0 || embed_dim % heads != 0 || decoder_dim % heads != 0) {
    throw Error("config: head count " + std::to_string(heads) + " must divide embed dims");
  }
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
    throw Error("config: mask ratio must lie in [0, 1)");
  }
  if (experts <= 0) throw Error("config: expert count must be positive");
  if (active_experts < 1 || active_experts > experts) {
    throw Error("config: K=" + std::to_string(active_experts) + " must satisfy 1 <= K <= N=" +
                std::to_string(experts));
  }
  std::set<int> seen;
  for (int b : moe_layers) {
    if (b < 0 || b >= encoder_depth) {
      throw Error("config: moe layer index " + std::to_string(b) + " out of range [0, " +
                  std::to_string(encoder_depth) + ")");
    }
    if (!seen.insert(b).second) throw Error("config: duplicate moe layer index " + std::to_string(b));
  }
}

MaskSpec MaskSpec::all_visible(int num_tokens) {
  MaskSpec m;
  m.visible.resize(static_cast<std::size_t>(num_tokens));
  std::iota(m.visible.begin(), m.visible.end(), 0);
  return m;
}

MaskSpec random_mask(int num_tokens, double mask_ratio, std::uint64_t seed) {
  if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) {
    throw Error("random_mask: mask ratio must lie in [0, 1)");
  }
  int masked = static_cast<int>(std::lround(mask_ratio * num_tokens));
  MaskSpec spec;
  spec.seed = seed;
  std::vector<int> order(static_cast<std::size_t>(num_tokens));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).fork("mask");
  rng.shuffle(order);
  spec.masked.assign(order.begin(), order.begin() + masked);
  spec.visible.assign(order.begin() + masked, order.end());
  // Sorted ids keep downstream gathers cache-friendly and make the spec a
  // pure function of the chosen set.
  std::sort(spec.masked.begin(), spec.masked.end());
  std::sort(spec.visible.begin(), spec.visible.end());
  return spec;
}

Tensor patchify(const Tensor& image, int patch_size) {
  if (image.shape.size() != 3) {
    throw Error("patchify: expected h x w x c image, got " + shape_str(image.shape));
  }
  const int h = image.shape[0], w = image.shape[1], c = image.shape[2];
  if (h % patch_size != 0 || w % patch_size != 0) {
    throw Error("patchify: image " + shape_str(image.shape) + " not divisible by patch size " +
                std::to_string(patch_size));
  }
  const int gh = h / patch_size, gw = w / patch_size;
  Tensor tokens = Tensor::zeros({gh * gw, patch_size * patch_size * c});
  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      int t = gy * gw + gx;
      int out = 0;
      for (int py = 0; py < patch_size; ++py)
        for (int px = 0; px < patch_size; ++px)
          for (int ch = 0; ch < c; ++ch) {
            std::size_t src = (static_cast<std::size_t>(gy * patch_size + py) * w +
                               (gx * patch_size + px)) * c + ch;
            tokens.at(t, out++) = image.data[src];
          }
    }
  return tokens;
}

Tensor unpatchify(const Tensor& tokens, int image_size, int patch_size, int channels) {
  const int g = image_size / patch_size;
  if (image_size % patch_size != 0 || tokens.rows() != g * g ||
      tokens.cols() != patch_size * patch_size * channels) {
    throw ShapeError("unpatchify", tokens.shape,
                     {g * g, patch_size * patch_size * channels});
  }
  Tensor image = Tensor::zeros({image_size, image_size, channels});
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx) {
      int t = gy * g + gx;
      int in = 0;
      for (int py = 0; py < patch_size; ++py)
        for (int px = 0; px < patch_size; ++px)
          for (int ch = 0; ch < channels; ++ch) {
            std::size_t dst = (static_cast<std::size_t>(gy * patch_size + py) * image_size +
                               (gx * patch_size + px)) * channels + ch;
            image.data[dst] = tokens.at(t, in++);
          }
    }
  return image;
}

GateNoise draw_gate_noise(const ModelConfig& cfg, RoutingMode mode, int visible_tokens, Rng& rng) {
  GateNoise noise;
  if (mode != RoutingMode::kTokenGate && mode != RoutingMode::kClusterGate) return noise;
  const int rows = mode == RoutingMode::kTokenGate ? visible_tokens : 1;
  const double std_dev = cfg.resolved_noise_scale();
  for (std::size_t l = 0; l < cfg.moe_layers.size(); ++l) {
    Tensor t = Tensor::zeros({rows, cfg.experts});
    for (double& v : t.data) v = rng.normal(0.0, std_dev);
    noise.per_layer.push_back(std::move(t));
  }
  return noise;
}

// ---------------------------------------------------------------------------
// Parameter registry.

namespace {

enum class Init { kNormal, kZeros, kOnes };

struct ParamDef {
  std::string name;
  std::vector<int> shape;
  Init init;
};

void block_defs(std::vector<ParamDef>& defs, const std::string& prefix, int dim, bool moe,
                const ModelConfig& cfg) {
  defs.push_back({prefix + ".ln1.gamma", {1, dim}, Init::kOnes});
  defs.push_back({prefix + ".ln1.beta", {1, dim}, Init::kZeros});
  defs.push_back({prefix + ".attn.wqkv", {dim, 3 * dim}, Init::kNormal});
  defs.push_back({prefix + ".attn.bqkv", {1, 3 * dim}, Init::kZeros});
  defs.push_back({prefix + ".attn.wo", {dim, dim}, Init::kNormal});
  defs.push_back({prefix + ".attn.bo", {1, dim}, Init::kZeros});
  defs.push_back({prefix + ".ln2.gamma", {1, dim}, Init::kOnes});
  defs.push_back({prefix + ".ln2.beta", {1, dim}, Init::kZeros});
  const int hidden = 4 * dim;
  if (moe) {
    for (int e = 0; e < cfg.experts; ++e) {
      std::string ep = prefix + ".mlp.expert" + std::to_string(e);
      defs.push_back({ep + ".w1", {dim, hidden}, Init::kNormal});
      defs.push_back({ep + ".b1", {1, hidden}, Init::kZeros});
      defs.push_back({ep + ".w2", {hidden, dim}, Init::kNormal});
      defs.push_back({ep + ".b2", {1, dim}, Init::kZeros});
    }
    defs.push_back({prefix + ".mlp.gate.wg", {cfg.experts, dim}, Init::kNormal});
  } else {
    defs.push_back({prefix + ".mlp.w1", {dim, hidden}, Init::kNormal});
    defs.push_back({prefix + ".mlp.b1", {1, hidden}, Init::kZeros});
    defs.push_back({prefix + ".mlp.w2", {hidden, dim}, Init::kNormal});
    defs.push_back({prefix + ".mlp.b2", {1, dim}, Init::kZeros});
  }
}

std::vector<ParamDef> registry_defs(const ModelConfig& cfg) {
  std::vector<ParamDef> defs;
  defs.push_back({"patch_embed.w", {cfg.patch_dim(), cfg.embed_dim}, Init::kNormal});
  defs.push_back({"patch_embed.b", {1, cfg.embed_dim}, Init::kZeros});
  defs.push_back({"pos_embed.enc", {cfg.tokens(), cfg.embed_dim}, Init::kNormal});
  for (int i = 0; i < cfg.encoder_depth; ++i) {
    block_defs(defs, "encoder.block" + std::to_string(i), cfg.embed_dim, cfg.is_moe_layer(i), cfg);
  }
  defs.push_back({"encoder.norm.gamma", {1, cfg.embed_dim}, Init::kOnes});
  defs.push_back({"encoder.norm.beta", {1, cfg.embed_dim}, Init::kZeros});
  defs.push_back({"decoder.embed.w", {cfg.embed_dim, cfg.decoder_dim}, Init::kNormal});
  defs.push_back({"decoder.embed.b", {1, cfg.decoder_dim}, Init::kZeros});
  defs.push_back({"decoder.mask_token", {1, cfg.decoder_dim}, Init::kNormal});
  defs.push_back({"pos_embed.dec", {cfg.tokens(), cfg.decoder_dim}, Init::kNormal});
  for (int i = 0; i < cfg.decoder_depth; ++i) {
    block_defs(defs, "decoder.block" + std::to_string(i), cfg.decoder_dim, false, cfg);
  }
  defs.push_back({"decoder.norm.gamma", {1, cfg.decoder_dim}, Init::kOnes});
  defs.push_back({"decoder.norm.beta", {1, cfg.decoder_dim}, Init::kZeros});
  defs.push_back({"decoder.head.w", {cfg.decoder_dim, cfg.patch_dim()}, Init::kNormal});
  defs.push_back({"decoder.head.b", {1, cfg.patch_dim()}, Init::kZeros});
  return defs;
}

constexpr double kInitStd = 0.02;

}  // namespace

MaeNetwork::MaeNetwork(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  // Canonical block order: routing entries, noise slots and serialized names
  // all follow ascending block index.
  std::sort(cfg_.moe_layers.begin(), cfg_.moe_layers.end());
  build_registry();
}

void MaeNetwork::build_registry() {
  for (const ParamDef& def : registry_defs(cfg_)) {
    Tensor t = Tensor::zeros(def.shape);
    if (def.init == Init::kOnes) t = Tensor::full(def.shape, 1.0);
    params_.emplace(def.name, std::move(t));
  }
}

MaeNetwork MaeNetwork::init(ModelConfig cfg, std::uint64_t seed) {
  MaeNetwork net(std::move(cfg));
  Rng base(seed);
  for (const ParamDef& def : registry_defs(net.cfg_)) {
    if (def.init != Init::kNormal) continue;
    // Per-tensor substream: init is independent of registry iteration order.
    Rng rng = base.fork(def.name);
    Tensor& t = net.mutable_param(def.name);
    for (double& v : t.data) v = rng.normal(0.0, kInitStd);
  }
  return net;
}

const Tensor& MaeNetwork::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter \"" + name + "\"");
  return it->second;
}

Tensor& MaeNetwork::mutable_param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter \"" + name + "\"");
  return it->second;
}

std::size_t MaeNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Forward graph construction.

NetBinder::NetBinder(const MaeNetwork& net, nn::Graph& graph, bool trainable)
    : net_(&net), graph_(&graph), trainable_(trainable) {}

nn::Value NetBinder::leaf(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  nn::Value v = trainable_ ? graph_->param(net_->param(name)) : graph_->constant(net_->param(name));
  leaves_.emplace(name, v);
  return v;
}

nn::Value NetBinder::attention(nn::Value x, const std::string& prefix, int dim) {
  const int heads = net_->config().heads;
  const int head_dim = dim / heads;
  nn::Value qkv = nn::add_row_bias(nn::matmul(x, leaf(prefix + ".wqkv")), leaf(prefix + ".bqkv"));
  std::vector<nn::Value> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    nn::Value q = nn::slice_cols(qkv, h * head_dim, head_dim);
    nn::Value k = nn::slice_cols(qkv, dim + h * head_dim, head_dim);
    nn::Value v = nn::slice_cols(qkv, 2 * dim + h * head_dim, head_dim);
    nn::Value scores = nn::scale(nn::matmul(q, nn::transpose(k)), 1.0 / std::sqrt(head_dim));
    outs.push_back(nn::matmul(nn::softmax_rows(scores), v));
  }
  nn::Value merged = heads == 1 ? outs[0] : nn::concat_cols(outs);
  return nn::add_row_bias(nn::matmul(merged, leaf(prefix + ".wo")), leaf(prefix + ".bo"));
}

nn::Value NetBinder::dense_mlp(nn::Value h, const std::string& prefix) {
  nn::Value a = nn::add_row_bias(nn::matmul(h, leaf(prefix + ".w1")), leaf(prefix + ".b1"));
  return nn::add_row_bias(nn::matmul(nn::gelu(a), leaf(prefix + ".w2")), leaf(prefix + ".b2"));
}

nn::Value NetBinder::expert_mlp(nn::Value h, const std::string& prefix, int expert) {
  return dense_mlp(h, prefix + ".expert" + std::to_string(expert));
}

nn::Value NetBinder::moe_mlp(nn::Value h, int block, const ForwardOptions& opt, int noise_slot,
                             LayerRouting* routing) {
  const ModelConfig& cfg = net_->config();
  const std::string prefix = "encoder.block" + std::to_string(block) + ".mlp";
  const int n_experts = cfg.experts;

  if (opt.mode == RoutingMode::kExpertAverage) {
    nn::Value acc = expert_mlp(h, prefix, 0);
    for (int e = 1; e < n_experts; ++e) acc = nn::add(acc, expert_mlp(h, prefix, e));
    return nn::scale(acc, 1.0 / n_experts);
  }

  nn::Value gate_w = leaf(prefix + ".gate.wg");
  nn::Value gate_in;
  if (opt.mode == RoutingMode::kClusterGate) {
    if (opt.centroids == nullptr || opt.cluster_id < 0 ||
        opt.cluster_id >= opt.centroids->cols()) {
      throw Error("forward: cluster-gate mode needs centroids and a cluster id in range");
    }
    Tensor emb = Tensor::zeros({1, opt.centroids->rows()});
    for (int r = 0; r < opt.centroids->rows(); ++r) emb.data[r] = opt.centroids->at(r, opt.cluster_id);
    gate_in = graph_->constant(std::move(emb));
  } else {
    gate_in = h;  // token-gate: every token routes on its own embedding
  }

  nn::Value logits = nn::matmul(gate_in, nn::transpose(gate_w));
  nn::Value gated = logits;
  if (opt.noise != nullptr) {
    const Tensor& noise = opt.noise->per_layer.at(static_cast<std::size_t>(noise_slot));
    gated = nn::add(logits, graph_->constant(noise));
  }
  nn::Value probs = nn::softmax_rows(gated);
  const Tensor& probs_val = graph_->value(probs);

  routing->block = block;
  routing->probs = probs;
  routing->logits = logits;

  const int rows = probs_val.rows();
  routing->decisions.reserve(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    std::span<const double> row(probs_val.data.data() + static_cast<std::size_t>(r) * n_experts,
                                static_cast<std::size_t>(n_experts));
    routing->decisions.push_back(decide(row, cfg.active_experts));
  }

  if (opt.mode == RoutingMode::kClusterGate) {
    // One decision for every token of the image.
    const GateDecision& d = routing->decisions[0];
    nn::Value out;
    for (std::size_t i = 0; i < d.chosen.size(); ++i) {
      int e = d.chosen[i];
      nn::Value w = nn::select_entries(probs, {0}, {e});
      nn::Value term = nn::scale_by(expert_mlp(h, prefix, e), w);
      out = i == 0 ? term : nn::add(out, term);
    }
    return out;
  }

  // Token gate: group tokens by expert so unchosen experts are never run.
  const Tensor& hv = graph_->value(h);
  const int v_tokens = hv.rows();
  nn::Value out;
  bool first = true;
  for (int e = 0; e < n_experts; ++e) {
    std::vector<int> rows_e, cols_e;
    for (int t = 0; t < v_tokens; ++t) {
      const GateDecision& d = routing->decisions[static_cast<std::size_t>(t)];
      if (std::find(d.chosen.begin(), d.chosen.end(), e) != d.chosen.end()) {
        rows_e.push_back(t);
        cols_e.push_back(e);
      }
    }
    if (rows_e.empty()) continue;
    nn::Value w = nn::select_entries(probs, rows_e, cols_e);  // len x 1
    nn::Value inp = static_cast<int>(rows_e.size()) == v_tokens ? h : nn::gather_rows(h, rows_e);
    nn::Value contrib = nn::mul(expert_mlp(inp, prefix, e),
                                nn::broadcast_col(w, net_->config().embed_dim));
    if (static_cast<int>(rows_e.size()) != v_tokens) {
      contrib = nn::scatter_rows(contrib, rows_e, v_tokens);
    }
    out = first ? contrib : nn::add(out, contrib);
    first = false;
  }
  return out;
}

ForwardResult NetBinder::forward(const Tensor& tokens, const MaskSpec& mask,
                                 const ForwardOptions& opt) {
  const ModelConfig& cfg = net_->config();
  if (tokens.rows() != cfg.tokens() || tokens.cols() != cfg.patch_dim()) {
    throw ShapeError("forward (tokens)", tokens.shape, {cfg.tokens(), cfg.patch_dim()});
  }
  if (!cfg.moe_layers.empty() && opt.mode == RoutingMode::kClusterGate && opt.cluster_id < 0) {
    throw Error("forward: cluster-gate mode requires a cluster id");
  }
  if (cfg.moe_layers.empty() && opt.mode != RoutingMode::kDense) {
    throw Error("forward: network has no expert banks; use dense routing");
  }
  if (static_cast<int>(mask.visible.size() + mask.masked.size()) != cfg.tokens()) {
    throw Error("forward: mask spec covers " +
                std::to_string(mask.visible.size() + mask.masked.size()) + " tokens, expected " +
                std::to_string(cfg.tokens()));
  }

  ForwardResult result;
  nn::Graph& g = *graph_;

  nn::Value toks = g.constant(tokens);
  nn::Value x = nn::add_row_bias(nn::matmul(toks, leaf("patch_embed.w")), leaf("patch_embed.b"));
  x = nn::add(x, leaf("pos_embed.enc"));
  const bool partial = mask.visible.size() != static_cast<std::size_t>(cfg.tokens()) ||
                       !std::is_sorted(mask.visible.begin(), mask.visible.end());
  if (partial) x = nn::gather_rows(x, mask.visible);

  int noise_slot = 0;
  for (int b = 0; b < cfg.encoder_depth; ++b) {
    const std::string bp = "encoder.block" + std::to_string(b);
    x = nn::add(x, attention(nn::layer_norm_rows(x, leaf(bp + ".ln1.gamma"), leaf(bp + ".ln1.beta")),
                             bp + ".attn", cfg.embed_dim));
    nn::Value hidden =
        nn::layer_norm_rows(x, leaf(bp + ".ln2.gamma"), leaf(bp + ".ln2.beta"));
    nn::Value mlp_out;
    if (cfg.is_moe_layer(b) && opt.mode != RoutingMode::kDense) {
      LayerRouting routing;
      mlp_out = moe_mlp(hidden, b, opt, noise_slot, &routing);
      if (opt.mode != RoutingMode::kExpertAverage) result.routing.push_back(std::move(routing));
      ++noise_slot;
    } else if (cfg.is_moe_layer(b)) {
      throw Error("forward: dense routing requested on a network with expert banks");
    } else {
      mlp_out = dense_mlp(hidden, bp + ".mlp");
    }
    x = nn::add(x, mlp_out);
  }
  result.latents = nn::layer_norm_rows(x, leaf("encoder.norm.gamma"), leaf("encoder.norm.beta"));
  result.pooled = nn::scale(nn::col_sum(result.latents),
                            1.0 / static_cast<double>(mask.visible.size()));

  if (!opt.with_decoder) return result;

  nn::Value y = nn::add_row_bias(nn::matmul(result.latents, leaf("decoder.embed.w")),
                                 leaf("decoder.embed.b"));
  nn::Value full;
  if (mask.masked.empty()) {
    full = partial ? nn::scatter_rows(y, mask.visible, cfg.tokens()) : y;
  } else {
    nn::Value ones = g.constant(Tensor::full({static_cast<int>(mask.masked.size()), 1}, 1.0));
    nn::Value mask_rows = nn::matmul(ones, leaf("decoder.mask_token"));
    full = nn::add(nn::scatter_rows(y, mask.visible, cfg.tokens()),
                   nn::scatter_rows(mask_rows, mask.masked, cfg.tokens()));
  }
  full = nn::add(full, leaf("pos_embed.dec"));
  for (int b = 0; b < cfg.decoder_depth; ++b) {
    const std::string bp = "decoder.block" + std::to_string(b);
    full = nn::add(full, attention(nn::layer_norm_rows(full, leaf(bp + ".ln1.gamma"),
                                                       leaf(bp + ".ln1.beta")),
                                   bp + ".attn", cfg.decoder_dim));
    nn::Value hidden = nn::layer_norm_rows(full, leaf(bp + ".ln2.gamma"), leaf(bp + ".ln2.beta"));
    full = nn::add(full, dense_mlp(hidden, bp + ".mlp"));
  }
  full = nn::layer_norm_rows(full, leaf("decoder.norm.gamma"), leaf("decoder.norm.beta"));
  result.pred = nn::add_row_bias(nn::matmul(full, leaf("decoder.head.w")), leaf("decoder.head.b"));
  return result;
}

nn::Value mae_loss(nn::Value pred, const Tensor& target_tokens, const MaskSpec& mask) {
  if (mask.masked.empty()) throw Error("mae_loss: empty mask (no reconstruction targets)");
  nn::Graph& g = *pred.graph;
  const Tensor& p = g.value(pred);
  if (!p.same_shape(target_tokens)) throw ShapeError("mae_loss", p.shape, target_tokens.shape);
  nn::Value pm = nn::gather_rows(pred, mask.masked);
  nn::Value tm = nn::gather_rows(g.constant(target_tokens), mask.masked);
  return nn::mean_all(nn::square(nn::sub(pm, tm)));
}

Tensor predict_tokens(const MaeNetwork& net, const Tensor& tokens, const MaskSpec& mask,
                      RoutingMode mode, int cluster_id, const Tensor* centroids) {
  nn::Graph g;
  NetBinder binder(net, g, /*trainable=*/false);
  ForwardOptions opt;
  opt.mode = mode;
  opt.cluster_id = cluster_id;
  opt.centroids = centroids;
  opt.noise = nullptr;
  ForwardResult r = binder.forward(tokens, mask, opt);
  return g.value(r.pred);
}

Tensor extract_features(const MaeNetwork& net, const std::vector<Tensor>& images) {
  if (images.empty()) throw Error("extract_features: empty dataset");
  if (!net.config().moe_layers.empty()) {
    throw Error("extract_features: features come from the dense MAE, not an expert-bank network");
  }
  const ModelConfig& cfg = net.config();
  MaskSpec all = MaskSpec::all_visible(cfg.tokens());
  Tensor features = Tensor::zeros({cfg.embed_dim, static_cast<int>(images.size())});
  for (std::size_t i = 0; i < images.size(); ++i) {
    nn::Graph g;
    NetBinder binder(net, g, /*trainable=*/false);
    ForwardOptions opt;
    opt.mode = RoutingMode::kDense;
    opt.with_decoder = false;
    ForwardResult r = binder.forward(patchify(images[i], cfg.patch_size), all, opt);
    const Tensor& pooled = g.value(r.pooled);
    double norm = 0.0;
    for (double v : pooled.data) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw Error("extract_features: zero-norm feature for image " +
                                  std::to_string(i));
    for (int r2 = 0; r2 < cfg.embed_dim; ++r2) features.at(r2, static_cast<int>(i)) =
        pooled.data[static_cast<std::size_t>(r2)] / norm;
  }
  return features;
}

}  // namespace moce::model
