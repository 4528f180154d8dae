// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/serialize.hpp"

#include <nlohmann/json.hpp>

#include "moce/deploy.hpp"
#include "moce/train.hpp"

namespace moce::io {

namespace {

using nlohmann::json;

json parse(const std::string& text, const char* what) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw Error(std::string(what) + ": invalid JSON");
  return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw Error(std::string(what) + ": unknown key \"" + it.key() + "\"");
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string model_config_to_json(const model::ModelConfig& cfg) {
  json j;
  j["image_size"] = cfg.image_size;
  j["patch_size"] = cfg.patch_size;
  j["channels"] = cfg.channels;
  j["encoder_depth"] = cfg.encoder_depth;
  j["decoder_depth"] = cfg.decoder_depth;
  j["embed_dim"] = cfg.embed_dim;
  j["decoder_dim"] = cfg.decoder_dim;
  j["heads"] = cfg.heads;
  j["mask_ratio"] = cfg.mask_ratio;
  j["experts"] = cfg.experts;
  j["active_experts"] = cfg.active_experts;
  j["moe_layers"] = cfg.moe_layers;
  j["noise_scale"] = cfg.noise_scale;
  j["loss_weights"] = {{"imbalance", cfg.loss_weights.imbalance},
                       {"importance", cfg.loss_weights.importance},
                       {"load", cfg.loss_weights.load},
                       {"distill", cfg.loss_weights.distill}};
  return j.dump();
}

model::ModelConfig model_config_from_json(const std::string& text) {
  json j = parse(text, "model config");
  reject_unknown(j,
                 {"image_size", "patch_size", "channels", "encoder_depth", "decoder_depth",
                  "embed_dim", "decoder_dim", "heads", "mask_ratio", "experts", "active_experts",
                  "moe_layers", "noise_scale", "loss_weights"},
                 "model config");
  model::ModelConfig cfg;
  get_if(j, "image_size", cfg.image_size);
  get_if(j, "patch_size", cfg.patch_size);
  get_if(j, "channels", cfg.channels);
  get_if(j, "encoder_depth", cfg.encoder_depth);
  get_if(j, "decoder_depth", cfg.decoder_depth);
  get_if(j, "embed_dim", cfg.embed_dim);
  get_if(j, "decoder_dim", cfg.decoder_dim);
  get_if(j, "heads", cfg.heads);
  get_if(j, "mask_ratio", cfg.mask_ratio);
  get_if(j, "experts", cfg.experts);
  get_if(j, "active_experts", cfg.active_experts);
  get_if(j, "moe_layers", cfg.moe_layers);
  get_if(j, "noise_scale", cfg.noise_scale);
  if (j.contains("loss_weights")) {
    const json& w = j.at("loss_weights");
    reject_unknown(w, {"imbalance", "importance", "load", "distill"}, "loss_weights");
    get_if(w, "imbalance", cfg.loss_weights.imbalance);
    get_if(w, "importance", cfg.loss_weights.importance);
    get_if(w, "load", cfg.loss_weights.load);
    get_if(w, "distill", cfg.loss_weights.distill);
  }
  cfg.validate();
  return cfg;
}

std::string train_config_to_json(const train::TrainConfig& cfg) {
  json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["base_lr"] = cfg.base_lr;
  j["lr_multiplier"] = cfg.lr_multiplier;
  j["weight_decay"] = cfg.weight_decay;
  j["momentum_betas"] = {cfg.beta1, cfg.beta2};
  j["warmup_frac"] = cfg.warmup_frac;
  j["seed"] = cfg.seed;
  j["init_checkpoint"] = cfg.init_checkpoint;
  j["expert_init_noise"] = cfg.expert_init_noise;
  j["shards"] = cfg.shards;
  return j.dump();
}

train::TrainConfig train_config_from_json(const std::string& text) {
  json j = parse(text, "train config");
  reject_unknown(j,
                 {"epochs", "batch_size", "base_lr", "lr_multiplier", "weight_decay",
                  "momentum_betas", "warmup_frac", "seed", "init_checkpoint",
                  "expert_init_noise", "shards"},
                 "train config");
  train::TrainConfig cfg;
  get_if(j, "epochs", cfg.epochs);
  get_if(j, "batch_size", cfg.batch_size);
  get_if(j, "base_lr", cfg.base_lr);
  get_if(j, "lr_multiplier", cfg.lr_multiplier);
  get_if(j, "weight_decay", cfg.weight_decay);
  if (j.contains("momentum_betas")) {
    auto betas = j.at("momentum_betas").get<std::vector<double>>();
    if (betas.size() != 2) throw Error("train config: momentum_betas wants two values");
    cfg.beta1 = betas[0];
    cfg.beta2 = betas[1];
  }
  get_if(j, "warmup_frac", cfg.warmup_frac);
  get_if(j, "seed", cfg.seed);
  get_if(j, "init_checkpoint", cfg.init_checkpoint);
  get_if(j, "expert_init_noise", cfg.expert_init_noise);
  get_if(j, "shards", cfg.shards);
  return cfg;
}

std::string corpus_config_to_json(const CorpusConfig& cfg) {
  json j;
  j["image_size"] = cfg.image_size;
  j["images_per_class"] = cfg.images_per_class;
  j["seed"] = cfg.seed;
  j["separability_threshold"] = cfg.separability_threshold;
  j["domains"] = json::array();
  for (const DomainSpec& d : cfg.domains) {
    j["domains"].push_back({{"family", d.family}, {"classes", d.classes}});
  }
  return j.dump();
}

CorpusConfig corpus_config_from_json(const std::string& text) {
  json j = parse(text, "corpus config");
  reject_unknown(j, {"image_size", "images_per_class", "seed", "separability_threshold", "domains"},
                 "corpus config");
  CorpusConfig cfg;
  cfg.domains.clear();
  get_if(j, "image_size", cfg.image_size);
  get_if(j, "images_per_class", cfg.images_per_class);
  get_if(j, "seed", cfg.seed);
  get_if(j, "separability_threshold", cfg.separability_threshold);
  if (j.contains("domains")) {
    for (const json& dj : j.at("domains")) {
      reject_unknown(dj, {"family", "classes"}, "domain spec");
      DomainSpec d;
      get_if(dj, "family", d.family);
      get_if(dj, "classes", d.classes);
      cfg.domains.push_back(std::move(d));
    }
  }
  return cfg;
}

std::string finetune_config_to_json(const deploy::FinetuneConfig& cfg) {
  json j;
  j["lr_grid"] = cfg.lr_grid;
  j["steps"] = cfg.steps;
  j["batch_size"] = cfg.batch_size;
  j["momentum"] = cfg.momentum;
  j["train_fraction"] = cfg.train_fraction;
  j["seed"] = cfg.seed;
  return j.dump();
}

deploy::FinetuneConfig finetune_config_from_json(const std::string& text) {
  json j = parse(text, "finetune config");
  reject_unknown(j, {"lr_grid", "steps", "batch_size", "momentum", "train_fraction", "seed"},
                 "finetune config");
  deploy::FinetuneConfig cfg;
  get_if(j, "lr_grid", cfg.lr_grid);
  get_if(j, "steps", cfg.steps);
  get_if(j, "batch_size", cfg.batch_size);
  get_if(j, "momentum", cfg.momentum);
  get_if(j, "train_fraction", cfg.train_fraction);
  get_if(j, "seed", cfg.seed);
  return cfg;
}

Checkpoint network_checkpoint(const model::MaeNetwork& net) {
  Checkpoint ckpt;
  json j;
  j["kind"] = "mae_network";
  j["model"] = json::parse(model_config_to_json(net.config()));
  ckpt.config_json = j.dump();
  for (const auto& [name, tensor] : net.params()) ckpt.set(name, tensor);
  return ckpt;
}

model::MaeNetwork network_from_checkpoint(const Checkpoint& ckpt) {
  json j = parse(ckpt.config_json, "checkpoint config");
  if (!j.contains("kind") || j.at("kind") != "mae_network") {
    throw Error("checkpoint: not a network checkpoint (kind=" +
                (j.contains("kind") ? j.at("kind").dump() : std::string("missing")) + ")");
  }
  model::ModelConfig cfg = model_config_from_json(j.at("model").dump());
  model::MaeNetwork net(cfg);
  for (auto& [name, tensor] : net.mutable_params()) {
    const Tensor& stored = ckpt.tensor(name);
    if (!stored.same_shape(tensor)) throw ShapeError("checkpoint tensor " + name, stored.shape,
                                                     tensor.shape);
    tensor = stored;
  }
  return net;
}

Checkpoint cluster_checkpoint(const cluster::ClusterModel& model) {
  Checkpoint ckpt;
  json j;
  j["kind"] = "cluster_model";
  j["cluster"] = {{"clusters", model.config.clusters},
                  {"entropy_weight", model.config.entropy_weight},
                  {"sinkhorn_iters", model.config.sinkhorn_iters},
                  {"epochs", model.config.epochs},
                  {"lr", model.config.lr},
                  {"momentum", model.config.momentum},
                  {"weight_decay", model.config.weight_decay}};
  ckpt.config_json = j.dump();
  ckpt.set("cluster.centroids", model.centroids);
  Tensor assign = Tensor::zeros({1, static_cast<int>(model.assignments.size())});
  for (std::size_t i = 0; i < model.assignments.size(); ++i) {
    assign.data[i] = static_cast<double>(model.assignments[i]);
  }
  ckpt.set("cluster.assignments", assign);
  Tensor cfgt = Tensor::row({static_cast<double>(model.config.clusters),
                             model.config.entropy_weight,
                             static_cast<double>(model.config.sinkhorn_iters),
                             static_cast<double>(model.config.epochs), model.config.lr,
                             model.config.momentum, model.config.weight_decay});
  ckpt.set("cluster.config", cfgt);
  return ckpt;
}

cluster::ClusterModel cluster_from_checkpoint(const Checkpoint& ckpt) {
  json j = parse(ckpt.config_json, "checkpoint config");
  if (!j.contains("kind") || j.at("kind") != "cluster_model") {
    throw Error("checkpoint: not a cluster-model checkpoint");
  }
  cluster::ClusterModel model;
  model.centroids = ckpt.tensor("cluster.centroids");
  const Tensor& a = ckpt.tensor("cluster.assignments");
  model.assignments.resize(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    model.assignments[i] = static_cast<int>(a.data[i]);
  }
  if (ckpt.tensor("cluster.config").numel() != 7) {
    throw Error("checkpoint: cluster.config wants 7 entries");
  }
  // The JSON mirror carries the config at full precision; the tensor copy is
  // the container-level record.
  const json& c = j.at("cluster");
  model.config.clusters = c.at("clusters").get<int>();
  model.config.entropy_weight = c.at("entropy_weight").get<double>();
  model.config.sinkhorn_iters = c.at("sinkhorn_iters").get<int>();
  model.config.epochs = c.at("epochs").get<int>();
  model.config.lr = c.at("lr").get<double>();
  model.config.momentum = c.at("momentum").get<double>();
  model.config.weight_decay = c.at("weight_decay").get<double>();
  return model;
}

}  // namespace moce::io
