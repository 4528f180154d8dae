// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "moce/checkpoint.hpp"
#include "moce/clustering.hpp"
#include "moce/dataset.hpp"
#include "moce/net.hpp"

namespace moce::train {
struct TrainConfig;
}
namespace moce::deploy {
struct FinetuneConfig;
}

namespace moce::io {

// JSON <-> config structs. Unknown keys are rejected so typos in config
// files fail loudly.
std::string model_config_to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const std::string& json_text);

std::string train_config_to_json(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_json(const std::string& json_text);

std::string corpus_config_to_json(const CorpusConfig& cfg);
CorpusConfig corpus_config_from_json(const std::string& json_text);

std::string finetune_config_to_json(const deploy::FinetuneConfig& cfg);
deploy::FinetuneConfig finetune_config_from_json(const std::string& json_text);

// Network <-> checkpoint. The checkpoint's JSON config carries the model
// config; tensors are the parameter registry under their dotted names.
Checkpoint network_checkpoint(const model::MaeNetwork& net);
model::MaeNetwork network_from_checkpoint(const Checkpoint& ckpt);

// Cluster model <-> checkpoint, under the names "cluster.centroids",
// "cluster.assignments" and "cluster.config".
Checkpoint cluster_checkpoint(const cluster::ClusterModel& model);
cluster::ClusterModel cluster_from_checkpoint(const Checkpoint& ckpt);

}  // namespace moce::io
