// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface for the whole pipeline: synthetic data generation,
// dense / expert-bank pre-training, balanced clustering, routing analysis,
// expert selection, sub-model extraction, fine-tuning and PSNR evaluation.
// Every run writes its artifacts under --out plus a manifest.json that pins
// inputs, seed and git revision.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "moce/clustering.hpp"
#include "moce/dataset.hpp"
#include "moce/deploy.hpp"
#include "moce/gate.hpp"
#include "moce/net.hpp"
#include "moce/parallel.hpp"
#include "moce/reports.hpp"
#include "moce/serialize.hpp"
#include "moce/train.hpp"

#ifndef MOCE_GIT_DESCRIBE
#define MOCE_GIT_DESCRIBE "unknown"
#endif

namespace {

using moce::Tensor;
namespace io = moce::io;
namespace model = moce::model;
namespace train = moce::train;
namespace deploy = moce::deploy;
namespace cluster = moce::cluster;

struct RunContext {
  std::string command;
  std::string out_dir;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  std::string path(const std::string& name) const {
    return (std::filesystem::path(out_dir) / name).string();
  }
  std::string output(const std::string& name) {
    std::string p = path(name);
    outputs.push_back(p);
    return p;
  }
  void finish() {
    io::RunManifest manifest;
    manifest.command = command;
    manifest.inputs = inputs;
    manifest.outputs = outputs;
    manifest.seed = seed;
    manifest.git_describe = MOCE_GIT_DESCRIBE;
    manifest.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    io::write_manifest(manifest, path("manifest.json"));
  }
};

std::string read_config_or(const std::string& path, const std::string& fallback) {
  return path.empty() ? fallback : io::read_file(path);
}

io::CsvTable loss_curve_csv(const std::vector<train::LossRow>& curve) {
  io::CsvTable t;
  t.header = {"step", "lr", "mae", "imbalance", "importance", "load", "distill", "total"};
  for (const auto& row : curve) {
    t.rows.push_back({std::to_string(row.step), io::format_double(row.lr),
                      io::format_double(row.mae), io::format_double(row.imbalance),
                      io::format_double(row.importance), io::format_double(row.load),
                      io::format_double(row.distill), io::format_double(row.total)});
  }
  return t;
}

moce::ThreadPool& pool() {
  static moce::ThreadPool p(static_cast<int>(std::thread::hardware_concurrency()));
  return p;
}

train::GateMode parse_mode(const std::string& mode) {
  if (mode == "cluster-gate") return train::GateMode::kClusterGate;
  if (mode == "token-gate") return train::GateMode::kTokenGate;
  throw moce::Error("unknown gate mode \"" + mode + "\" (cluster-gate | token-gate)");
}

void write_selection_json(const deploy::ExpertSelection& sel, const std::string& path) {
  nlohmann::json j;
  j["chosen_cluster"] = sel.chosen_cluster;
  j["cluster_histogram"] = sel.cluster_histogram;
  j["moe_blocks"] = sel.moe_blocks;
  j["expert_per_layer"] = sel.expert_per_layer;
  j["gate_weight_per_layer"] = sel.gate_weight_per_layer;
  io::atomic_write_file(path, j.dump(2) + "\n");
}

deploy::ExpertSelection read_selection_json(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(io::read_file(path));
  deploy::ExpertSelection sel;
  sel.chosen_cluster = j.at("chosen_cluster").get<int>();
  sel.cluster_histogram = j.at("cluster_histogram").get<std::vector<long long>>();
  sel.moe_blocks = j.at("moe_blocks").get<std::vector<int>>();
  sel.expert_per_layer = j.at("expert_per_layer").get<std::vector<int>>();
  sel.gate_weight_per_layer = j.at("gate_weight_per_layer").get<std::vector<double>>();
  return sel;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"moce: cluster-conditional mixture-of-experts MAE pipeline"};
  app.require_subcommand(1);

  // gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic two-domain corpus");
  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  bool gen_split = false;
  gen->add_option("--config", gen_config, "corpus config JSON")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "override config seed");
  gen->add_flag("--split-domains", gen_split, "also write per-domain subset files");

  // pretrain-dense ----------------------------------------------------------
  auto* pd = app.add_subcommand("pretrain-dense", "MAE pre-training of a dense network");
  std::string pd_model, pd_config, pd_data, pd_out, pd_init;
  std::optional<std::uint64_t> pd_seed;
  std::optional<int> pd_epochs;
  pd->add_option("--model", pd_model, "model config JSON (default: desk-scale dense)");
  pd->add_option("--config", pd_config, "train config JSON");
  pd->add_option("--data", pd_data, "dataset file")->required();
  pd->add_option("--out", pd_out, "output directory")->required();
  pd->add_option("--init", pd_init, "continue from this checkpoint");
  pd->add_option("--seed", pd_seed, "override train seed");
  pd->add_option("--epochs", pd_epochs, "override epochs");

  // cluster ------------------------------------------------------------------
  auto* cl = app.add_subcommand("cluster", "balanced feature clustering");
  std::string cl_ckpt, cl_data, cl_out;
  int cl_m = 8, cl_epochs = 10, cl_iters = 3;
  double cl_eps = 0.05;
  std::uint64_t cl_seed = 1;
  cl->add_option("--checkpoint", cl_ckpt, "dense MAE checkpoint")->required();
  cl->add_option("--data", cl_data, "dataset file")->required();
  cl->add_option("--out", cl_out, "output directory")->required();
  cl->add_option("--clusters", cl_m, "cluster count m");
  cl->add_option("--epochs", cl_epochs, "alternating epochs");
  cl->add_option("--sinkhorn-iters", cl_iters, "Sinkhorn iterations per epoch");
  cl->add_option("--entropy-weight", cl_eps, "entropy weight");
  cl->add_option("--seed", cl_seed, "seed");

  // pretrain-moce -------------------------------------------------------------
  auto* pm = app.add_subcommand("pretrain-moce", "pre-train the expert-bank network");
  std::string pm_model, pm_config, pm_data, pm_out, pm_cluster, pm_init, pm_mode = "cluster-gate";
  std::optional<std::uint64_t> pm_seed;
  std::optional<int> pm_epochs;
  pm->add_option("--model", pm_model, "model config JSON (default: desk-scale expert banks)");
  pm->add_option("--config", pm_config, "train config JSON");
  pm->add_option("--data", pm_data, "dataset file")->required();
  pm->add_option("--cluster", pm_cluster, "cluster model checkpoint");
  pm->add_option("--mode", pm_mode, "cluster-gate | token-gate");
  pm->add_option("--init", pm_init, "dense checkpoint to expand (expert init)");
  pm->add_option("--out", pm_out, "output directory")->required();
  pm->add_option("--seed", pm_seed, "override train seed");
  pm->add_option("--epochs", pm_epochs, "override epochs");

  // routing-table --------------------------------------------------------------
  auto* rt = app.add_subcommand("routing-table", "class/cluster x expert routing proportions");
  std::string rt_ckpt, rt_data, rt_cluster, rt_out, rt_mode = "cluster-gate";
  rt->add_option("--checkpoint", rt_ckpt, "network checkpoint")->required();
  rt->add_option("--data", rt_data, "dataset file")->required();
  rt->add_option("--cluster", rt_cluster, "cluster model checkpoint");
  rt->add_option("--mode", rt_mode, "cluster-gate | token-gate");
  rt->add_option("--out", rt_out, "output directory")->required();

  // select-expert ----------------------------------------------------------------
  auto* se = app.add_subcommand("select-expert", "match a downstream task to its cluster/experts");
  std::string se_moce, se_dense, se_cluster, se_data, se_out;
  se->add_option("--moce", se_moce, "expert-bank checkpoint")->required();
  se->add_option("--dense", se_dense, "dense MAE checkpoint (feature extractor)")->required();
  se->add_option("--cluster", se_cluster, "cluster model checkpoint")->required();
  se->add_option("--data", se_data, "downstream dataset")->required();
  se->add_option("--out", se_out, "output directory")->required();

  // extract-submodel -----------------------------------------------------------
  auto* ex = app.add_subcommand("extract-submodel", "fold the selected experts into a dense net");
  std::string ex_moce, ex_selection, ex_out;
  ex->add_option("--moce", ex_moce, "expert-bank checkpoint")->required();
  ex->add_option("--selection", ex_selection, "selection.json from select-expert")->required();
  ex->add_option("--out", ex_out, "output directory")->required();

  // finetune --------------------------------------------------------------------
  auto* ft = app.add_subcommand("finetune", "linear-head fine-tune probe with lr search");
  std::string ft_ckpt, ft_data, ft_config, ft_out, ft_name = "model";
  std::optional<std::uint64_t> ft_seed;
  ft->add_option("--checkpoint", ft_ckpt, "dense checkpoint")->required();
  ft->add_option("--data", ft_data, "labeled task dataset")->required();
  ft->add_option("--config", ft_config, "finetune config JSON");
  ft->add_option("--name", ft_name, "model name for the report");
  ft->add_option("--seed", ft_seed, "override seed");
  ft->add_option("--out", ft_out, "output directory")->required();

  // eval-psnr ---------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval-psnr", "masked-reconstruction PSNR of a checkpoint");
  std::string ev_ckpt, ev_data, ev_cluster, ev_baseline, ev_out, ev_name = "model",
                                                           ev_mode = "dense";
  double ev_ratio = 0.75;
  std::uint64_t ev_seed = 1;
  ev->add_option("--checkpoint", ev_ckpt, "network checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset file")->required();
  ev->add_option("--cluster", ev_cluster, "cluster checkpoint (cluster-gate nets)");
  ev->add_option("--mode", ev_mode, "dense | cluster-gate | token-gate");
  ev->add_option("--baseline", ev_baseline, "dense baseline checkpoint for the delta column");
  ev->add_option("--mask-ratio", ev_ratio, "mask ratio");
  ev->add_option("--seed", ev_seed, "mask seed");
  ev->add_option("--name", ev_name, "model name for the report");
  ev->add_option("--out", ev_out, "output directory")->required();

  if (argc <= 1) {
    std::cout << app.help() << std::endl;
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints message / help
    return 2;
  }

  try {
    if (gen->parsed()) {
      RunContext ctx{"gen-data", gen_out, {gen_config}};
      io::CorpusConfig cfg = io::corpus_config_from_json(io::read_file(gen_config));
      if (gen_seed) cfg.seed = *gen_seed;
      ctx.seed = cfg.seed;
      io::GenReport report;
      io::Dataset ds = io::gen_synthetic(cfg, &report);
      io::save_dataset(ds, ctx.output("dataset.mocd"));
      if (gen_split) {
        for (std::size_t d = 0; d < cfg.domains.size(); ++d) {
          io::save_dataset(ds.domain_subset(static_cast<int>(d)),
                           ctx.output("dataset.domain" + std::to_string(d) + ".mocd"));
        }
      }
      std::printf("gen-data: %d images, domain separability %.4f\n", ds.count(),
                  report.domain_probe_accuracy);
      ctx.finish();
    } else if (pd->parsed()) {
      RunContext ctx{"pretrain-dense", pd_out, {pd_data}};
      model::ModelConfig mc = io::model_config_from_json(read_config_or(pd_model, "{}"));
      train::TrainConfig tc = io::train_config_from_json(read_config_or(pd_config, "{}"));
      if (!pd_model.empty()) ctx.inputs.push_back(pd_model);
      if (!pd_config.empty()) ctx.inputs.push_back(pd_config);
      if (!pd_init.empty()) {
        tc.init_checkpoint = pd_init;
        ctx.inputs.push_back(pd_init);
      }
      if (pd_seed) tc.seed = *pd_seed;
      if (pd_epochs) tc.epochs = *pd_epochs;
      ctx.seed = tc.seed;
      io::Dataset data = io::load_dataset(pd_data);
      train::TrainResult result = train::pretrain_dense(mc, tc, data, &pool());
      io::save_checkpoint(io::network_checkpoint(result.network), ctx.output("checkpoint.ckpt"));
      io::write_csv(loss_curve_csv(result.curve), ctx.output("loss_curve.csv"));
      std::printf("pretrain-dense: %zu steps, final mae %.6f\n", result.curve.size(),
                  result.curve.empty() ? 0.0 : result.curve.back().mae);
      ctx.finish();
    } else if (cl->parsed()) {
      RunContext ctx{"cluster", cl_out, {cl_ckpt, cl_data}};
      ctx.seed = cl_seed;
      model::MaeNetwork net = io::network_from_checkpoint(io::load_checkpoint(cl_ckpt));
      io::Dataset data = io::load_dataset(cl_data);
      Tensor features = model::extract_features(net, data.images());
      cluster::ClusterConfig ccfg;
      ccfg.clusters = cl_m;
      ccfg.epochs = cl_epochs;
      ccfg.sinkhorn_iters = cl_iters;
      ccfg.entropy_weight = cl_eps;
      cluster::ClusterModel cm = cluster::fit_clusters(features, ccfg, cl_seed);
      io::save_checkpoint(io::cluster_checkpoint(cm), ctx.output("cluster.ckpt"));
      std::printf("cluster: m=%d over %d images\n", cl_m, data.count());
      ctx.finish();
    } else if (pm->parsed()) {
      RunContext ctx{"pretrain-moce", pm_out, {pm_data}};
      model::ModelConfig mc = io::model_config_from_json(
          read_config_or(pm_model,
                         "{\"moe_layers\": [2, 3], \"experts\": 8, \"active_experts\": 1}"));
      train::TrainConfig tc = io::train_config_from_json(read_config_or(pm_config, "{}"));
      if (!pm_model.empty()) ctx.inputs.push_back(pm_model);
      if (!pm_config.empty()) ctx.inputs.push_back(pm_config);
      if (!pm_init.empty()) {
        tc.init_checkpoint = pm_init;
        ctx.inputs.push_back(pm_init);
      }
      if (pm_seed) tc.seed = *pm_seed;
      if (pm_epochs) tc.epochs = *pm_epochs;
      ctx.seed = tc.seed;
      train::GateMode mode = parse_mode(pm_mode);
      io::Dataset data = io::load_dataset(pm_data);
      cluster::ClusterModel cm;
      const cluster::ClusterModel* cmp = nullptr;
      if (!pm_cluster.empty()) {
        cm = io::cluster_from_checkpoint(io::load_checkpoint(pm_cluster));
        ctx.inputs.push_back(pm_cluster);
        cmp = &cm;
      }
      train::TrainResult result = train::pretrain_moce(mc, tc, data, cmp, mode, &pool());
      io::save_checkpoint(io::network_checkpoint(result.network), ctx.output("checkpoint.ckpt"));
      io::write_csv(loss_curve_csv(result.curve), ctx.output("loss_curve.csv"));
      std::printf("pretrain-moce (%s): %zu steps, final total %.6f\n", pm_mode.c_str(),
                  result.curve.size(), result.curve.empty() ? 0.0 : result.curve.back().total);
      ctx.finish();
    } else if (rt->parsed()) {
      RunContext ctx{"routing-table", rt_out, {rt_ckpt, rt_data}};
      model::MaeNetwork net = io::network_from_checkpoint(io::load_checkpoint(rt_ckpt));
      io::Dataset data = io::load_dataset(rt_data);
      cluster::ClusterModel cm;
      const cluster::ClusterModel* cmp = nullptr;
      if (!rt_cluster.empty()) {
        cm = io::cluster_from_checkpoint(io::load_checkpoint(rt_cluster));
        ctx.inputs.push_back(rt_cluster);
        cmp = &cm;
      }
      train::RoutingTables tables = train::routing_table(net, data, cmp, parse_mode(rt_mode));
      for (std::size_t l = 0; l < tables.class_by_expert.size(); ++l) {
        std::string suffix = "layer" + std::to_string(tables.moe_blocks[l]) + ".csv";
        io::write_csv(io::routing_heatmap_csv("class", tables.class_labels,
                                              tables.class_by_expert[l]),
                      ctx.output("routing_class_" + suffix));
        if (l < tables.cluster_by_expert.size()) {
          std::vector<int> cluster_labels(
              static_cast<std::size_t>(tables.cluster_by_expert[l].rows()));
          for (std::size_t c = 0; c < cluster_labels.size(); ++c) {
            cluster_labels[c] = static_cast<int>(c);
          }
          io::write_csv(io::routing_heatmap_csv("cluster", cluster_labels,
                                                tables.cluster_by_expert[l]),
                        ctx.output("routing_cluster_" + suffix));
        }
        std::printf("layer %d: MI(class; expert) = %.4f nats\n", tables.moe_blocks[l],
                    train::mutual_information_nats(tables.class_expert_counts[l]));
      }
      ctx.finish();
    } else if (se->parsed()) {
      RunContext ctx{"select-expert", se_out, {se_moce, se_dense, se_cluster, se_data}};
      model::MaeNetwork moce_net = io::network_from_checkpoint(io::load_checkpoint(se_moce));
      model::MaeNetwork dense_net = io::network_from_checkpoint(io::load_checkpoint(se_dense));
      cluster::ClusterModel cm = io::cluster_from_checkpoint(io::load_checkpoint(se_cluster));
      io::Dataset data = io::load_dataset(se_data);
      deploy::ExpertSelection sel = deploy::select_expert(cm, dense_net, moce_net, data);
      write_selection_json(sel, ctx.output("selection.json"));
      std::printf("select-expert: cluster %d", sel.chosen_cluster);
      for (std::size_t l = 0; l < sel.expert_per_layer.size(); ++l) {
        std::printf("%s block %d -> expert %d", l == 0 ? ";" : ",", sel.moe_blocks[l],
                    sel.expert_per_layer[l]);
      }
      std::printf("\n");
      ctx.finish();
    } else if (ex->parsed()) {
      RunContext ctx{"extract-submodel", ex_out, {ex_moce, ex_selection}};
      model::MaeNetwork moce_net = io::network_from_checkpoint(io::load_checkpoint(ex_moce));
      deploy::ExpertSelection sel = read_selection_json(ex_selection);
      model::MaeNetwork dense = deploy::extract_submodel(moce_net, sel);
      io::save_checkpoint(io::network_checkpoint(dense), ctx.output("submodel.ckpt"));
      std::printf("extract-submodel: %zu parameters\n", dense.parameter_count());
      ctx.finish();
    } else if (ft->parsed()) {
      RunContext ctx{"finetune", ft_out, {ft_ckpt, ft_data}};
      model::MaeNetwork net = io::network_from_checkpoint(io::load_checkpoint(ft_ckpt));
      io::Dataset data = io::load_dataset(ft_data);
      deploy::FinetuneConfig fc = io::finetune_config_from_json(read_config_or(ft_config, "{}"));
      if (!ft_config.empty()) ctx.inputs.push_back(ft_config);
      if (ft_seed) fc.seed = *ft_seed;
      ctx.seed = fc.seed;
      deploy::ProbeResult probe = deploy::finetune_probe(net, data, fc, &pool());
      io::CsvTable acc = io::accuracy_csv({ft_name}, "task", {probe.best_accuracy});
      io::write_csv(acc, ctx.output("accuracy.csv"));
      std::printf("finetune: best accuracy %.4f at lr %g\n", probe.best_accuracy, probe.best_lr);
      ctx.finish();
    } else if (ev->parsed()) {
      RunContext ctx{"eval-psnr", ev_out, {ev_ckpt, ev_data}};
      ctx.seed = ev_seed;
      model::MaeNetwork net = io::network_from_checkpoint(io::load_checkpoint(ev_ckpt));
      io::Dataset data = io::load_dataset(ev_data);
      cluster::ClusterModel cm;
      const cluster::ClusterModel* cmp = nullptr;
      if (!ev_cluster.empty()) {
        cm = io::cluster_from_checkpoint(io::load_checkpoint(ev_cluster));
        ctx.inputs.push_back(ev_cluster);
        cmp = &cm;
      }
      model::RoutingMode mode = ev_mode == "dense"          ? model::RoutingMode::kDense
                                : ev_mode == "cluster-gate" ? model::RoutingMode::kClusterGate
                                : ev_mode == "token-gate"
                                    ? model::RoutingMode::kTokenGate
                                    : throw moce::Error("unknown eval mode \"" + ev_mode + "\"");
      double score = deploy::eval_psnr(net, data, ev_ratio, ev_seed, mode, cmp, &pool());
      double base = score;
      std::vector<std::string> names{ev_name};
      std::vector<double> scores{score};
      if (!ev_baseline.empty()) {
        model::MaeNetwork bnet = io::network_from_checkpoint(io::load_checkpoint(ev_baseline));
        ctx.inputs.push_back(ev_baseline);
        base = deploy::eval_psnr(bnet, data, ev_ratio, ev_seed, model::RoutingMode::kDense,
                                 nullptr, &pool());
        names.push_back("dense-baseline");
        scores.push_back(base);
      }
      io::write_csv(io::psnr_csv(names, "task", scores, base), ctx.output("psnr.csv"));
      std::printf("eval-psnr: %.2f dB%s\n", score,
                  ev_baseline.empty()
                      ? ""
                      : (" (dense baseline " + std::to_string(base) + " dB)").c_str());
      ctx.finish();
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

