#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ahue/activation.hpp"
#include "ahue/classifier.hpp"
#include "ahue/error.hpp"
#include "ahue/geometry_stats.hpp"
#include "ahue/hue_loss.hpp"
#include "ahue/io.hpp"
#include "ahue/memory_index.hpp"
#include "ahue/rng.hpp"
#include "ahue/synth.hpp"
#include "ahue/trainer.hpp"

namespace ahue::cli {

using nlohmann::json;

namespace detail {

// Sidecar run report written next to every --out artifact: the exact argv,
// version, seed and wall time, enough to replay the run.
class RunScope {
 public:
  RunScope(std::string command, std::vector<std::string> argv, std::uint64_t seed)
      : command_(std::move(command)), argv_(std::move(argv)), seed_(seed),
        start_(std::chrono::steady_clock::now()) {}

  void add_output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }

  void write(const std::filesystem::path& primary_out) const {
    json j;
    j["command"] = command_;
    j["version"] = kVersionString;
    j["seed"] = seed_;
    j["argv"] = argv_;
    j["outputs"] = outputs_;
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    j["wall_time_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    std::ofstream out(primary_out.string() + ".run.json", std::ios::trunc);
    if (!out) raise(Errc::io_failure, "cannot write run report next to " + primary_out.string());
    out << j.dump(2) << "\n";
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  std::uint64_t seed_ = 0;
  std::vector<std::string> outputs_;
  std::chrono::steady_clock::time_point start_;
};

inline void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::io_failure, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline void write_grid_csv(const std::filesystem::path& path, int height, int width,
                           const std::function<double(int, int)>& value) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::io_failure, "cannot write " + path.string());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      if (c) out << ",";
      out << format_double(value(r, c));
    }
    out << "\n";
  }
}

inline SearchMode parse_mode(const std::string& mode) {
  if (mode == "exact") return SearchMode::exact;
  if (mode == "tree") return SearchMode::tree;
  raise(Errc::config_error, "mode must be exact or tree, got " + mode);
}

inline LabelMode parse_label_mode(const std::string& mode) {
  if (mode == "equally_spaced") return LabelMode::equally_spaced;
  if (mode == "random_permutation") return LabelMode::random_permutation;
  if (mode == "random_angles") return LabelMode::random_angles;
  raise(Errc::config_error, "unknown label mode " + mode);
}

inline std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.jsonl";
  Manifest manifest = read_manifest(manifest_path);
  std::vector<Sample> data;
  data.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    Sample s;
    s.image = read_ahue(manifest.resolve(rec));
    s.class_id = rec.class_id;
    s.image_id = rec.image_id;
    data.push_back(std::move(s));
  }
  if (data.empty()) raise(Errc::config_error, "dataset manifest is empty");
  return data;
}

inline json summary_json(const CircularSummary& s) {
  json j;
  j["count"] = s.count;
  j["skipped_center"] = s.skipped_center;
  j["resultant_length"] = s.resultant_length;
  if (s.mean_angle) {
    j["mean_angle"] = *s.mean_angle;
  } else {
    j["mean_angle"] = nullptr;
  }
  return j;
}

// ---------------------------------------------------------------------------
// loss gradcheck
// ---------------------------------------------------------------------------

struct GradcheckResult {
  int trials = 0;
  double max_relative_error = 0.0;
  bool pass = false;
};

inline GradcheckResult run_gradcheck(std::optional<int> classes, int trials, std::uint64_t seed,
                                     LabelMode mode) {
  GradcheckResult res;
  Rng rng(derive_seed(seed, {0x6763u /* gradcheck stream */}));
  const double h = 1e-6;
  while (res.trials < trials) {
    const int m = classes ? *classes : 2 + static_cast<int>(rng.uniform_index(9));
    AngularLabelSet labels = assign_labels(m, mode, rng.next_u64());
    std::array<double, 2> pred{rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
    bool near_label = false;
    for (const auto& lab : labels.labels) {
      if (std::hypot(pred[0] - lab[0], pred[1] - lab[1]) < 1e-4) near_label = true;
    }
    if (near_label) continue;
    const int true_class = static_cast<int>(rng.uniform_index(m));
    auto analytic = hue_loss(labels, pred, true_class);

    std::array<double, 2> numeric{};
    for (int d = 0; d < 2; ++d) {
      auto plus = pred, minus = pred;
      plus[d] += h;
      minus[d] -= h;
      numeric[d] = (hue_loss(labels, plus, true_class).value -
                    hue_loss(labels, minus, true_class).value) /
                   (2.0 * h);
    }
    const double diff = std::hypot(analytic.grad_prediction[0] - numeric[0],
                                   analytic.grad_prediction[1] - numeric[1]);
    const double denom =
        std::max({std::hypot(numeric[0], numeric[1]),
                  std::hypot(analytic.grad_prediction[0], analytic.grad_prediction[1]), 1e-8});
    res.max_relative_error = std::max(res.max_relative_error, diff / denom);
    ++res.trials;
  }
  res.pass = res.max_relative_error < 1e-5;
  return res;
}

// ---------------------------------------------------------------------------
// stats descriptors: accuracy of the pixel-vector pipeline vs pooled
// whole-image descriptors on the same memory/query split.
// ---------------------------------------------------------------------------

struct DescriptorTable {
  // encoding -> (correct, total)
  std::map<std::string, std::pair<std::size_t, std::size_t>> rows;

  double accuracy(const std::string& encoding) const {
    const auto& [correct, total] = rows.at(encoding);
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
};

inline std::vector<float> to_f32(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
  return out;
}

inline DescriptorTable run_descriptor_comparison(const std::vector<Sample>& memory,
                                                 const std::vector<Sample>& queries, int k,
                                                 double epsilon) {
  if (memory.empty() || queries.empty())
    raise(Errc::config_error, "descriptor comparison needs memory and query images");
  const auto& proto = memory.front().image;

  MemoryStore pixel_store(proto.channels);
  for (const auto& s : memory) pixel_store.insert(s.image, s.class_id, s.image_id);
  pixel_store.freeze();

  std::map<PoolMode, MemoryStore> pooled;
  for (PoolMode mode : {PoolMode::avg, PoolMode::max, PoolMode::flatten}) {
    const int dim = mode == PoolMode::flatten ? proto.width * proto.height * proto.channels
                                              : proto.channels;
    MemoryStore store(dim);
    for (const auto& s : memory) {
      store.insert_vector(to_f32(pool_descriptor(s.image, mode)), 0.0f, 0.0f, s.class_id,
                          s.image_id);
    }
    store.freeze();
    pooled.emplace(mode, std::move(store));
  }

  DescriptorTable table;
  table.rows["pixel"] = {0, 0};
  for (PoolMode mode : {PoolMode::avg, PoolMode::max, PoolMode::flatten})
    table.rows[pool_mode_name(mode)] = {0, 0};

  LikelihoodParams params;
  params.k = k;
  params.epsilon = epsilon;
  for (const auto& q : queries) {
    {
      auto& [correct, total] = table.rows["pixel"];
      ++total;
      if (classify(q.image, pixel_store, params) == q.class_id) ++correct;
    }
    for (PoolMode mode : {PoolMode::avg, PoolMode::max, PoolMode::flatten}) {
      auto& [correct, total] = table.rows[pool_mode_name(mode)];
      ++total;
      if (classify_pooled(to_f32(pool_descriptor(q.image, mode)), pooled.at(mode), params) ==
          q.class_id)
        ++correct;
    }
  }
  return table;
}

inline json train_report_json(const TrainReport& r) {
  json j;
  j["classes"] = r.classes;
  j["samples"] = r.samples;
  j["parameter_count"] = r.parameter_count;
  j["backbone"] = r.backbone;
  j["backbone_note"] = r.backbone_note;
  j["loss_mode"] = loss_mode_name(r.loss_mode);
  j["label_mode"] = label_mode_name(r.label_mode);
  j["epochs"] = r.epochs;
  j["batch_size"] = r.batch_size;
  j["learning_rate"] = r.learning_rate;
  j["seed"] = r.seed;
  j["folds"] = r.folds;
  j["hue_weight"] = r.hue_weight;
  j["max_hue_head_grad"] = r.max_hue_head_grad;
  j["mean_val_accuracy"] = r.mean_val_accuracy;
  j["sd_val_accuracy"] = r.sd_val_accuracy;
  j["fold_reports"] = json::array();
  for (const auto& f : r.fold_reports) {
    json fj;
    fj["fold"] = f.fold;
    fj["train_samples"] = f.train_samples;
    fj["val_samples"] = f.val_samples;
    fj["epoch_train_loss"] = f.epoch_train_loss;
    fj["train_accuracy"] = f.train_accuracy;
    fj["train_accuracy_hue_head"] = f.train_accuracy_hue_head;
    fj["val_accuracy"] = f.val_accuracy;
    fj["val_accuracy_hue_head"] = f.val_accuracy_hue_head;
    j["fold_reports"].push_back(fj);
  }
  return j;
}

}  // namespace detail

// Dispatches the full command surface. `args` excludes the program name.
// Returns 0 on success, 1 on validation failure, 2 on usage errors.
inline int run(std::vector<std::string> args) {
  CLI::App app{"activation-hue retrieval, statistics and training toolkit"};
  app.require_subcommand(1);

  // --- synth generate ------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "synthetic dataset tools");
  synth_cmd->require_subcommand(1);
  auto* synth_gen = synth_cmd->add_subcommand("generate", "write a synthetic dataset");
  SynthSpec synth_spec;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth_gen->add_option("--classes", synth_spec.classes, "class count")->capture_default_str();
  synth_gen->add_option("--per-class", synth_spec.per_class, "samples per class")
      ->capture_default_str();
  synth_gen->add_option("--width", synth_spec.width)->capture_default_str();
  synth_gen->add_option("--height", synth_spec.height)->capture_default_str();
  synth_gen->add_option("--channels", synth_spec.channels)->capture_default_str();
  synth_gen->add_option("--ring-radius", synth_spec.ring_radius)->capture_default_str();
  synth_gen->add_option("--blob-sigma", synth_spec.blob_sigma)->capture_default_str();
  synth_gen->add_option("--angle-jitter", synth_spec.angle_jitter)->capture_default_str();
  synth_gen->add_option("--noise-sigma", synth_spec.noise_sigma)->capture_default_str();
  synth_gen->add_option("--center-amplitude", synth_spec.center_amplitude)
      ->capture_default_str();
  synth_gen->add_option("--seed", synth_seed, "dataset seed")->capture_default_str();
  synth_gen->add_option("--out", synth_out, "output directory")->required();

  // --- index build ---------------------------------------------------------
  auto* index_cmd = app.add_subcommand("index", "memory index tools");
  index_cmd->require_subcommand(1);
  auto* index_build = index_cmd->add_subcommand("build", "build an index from a manifest");
  std::string index_manifest, index_out, index_mode = "exact";
  TreeConfig index_tree;
  index_build->add_option("--manifest", index_manifest, "JSON-lines manifest")->required();
  index_build->add_option("--out", index_out, "output .ahix path")->required();
  index_build->add_option("--mode", index_mode, "exact|tree")->capture_default_str();
  index_build->add_option("--trees", index_tree.trees)->capture_default_str();
  index_build->add_option("--leaf-size", index_tree.leaf_size)->capture_default_str();
  index_build->add_option("--search-budget", index_tree.search_budget)->capture_default_str();
  index_build->add_option("--seed", index_tree.seed)->capture_default_str();

  // --- classify ------------------------------------------------------------
  auto* classify_cmd = app.add_subcommand("classify", "classify one activation image");
  std::string cls_index, cls_query, cls_out, cls_matches_out, cls_mode;
  int cls_k = 10;
  double cls_epsilon = 1e-8;
  bool cls_loo = false;
  std::int64_t cls_image_id = -1;
  classify_cmd->add_option("--index", cls_index, ".ahix index path")->required();
  classify_cmd->add_option("--query", cls_query, ".ahue query path")->required();
  classify_cmd->add_option("--k", cls_k)->capture_default_str();
  classify_cmd->add_option("--epsilon", cls_epsilon)->capture_default_str();
  classify_cmd->add_option("--mode", cls_mode, "exact|tree (default: index mode)");
  classify_cmd->add_flag("--leave-one-out", cls_loo, "exclude the query's own image");
  classify_cmd->add_option("--image-id", cls_image_id,
                           "query image id (required with --leave-one-out)");
  classify_cmd->add_option("--out", cls_out, "write the decision JSON here too");
  classify_cmd->add_option("--matches-out", cls_matches_out, "per-pixel match CSV");

  // --- stats ---------------------------------------------------------------
  auto* stats_cmd = app.add_subcommand("stats", "observation statistics");
  stats_cmd->require_subcommand(1);
  struct StatsArgs {
    std::string index, queries, memory, out, mode, weight = "uniform";
    int k = 10;
    double epsilon = 1e-8;
    int bins = 0;
    bool leave_one_out = false;
    std::uint64_t seed = 0;
  } stats;
  auto add_common = [&](CLI::App* cmd, bool needs_index) {
    cmd->add_option("--queries", stats.queries, "query manifest")->required();
    cmd->add_option("--out", stats.out, "report JSON path")->required();
    cmd->add_option("--seed", stats.seed)->capture_default_str();
    if (needs_index) {
      cmd->add_option("--index", stats.index, ".ahix index path")->required();
      cmd->add_option("--k", stats.k)->capture_default_str();
      cmd->add_option("--epsilon", stats.epsilon)->capture_default_str();
      cmd->add_option("--mode", stats.mode, "exact|tree (default: index mode)");
      cmd->add_flag("--leave-one-out", stats.leave_one_out);
    }
  };
  auto* stats_energy = stats_cmd->add_subcommand("energy", "per-pixel activation energy");
  add_common(stats_energy, false);
  auto* stats_matches = stats_cmd->add_subcommand("matches", "match location histograms");
  add_common(stats_matches, true);
  stats_matches->add_option("--bins", stats.bins, "histogram bins (default: image width)");
  auto* stats_angular = stats_cmd->add_subcommand("angular", "per-class angular bias");
  add_common(stats_angular, true);
  stats_angular->add_option("--weight", stats.weight, "uniform|kernel")->capture_default_str();
  auto* stats_radtan = stats_cmd->add_subcommand("radtan", "radial/tangential variance");
  add_common(stats_radtan, true);
  auto* stats_desc =
      stats_cmd->add_subcommand("descriptors", "pixel vs pooled descriptor accuracy");
  add_common(stats_desc, false);
  stats_desc->add_option("--memory", stats.memory, "memory manifest")->required();
  stats_desc->add_option("--k", stats.k)->capture_default_str();
  stats_desc->add_option("--epsilon", stats.epsilon)->capture_default_str();

  // --- loss gradcheck ------------------------------------------------------
  auto* loss_cmd = app.add_subcommand("loss", "loss utilities");
  loss_cmd->require_subcommand(1);
  auto* gradcheck = loss_cmd->add_subcommand("gradcheck", "analytic vs finite-difference grads");
  int gc_classes = 0;  // 0 = draw M in [2, 10] per trial
  int gc_trials = 200;
  std::uint64_t gc_seed = 0;
  std::string gc_mode = "random_permutation", gc_out;
  gradcheck->add_option("--classes", gc_classes, "fixed class count (0 = random in [2,10])")
      ->capture_default_str();
  gradcheck->add_option("--trials", gc_trials)->capture_default_str();
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();
  gradcheck->add_option("--mode", gc_mode, "label mode")->capture_default_str();
  gradcheck->add_option("--out", gc_out, "report JSON path");

  // --- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train the small backbone");
  std::string train_data = "synth", train_loss = "onehot_hue",
              train_label_mode = "random_permutation", train_out;
  TrainConfig train_cfg;
  SynthSpec train_synth;
  train_synth.per_class = 100;
  train_cmd->add_option("--data", train_data, "synth or a dataset directory")
      ->capture_default_str();
  train_cmd->add_option("--loss", train_loss, "onehot|onehot_hue")->capture_default_str();
  train_cmd->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  train_cmd->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--seed", train_cfg.seed)->capture_default_str();
  train_cmd->add_option("--folds", train_cfg.folds)->capture_default_str();
  train_cmd->add_option("--label-mode", train_label_mode)->capture_default_str();
  train_cmd->add_option("--hue-weight", train_cfg.hue_weight)->capture_default_str();
  train_cmd->add_option("--hue-hidden", train_cfg.hue_hidden)->capture_default_str();
  train_cmd->add_option("--crop-pad", train_cfg.crop_pad)->capture_default_str();
  bool no_hflip = false;
  train_cmd->add_flag("--no-hflip", no_hflip, "disable horizontal flips");
  train_cmd->add_flag("--project-to-circle", train_cfg.project_to_circle,
                      "renormalize hue predictions (ablation)");
  train_cmd->add_option("--classes", train_synth.classes, "synth: class count")
      ->capture_default_str();
  train_cmd->add_option("--per-class", train_synth.per_class, "synth: samples per class")
      ->capture_default_str();
  train_cmd->add_option("--image-size", train_synth.width, "synth: square image size")
      ->capture_default_str();
  train_cmd->add_option("--center-amplitude", train_synth.center_amplitude,
                        "synth: shared distractor strength")
      ->capture_default_str();
  train_cmd->add_option("--class-amp-min", train_synth.class_amplitude_min)
      ->capture_default_str();
  train_cmd->add_option("--class-amp-max", train_synth.class_amplitude_max)
      ->capture_default_str();
  train_cmd->add_option("--noise-sigma", train_synth.noise_sigma)->capture_default_str();
  train_cmd->add_option("--out", train_out, "train report JSON path")->required();

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto argv_echo = [&](const CLI::App* leaf) {
    std::vector<std::string> echo;
    std::vector<std::string> names;
    for (const CLI::App* a = leaf; a != nullptr && a->get_parent() != nullptr;
         a = a->get_parent())
      names.push_back(a->get_name());
    for (auto it = names.rbegin(); it != names.rend(); ++it) echo.push_back(*it);
    for (const auto* opt : leaf->get_options()) {
      if (opt->count() == 0) continue;
      if (opt->get_name() == "--help") continue;
      const bool is_flag = opt->get_type_size() == 0;
      if (is_flag) {
        echo.push_back(opt->get_name());
        continue;
      }
      for (const auto& value : opt->results()) {
        echo.push_back(opt->get_name() + "=" + value);
      }
    }
    return echo;
  };

  try {
    if (synth_gen->parsed()) {
      detail::RunScope scope("synth generate", argv_echo(synth_gen), synth_seed);
      std::filesystem::create_directories(synth_out);
      auto data = synth_generate(synth_spec, synth_seed);
      Manifest manifest;
      manifest.root = synth_out;
      for (const auto& s : data) {
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05u.ahue", s.image_id);
        write_ahue(s.image, std::filesystem::path(synth_out) / name);
        manifest.records.push_back({name, s.class_id, s.image_id});
      }
      const auto manifest_path = std::filesystem::path(synth_out) / "manifest.jsonl";
      write_manifest(manifest, manifest_path);
      scope.add_output(manifest_path);
      scope.write(manifest_path);
      std::cout << "wrote " << data.size() << " images to " << synth_out << "\n";
      return 0;
    }

    if (index_build->parsed()) {
      detail::RunScope scope("index build", argv_echo(index_build), index_tree.seed);
      Manifest manifest = read_manifest(index_manifest);
      if (manifest.records.empty()) raise(Errc::empty_store, "manifest has no records");
      ActivationImage first = read_ahue(manifest.resolve(manifest.records.front()));
      MemoryStore store(first.channels);
      std::size_t skipped = 0;
      for (const auto& rec : manifest.records) {
        ActivationImage img = read_ahue(manifest.resolve(rec));
        skipped += store.insert(img, rec.class_id, rec.image_id).skipped_zero;
      }
      if (detail::parse_mode(index_mode) == SearchMode::tree) {
        store.freeze(index_tree);
      } else {
        store.freeze();
      }
      write_ahix(store, index_out);
      scope.add_output(index_out);
      scope.write(index_out);
      std::cout << "indexed " << store.size() << " pixel vectors (" << skipped
                << " dead pixels skipped) into " << index_out << "\n";
      return 0;
    }

    if (classify_cmd->parsed()) {
      detail::RunScope scope("classify", argv_echo(classify_cmd), 0);
      MemoryStore store = read_ahix(cls_index);
      ActivationImage query = read_ahue(cls_query);
      LikelihoodParams params;
      params.k = cls_k;
      params.epsilon = cls_epsilon;
      if (!cls_mode.empty()) params.mode = detail::parse_mode(cls_mode);
      if (cls_loo) {
        if (cls_image_id < 0)
          raise(Errc::config_error, "--leave-one-out needs --image-id for the query");
        params.exclude_image = static_cast<std::uint32_t>(cls_image_id);
      }
      auto sets = match_pixels(query, store, params);
      auto table = likelihood_from_matches(sets, store, params);

      json j;
      j["decision"] = table.decision;
      j["k"] = table.k;
      j["epsilon"] = table.epsilon;
      json scores = json::object();
      for (const auto& [c, s] : table.scores) scores[std::to_string(c)] = s;
      j["scores"] = scores;
      if (!cls_matches_out.empty()) {
        std::ofstream csv(cls_matches_out, std::ios::trunc);
        if (!csv) raise(Errc::io_failure, "cannot write " + cls_matches_out);
        csv << "query_x,query_y,rank,entry,distance,kernel,match_class,match_image\n";
        for (const auto& set : sets) {
          int rank = 0;
          for (const auto& m : set.matches) {
            csv << format_double(set.query_x) << "," << format_double(set.query_y) << ","
                << rank++ << "," << m.entry << "," << format_double(m.distance) << ","
                << format_double(m.kernel_value) << "," << store.class_of(m.entry) << ","
                << store.image_of(m.entry) << "\n";
          }
        }
        j["per_pixel_matches_path"] = cls_matches_out;
        scope.add_output(cls_matches_out);
      }
      std::cout << j.dump(2) << "\n";
      if (!cls_out.empty()) {
        detail::write_json(j, cls_out);
        scope.add_output(cls_out);
        scope.write(cls_out);
      }
      return 0;
    }

    if (gradcheck->parsed()) {
      detail::RunScope scope("loss gradcheck", argv_echo(gradcheck), gc_seed);
      std::optional<int> classes;
      if (gc_classes > 0) classes = gc_classes;
      auto res = detail::run_gradcheck(classes, gc_trials, gc_seed,
                                       detail::parse_label_mode(gc_mode));
      json j;
      j["trials"] = res.trials;
      j["max_relative_error"] = res.max_relative_error;
      j["threshold"] = 1e-5;
      j["pass"] = res.pass;
      j["classes"] = gc_classes > 0 ? json(gc_classes) : json("2-10");
      j["seed"] = gc_seed;
      j["label_mode"] = gc_mode;
      std::cout << j.dump(2) << "\n";
      if (!gc_out.empty()) {
        detail::write_json(j, gc_out);
        scope.add_output(gc_out);
        scope.write(gc_out);
      }
      return res.pass ? 0 : 1;
    }

    if (train_cmd->parsed()) {
      train_cfg.loss_mode = train_loss == "onehot" ? LossMode::onehot : LossMode::onehot_hue;
      if (train_loss != "onehot" && train_loss != "onehot_hue")
        raise(Errc::config_error, "--loss must be onehot or onehot_hue");
      train_cfg.label_mode = detail::parse_label_mode(train_label_mode);
      train_cfg.hflip = !no_hflip;
      detail::RunScope scope("train", argv_echo(train_cmd), train_cfg.seed);

      std::vector<Sample> data;
      if (train_data == "synth") {
        train_synth.height = train_synth.width;
        data = synth_generate(train_synth, derive_seed(train_cfg.seed, {0x64617461u}));
      } else {
        data = detail::load_dataset(train_data);
      }
      TrainReport report = train(data, train_cfg);
      detail::write_json(detail::train_report_json(report), train_out);
      scope.add_output(train_out);
      scope.write(train_out);
      std::cout << "train done: mean val accuracy " << report.mean_val_accuracy << " over "
                << report.fold_reports.size() << " folds\n";
      return 0;
    }

    // stats subcommands
    StatsArgs& sa = stats;
    auto load_queries = [&]() {
      Manifest manifest = read_manifest(sa.queries);
      std::vector<Sample> samples;
      for (const auto& rec : manifest.records) {
        Sample s;
        s.image = read_ahue(manifest.resolve(rec));
        s.class_id = rec.class_id;
        s.image_id = rec.image_id;
        samples.push_back(std::move(s));
      }
      if (samples.empty()) raise(Errc::config_error, "query manifest is empty");
      return samples;
    };
    auto stats_params = [&]() {
      LikelihoodParams params;
      params.k = sa.k;
      params.epsilon = sa.epsilon;
      if (!sa.mode.empty()) params.mode = detail::parse_mode(sa.mode);
      return params;
    };
    // Flag echo embedded in primary outputs: excludes --out so replaying a
    // run into a different path yields byte-identical reports. The sidecar
    // run report keeps the full argv.
    auto flags_json = [&](const CLI::App* leaf) {
      json j = json::object();
      json argv = json::array();
      for (const auto& a : argv_echo(leaf)) {
        if (a.rfind("--out=", 0) == 0) continue;
        argv.push_back(a);
      }
      j["argv"] = argv;
      j["seed"] = sa.seed;
      return j;
    };
    auto collect_records = [&](const std::vector<Sample>& queries, const MemoryStore& store) {
      std::vector<QueryImage> qs;
      qs.reserve(queries.size());
      for (const auto& s : queries) qs.push_back({&s.image, s.class_id, s.image_id});
      return collect_matches(qs, store, stats_params(), sa.leave_one_out);
    };

    if (stats_energy->parsed()) {
      detail::RunScope scope("stats energy", argv_echo(stats_energy), sa.seed);
      auto queries = load_queries();
      const auto& proto = queries.front().image;
      std::vector<double> mean_grid(proto.pixel_count(), 0.0);
      json per_image = json::array();
      for (const auto& s : queries) {
        EnergyMap e = energy_map(s.image);
        double total = 0.0, wx = 0.0, wy = 0.0, wr = 0.0;
        for (int r = 0; r < e.height; ++r) {
          for (int c = 0; c < e.width; ++c) {
            const double v = e.at(r, c);
            total += v;
            const double x = s.image.x_of(c), y = s.image.y_of(r);
            wx += v * x;
            wy += v * y;
            wr += v * std::hypot(x, y);
          }
        }
        if (e.values.size() == mean_grid.size())
          for (std::size_t i = 0; i < mean_grid.size(); ++i)
            mean_grid[i] += e.values[i] / queries.size();
        json ij;
        ij["image_id"] = s.image_id;
        ij["class_id"] = s.class_id;
        ij["total_energy"] = total;
        ij["energy_centroid_x"] = total > 0 ? wx / total : 0.0;
        ij["energy_centroid_y"] = total > 0 ? wy / total : 0.0;
        ij["energy_mean_radius"] = total > 0 ? wr / total : 0.0;
        per_image.push_back(ij);
      }
      const std::string grid_path = sa.out + ".mean_grid.csv";
      detail::write_grid_csv(grid_path, proto.height, proto.width, [&](int r, int c) {
        return mean_grid[static_cast<std::size_t>(r) * proto.width + c];
      });
      json j;
      j["flags"] = flags_json(stats_energy);
      j["images"] = per_image;
      detail::write_json(j, sa.out);
      scope.add_output(sa.out);
      scope.add_output(grid_path);
      scope.write(sa.out);
      return 0;
    }

    if (stats_matches->parsed()) {
      detail::RunScope scope("stats matches", argv_echo(stats_matches), sa.seed);
      MemoryStore store = read_ahix(sa.index);
      auto queries = load_queries();
      auto records = collect_records(queries, store);
      const auto& proto = queries.front().image;
      const int bins = sa.bins > 0 ? sa.bins : proto.width;
      json j;
      j["flags"] = flags_json(stats_matches);
      j["records"] = records.size();
      for (MatchFilter filter : {MatchFilter::same, MatchFilter::different, MatchFilter::all}) {
        auto hist = location_histogram(records, filter, bins, bins, proto.width / 2.0,
                                       proto.height / 2.0);
        const std::string grid_path =
            sa.out + "." + match_filter_name(filter) + "_grid.csv";
        detail::write_grid_csv(grid_path, hist.bins_y, hist.bins_x, [&](int r, int c) {
          return static_cast<double>(hist.at(r, c));
        });
        j[std::string(match_filter_name(filter)) + "_total"] = hist.total;
        scope.add_output(grid_path);
      }
      detail::write_json(j, sa.out);
      scope.add_output(sa.out);
      scope.write(sa.out);
      return 0;
    }

    if (stats_angular->parsed()) {
      detail::RunScope scope("stats angular", argv_echo(stats_angular), sa.seed);
      MemoryStore store = read_ahix(sa.index);
      auto queries = load_queries();
      auto records = collect_records(queries, store);
      const AngleWeight weight =
          sa.weight == "kernel" ? AngleWeight::kernel : AngleWeight::uniform;
      auto report = angular_bias_report(records, weight);
      json j;
      j["flags"] = flags_json(stats_angular);
      j["weight"] = sa.weight;
      j["classes"] = json::array();
      for (const auto& bias : report) {
        json cj;
        cj["class_id"] = bias.class_id;
        cj["same"] = detail::summary_json(bias.same_class);
        cj["different"] = detail::summary_json(bias.different_class);
        cj["resultant_gap"] =
            bias.same_class.resultant_length - bias.different_class.resultant_length;
        j["classes"].push_back(cj);
      }
      detail::write_json(j, sa.out);
      scope.add_output(sa.out);
      scope.write(sa.out);
      return 0;
    }

    if (stats_radtan->parsed()) {
      detail::RunScope scope("stats radtan", argv_echo(stats_radtan), sa.seed);
      MemoryStore store = read_ahix(sa.index);
      auto queries = load_queries();
      auto records = collect_records(queries, store);
      json j;
      j["flags"] = flags_json(stats_radtan);
      for (MatchFilter filter : {MatchFilter::same, MatchFilter::different, MatchFilter::all}) {
        auto v = radial_tangential(records, filter);
        json vj;
        vj["sigma_r2"] = v.sigma_r2;
        vj["sigma_t2"] = v.sigma_t2;
        vj["ratio_t_over_r"] = v.sigma_r2 > 0 ? v.sigma_t2 / v.sigma_r2 : 0.0;
        vj["count"] = v.count;
        vj["skipped_center"] = v.skipped_center;
        j[match_filter_name(filter)] = vj;
      }
      detail::write_json(j, sa.out);
      scope.add_output(sa.out);
      scope.write(sa.out);
      return 0;
    }

    if (stats_desc->parsed()) {
      detail::RunScope scope("stats descriptors", argv_echo(stats_desc), sa.seed);
      Manifest mem_manifest = read_manifest(sa.memory);
      std::vector<Sample> memory;
      for (const auto& rec : mem_manifest.records) {
        Sample s;
        s.image = read_ahue(mem_manifest.resolve(rec));
        s.class_id = rec.class_id;
        s.image_id = rec.image_id;
        memory.push_back(std::move(s));
      }
      auto queries = load_queries();
      auto table = detail::run_descriptor_comparison(memory, queries, sa.k, sa.epsilon);

      const std::string csv_path = sa.out + ".table.csv";
      std::ofstream csv(csv_path, std::ios::trunc);
      if (!csv) raise(Errc::io_failure, "cannot write " + csv_path);
      csv << "encoding,correct,total,accuracy\n";
      json j;
      j["flags"] = flags_json(stats_desc);
      json rows = json::object();
      for (const std::string encoding : {"pixel", "avg", "max", "flatten"}) {
        const auto& [correct, total] = table.rows.at(encoding);
        csv << encoding << "," << correct << "," << total << ","
            << format_double(table.accuracy(encoding)) << "\n";
        json rj;
        rj["correct"] = correct;
        rj["total"] = total;
        rj["accuracy"] = table.accuracy(encoding);
        rows[encoding] = rj;
      }
      j["encodings"] = rows;
      detail::write_json(j, sa.out);
      scope.add_output(sa.out);
      scope.add_output(csv_path);
      scope.write(sa.out);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  std::cerr << "error: no subcommand dispatched\n";
  return 2;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(std::move(args));
}

}  // namespace ahue::cli
