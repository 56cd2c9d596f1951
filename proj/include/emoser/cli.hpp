#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emoser/audio.hpp"
#include "emoser/config.hpp"
#include "emoser/error.hpp"
#include "emoser/gradcheck_suite.hpp"
#include "emoser/models.hpp"
#include "emoser/ravdess.hpp"
#include "emoser/report.hpp"
#include "emoser/serve.hpp"
#include "emoser/train.hpp"

namespace emoser::cli {

namespace fs = std::filesystem;

namespace detail {

inline ravdess::DatasetSplit read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::IoFailure, "split file " + path + " not found");
  try {
    return ravdess::split_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigParseError, path + ": " + e.what());
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  emoser::detail::write_text(path, j.dump(2) + "\n");
}

inline std::vector<std::string> class_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back(class_name(i, k));
  return names;
}

inline ModelSpec spec_for_cache(const ravdess::FeatureCache& cache) {
  return {ModelKind::CnnFig1, cache.config.height, cache.config.width, ravdess::kNumEmotions, cache.config};
}

}  // namespace detail

/// Runs one subcommand. Exit codes: 0 success, 1 domain error, 2 usage error.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Speech emotion recognition toolkit: featurize RAVDESS, train and evaluate CNN/DNN models, serve "
               "predictions.",
               "emoser"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_path;
  auto load_config = [&]() -> AppConfig { return config_path.empty() ? AppConfig{} : load_app_config(config_path); };
  std::function<int()> action;

  // prepare
  auto* prepare = app.add_subcommand("prepare", "Scan (or stage) the corpus, featurize it, and write a feature cache");
  std::string corpus, cache_out, archive;
  prepare->add_option("--corpus", corpus, "Corpus root directory (archive destination with --archive)")->required();
  prepare->add_option("--out", cache_out, "Feature cache output path")->required();
  prepare->add_option("--archive", archive, "ZIP archive to extract into --corpus first");
  prepare->add_option("--config", config_path, "JSON config (pipeline section is used)");
  prepare->callback([&] {
    action = [&]() -> int {
      const AppConfig cfg = load_config();
      ravdess::CorpusScan scan;
      if (!archive.empty()) {
        auto report = ravdess::stage_archive(archive, corpus);
        out << "extracted " << report.extracted_files << " files from " << archive << "\n";
        scan = std::move(report.scan);
      } else {
        scan = ravdess::scan_corpus(corpus);
      }
      out << scan.census.to_string();
      for (const auto& w : scan.warnings) err << "warning: " << w << "\n";
      if (scan.entries.empty()) fail(Errc::EmptyInput, "no audio-only speech files under " + corpus);
      const auto examples = ravdess::featurize_corpus(scan.entries, cfg.pipeline);
      ravdess::write_feature_cache(cache_out, cfg.pipeline, examples);
      out << "wrote " << examples.size() << " examples (" << cfg.pipeline.height << "x" << cfg.pipeline.width
          << ") to " << cache_out << "\n";
      return 0;
    };
  });

  // split
  auto* split = app.add_subcommand("split", "Split a feature cache into train/test index lists");
  std::string cache_path, split_out = "split.json", strategy = "stratified";
  double ratio = 0.75;
  std::uint64_t split_seed = 7;
  split->add_option("--cache", cache_path, "Feature cache")->required();
  split->add_option("--ratio", ratio, "Training fraction")->capture_default_str();
  split->add_option("--seed", split_seed, "Shuffle seed")->capture_default_str();
  split->add_option("--strategy", strategy, "stratified|speaker")->capture_default_str();
  split->add_option("--out", split_out, "Split JSON output path")->capture_default_str();
  split->callback([&] {
    action = [&]() -> int {
      const auto cache = ravdess::read_feature_cache(cache_path);
      const auto keys = ravdess::split_keys(cache.examples);
      const auto s = ravdess::split_dataset(keys, ratio, split_seed, ravdess::parse_strategy(strategy));
      detail::write_json(split_out, ravdess::split_to_json(s));
      out << "train " << s.train.size() << " / test " << s.test.size() << " (" << strategy << ", seed " << split_seed
          << ") -> " << split_out << "\n";
      return 0;
    };
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on the train half of a split");
  std::string split_path, checkpoint_out, history_out, curves_out, model_kind = "cnn";
  std::optional<std::size_t> epochs_override;
  train_cmd->add_option("--cache", cache_path, "Feature cache")->required();
  train_cmd->add_option("--split", split_path, "Split JSON (default: split from the config's split section)");
  train_cmd->add_option("--config", config_path, "JSON config (train, split and paths sections are used)");
  train_cmd->add_option("--checkpoint-out", checkpoint_out,
                        "Checkpoint output path (default: paths.checkpoint, else model.ckpt)");
  train_cmd->add_option("--history-out", history_out, "Learning-curve output (.csv or .json)");
  train_cmd->add_option("--curves-out", curves_out, "Learning-curve SVG output");
  train_cmd->add_option("--model", model_kind, "cnn|dnn")->capture_default_str();
  train_cmd->add_option("--epochs", epochs_override, "Override train.epochs");
  train_cmd->callback([&] {
    action = [&]() -> int {
      AppConfig cfg = load_config();
      if (epochs_override) cfg.train.epochs = *epochs_override;
      cfg.train.validate();
      const auto cache = ravdess::read_feature_cache(cache_path);
      const auto s = split_path.empty()
                         ? ravdess::split_dataset(ravdess::split_keys(cache.examples), cfg.split.ratio,
                                                  cfg.split.seed, cfg.split.strategy)
                         : detail::read_split(split_path);
      if (checkpoint_out.empty()) checkpoint_out = cfg.paths.checkpoint.empty() ? "model.ckpt" : cfg.paths.checkpoint;
      const auto train_set = make_samples(cache.examples, s.train);
      const auto val_set = make_samples(cache.examples, s.test);
      ModelSpec spec = detail::spec_for_cache(cache);
      spec.kind = parse_model_kind(model_kind);
      SeededRng init_rng(cfg.train.seed);
      Model model = build_model(spec, init_rng);
      const auto history = train(model, train_set, val_set, cfg.train, [&](const EpochRecord& r) {
        out << "epoch " << r.epoch << " train_loss " << emoser::detail::sig6(r.train_loss) << " train_acc "
            << emoser::detail::sig6(r.train_accuracy) << " val_loss " << emoser::detail::sig6(r.val_loss)
            << " val_acc " << emoser::detail::sig6(r.val_accuracy) << std::endl;
      });
      save_checkpoint(model, checkpoint_out);
      if (!history_out.empty()) export_history(history, history_out, history_format_for(history_out));
      if (!curves_out.empty()) render_curves(history, curves_out);
      out << "saved " << to_string(spec.kind) << " checkpoint " << checkpoint_out << " (model_id " << model.id()
          << ")\n";
      return 0;
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test half of a split");
  std::string checkpoint_path, report_out, subset = "test";
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  eval_cmd->add_option("--cache", cache_path, "Feature cache")->required();
  eval_cmd->add_option("--split", split_path, "Split JSON")->required();
  eval_cmd->add_option("--report-out", report_out, "Metrics JSON output path");
  eval_cmd->add_option("--subset", subset, "test|train")->capture_default_str();
  eval_cmd->callback([&] {
    action = [&]() -> int {
      const Model model = load_checkpoint(checkpoint_path);
      const auto cache = ravdess::read_feature_cache(cache_path);
      if (!(cache.config == model.spec().pipeline)) {
        fail(Errc::ShapeMismatch, "feature cache pipeline differs from the checkpoint's pipeline");
      }
      const auto s = detail::read_split(split_path);
      if (subset != "test" && subset != "train") fail(Errc::InvalidArgument, "--subset must be test or train");
      const auto samples = make_samples(cache.examples, subset == "test" ? s.test : s.train);
      const auto report = evaluate(model, samples);
      const auto names = detail::class_names(model.spec().num_classes);
      auto j = to_json(report, names);
      j["model_id"] = model.id();
      j["subset"] = subset;
      if (!report_out.empty()) detail::write_json(report_out, j);
      char line[160];
      std::snprintf(line, sizeof line, "accuracy %.4f  micro-F1 %.4f  macro-F1 %.4f  kappa %s\n", report.accuracy,
                    report.micro.f1[0], report.macro.f1[0],
                    report.cohens_kappa ? emoser::detail::sig6(*report.cohens_kappa).c_str() : "undefined");
      out << line;
      return 0;
    };
  });

  // compare
  auto* compare = app.add_subcommand("compare", "Train CNN and DNN under one config and tabulate test metrics");
  std::string text_out;
  compare->add_option("--cache", cache_path, "Feature cache")->required();
  compare->add_option("--split", split_path, "Split JSON")->required();
  compare->add_option("--config", config_path, "JSON config (train section is used)");
  compare->add_option("--report-out", report_out, "Comparison JSON output path");
  compare->add_option("--text-out", text_out, "Aligned plain-text table output path");
  compare->add_option("--epochs", epochs_override, "Override train.epochs");
  compare->callback([&] {
    action = [&]() -> int {
      AppConfig cfg = load_config();
      if (epochs_override) cfg.train.epochs = *epochs_override;
      cfg.train.validate();
      const auto cache = ravdess::read_feature_cache(cache_path);
      const auto s = detail::read_split(split_path);
      const auto train_set = make_samples(cache.examples, s.train);
      const auto test_set = make_samples(cache.examples, s.test);
      const auto report = compare_models(train_set, test_set, detail::spec_for_cache(cache), cfg.train,
                                         [&](const std::string& name, const EpochRecord& r) {
                                           out << name << " epoch " << r.epoch << " val_acc "
                                               << emoser::detail::sig6(r.val_accuracy) << std::endl;
                                         });
      const std::string table = report.to_text();
      out << table;
      if (!report_out.empty()) detail::write_json(report_out, report.to_json());
      if (!text_out.empty()) emoser::detail::write_text(text_out, table);
      return 0;
    };
  });

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Score one WAV file with a checkpoint");
  std::string wav_path;
  predict_cmd->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  predict_cmd->add_option("--wav", wav_path, "16-bit PCM WAV file")->required();
  predict_cmd->callback([&] {
    action = [&]() -> int {
      const Model model = load_checkpoint(checkpoint_path);
      out << to_json(predict(model, read_wav_file(wav_path))).dump(2) << "\n";
      return 0;
    };
  });

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every layer and the full CNN");
  std::uint64_t gc_seed = 1;
  std::size_t gc_seeds = 100;
  gradcheck->add_option("--seed", gc_seed, "Base seed")->capture_default_str();
  gradcheck->add_option("--seeds", gc_seeds, "Number of random seeds")->capture_default_str();
  gradcheck->callback([&] {
    action = [&]() -> int {
      bool ok = true;
      for (const auto& r : run_gradient_suite(gc_seeds, gc_seed)) {
        char line[160];
        std::snprintf(line, sizeof line, "%-16s max_rel_error %.3e  threshold %.0e  checked %zu  kinks %zu  %s\n",
                      r.name.c_str(), r.max_rel_error, r.threshold, r.checked, r.skipped_kinks,
                      r.passed() ? "PASS" : "FAIL");
        out << line;
        ok = ok && r.passed();
      }
      return ok ? 0 : 1;
    };
  });

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP inference API (and optional static web demo)");
  std::string addr = "127.0.0.1:8080", static_dir;
  serve_cmd->add_option("--checkpoint", checkpoint_path, "Model checkpoint")->required();
  serve_cmd->add_option("--addr", addr, "host:port to bind")->capture_default_str();
  serve_cmd->add_option("--static-dir", static_dir, "Directory of static web assets served at /");
  serve_cmd->callback([&] {
    action = [&]() -> int {
      auto service = serve::InferenceService::from_checkpoint(checkpoint_path);
      if (!static_dir.empty()) service.mount_static(static_dir);
      const auto [host, port] = serve::parse_address(addr);
      service.bind(host, port);
      out << "serving model " << service.model().id() << " on http://" << host << ":" << port << std::endl;
      service.listen();
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << e.what() << "\n";
      return 0;
    }
    err << "usage error: " << e.what() << "\n"
        << "run with --help for usage\n";
    return 2;
  }

  try {
    return action ? action() : 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == Errc::ConfigParseError ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace emoser::cli
