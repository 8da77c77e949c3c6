#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include "dpvm/checkpoint.hpp"
#include "dpvm/config.hpp"
#include "dpvm/data.hpp"
#include "dpvm/gradcheck_suite.hpp"
#include "dpvm/retrieval.hpp"
#include "dpvm/synthetic.hpp"
#include "dpvm/trainer.hpp"

namespace dpvm::cli {

enum ExitCode : int { ok = 0, validation_error = 1, runtime_error = 2 };

namespace detail {

using Overrides = std::vector<std::pair<std::string, std::string>>;

inline Overrides split_settings(const std::vector<std::string>& settings) {
  Overrides out;
  for (const auto& s : settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

// Options shared by the subcommands that build a RunConfig from scratch.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> settings;
  std::optional<std::size_t> threads;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "seed for every random stream");
    app->add_option("--set", settings, "override one config key (key=value), repeatable");
    app->add_option("--threads", threads, "worker cap");
  }

  // Flags after --set, so a dedicated flag wins over a generic override.
  RunConfig resolve(Overrides flag_overrides) const {
    auto overrides = split_settings(settings);
    if (seed) overrides.emplace_back("seed", std::to_string(*seed));
    if (threads) overrides.emplace_back("threads", std::to_string(*threads));
    for (auto& kv : flag_overrides) overrides.push_back(std::move(kv));
    return parse_config(config_path, overrides);
  }
};

inline std::filesystem::path strip_trailing_separator(std::filesystem::path p) {
  auto s = p.string();
  while (s.size() > 1 && (s.back() == '/' || s.back() == '\\')) s.pop_back();
  return s;
}

/// Builds the directory next to its destination and renames it into place.
template <typename Fill>
void write_directory_atomic(const std::filesystem::path& dest_in, Fill&& fill) {
  namespace fs = std::filesystem;
  const auto dest = strip_trailing_separator(dest_in);
  if (fs::exists(dest) && !(fs::is_directory(dest) && fs::is_empty(dest)))
    throw ConfigError("output directory " + dest.string() + " already exists and is not empty");
  auto tmp = dest;
  tmp += ".tmp." + std::to_string(::getpid());
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    fill(tmp);
    if (fs::exists(dest)) fs::remove(dest);
    fs::rename(tmp, dest);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

inline std::string log_text(const RunConfig& cfg, const std::vector<LossLogEntry>& history) {
  std::ostringstream os;
  os << config_echo(cfg) << log_header() << "\n";
  for (const auto& e : history) os << format_log_line(e) << "\n";
  return os.str();
}

inline std::string report_text(const RunConfig& cfg, const RecallReport& rep, const std::string& label) {
  std::ostringstream os;
  os << config_echo(cfg) << "# queries=" << rep.num_queries << " config_digest=" << rep.config_digest
     << " seed=" << rep.seed << "\n"
     << format_report_table(rep, label) << format_report_lines(rep);
  return os.str();
}

struct LoadedRun {
  Checkpoint ckpt;
  RunConfig cfg;
  Split split;
};

// Keys that may differ from the checkpoint at evaluation time; everything
// else (in particular the seed, which fixes the split) comes from training.
inline RunConfig eval_config(const RunConfig& trained, const Overrides& overrides) {
  RunConfig cfg = trained;
  for (const auto& [k, v] : overrides) {
    if (k != "threads" && k != "eval_corpus")
      throw ConfigError("config key '" + k + "' is fixed by the checkpoint; only threads and "
                        "eval_corpus can be set at evaluation time");
    apply_setting(cfg, k, v);
  }
  cfg.validate();
  return cfg;
}

inline LoadedRun load_run(const std::filesystem::path& ckpt_path, const std::filesystem::path& data_dir,
                          const Overrides& overrides) {
  LoadedRun run{load_checkpoint(ckpt_path), {}, {}};
  run.cfg = eval_config(run.ckpt.config, overrides);
  const auto data = load_dataset(data_dir);
  const auto& d = run.ckpt.params.dims;
  if (data.dims.video_content != d.video_content_dim || data.dims.music_content != d.music_content_dim ||
      data.dims.video_emotion != d.video_emotion_dim || data.dims.music_emotion != d.music_emotion_dim)
    throw ConfigError("dataset feature widths do not match the checkpoint's model");
  run.split = split_dataset(data, run.cfg.train.seed);
  return run;
}

inline std::vector<ItemRecord> eval_corpus(const LoadedRun& run) {
  if (run.cfg.eval_corpus == "test") return run.split.test.musics;
  auto all = run.split.train.musics;
  all.insert(all.end(), run.split.test.musics.begin(), run.split.test.musics.end());
  return all;
}

}  // namespace detail

/// Parses argv, runs the chosen subcommand and maps failures to exit codes:
/// 1 for usage, config and data validation errors, 2 for runtime and
/// numeric failures.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"Dual-path video-to-music retrieval: synthetic data, training, evaluation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "print help for every subcommand");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired corpus");
  ConfigFlags synth_flags;
  synth_flags.attach(synth);
  std::optional<std::size_t> pairs;
  std::string synth_out;
  synth->add_option("--pairs", pairs, "number of pair groups");
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* trn = app.add_subcommand("train", "train a model on a dataset's training split");
  ConfigFlags train_flags;
  train_flags.attach(trn);
  std::string train_data, train_ckpt, train_log;
  std::optional<std::size_t> batch_size, epochs;
  std::optional<std::string> ablation, metric;
  std::optional<double> margin, lr;
  trn->add_option("--data", train_data, "dataset directory")->required();
  trn->add_option("--checkpoint,--out", train_ckpt, "checkpoint path (default <data>/model.ckpt)");
  trn->add_option("--log", train_log, "per-step loss log (CSV)");
  trn->add_option("--batch-size", batch_size);
  trn->add_option("--epochs", epochs);
  trn->add_option("--ablation", ablation, "content|emotion|splicing|interactive");
  trn->add_option("--metric", metric, "contrastive|batch|ppml");
  trn->add_option("--margin", margin);
  trn->add_option("--lr", lr);

  // eval
  auto* evl = app.add_subcommand("eval", "Recall@K of a checkpoint on the test split");
  std::string eval_data, eval_ckpt, eval_report;
  std::vector<std::size_t> eval_ks;
  std::vector<std::string> eval_settings;
  std::optional<std::size_t> eval_threads;
  evl->add_option("--data", eval_data, "dataset directory")->required();
  evl->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
  evl->add_option("--report", eval_report, "write the report here instead of stdout");
  evl->add_option("--k", eval_ks, "comma-separated K values")->delimiter(',');
  evl->add_option("--set", eval_settings, "threads=N or eval_corpus=test|all");
  evl->add_option("--threads", eval_threads, "worker cap");

  // query
  auto* qry = app.add_subcommand("query", "rank the music corpus for one video");
  std::string query_data, query_ckpt, query_video;
  std::size_t query_k = 10;
  std::vector<std::string> query_settings;
  qry->add_option("--data", query_data, "dataset directory")->required();
  qry->add_option("--checkpoint", query_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
  qry->add_option("--video", query_video, "video item id")->required();
  qry->add_option("--k", query_k, "number of results");
  qry->add_option("--set", query_settings, "eval_corpus=test|all");

  // gradcheck
  auto* gck = app.add_subcommand("gradcheck", "finite-difference check of every registered loss");
  std::uint64_t gc_seed = 0;
  std::size_t gc_count = 1;
  double gc_tol = 1e-4;
  gck->add_option("--seed", gc_seed, "first seed");
  gck->add_option("--count", gc_count, "number of consecutive seeds")->check(CLI::PositiveNumber);
  gck->add_option("--tolerance", gc_tol, "max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err) == 0 ? ok : validation_error;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return validation_error;
  }

  try {
    if (*synth) {
      Overrides flags;
      if (pairs) flags.emplace_back("pairs", std::to_string(*pairs));
      const RunConfig cfg = synth_flags.resolve(flags);
      const auto corpus = generate_synthetic(cfg.synth);
      write_directory_atomic(synth_out, [&](const std::filesystem::path& dir) {
        write_synthetic(dir, corpus);
        write_text_atomic(dir / "config.txt", config_echo(cfg));
      });
      out << config_echo(cfg) << "wrote " << corpus.set.videos.size() << " videos, "
          << corpus.set.musics.size() << " musics to " << synth_out << "\n";
      return ok;
    }

    if (*trn) {
      Overrides flags;
      if (batch_size) flags.emplace_back("batch_size", std::to_string(*batch_size));
      if (epochs) flags.emplace_back("epochs", std::to_string(*epochs));
      if (ablation) flags.emplace_back("ablation", *ablation);
      if (metric) flags.emplace_back("metric", *metric);
      if (margin) flags.emplace_back("margin", dpvm::detail::real_str(*margin));
      if (lr) flags.emplace_back("learning_rate", dpvm::detail::real_str(*lr));
      const RunConfig cfg = train_flags.resolve(flags);
      const auto data = load_dataset(train_data);
      const auto split = split_dataset(data, cfg.train.seed);
      out << config_echo(cfg) << "training on " << split.train.pairs.size() << " pairs ("
          << split.train.groups().size() << " groups), " << split.test.groups().size()
          << " groups held out\n";

      std::size_t shown_epoch = 0;
      double epoch_sum = 0.0;
      std::size_t epoch_steps = 0;
      auto report_epoch = [&] {
        if (epoch_steps > 0)
          out << "epoch " << shown_epoch << " mean L_total " << std::setprecision(6)
              << epoch_sum / static_cast<double>(epoch_steps) << "\n";
      };
      const auto trained = train(cfg.train, split.train, [&](const LossLogEntry& e) {
        if (e.epoch != shown_epoch) {
          report_epoch();
          shown_epoch = e.epoch;
          epoch_sum = 0.0;
          epoch_steps = 0;
        }
        epoch_sum += e.total;
        ++epoch_steps;
      });
      report_epoch();

      const auto ckpt = make_checkpoint(cfg, trained);
      const std::filesystem::path ckpt_path =
          train_ckpt.empty() ? strip_trailing_separator(train_data) / "model.ckpt"
                             : std::filesystem::path(train_ckpt);
      if (!train_log.empty()) write_text_atomic(train_log, log_text(ckpt.config, trained.history));
      save_checkpoint(ckpt, ckpt_path);
      out << "checkpoint " << ckpt_path.string() << "\n";
      return ok;
    }

    if (*evl) {
      auto overrides = split_settings(eval_settings);
      if (eval_threads) overrides.emplace_back("threads", std::to_string(*eval_threads));
      const auto run = load_run(eval_ckpt, eval_data, overrides);
      EvalOptions opt;
      if (!eval_ks.empty()) opt.ks = eval_ks;
      const auto corpus = eval_corpus(run);
      opt.corpus = &corpus;
      opt.exclude = &run.split.train;
      opt.threads = run.cfg.threads;
      const auto kind = embedding_kind_for(run.cfg.train.ablation);
      auto rep = evaluate(run.ckpt.params, run.split.test, kind, opt);
      rep.config_digest = config_digest(run.ckpt.config);
      rep.seed = run.cfg.train.seed;
      const auto text = report_text(run.cfg, rep, to_string(kind));
      if (eval_report.empty()) {
        out << text;
      } else {
        write_text_atomic(eval_report, text);
        out << format_report_table(rep, to_string(kind)) << "report " << eval_report << "\n";
      }
      return ok;
    }

    if (*qry) {
      const auto run = load_run(query_ckpt, query_data, split_settings(query_settings));
      const auto kind = embedding_kind_for(run.cfg.train.ablation);
      const ItemRecord* video = nullptr;
      for (const auto* part : {&run.split.test, &run.split.train})
        for (const auto& v : part->videos)
          if (v.item_id == query_video) video = &v;
      if (!video) throw DataError("query: no video with id '" + query_video + "'");
      const auto index = embed_corpus(run.ckpt.params, eval_corpus(run), kind);
      const auto q = embed_items(run.ckpt.params, std::vector<ItemRecord>{*video}, Modality::video, kind);
      const auto ranking = rank_for_query(index, q.row(0), query_k);
      out << config_echo(run.cfg) << "rank,music_id,similarity\n" << std::setprecision(9);
      for (std::size_t r = 0; r < ranking.items.size(); ++r)
        out << r + 1 << ',' << ranking.items[r].music_id << ',' << ranking.items[r].similarity << "\n";
      if (ranking.truncated)
        out << "# corpus has only " << ranking.items.size() << " items; K truncated\n";
      return ok;
    }

    if (*gck) {
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < gc_count; ++i) seeds.push_back(gc_seed + i);
      const auto rep = run_grad_suite(seeds);
      out << std::setprecision(3);
      for (const auto& c : rep.cases)
        out << "seed " << c.seed << ' ' << std::left << std::setw(28) << c.name << std::right
            << " max_rel_err " << c.check.max_relative_error << "\n";
      const bool pass = rep.passed(gc_tol);
      out << (pass ? "PASS" : "FAIL") << " max_rel_err " << rep.max_relative_error << " tolerance "
          << gc_tol << "\n";
      return pass ? ok : runtime_error;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return validation_error;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return validation_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return runtime_error;
  }
  return validation_error;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"dpvm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dpvm::cli
