#include "shallom/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "shallom/checkpoint.hpp"
#include "shallom/config.hpp"
#include "shallom/errors.hpp"

namespace shallom::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

void ensure_out_dir(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("--out-dir is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
  const auto probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

/// Writes to a sibling temporary file first so a failed run never leaves a
/// half-written output behind.
void write_file_atomic(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string dataset_name(const fs::path& dir) {
  auto name = dir.filename().string();
  if (name.empty()) name = dir.parent_path().filename().string();
  return name;
}

Json hyper_json(const Hyperparams& h) {
  return Json{{"d", h.d},
              {"k", h.k},
              {"epochs", h.epochs},
              {"batch_size", h.batch_size},
              {"dropout_rate", h.dropout_rate},
              {"l2_coefficient", h.l2_coefficient},
              {"learning_rate", h.learning_rate},
              {"seed", h.seed}};
}

/// Deterministic part of a report: no wall-clock values.
Json metrics_json(const MetricsReport& report, const std::string& dataset, const std::string& split,
                  std::int64_t num_relations, const std::optional<Hyperparams>& hyper) {
  Json j;
  j["dataset"] = dataset;
  j["split"] = split;
  for (const auto& [n, value] : report.hits) j["hits@" + std::to_string(n)] = value;
  j["num_test_triples"] = report.num_test_triples;
  j["skipped_oov"] = report.skipped_oov;
  j["num_relations"] = num_relations;
  for (const auto& [n, value] : report.hits)
    j["urc_hits@" + std::to_string(n)] = static_cast<double>(std::min<std::int64_t>(n, num_relations)) /
                                         static_cast<double>(num_relations);
  if (hyper) {
    const auto h = hyper_json(*hyper);
    for (const auto& [key, value] : h.items()) j[key] = value;
  }
  j["notes"] = report.notes;
  return j;
}

void print_metrics_table(std::ostream& out, const MetricsReport& report, const std::string& title) {
  out << title << '\n';
  for (const auto& [n, value] : report.hits)
    out << "  hits@" << std::left << std::setw(4) << n << std::fixed << std::setprecision(4) << value << '\n';
  out << "  triples " << report.num_test_triples << " (oov skipped " << report.skipped_oov << ")\n";
  if (report.train_runtime_seconds)
    out << "  train runtime " << std::setprecision(2) << *report.train_runtime_seconds << " s\n";
  out.unsetf(std::ios::floatfield);
  for (const auto& note : report.notes) out << "  note: " << note << '\n';
}

FitOptions fit_options(const RunConfig& config, std::ostream& log) {
  FitOptions options;
  options.parallel = {resolve_threads(config.threads), config.deterministic};
  options.validate_each_epoch = config.validate_each_epoch;
  options.on_epoch = [&log, epochs = config.hyper.epochs](std::int64_t epoch, double loss, double seconds) {
    log << "epoch " << (epoch + 1) << "/" << epochs << "  loss " << loss << "  (" << seconds << " s)\n";
  };
  return options;
}

}  // namespace

DatasetStats cmd_preprocess(const fs::path& dataset_dir, const fs::path& out_dir, OovPolicy policy,
                            std::ostream& log) {
  const auto files = find_split_files(dataset_dir);
  ensure_out_dir(out_dir);
  const auto splits = load_dataset(dataset_dir, policy);
  const auto pairs = build_pair_labels(splits.train.triples, splits.vocab.num_relations());

  DatasetStats stats;
  stats.dataset = dataset_name(dataset_dir);
  stats.num_entities = splits.vocab.num_entities();
  stats.num_relations = splits.vocab.num_relations();
  stats.train_triples = splits.train.triples.size();
  stats.valid_triples = splits.valid.triples.size();
  stats.test_triples = splits.test.triples.size();
  stats.valid_skipped_oov = splits.valid.skipped;
  stats.test_skipped_oov = splits.test.skipped;
  stats.train_pairs = pairs.size();
  stats.multi_relation_pairs = count_multilabel_pairs(pairs);

  write_labels(out_dir / "entities.txt", splits.vocab.entities);
  write_labels(out_dir / "relations.txt", splits.vocab.relations);
  write_indexed_triples(out_dir / "train.idx", splits.train.triples);
  write_indexed_triples(out_dir / "valid.idx", splits.valid.triples);
  write_indexed_triples(out_dir / "test.idx", splits.test.triples);

  Json j{{"dataset", stats.dataset},
         {"num_entities", stats.num_entities},
         {"num_relations", stats.num_relations},
         {"train_triples", stats.train_triples},
         {"valid_triples", stats.valid_triples},
         {"test_triples", stats.test_triples},
         {"valid_skipped_oov", stats.valid_skipped_oov},
         {"test_skipped_oov", stats.test_skipped_oov},
         {"train_pairs", stats.train_pairs},
         {"multi_relation_pairs", stats.multi_relation_pairs},
         {"oov_policy", std::string(to_string(policy))},
         {"vocabulary_hash", splits.vocab.hash()}};
  write_file_atomic(out_dir / "stats.json", j.dump(2) + "\n");

  log << stats.dataset << ": |E|=" << stats.num_entities << " |R|=" << stats.num_relations
      << " train/valid/test=" << stats.train_triples << "/" << stats.valid_triples << "/" << stats.test_triples
      << " pairs=" << stats.train_pairs << " multi-relation pairs=" << stats.multi_relation_pairs << '\n';
  return stats;
}

TrainOutcome cmd_train(const RunConfig& config, std::ostream& log) {
  config.hyper.validate();
  find_split_files(config.dataset_dir);
  ensure_out_dir(config.out_dir);

  const auto splits = load_dataset(config.dataset_dir, config.oov_policy);
  log << "training on " << splits.train.triples.size() << " triples, |E|=" << splits.vocab.num_entities()
      << " |R|=" << splits.vocab.num_relations() << '\n';
  const auto fitted = fit<Real>(splits, config.hyper, fit_options(config, log));

  TrainOutcome outcome;
  outcome.history = fitted.history;
  outcome.runtime_seconds = fitted.runtime_seconds;
  outcome.test_metrics = evaluate(fitted.params, splits.test, kDefaultHitsN, resolve_threads(config.threads));
  outcome.test_metrics.train_runtime_seconds = fitted.runtime_seconds;

  const auto dataset = dataset_name(config.dataset_dir);
  auto ckpt_tmp = config.out_dir / "model.ckpt.tmp";
  save_checkpoint(ckpt_tmp, splits.vocab, fitted.params);
  fs::rename(ckpt_tmp, config.out_dir / "model.ckpt");

  write_file_atomic(config.out_dir / "config.txt", format_hyperparams(config.hyper));

  std::ostringstream history;
  history << "epoch,mean_loss" << (fitted.history.valid_hits1.empty() ? "" : ",valid_hits1") << '\n';
  for (std::size_t e = 0; e < fitted.history.epoch_loss.size(); ++e) {
    history << (e + 1) << ',' << format_double(fitted.history.epoch_loss[e]);
    if (!fitted.history.valid_hits1.empty()) history << ',' << format_double(fitted.history.valid_hits1[e]);
    history << '\n';
  }
  write_file_atomic(config.out_dir / "history.csv", history.str());

  const auto metrics = metrics_json(outcome.test_metrics, dataset, "test", splits.vocab.num_relations(), config.hyper);
  write_file_atomic(config.out_dir / "metrics.json", metrics.dump(2) + "\n");

  Json timing{{"dataset", dataset},
              {"train_runtime_seconds", fitted.runtime_seconds},
              {"epoch_seconds", fitted.history.epoch_seconds},
              {"threads", resolve_threads(config.threads)},
              {"deterministic", config.deterministic}};
  write_file_atomic(config.out_dir / "timing.json", timing.dump(2) + "\n");

  print_metrics_table(log, outcome.test_metrics, dataset + " test");
  return outcome;
}

MetricsReport cmd_evaluate(const fs::path& checkpoint, const RunConfig& config, const std::string& split,
                           std::ostream& log) {
  if (split != "test" && split != "valid") throw ConfigError("--split must be 'test' or 'valid'");
  const auto ckpt = load_checkpoint<Real>(checkpoint);
  const auto splits = load_dataset(config.dataset_dir, ckpt.vocab, config.oov_policy);
  const auto& chosen = split == "test" ? splits.test : splits.valid;
  auto report = evaluate(ckpt.params, chosen, kDefaultHitsN, resolve_threads(config.threads));
  const auto dataset = dataset_name(config.dataset_dir);
  if (!config.out_dir.empty()) {
    ensure_out_dir(config.out_dir);
    const auto j = metrics_json(report, dataset, split, ckpt.params.num_relations(), std::nullopt);
    write_file_atomic(config.out_dir / ("metrics_" + split + ".json"), j.dump(2) + "\n");
  }
  print_metrics_table(log, report, dataset + " " + split);
  return report;
}

GridSearchResult cmd_gridsearch(const RunConfig& config, std::ostream& log) {
  config.grid.enumerate();
  find_split_files(config.dataset_dir);
  ensure_out_dir(config.out_dir);
  const auto splits = load_dataset(config.dataset_dir, config.oov_policy);

  const auto csv_path = config.out_dir / "grid_results.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open '" + csv_path.string() + "' for writing");
  csv << grid_csv_header() << '\n';

  auto options = fit_options(config, log);
  options.on_epoch = nullptr;
  std::size_t done = 0;
  const auto total = config.grid.size();
  const auto result = grid_search<Real>(splits, config.grid, options, [&](const GridRecord& record) {
    csv << grid_csv_row(record) << '\n' << std::flush;
    ++done;
    log << "[" << done << "/" << total << "] d=" << record.hyper.d << " k=" << record.hyper.k
        << " epochs=" << record.hyper.epochs << " batch=" << record.hyper.batch_size
        << " dropout=" << record.hyper.dropout_rate << " l2=" << record.hyper.l2_coefficient << "  ";
    if (record.valid_hits1) log << "valid hits@1=" << *record.valid_hits1 << '\n';
    else log << record.error << '\n';
  });
  if (!csv) throw IoError("failed writing '" + csv_path.string() + "'");

  write_file_atomic(config.out_dir / "best_config.txt",
                    "# valid hits@1 = " + format_double(result.best_valid_hits1) + "\n" +
                        format_hyperparams(result.best));
  log << "best valid hits@1 " << result.best_valid_hits1 << " at grid point " << result.best_index << '\n';
  return result;
}

std::vector<Prediction> cmd_predict(const fs::path& checkpoint, const std::string& subject, const std::string& object,
                                    std::int64_t top_k, std::ostream& log) {
  if (top_k < 1) throw ConfigError("--top-k must be at least 1");
  const auto ckpt = load_checkpoint<Real>(checkpoint);
  const auto s = ckpt.vocab.entities.find(subject);
  if (!s) throw OovError(subject, "checkpoint vocabulary");
  const auto o = ckpt.vocab.entities.find(object);
  if (!o) throw OovError(object, "checkpoint vocabulary");

  const auto num_relations = ckpt.params.num_relations();
  if (top_k > num_relations) {
    log << "note: top-k " << top_k << " exceeds |R| = " << num_relations << "; listing all relations\n";
    top_k = num_relations;
  }
  const Vector<double> scores = predict_scores(ckpt.params, *s, *o).cast<double>();
  const auto ranked = rank_relations(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())));
  std::vector<Prediction> out;
  for (std::int64_t i = 0; i < top_k; ++i)
    out.push_back({ckpt.vocab.relations.label(ranked[static_cast<std::size_t>(i)].relation),
                   ranked[static_cast<std::size_t>(i)].score});
  return out;
}

namespace {

int exit_code_for(const Error& e) {
  const std::string category = e.category();
  if (category == "io") return 3;
  if (category == "parse") return 4;
  if (category == "oov") return 5;
  if (category == "numeric") return 6;
  if (category == "config") return 7;
  if (category == "shape") return 8;
  return 1;
}

struct Flags {
  std::string dataset_dir, out_dir, config_file, oov_policy, grid_file;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool deterministic = false;
  bool validate_each_epoch = false;
  std::optional<std::int64_t> d, k, epochs, batch_size;
  std::optional<double> dropout, l2, lr;
};

void add_run_flags(CLI::App& cmd, Flags& f, bool hyper) {
  cmd.add_option("--dataset-dir", f.dataset_dir, "Directory with train/valid/test triple files");
  cmd.add_option("--out-dir", f.out_dir, "Directory for outputs");
  cmd.add_option("--config", f.config_file, "key = value training config");
  cmd.add_option("--seed", f.seed, "Root random seed");
  cmd.add_option("--threads", f.threads, "Worker threads (0 = all hardware threads)");
  cmd.add_flag("--deterministic", f.deterministic, "Fixed-order gradient reduction");
  cmd.add_option("--oov-policy", f.oov_policy, "skip|error for valid/test labels unseen in train");
  if (!hyper) return;
  cmd.add_option("--d", f.d, "Embedding size");
  cmd.add_option("--k", f.k, "Hidden layer width");
  cmd.add_option("--epochs", f.epochs, "Training epochs");
  cmd.add_option("--batch-size", f.batch_size, "Pairs per mini-batch");
  cmd.add_option("--dropout", f.dropout, "Dropout rate on the hidden layer");
  cmd.add_option("--l2", f.l2, "L2 penalty coefficient");
  cmd.add_option("--lr", f.lr, "Learning rate");
}

RunConfig resolve(const Flags& f) {
  RunConfig config;
  config.dataset_dir = f.dataset_dir;
  config.out_dir = f.out_dir;
  if (!f.config_file.empty()) {
    const auto values = read_key_values(f.config_file);
    check_known_keys(values, f.config_file);
    config.hyper = apply_hyperparams(config.hyper, values);
    if (auto it = values.find("oov_policy"); it != values.end()) config.oov_policy = parse_oov_policy(it->second);
    if (auto it = values.find("threads"); it != values.end()) config.threads = static_cast<unsigned>(std::stoul(it->second));
    if (auto it = values.find("deterministic"); it != values.end())
      config.deterministic = it->second == "1" || it->second == "true";
  }
  if (!f.oov_policy.empty()) config.oov_policy = parse_oov_policy(f.oov_policy);
  if (f.threads) config.threads = *f.threads;
  if (f.deterministic) config.deterministic = true;
  config.validate_each_epoch = f.validate_each_epoch;
  auto& h = config.hyper;
  if (f.seed) h.seed = *f.seed;
  if (f.d) h.d = *f.d;
  if (f.k) h.k = *f.k;
  if (f.epochs) h.epochs = *f.epochs;
  if (f.batch_size) h.batch_size = *f.batch_size;
  if (f.dropout) h.dropout_rate = *f.dropout;
  if (f.l2) h.l2_coefficient = *f.l2;
  if (f.lr) h.learning_rate = *f.lr;
  if (!f.grid_file.empty()) config.grid = parse_grid_spec(read_key_values(f.grid_file));
  if (f.seed) config.grid.seed = *f.seed;
  return config;
}

void require_dataset(const RunConfig& config) {
  if (config.dataset_dir.empty()) throw ConfigError("--dataset-dir is required");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relation prediction for knowledge-graph completion"};
  app.require_subcommand(1);

  Flags f;
  std::string checkpoint, subject, object, split = "test";
  std::int64_t top_k = 5;

  auto* preprocess = app.add_subcommand("preprocess", "Index a dataset and report statistics");
  add_run_flags(*preprocess, f, false);
  auto* train = app.add_subcommand("train", "Train a model and evaluate it on the test split");
  add_run_flags(*train, f, true);
  train->add_flag("--validate-each-epoch", f.validate_each_epoch, "Record validation Hits@1 after every epoch");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a split");
  add_run_flags(*evaluate_cmd, f, false);
  evaluate_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  evaluate_cmd->add_option("--split", split, "test|valid");
  auto* gridsearch = app.add_subcommand("gridsearch", "Select hyperparameters by validation Hits@1");
  add_run_flags(*gridsearch, f, false);
  gridsearch->add_option("--grid", f.grid_file, "Grid file (comma-separated candidate lists)");
  auto* predict = app.add_subcommand("predict", "Rank relations for an entity pair");
  predict->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  predict->add_option("--subject", subject, "Subject entity label")->required();
  predict->add_option("--object", object, "Object entity label")->required();
  predict->add_option("--top-k", top_k, "Number of relations to list");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*preprocess) {
      const auto config = resolve(f);
      require_dataset(config);
      cmd_preprocess(config.dataset_dir, config.out_dir, config.oov_policy, out);
    } else if (*train) {
      const auto config = resolve(f);
      require_dataset(config);
      cmd_train(config, out);
    } else if (*evaluate_cmd) {
      const auto config = resolve(f);
      require_dataset(config);
      cmd_evaluate(checkpoint, config, split, out);
    } else if (*gridsearch) {
      const auto config = resolve(f);
      require_dataset(config);
      cmd_gridsearch(config, out);
    } else if (*predict) {
      const auto predictions = cmd_predict(checkpoint, subject, object, top_k, err);
      for (std::size_t i = 0; i < predictions.size(); ++i)
        out << (i + 1) << '\t' << predictions[i].relation << '\t' << format_double(predictions[i].probability)
            << '\n';
    }
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace shallom::cli
