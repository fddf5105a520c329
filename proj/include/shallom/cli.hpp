#ifndef SHALLOM_CLI_HPP
#define SHALLOM_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "shallom/eval.hpp"
#include "shallom/kg.hpp"
#include "shallom/training.hpp"

namespace shallom::cli {

/// Scalar type used by the command-line tool for training and checkpoints.
using Real = float;

struct RunConfig {
  std::filesystem::path dataset_dir;
  std::filesystem::path out_dir;
  Hyperparams hyper;
  GridSpec grid;
  OovPolicy oov_policy = OovPolicy::Skip;
  unsigned threads = 0;  // 0 = hardware parallelism
  bool deterministic = false;
  bool validate_each_epoch = false;
};

struct DatasetStats {
  std::string dataset;
  std::int64_t num_entities = 0;
  std::int64_t num_relations = 0;
  std::size_t train_triples = 0;
  std::size_t valid_triples = 0;
  std::size_t test_triples = 0;
  std::size_t valid_skipped_oov = 0;
  std::size_t test_skipped_oov = 0;
  std::size_t train_pairs = 0;
  std::size_t multi_relation_pairs = 0;
};

/// Writes entities.txt, relations.txt, {train,valid,test}.idx and stats.json.
DatasetStats cmd_preprocess(const std::filesystem::path& dataset_dir, const std::filesystem::path& out_dir,
                            OovPolicy policy, std::ostream& log);

struct TrainOutcome {
  MetricsReport test_metrics;
  TrainHistory history;
  double runtime_seconds = 0.0;
};

/// Trains, evaluates on test and writes model.ckpt, config.txt, history.csv,
/// metrics.json and timing.json into `config.out_dir`.
TrainOutcome cmd_train(const RunConfig& config, std::ostream& log);

/// Evaluates a checkpoint on one split and writes metrics_<split>.json when
/// an output directory is given.
MetricsReport cmd_evaluate(const std::filesystem::path& checkpoint, const RunConfig& config, const std::string& split,
                           std::ostream& log);

/// Writes grid_results.csv and best_config.txt into `config.out_dir`.
GridSearchResult cmd_gridsearch(const RunConfig& config, std::ostream& log);

struct Prediction {
  std::string relation;
  double probability;
};

std::vector<Prediction> cmd_predict(const std::filesystem::path& checkpoint, const std::string& subject,
                                    const std::string& object, std::int64_t top_k, std::ostream& log);

/// Entry point shared by the executable and the integration tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace shallom::cli

#endif  // SHALLOM_CLI_HPP
