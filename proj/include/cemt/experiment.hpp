#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cemt/data.hpp"
#include "cemt/metrics.hpp"
#include "cemt/trainer.hpp"

namespace cemt {

// One raw "key value..." line from a per-method override block, applied on top
// of the shared train block when the cell's config is built.
struct TrainOverride {
  Method method = Method::CompetitiveBi;
  std::string key;
  std::vector<std::string> values;
};

// A full study: one synthetic dataset, a grid of (method, split, seed) cells,
// and shared training hyperparameters. Parsed from a block-structured text
// file; see specs/desk.spec for the reference layout.
struct ExperimentSpec {
  std::filesystem::path output = "out/desk";
  GenConfig dataset;   // dataset.count is the total volume count
  int test_count = 20; // last test_count volumes are held out for evaluation
  std::uint64_t split_seed = 2001;  // one shuffle shared by every method/seed
  std::vector<int> splits;          // labeled counts, e.g. {8, 16}
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds;
  TrainConfig base;
  std::vector<TrainOverride> overrides;

  void validate() const;  // throws ConfigError
};

// Parses the spec text. The format is line-oriented: '#' starts a comment,
// "name {" opens a block ("method NAME {" for per-method overrides), "}"
// closes it, and every other line is a whitespace-split "key value..."
// statement. A one-line "name { a b c }" form is accepted too. Errors carry
// 1-based line numbers. Throws FormatError.
ExperimentSpec parse_experiment_spec(const std::string& text);
ExperimentSpec load_experiment_spec(const std::filesystem::path& path);  // throws IoError

// Switches the shared train block to the long-schedule values: 6000
// iterations, lr decay every 2500 steps, 6000-step consistency ramp.
void apply_paper_scale(ExperimentSpec& spec);

// Applies one override statement to a config. Shared by the "train" block and
// the per-method blocks; throws FormatError on unknown keys or bad values.
void apply_train_key(TrainConfig& cfg, const std::string& key,
                     const std::vector<std::string>& values);

// Config for one grid cell: base + per-method overrides, with the three
// training streams derived from the cell seed so distinct seeds never share
// RNG state.
TrainConfig cell_config(const ExperimentSpec& spec, Method method, int split,
                        std::uint64_t seed);

std::string cell_name(Method method, int split, std::uint64_t seed);

std::filesystem::path dataset_dir(const ExperimentSpec& spec);
std::filesystem::path manifest_path(const ExperimentSpec& spec);
std::filesystem::path run_dir(const ExperimentSpec& spec, Method method, int split,
                              std::uint64_t seed);
std::filesystem::path compare_dir(const ExperimentSpec& spec);

// Generates (or verifies, when already present) the dataset plus one named
// split per labeled count under dataset_dir(spec).
DatasetManifest cmd_generate(const ExperimentSpec& spec);

// Trains one cell on its split, evaluates the final predictor on the test
// cases, and saves the run artifacts under run_dir(...). Requires the
// manifest written by cmd_generate.
RunReport cmd_train_cell(const ExperimentSpec& spec, Method method, int split,
                         std::uint64_t seed);

// Re-evaluates a saved run from its checkpoints and rewrites metrics.json and
// eval.csv; returns the table.
MetricsTable cmd_evaluate_cell(const ExperimentSpec& spec, Method method, int split,
                               std::uint64_t seed);

// Per-cell test summaries as read back from a run's metrics.json.
struct CellStats {
  Method method = Method::Supervised;
  int split = 0;
  std::uint64_t seed = 0;
  bool present = false;
  MetricSummary dice, jaccard, asd, hd95;
};

// One (method, split) row: mean and population standard deviation over the
// per-seed test means.
struct ComparisonRow {
  Method method = Method::Supervised;
  int split = 0;
  int n_seeds = 0;  // cells actually found
  double dice_mean = 0.0, dice_std = 0.0;
  double jaccard_mean = 0.0, jaccard_std = 0.0;
  double asd_mean = 0.0, asd_std = 0.0;
  double hd95_mean = 0.0, hd95_std = 0.0;
};

struct CompareResult {
  std::vector<CellStats> cells;
  std::vector<ComparisonRow> rows;
  std::vector<std::string> missing;  // cell names without saved metrics
  std::string table_csv;             // %.17g, byte-reproducible
  std::string table_text;            // fixed-width "mean +/- std" table
};

// Collects every grid cell. With run_missing, absent cells are trained first;
// otherwise they are listed in `missing` and skipped in the aggregation.
// Writes table.csv, table.txt, and the per-split r-weight and training-Dice
// charts under compare_dir(spec).
CompareResult cmd_compare(const ExperimentSpec& spec, bool run_missing);

}  // namespace cemt
