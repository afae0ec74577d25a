#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "cemt/errors.hpp"
#include "cemt/experiment.hpp"
#include "cemt/plot.hpp"

namespace fs = std::filesystem;
using namespace cemt;

namespace {

// A complete document exercising every block type.
const char* kFullSpec = R"(# sample study
output out/sample

dataset {
  seed 7
  count 100          # trailing comment
  dims 2
  extent 64 64 1
  noise_sigma 0.5
  threshold 0.5
  min_foreground 0.05
  max_foreground 0.60
  test_count 20
  split_seed 2001
}

splits { 8 16 }
methods { supervised mt ce-mt-u ce-mt-b }

seeds {
  1 2
  3
}

train {
  iterations 1500
  lr_initial 0.01
  lr_schedule_step 625
  batch_labeled 2
  batch_unlabeled 2
  patch 64 64 1
  base_channels 8
  depth 3
  instance_norm off
  ema_alpha 0.99
  head_policy per-head
  consistency_weight 0.1
  ramp_steps 1500
  teacher_noise on
  teacher_noise_sigma 0.05
  teacher_transform on
  sdf_k 1500
  sgd_momentum 0
}

method ce-mt-b {
  consistency_weight 0.2
}
)";

// Minimal valid spec with a custom output root: tiny volumes, two methods,
// two seeds, four iterations.
std::string micro_spec(const std::string& out) {
  return "output " + out + R"(
dataset {
  seed 3
  count 8
  dims 2
  extent 16 16 1
  noise_sigma 0.3
  test_count 2
  split_seed 5
}
splits { 3 }
methods { supervised ce-mt-u }
seeds { 1 2 }
train {
  iterations 4
  lr_schedule_step 2
  patch 8 8 1
  base_channels 4
  depth 2
  ramp_steps 4
}
)";
}

void expect_parse_error(const std::string& text, const std::string& fragment) {
  try {
    parse_experiment_spec(text);
    FAIL_CHECK("expected FormatError for fragment '" << fragment << "'");
  } catch (const FormatError& e) {
    CHECK_MESSAGE(std::string(e.what()).find(fragment) != std::string::npos,
                  "message '" << e.what() << "' lacks '" << fragment << "'");
  }
}

std::string slurp(const fs::path& p) { return read_file(p); }

}  // namespace

TEST_CASE("spec parser reads every block of a full document") {
  const ExperimentSpec spec = parse_experiment_spec(kFullSpec);
  CHECK(spec.output == fs::path("out/sample"));
  CHECK(spec.dataset.seed == 7);
  CHECK(spec.dataset.count == 100);
  CHECK(spec.dataset.dims == 2);
  CHECK(spec.dataset.extent == std::array<int, 3>{64, 64, 1});
  CHECK(spec.dataset.noise_sigma == doctest::Approx(0.5));
  CHECK(spec.dataset.threshold == doctest::Approx(0.5));
  CHECK(spec.dataset.min_foreground == doctest::Approx(0.05));
  CHECK(spec.dataset.max_foreground == doctest::Approx(0.60));
  CHECK(spec.test_count == 20);
  CHECK(spec.split_seed == 2001);
  CHECK(spec.splits == std::vector<int>{8, 16});
  CHECK(spec.methods == std::vector<Method>{Method::Supervised, Method::MeanTeacher,
                                            Method::CompetitiveUni, Method::CompetitiveBi});
  CHECK(spec.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(spec.base.iterations == 1500);
  CHECK(spec.base.lr_initial == doctest::Approx(0.01));
  CHECK(spec.base.lr_schedule_step == 625);
  CHECK(spec.base.batch_labeled == 2);
  CHECK(spec.base.batch_unlabeled == 2);
  CHECK(spec.base.patch_shape == std::array<int, 3>{64, 64, 1});
  CHECK(spec.base.network.base_channels == 8);
  CHECK(spec.base.network.depth == 3);
  CHECK_FALSE(spec.base.network.instance_norm);
  CHECK(spec.base.ema.alpha == doctest::Approx(0.99));
  CHECK(spec.base.ema.head_policy == HeadPolicy::PerHead);
  CHECK(spec.base.consistency_weight == doctest::Approx(0.1));
  CHECK(spec.base.ramp_steps == 1500);
  CHECK(spec.base.teacher_noise);
  CHECK(spec.base.teacher_noise_sigma == doctest::Approx(0.05));
  CHECK(spec.base.teacher_transform);
  CHECK(spec.base.sdf_k == doctest::Approx(1500.0));
  CHECK(spec.base.sgd_momentum == doctest::Approx(0.0));
  REQUIRE(spec.overrides.size() == 1);
  CHECK(spec.overrides[0].method == Method::CompetitiveBi);
  CHECK(spec.overrides[0].key == "consistency_weight");
}

TEST_CASE("per-method overrides apply only to their method") {
  const ExperimentSpec spec = parse_experiment_spec(kFullSpec);
  const TrainConfig bi = cell_config(spec, Method::CompetitiveBi, 8, 1);
  const TrainConfig uni = cell_config(spec, Method::CompetitiveUni, 8, 1);
  CHECK(bi.consistency_weight == doctest::Approx(0.2));
  CHECK(uni.consistency_weight == doctest::Approx(0.1));
  CHECK(bi.method == Method::CompetitiveBi);
  CHECK(uni.method == Method::CompetitiveUni);
}

TEST_CASE("cell_config derives distinct deterministic streams per seed") {
  const ExperimentSpec spec = parse_experiment_spec(kFullSpec);
  const TrainConfig a = cell_config(spec, Method::MeanTeacher, 8, 1);
  const TrainConfig a2 = cell_config(spec, Method::MeanTeacher, 8, 1);
  const TrainConfig b = cell_config(spec, Method::MeanTeacher, 8, 2);
  CHECK(a.seed_init == a2.seed_init);
  CHECK(a.seed_sampler == a2.seed_sampler);
  CHECK(a.seed_noise == a2.seed_noise);
  CHECK(a.seed_init != b.seed_init);
  CHECK(a.seed_sampler != b.seed_sampler);
  CHECK(a.seed_noise != b.seed_noise);
  // The three streams of one cell never coincide either.
  CHECK(a.seed_init != a.seed_sampler);
  CHECK(a.seed_sampler != a.seed_noise);
  // The abort dump lands inside the cell's run directory.
  CHECK(a.abort_dump_dir.find(cell_name(Method::MeanTeacher, 8, 1)) != std::string::npos);

  ExperimentSpec spec3 = spec;
  spec3.base.network.dims = 3;  // stale value; the dataset decides
  CHECK(cell_config(spec3, Method::Supervised, 8, 1).network.dims == 2);
}

TEST_CASE("parse errors name the offending line") {
  expect_parse_error("bogus 1\n", "line 1");
  expect_parse_error("\n\nweird {\n}\n", "line 3");                    // unknown block
  expect_parse_error("dataset {\n  shoes 2\n}\n", "line 2");           // unknown key
  expect_parse_error("train {\n  iterations x\n}\n", "line 2");        // bad integer
  expect_parse_error("dataset {\n  extent 64 64\n}\n", "line 2");      // arity
  expect_parse_error("dataset {\n  seed 1\n", "never closed");
  expect_parse_error("}\n", "line 1");
  expect_parse_error("dataset {\n  train {\n}\n}\n", "do not nest");
  expect_parse_error("method {\n}\n", "method block needs");
  expect_parse_error("methods { supervised warlock }\n", "line 1");    // unknown method
  expect_parse_error("splits { 8 } extra\n", "must end with '}'");
  expect_parse_error("dataset { seed 1 } }\n", "line 1");              // stray brace
  expect_parse_error("train {\n  warp_field 3\n}\n", "unknown train key");
  expect_parse_error("dataset ds {\n}\n", "takes no argument");
}

TEST_CASE("semantic validation rejects inconsistent grids") {
  // Baseline sanity: the micro spec itself is valid.
  CHECK_NOTHROW(parse_experiment_spec(micro_spec("out/x")));

  auto mutate = [](const std::string& from, const std::string& to) {
    std::string text = micro_spec("out/x");
    const std::size_t at = text.find(from);
    REQUIRE(at != std::string::npos);
    text.replace(at, from.size(), to);
    return text;
  };
  // Split as large as the train pool (8 - 2 = 6).
  CHECK_THROWS_AS(parse_experiment_spec(mutate("splits { 3 }", "splits { 6 }")), ConfigError);
  // No seeds at all.
  CHECK_THROWS_AS(parse_experiment_spec(mutate("seeds { 1 2 }", "seeds { }")), ConfigError);
  // Duplicate seeds collide in the run layout.
  CHECK_THROWS_AS(parse_experiment_spec(mutate("seeds { 1 2 }", "seeds { 1 1 }")), ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_spec(mutate("methods { supervised ce-mt-u }", "methods { mt mt }")),
      ConfigError);
  // Hold-out swallows the dataset.
  CHECK_THROWS_AS(parse_experiment_spec(mutate("test_count 2", "test_count 8")), ConfigError);
}

TEST_CASE("committed spec files parse to the documented scales") {
  const ExperimentSpec desk = load_experiment_spec(fs::path(CEMT_SPEC_DIR) / "desk.spec");
  CHECK(desk.dataset.count == 100);
  CHECK(desk.dataset.extent == std::array<int, 3>{64, 64, 1});
  CHECK(desk.test_count == 20);
  CHECK(desk.splits == std::vector<int>{8, 16});
  CHECK(desk.methods.size() == 4);
  CHECK(desk.seeds.size() == 3);
  CHECK(desk.base.iterations == 1500);
  CHECK(desk.base.lr_schedule_step == 625);

  const ExperimentSpec paper = load_experiment_spec(fs::path(CEMT_SPEC_DIR) / "paper.spec");
  CHECK(paper.dataset.dims == 3);
  CHECK(paper.base.iterations == 6000);
  CHECK(paper.base.lr_schedule_step == 2500);
  CHECK(paper.base.patch_shape == std::array<int, 3>{112, 112, 80});

  ExperimentSpec scaled = desk;
  apply_paper_scale(scaled);
  CHECK(scaled.base.iterations == 6000);
  CHECK(scaled.base.lr_schedule_step == 2500);
  CHECK(scaled.base.ramp_steps == 6000);

  CHECK_THROWS_AS(load_experiment_spec(fs::path(CEMT_SPEC_DIR) / "no_such.spec"), IoError);
}

TEST_CASE("line charts are deterministic, escaped, and robust to empty input") {
  std::vector<PlotSeries> series{{"a<b&c", {{0.0, 1.0}, {1.0, 2.0}, {2.0, 1.5}}},
                                 {"flat", {{0.0, 3.0}, {5.0, 3.0}}}};
  const std::string one = line_chart_svg("t", "x", "y", series);
  const std::string two = line_chart_svg("t", "x", "y", series);
  CHECK(one == two);
  CHECK(one.find("<svg") == 0);
  CHECK(one.find("</svg>") != std::string::npos);
  CHECK(one.find("a&lt;b&amp;c") != std::string::npos);
  CHECK(one.find("a<b") == std::string::npos);
  std::size_t polylines = 0;
  for (std::size_t at = one.find("<polyline"); at != std::string::npos;
       at = one.find("<polyline", at + 1))
    ++polylines;
  CHECK(polylines == 2);

  const std::string empty = line_chart_svg("t", "x", "y", {});
  CHECK(empty.find("no data") != std::string::npos);
  // A single constant series still renders (degenerate ranges are padded).
  const std::string flat = line_chart_svg("t", "x", "y", {{"c", {{1.0, 2.0}, {1.0, 2.0}}}});
  CHECK(flat.find("<polyline") != std::string::npos);
}

TEST_CASE("micro study: generate, train, compare, repair") {
  const fs::path root = "test_experiment_tmp_e2e";
  fs::remove_all(root);
  const ExperimentSpec spec = parse_experiment_spec(micro_spec(root.string()));

  // Training before generation fails with a missing manifest.
  CHECK_THROWS_AS(cmd_train_cell(spec, Method::Supervised, 3, 1), IoError);

  const DatasetManifest manifest = cmd_generate(spec);
  CHECK(manifest.samples.size() == 8);
  REQUIRE(manifest.splits.size() == 1);
  CHECK(manifest.splits[0].name == "3");
  CHECK(manifest.splits[0].labeled_ids.size() == 3);
  CHECK(manifest.splits[0].unlabeled_ids.size() == 3);
  CHECK_NOTHROW(cmd_generate(spec));  // idempotent re-run verifies hashes

  for (Method m : spec.methods)
    for (std::uint64_t seed : spec.seeds) CHECK_NOTHROW(cmd_train_cell(spec, m, 3, seed));

  const CompareResult full = cmd_compare(spec, false);
  CHECK(full.missing.empty());
  CHECK(full.cells.size() == 4);
  REQUIRE(full.rows.size() == 2);
  for (const ComparisonRow& row : full.rows) {
    CHECK(row.n_seeds == 2);
    CHECK(row.split == 3);
    CHECK(std::isfinite(row.dice_mean));
    CHECK(row.dice_mean > 0.0);
  }
  CHECK(full.table_csv.rfind("method,split,seeds,dice_mean,dice_std,", 0) == 0);
  CHECK(fs::exists(compare_dir(spec) / "table.csv"));
  CHECK(fs::exists(compare_dir(spec) / "table.txt"));
  CHECK(fs::exists(compare_dir(spec) / "r_weights_split3.svg"));
  CHECK(fs::exists(compare_dir(spec) / "train_dice_split3.svg"));
  CHECK_FALSE(fs::exists(compare_dir(spec) / "missing.txt"));
  CHECK(slurp(compare_dir(spec) / "table.csv") == full.table_csv);
  CHECK(slurp(compare_dir(spec) / "table.txt") == full.table_text);
  // The r-weight chart plots the semi method only; the Dice chart plots both.
  const std::string rsvg = slurp(compare_dir(spec) / "r_weights_split3.svg");
  CHECK(rsvg.find("ce-mt-u r1") != std::string::npos);
  CHECK(rsvg.find("supervised") == std::string::npos);
  const std::string dsvg = slurp(compare_dir(spec) / "train_dice_split3.svg");
  CHECK(dsvg.find("supervised (seed 1)") != std::string::npos);

  // Re-comparing changes no bytes.
  const CompareResult again = cmd_compare(spec, false);
  CHECK(again.table_csv == full.table_csv);
  CHECK(again.table_text == full.table_text);

  // Knock out one cell: partial mode reports it, run mode rebuilds it
  // bit-identically.
  const fs::path victim = run_dir(spec, Method::CompetitiveUni, 3, 2);
  const std::string metrics_before = slurp(victim / "metrics.json");
  const std::string trace_before = slurp(victim / "trace.csv");
  fs::remove_all(victim);

  const CompareResult partial = cmd_compare(spec, false);
  REQUIRE(partial.missing.size() == 1);
  CHECK(partial.missing[0] == cell_name(Method::CompetitiveUni, 3, 2));
  CHECK(fs::exists(compare_dir(spec) / "missing.txt"));
  CHECK(slurp(compare_dir(spec) / "missing.txt") == partial.missing[0] + "\n");
  CHECK(partial.table_text.find("missing cells (1)") != std::string::npos);
  for (const ComparisonRow& row : partial.rows) {
    if (row.method == Method::CompetitiveUni) CHECK(row.n_seeds == 1);
    if (row.method == Method::Supervised) CHECK(row.n_seeds == 2);
  }

  const CompareResult repaired = cmd_compare(spec, true);
  CHECK(repaired.missing.empty());
  CHECK(slurp(victim / "metrics.json") == metrics_before);
  CHECK(slurp(victim / "trace.csv") == trace_before);
  CHECK(repaired.table_csv == full.table_csv);
  CHECK_FALSE(fs::exists(compare_dir(spec) / "missing.txt"));

  // evaluate rewrites metrics from the checkpoints alone.
  write_file(victim / "metrics.json", "garbage");
  CHECK_NOTHROW(cmd_evaluate_cell(spec, Method::CompetitiveUni, 3, 2));
  CHECK(slurp(victim / "metrics.json") == metrics_before);
  CHECK_THROWS_AS(cmd_evaluate_cell(spec, Method::CompetitiveUni, 3, 7), IoError);

  fs::remove_all(root);
}
