#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cemt/experiment.hpp"

namespace {

// Output-root precedence: the CEMT_OUT environment variable beats --out,
// which beats the spec's own "output" line.
cemt::ExperimentSpec load_spec(const std::string& spec_path, const std::string& out_flag,
                               bool paper_scale) {
  cemt::ExperimentSpec spec = cemt::load_experiment_spec(spec_path);
  std::string out = out_flag;
  if (const char* env = std::getenv("CEMT_OUT"); env != nullptr && env[0] != '\0') out = env;
  if (!out.empty()) spec.output = out;
  if (paper_scale) cemt::apply_paper_scale(spec);
  return spec;
}

void print_metrics(const cemt::MetricsTable& t) {
  std::printf("  dice    %.4f +/- %.4f\n", t.dice.mean, t.dice.std_dev);
  std::printf("  jaccard %.4f +/- %.4f\n", t.jaccard.mean, t.jaccard.std_dev);
  std::printf("  asd     %.3f +/- %.3f\n", t.asd.mean, t.asd.std_dev);
  std::printf("  hd95    %.3f +/- %.3f\n", t.hd95.mean, t.hd95.std_dev);
  std::printf("  cases   %d (%d degenerate)\n", t.dice.n, t.dice.degenerate_count);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Competitive mean-teacher segmentation laboratory"};
  app.require_subcommand(1);

  std::string spec_path;
  std::string method_name;
  std::string out_dir;
  int split = 0;
  std::uint64_t seed = 1;
  bool paper_scale = false;
  bool partial = false;

  const std::vector<std::string> method_names = {"supervised", "mt", "ce-mt-u", "ce-mt-b"};

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--spec", spec_path, "experiment spec file")->required();
    sub->add_option("--out", out_dir,
                    "output root; overrides the spec (env CEMT_OUT overrides both)");
  };
  auto add_cell = [&](CLI::App* sub) {
    sub->add_option("--method", method_name, "training method")
        ->required()
        ->check(CLI::IsMember(method_names));
    sub->add_option("--split", split, "labeled-volume count naming the split")
        ->required()
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "experiment seed for this cell");
  };

  CLI::App* gen = app.add_subcommand("generate-data",
                                     "generate the dataset and splits (verifies when present)");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "train one (method, split, seed) cell");
  add_common(train);
  add_cell(train);
  train->add_flag("--paper-scale", paper_scale,
                  "use the long schedule: 6000 iterations, lr decay every 2500");

  CLI::App* eval =
      app.add_subcommand("evaluate", "re-evaluate a saved run from its checkpoints");
  add_common(eval);
  add_cell(eval);

  CLI::App* compare = app.add_subcommand(
      "compare", "collect every cell (training the missing ones) into the comparison table");
  add_common(compare);
  compare->add_flag("--partial", partial, "do not train missing cells; list them instead");
  compare->add_flag("--paper-scale", paper_scale,
                    "use the long schedule when training missing cells");

  CLI::App* report =
      app.add_subcommand("report", "re-emit the table and charts from saved runs only");
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      const cemt::ExperimentSpec spec = load_spec(spec_path, out_dir, false);
      const cemt::DatasetManifest manifest = cemt::cmd_generate(spec);
      std::cout << "dataset ready: " << cemt::manifest_path(spec).string() << "\n";
      std::cout << "  volumes: " << manifest.samples.size() << " ("
                << manifest.samples.size() - static_cast<std::size_t>(manifest.test_count)
                << " train, " << manifest.test_count << " test)\n";
      for (const cemt::ManifestSplit& s : manifest.splits)
        std::cout << "  split " << s.name << ": " << s.labeled_ids.size() << " labeled / "
                  << s.unlabeled_ids.size() << " unlabeled\n";
    } else if (train->parsed()) {
      const cemt::ExperimentSpec spec = load_spec(spec_path, out_dir, paper_scale);
      const cemt::Method m = cemt::method_from_string(method_name);
      const cemt::RunReport rep = cemt::cmd_train_cell(spec, m, split, seed);
      std::cout << "run " << cemt::cell_name(m, split, seed) << ": " << rep.trace.size()
                << " iterations";
      std::printf(" in %.1fs\n", rep.wall_seconds);
      if (!rep.trace.empty()) {
        const cemt::TraceRow& last = rep.trace.back();
        std::printf("  final: loss_m1 %.4f  loss_m2 %.4f  r1 %.3f  r2 %.3f\n", last.loss_m1,
                    last.loss_m2, last.r1, last.r2);
      }
      print_metrics(rep.test_metrics);
      std::cout << "  artifacts: " << cemt::run_dir(spec, m, split, seed).string() << "\n";
    } else if (eval->parsed()) {
      const cemt::ExperimentSpec spec = load_spec(spec_path, out_dir, false);
      const cemt::Method m = cemt::method_from_string(method_name);
      const cemt::MetricsTable table = cemt::cmd_evaluate_cell(spec, m, split, seed);
      std::cout << "evaluated " << cemt::cell_name(m, split, seed) << ":\n";
      print_metrics(table);
    } else if (compare->parsed() || report->parsed()) {
      const bool run_missing = compare->parsed() && !partial;
      const cemt::ExperimentSpec spec = load_spec(spec_path, out_dir, paper_scale);
      const cemt::CompareResult res = cemt::cmd_compare(spec, run_missing);
      std::cout << res.table_text;
      std::cout << "\nwrote " << cemt::compare_dir(spec).string() << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
