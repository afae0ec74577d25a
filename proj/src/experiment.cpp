#include "cemt/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cemt/errors.hpp"
#include "cemt/plot.hpp"
#include "cemt/rng.hpp"

namespace cemt {

namespace {

[[noreturn]] void fail_line(int line, const std::string& msg) {
  throw FormatError("spec line " + std::to_string(line) + ": " + msg);
}

long long to_ll(const std::string& tok) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw FormatError("'" + tok + "' is not an integer");
  return v;
}

std::uint64_t to_u64(const std::string& tok) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size())
    throw FormatError("'" + tok + "' is not a non-negative integer");
  return v;
}

double to_double(const std::string& tok) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw FormatError("'" + tok + "' is not a number");
  }
}

bool to_onoff(const std::string& tok) {
  if (tok == "on" || tok == "true") return true;
  if (tok == "off" || tok == "false") return false;
  throw FormatError("'" + tok + "' is not on/off");
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  return tokens;
}

struct Statement {
  int line = 0;
  std::string key;
  std::vector<std::string> values;
};

void need_values(const Statement& st, std::size_t n) {
  if (st.values.size() != n)
    fail_line(st.line, "key '" + st.key + "' expects " + std::to_string(n) + " value(s), got " +
                           std::to_string(st.values.size()));
}

void handle_top(ExperimentSpec& spec, const Statement& st) {
  if (st.key == "output") {
    need_values(st, 1);
    spec.output = st.values[0];
    return;
  }
  fail_line(st.line, "unknown top-level key '" + st.key + "' (expected 'output' or a block)");
}

void handle_dataset(ExperimentSpec& spec, const Statement& st) {
  try {
    if (st.key == "seed") {
      need_values(st, 1);
      spec.dataset.seed = to_u64(st.values[0]);
    } else if (st.key == "count") {
      need_values(st, 1);
      spec.dataset.count = static_cast<int>(to_ll(st.values[0]));
    } else if (st.key == "dims") {
      need_values(st, 1);
      spec.dataset.dims = static_cast<int>(to_ll(st.values[0]));
    } else if (st.key == "extent") {
      need_values(st, 3);
      for (int a = 0; a < 3; ++a) spec.dataset.extent[a] = static_cast<int>(to_ll(st.values[a]));
    } else if (st.key == "noise_sigma") {
      need_values(st, 1);
      spec.dataset.noise_sigma = to_double(st.values[0]);
    } else if (st.key == "threshold") {
      need_values(st, 1);
      spec.dataset.threshold = to_double(st.values[0]);
    } else if (st.key == "min_foreground") {
      need_values(st, 1);
      spec.dataset.min_foreground = to_double(st.values[0]);
    } else if (st.key == "max_foreground") {
      need_values(st, 1);
      spec.dataset.max_foreground = to_double(st.values[0]);
    } else if (st.key == "max_retries") {
      need_values(st, 1);
      spec.dataset.max_retries = static_cast<int>(to_ll(st.values[0]));
    } else if (st.key == "test_count") {
      need_values(st, 1);
      spec.test_count = static_cast<int>(to_ll(st.values[0]));
    } else if (st.key == "split_seed") {
      need_values(st, 1);
      spec.split_seed = to_u64(st.values[0]);
    } else {
      fail_line(st.line, "unknown dataset key '" + st.key + "'");
    }
  } catch (const FormatError& e) {
    if (std::string(e.what()).rfind("spec line", 0) == 0) throw;
    fail_line(st.line, e.what());
  }
}

}  // namespace

void apply_train_key(TrainConfig& cfg, const std::string& key,
                     const std::vector<std::string>& values) {
  auto need = [&](std::size_t n) {
    if (values.size() != n)
      throw FormatError("train key '" + key + "' expects " + std::to_string(n) +
                        " value(s), got " + std::to_string(values.size()));
  };
  if (key == "iterations") {
    need(1);
    cfg.iterations = to_ll(values[0]);
  } else if (key == "lr_initial") {
    need(1);
    cfg.lr_initial = to_double(values[0]);
  } else if (key == "lr_schedule_step") {
    need(1);
    cfg.lr_schedule_step = to_ll(values[0]);
  } else if (key == "batch_labeled") {
    need(1);
    cfg.batch_labeled = static_cast<int>(to_ll(values[0]));
  } else if (key == "batch_unlabeled") {
    need(1);
    cfg.batch_unlabeled = static_cast<int>(to_ll(values[0]));
  } else if (key == "patch") {
    need(3);
    for (int a = 0; a < 3; ++a) cfg.patch_shape[a] = static_cast<int>(to_ll(values[a]));
  } else if (key == "base_channels") {
    need(1);
    cfg.network.base_channels = static_cast<int>(to_ll(values[0]));
  } else if (key == "depth") {
    need(1);
    cfg.network.depth = static_cast<int>(to_ll(values[0]));
  } else if (key == "instance_norm") {
    need(1);
    cfg.network.instance_norm = to_onoff(values[0]);
  } else if (key == "ema_alpha") {
    need(1);
    cfg.ema.alpha = to_double(values[0]);
  } else if (key == "head_policy") {
    need(1);
    cfg.ema.head_policy = head_policy_from_string(values[0]);
  } else if (key == "consistency_weight") {
    need(1);
    cfg.consistency_weight = to_double(values[0]);
  } else if (key == "ramp_steps") {
    need(1);
    cfg.ramp_steps = to_ll(values[0]);
  } else if (key == "teacher_noise") {
    need(1);
    cfg.teacher_noise = to_onoff(values[0]);
  } else if (key == "teacher_noise_sigma") {
    need(1);
    cfg.teacher_noise_sigma = to_double(values[0]);
  } else if (key == "teacher_transform") {
    need(1);
    cfg.teacher_transform = to_onoff(values[0]);
  } else if (key == "sdf_k") {
    need(1);
    cfg.sdf_k = to_double(values[0]);
  } else if (key == "sgd_momentum") {
    need(1);
    cfg.sgd_momentum = to_double(values[0]);
  } else {
    throw FormatError("unknown train key '" + key + "'");
  }
}

void ExperimentSpec::validate() const {
  dataset.validate();
  if (output.empty()) throw ConfigError("experiment: output path is empty");
  if (test_count < 1) throw ConfigError("experiment: test_count must be positive");
  if (test_count >= dataset.count)
    throw ConfigError("experiment: test_count " + std::to_string(test_count) +
                      " leaves no training volumes out of " + std::to_string(dataset.count));
  const int train_count = dataset.count - test_count;
  if (splits.empty()) throw ConfigError("experiment: no splits listed");
  if (methods.empty()) throw ConfigError("experiment: no methods listed");
  if (seeds.empty()) throw ConfigError("experiment: no seeds listed");
  for (int n : splits)
    if (n < 1 || n >= train_count)
      throw ConfigError("experiment: split " + std::to_string(n) + " must lie in [1, " +
                        std::to_string(train_count - 1) + "]");
  if (std::set<int>(splits.begin(), splits.end()).size() != splits.size())
    throw ConfigError("experiment: duplicate split");
  if (std::set<Method>(methods.begin(), methods.end()).size() != methods.size())
    throw ConfigError("experiment: duplicate method");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("experiment: duplicate seed");
  base.validate();
}

ExperimentSpec parse_experiment_spec(const std::string& text) {
  ExperimentSpec spec;
  spec.splits.clear();
  spec.methods.clear();
  spec.seeds.clear();

  std::string block;      // "" at top level
  std::string block_arg;  // method name for "method NAME {" blocks
  int block_line = 0;

  auto handle_statement = [&](const Statement& st) {
    if (block.empty()) {
      handle_top(spec, st);
    } else if (block == "dataset") {
      handle_dataset(spec, st);
    } else if (block == "splits" || block == "methods" || block == "seeds") {
      // List blocks: every token on the line is one entry.
      std::vector<std::string> entries = st.values;
      entries.insert(entries.begin(), st.key);
      for (const std::string& tok : entries) {
        try {
          if (block == "splits")
            spec.splits.push_back(static_cast<int>(to_ll(tok)));
          else if (block == "seeds")
            spec.seeds.push_back(to_u64(tok));
          else
            spec.methods.push_back(method_from_string(tok));
        } catch (const std::exception& e) {
          fail_line(st.line, e.what());
        }
      }
    } else if (block == "train") {
      try {
        apply_train_key(spec.base, st.key, st.values);
      } catch (const FormatError& e) {
        fail_line(st.line, e.what());
      }
    } else if (block == "method") {
      try {
        const Method m = method_from_string(block_arg);
        TrainConfig scratch;  // validates the key and values at parse time
        apply_train_key(scratch, st.key, st.values);
        spec.overrides.push_back({m, st.key, st.values});
      } catch (const FormatError& e) {
        fail_line(st.line, e.what());
      } catch (const ConfigError& e) {
        fail_line(st.line, e.what());
      }
    } else {
      fail_line(block_line, "unknown block '" + block + "'");
    }
  };

  auto open_block = [&](const std::vector<std::string>& head, int line) {
    if (!block.empty()) fail_line(line, "blocks do not nest");
    if (head.empty() || head.size() > 2) fail_line(line, "malformed block header");
    block = head[0];
    block_arg = head.size() == 2 ? head[1] : "";
    block_line = line;
    const bool known = block == "dataset" || block == "splits" || block == "methods" ||
                       block == "seeds" || block == "train" || block == "method";
    if (!known) fail_line(line, "unknown block '" + block + "'");
    if (block == "method" && block_arg.empty())
      fail_line(line, "method block needs a method name: method NAME { ... }");
    if (block != "method" && !block_arg.empty())
      fail_line(line, "block '" + block + "' takes no argument");
  };

  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::vector<std::string> tokens = tokenize(raw);
    if (tokens.empty()) continue;

    if (tokens.size() == 1 && tokens[0] == "}") {
      if (block.empty()) fail_line(line_no, "'}' without an open block");
      block.clear();
      block_arg.clear();
      continue;
    }
    if (tokens.back() == "{") {
      tokens.pop_back();
      open_block(tokens, line_no);
      continue;
    }
    // One-line form: name [arg] { entry... }
    const auto brace = std::find(tokens.begin(), tokens.end(), "{");
    if (brace != tokens.end()) {
      if (tokens.back() != "}") fail_line(line_no, "one-line block must end with '}'");
      open_block({tokens.begin(), brace}, line_no);
      std::vector<std::string> inner(brace + 1, tokens.end() - 1);
      if (!inner.empty()) {
        Statement st{line_no, inner[0], {inner.begin() + 1, inner.end()}};
        handle_statement(st);
      }
      block.clear();
      block_arg.clear();
      continue;
    }
    if (std::find(tokens.begin(), tokens.end(), "}") != tokens.end())
      fail_line(line_no, "'}' must stand alone or close a one-line block");

    Statement st{line_no, tokens[0], {tokens.begin() + 1, tokens.end()}};
    handle_statement(st);
  }
  if (!block.empty()) fail_line(block_line, "block '" + block + "' is never closed");

  spec.base.network.dims = spec.dataset.dims;  // the dataset decides
  spec.validate();
  return spec;
}

ExperimentSpec load_experiment_spec(const std::filesystem::path& path) {
  return parse_experiment_spec(read_file(path));
}

void apply_paper_scale(ExperimentSpec& spec) {
  spec.base.iterations = 6000;
  spec.base.lr_schedule_step = 2500;
  spec.base.ramp_steps = 6000;
}

TrainConfig cell_config(const ExperimentSpec& spec, Method method, int split,
                        std::uint64_t seed) {
  TrainConfig cfg = spec.base;
  cfg.method = method;
  cfg.network.dims = spec.dataset.dims;
  for (const TrainOverride& o : spec.overrides)
    if (o.method == method) apply_train_key(cfg, o.key, o.values);
  cfg.seed_init = Rng::mix(seed, 11);
  cfg.seed_sampler = Rng::mix(seed, 12);
  cfg.seed_noise = Rng::mix(seed, 13);
  cfg.abort_dump_dir = (run_dir(spec, method, split, seed) / "abort-dump").string();
  cfg.validate();
  return cfg;
}

std::string cell_name(Method method, int split, std::uint64_t seed) {
  return std::string(to_string(method)) + "_split" + std::to_string(split) + "_seed" +
         std::to_string(seed);
}

std::filesystem::path dataset_dir(const ExperimentSpec& spec) { return spec.output / "dataset"; }

std::filesystem::path manifest_path(const ExperimentSpec& spec) {
  return dataset_dir(spec) / "manifest.json";
}

std::filesystem::path run_dir(const ExperimentSpec& spec, Method method, int split,
                              std::uint64_t seed) {
  return spec.output / "runs" / cell_name(method, split, seed);
}

std::filesystem::path compare_dir(const ExperimentSpec& spec) { return spec.output / "compare"; }

DatasetManifest cmd_generate(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<SplitRequest> requests;
  requests.reserve(spec.splits.size());
  for (int n : spec.splits) requests.push_back({std::to_string(n), n, spec.split_seed});
  return write_dataset(dataset_dir(spec), spec.dataset, spec.test_count, requests);
}

RunReport cmd_train_cell(const ExperimentSpec& spec, Method method, int split,
                         std::uint64_t seed) {
  spec.validate();
  const std::filesystem::path manifest = manifest_path(spec);
  SemiDataset dataset = load_split(manifest, std::to_string(split));
  const std::vector<LabeledSample> tests = load_test_cases(manifest);
  const TrainConfig cfg = cell_config(spec, method, split, seed);
  RunReport report = train(cfg, dataset);
  report.test_metrics = evaluate_run(report, tests);
  save_run(run_dir(spec, method, split, seed), report);
  return report;
}

MetricsTable cmd_evaluate_cell(const ExperimentSpec& spec, Method method, int split,
                               std::uint64_t seed) {
  spec.validate();
  const std::filesystem::path dir = run_dir(spec, method, split, seed);
  if (!std::filesystem::exists(dir / "config.json"))
    throw IoError("evaluate: no saved run at " + dir.string());
  RunReport report;
  report.config = train_config_from_json(read_file(dir / "config.json"));
  report.m1_params = load_checkpoint((dir / "m1.ckpt").string()).params;
  if (std::filesystem::exists(dir / "teacher.ckpt"))
    report.teacher_params = load_checkpoint((dir / "teacher.ckpt").string()).params;
  else if (report.config.method != Method::Supervised)
    throw IoError("evaluate: " + dir.string() + " has no teacher checkpoint");
  report.test_metrics = evaluate_run(report, load_test_cases(manifest_path(spec)));
  write_file(dir / "metrics.json", metrics_json(report.test_metrics));
  write_file(dir / "eval.csv", metrics_csv(report.test_metrics));
  return report.test_metrics;
}

namespace {

MetricSummary summary_from_json(const nlohmann::json& j) {
  MetricSummary s;
  s.mean = j.at("mean").get<double>();
  s.std_dev = j.at("std").get<double>();
  s.n = j.at("n").get<int>();
  s.degenerate_count = j.at("degenerate_count").get<int>();
  return s;
}

CellStats read_cell_stats(const ExperimentSpec& spec, Method method, int split,
                          std::uint64_t seed) {
  CellStats cs;
  cs.method = method;
  cs.split = split;
  cs.seed = seed;
  const std::filesystem::path path = run_dir(spec, method, split, seed) / "metrics.json";
  if (!std::filesystem::exists(path)) return cs;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
    cs.dice = summary_from_json(j.at("dice"));
    cs.jaccard = summary_from_json(j.at("jaccard"));
    cs.asd = summary_from_json(j.at("asd"));
    cs.hd95 = summary_from_json(j.at("hd95"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("compare: cannot parse " + path.string() + ": " + e.what());
  }
  cs.present = true;
  return cs;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double pstd_of(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string compare_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "method,split,seeds,dice_mean,dice_std,jaccard_mean,jaccard_std,asd_mean,asd_std,"
        "hd95_mean,hd95_std\n";
  for (const ComparisonRow& r : rows) {
    os << to_string(r.method) << "," << r.split << "," << r.n_seeds << ",";
    if (r.n_seeds > 0) {
      os << g17(r.dice_mean) << "," << g17(r.dice_std) << "," << g17(r.jaccard_mean) << ","
         << g17(r.jaccard_std) << "," << g17(r.asd_mean) << "," << g17(r.asd_std) << ","
         << g17(r.hd95_mean) << "," << g17(r.hd95_std);
    } else {
      os << ",,,,,,,";
    }
    os << "\n";
  }
  return os.str();
}

std::string compare_text(const CompareResult& res) {
  std::ostringstream os;
  os << "Test-set metrics, mean +/- population std over seeds\n\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-10s  %5s  %5s  %-16s  %-16s  %-15s  %-15s\n", "method",
                "split", "seeds", "dice", "jaccard", "asd", "hd95");
  os << buf;
  os << std::string(10, '-') << "  " << std::string(5, '-') << "  " << std::string(5, '-') << "  "
     << std::string(16, '-') << "  " << std::string(16, '-') << "  " << std::string(15, '-')
     << "  " << std::string(15, '-') << "\n";
  for (const ComparisonRow& r : res.rows) {
    if (r.n_seeds > 0) {
      char dice[32], jacc[32], asd[32], hd[32];
      std::snprintf(dice, sizeof(dice), "%.3f +/- %.3f", r.dice_mean, r.dice_std);
      std::snprintf(jacc, sizeof(jacc), "%.3f +/- %.3f", r.jaccard_mean, r.jaccard_std);
      std::snprintf(asd, sizeof(asd), "%.2f +/- %.2f", r.asd_mean, r.asd_std);
      std::snprintf(hd, sizeof(hd), "%.2f +/- %.2f", r.hd95_mean, r.hd95_std);
      std::snprintf(buf, sizeof(buf), "%-10s  %5d  %5d  %-16s  %-16s  %-15s  %-15s\n",
                    to_string(r.method), r.split, r.n_seeds, dice, jacc, asd, hd);
    } else {
      std::snprintf(buf, sizeof(buf), "%-10s  %5d  %5d  %-16s\n", to_string(r.method), r.split,
                    0, "(no runs)");
    }
    os << buf;
  }
  if (!res.missing.empty()) {
    os << "\nmissing cells (" << res.missing.size() << "):\n";
    for (const std::string& name : res.missing) os << "  " << name << "\n";
  }
  return os.str();
}

// Trace-backed charts for one split: teacher blend weights and the labeled
// training Dice score (1 - dice loss) per method, using the first seed whose
// trace exists so re-renders are stable.
void write_split_charts(const ExperimentSpec& spec, int split) {
  std::vector<PlotSeries> r_series;
  std::vector<PlotSeries> dice_series;
  for (Method m : spec.methods) {
    for (std::uint64_t seed : spec.seeds) {
      const std::filesystem::path path = run_dir(spec, m, split, seed) / "trace.csv";
      if (!std::filesystem::exists(path)) continue;
      const std::vector<TraceRow> trace = parse_trace_csv(read_file(path));
      const std::string tag = std::string(to_string(m)) + " (seed " + std::to_string(seed) + ")";
      PlotSeries dice{tag, {}};
      dice.points.reserve(trace.size());
      for (const TraceRow& row : trace)
        dice.points.push_back({static_cast<double>(row.step), 1.0 - row.dice_l1});
      dice_series.push_back(std::move(dice));
      if (m != Method::Supervised) {
        PlotSeries r1{std::string(to_string(m)) + " r1 (seed " + std::to_string(seed) + ")", {}};
        PlotSeries r2{std::string(to_string(m)) + " r2 (seed " + std::to_string(seed) + ")", {}};
        r1.points.reserve(trace.size());
        r2.points.reserve(trace.size());
        for (const TraceRow& row : trace) {
          r1.points.push_back({static_cast<double>(row.step), row.r1});
          r2.points.push_back({static_cast<double>(row.step), row.r2});
        }
        r_series.push_back(std::move(r1));
        r_series.push_back(std::move(r2));
      }
      break;  // one representative seed per method
    }
  }
  const std::string suffix = "split" + std::to_string(split) + ".svg";
  write_file(compare_dir(spec) / ("r_weights_" + suffix),
             line_chart_svg("Teacher blend weights, " + std::to_string(split) + " labeled",
                            "iteration", "weight", r_series));
  write_file(compare_dir(spec) / ("train_dice_" + suffix),
             line_chart_svg("Student 1 labeled-batch Dice, " + std::to_string(split) + " labeled",
                            "iteration", "1 - dice loss", dice_series));
}

}  // namespace

CompareResult cmd_compare(const ExperimentSpec& spec, bool run_missing) {
  spec.validate();
  CompareResult res;
  for (int split : spec.splits) {
    for (Method m : spec.methods) {
      for (std::uint64_t seed : spec.seeds) {
        CellStats cs = read_cell_stats(spec, m, split, seed);
        if (!cs.present && run_missing) {
          cmd_train_cell(spec, m, split, seed);
          cs = read_cell_stats(spec, m, split, seed);
        }
        if (!cs.present) res.missing.push_back(cell_name(m, split, seed));
        res.cells.push_back(cs);
      }
    }
  }

  for (int split : spec.splits) {
    for (Method m : spec.methods) {
      ComparisonRow row;
      row.method = m;
      row.split = split;
      std::vector<double> dice, jaccard, asd, hd95;
      for (const CellStats& cs : res.cells) {
        if (cs.method != m || cs.split != split || !cs.present) continue;
        dice.push_back(cs.dice.mean);
        jaccard.push_back(cs.jaccard.mean);
        asd.push_back(cs.asd.mean);
        hd95.push_back(cs.hd95.mean);
      }
      row.n_seeds = static_cast<int>(dice.size());
      if (row.n_seeds > 0) {
        row.dice_mean = mean_of(dice);
        row.dice_std = pstd_of(dice, row.dice_mean);
        row.jaccard_mean = mean_of(jaccard);
        row.jaccard_std = pstd_of(jaccard, row.jaccard_mean);
        row.asd_mean = mean_of(asd);
        row.asd_std = pstd_of(asd, row.asd_mean);
        row.hd95_mean = mean_of(hd95);
        row.hd95_std = pstd_of(hd95, row.hd95_mean);
      }
      res.rows.push_back(row);
    }
  }

  res.table_csv = compare_csv(res.rows);
  res.table_text = compare_text(res);

  std::error_code ec;
  std::filesystem::create_directories(compare_dir(spec), ec);
  if (ec)
    throw IoError("compare: cannot create " + compare_dir(spec).string() + ": " + ec.message());
  write_file(compare_dir(spec) / "table.csv", res.table_csv);
  write_file(compare_dir(spec) / "table.txt", res.table_text);
  const std::filesystem::path missing_path = compare_dir(spec) / "missing.txt";
  if (res.missing.empty()) {
    std::filesystem::remove(missing_path, ec);
  } else {
    std::string listing;
    for (const std::string& name : res.missing) listing += name + "\n";
    write_file(missing_path, listing);
  }
  for (int split : spec.splits) write_split_charts(spec, split);
  return res;
}

}  // namespace cemt
