#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cemt/data.hpp"
#include "cemt/ensembling.hpp"
#include "cemt/metrics.hpp"
#include "cemt/network.hpp"

namespace cemt {

// The four training variants. "mt" keeps a single student with a classic EMA
// teacher; the competitive variants add the SDF student and blend the teacher
// from both students with unidirectional or bidirectional weights.
enum class Method { Supervised, MeanTeacher, CompetitiveUni, CompetitiveBi };
const char* to_string(Method m);
Method method_from_string(const std::string& name);  // throws ConfigError

struct TrainConfig {
  Method method = Method::CompetitiveBi;
  std::int64_t iterations = 1500;
  double lr_initial = 0.01;
  std::int64_t lr_schedule_step = 625;  // lr decays by 0.1 every this many steps
  int batch_labeled = 2;
  int batch_unlabeled = 2;  // ignored by the supervised baseline
  std::array<int, 3> patch_shape = {64, 64, 1};
  NetworkConfig network;
  EmaConfig ema;                     // ignored by the supervised baseline
  double consistency_weight = 0.1;   // ramp target for the consistency term
  std::int64_t ramp_steps = 1500;    // Gaussian ramp length; <= 0 disables the ramp
  bool teacher_noise = true;         // perturb the teacher's input copy
  double teacher_noise_sigma = 0.05;
  // Geometric teacher perturbation: the teacher sees a randomly flipped and
  // right-angle-rotated copy and its outputs are mapped back, so consistency
  // enforces equivariance on the unlabeled stream rather than noise
  // robustness alone. Off by default.
  bool teacher_transform = false;
  double sdf_k = 1500.0;             // gain of the smooth SDF-to-mask transform
  double sgd_momentum = 0.0;         // 0 = the plain SGD default
  std::uint64_t seed_init = 1;       // streams 1 and 2 initialize the students
  std::uint64_t seed_sampler = 2;
  std::uint64_t seed_noise = 3;
  std::string abort_dump_dir = "cemt-abort-dump";

  void validate() const;  // throws ConfigError
};

struct TraceRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double lambda_con = 0.0;
  double loss_m1 = 0.0;
  double loss_m2 = 0.0;  // 0 when the method has no SDF student
  double dice_l1 = 0.0;
  double dice_l2 = 0.0;
  double r1 = 0.0;  // supervised logs (0, 0); mt logs (1, 0)
  double r2 = 0.0;

  bool operator==(const TraceRow&) const = default;
};

struct RunReport {
  TrainConfig config;
  std::vector<TraceRow> trace;
  ParamVector m1_params;
  ParamVector m2_params;       // empty unless a competitive method ran
  ParamVector teacher_params;  // empty for the supervised baseline
  double wall_seconds = 0.0;
  MetricsTable test_metrics;   // filled by evaluate_run
  std::vector<std::string> checkpoint_paths;  // filled by save_run
};

// Test instrumentation: pin_l2 replaces student 2's labeled dice loss in the
// competitive-weight computation only (training and the trace keep the real
// value); observe_teacher fires after every teacher update.
struct TrainHooks {
  std::optional<double> pin_l2;
  std::function<void(std::int64_t step, const DualHeadNetwork& teacher)> observe_teacher;
};

// Step-decay schedule: lr_initial * 0.1^floor(step / lr_schedule_step).
double lr_at(std::int64_t step, const TrainConfig& cfg);

// Runs the full training loop on the given split. Deterministic given the
// config seeds. Any non-finite loss aborts with TrainingAborted after dumping
// the offending batch to config.abort_dump_dir.
RunReport train(const TrainConfig& cfg, const SemiDataset& dataset,
                const TrainHooks& hooks = {});

// Overlapping-window inference: windows start every `stride` voxels, with a
// final window clamped to the far edge so every voxel is covered at least
// once; per-voxel foreground probabilities are averaged by coverage count.
// Throws ShapeError when the stride leaves [1, patch] or the patch exceeds
// the volume.
Volume infer_sliding_window(DualHeadNetwork& model, const Volume& volume,
                            std::array<int, 3> patch_shape, std::array<int, 3> stride);

// Evaluates the run's final predictor on labeled test cases: the teacher's
// segmentation head where a teacher exists, the lone student otherwise.
// Windows are non-overlapping (stride = patch).
MetricsTable evaluate_run(const RunReport& report,
                          const std::vector<LabeledSample>& test_cases);

// ---------------------------------------------------------------------------
// Run artifacts
// ---------------------------------------------------------------------------

// CSV with one row per iteration, doubles printed with %.17g so re-parsing is
// exact.
std::string trace_csv(const std::vector<TraceRow>& trace);
std::vector<TraceRow> parse_trace_csv(const std::string& text);  // throws FormatError

std::string train_config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);  // throws FormatError

// Writes config.json, trace.csv, report.json, per-model checkpoints, and —
// when test_metrics is filled — metrics.json and eval.csv under `dir`.
// Records the checkpoint paths in the report.
void save_run(const std::filesystem::path& dir, RunReport& report);

}  // namespace cemt
