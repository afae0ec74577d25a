#include "cemt/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <utility>

#include <json.hpp>

#include "cemt/geometry.hpp"
#include "cemt/losses.hpp"

namespace cemt {

namespace {

using nlohmann::json;

bool is_semi(Method m) { return m != Method::Supervised; }
bool is_dual(Method m) {
  return m == Method::CompetitiveUni || m == Method::CompetitiveBi;
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::Supervised: return "supervised";
    case Method::MeanTeacher: return "mt";
    case Method::CompetitiveUni: return "ce-mt-u";
    case Method::CompetitiveBi: return "ce-mt-b";
  }
  return "unknown";
}

Method method_from_string(const std::string& name) {
  if (name == "supervised") return Method::Supervised;
  if (name == "mt") return Method::MeanTeacher;
  if (name == "ce-mt-u") return Method::CompetitiveUni;
  if (name == "ce-mt-b") return Method::CompetitiveBi;
  throw ConfigError("method_from_string: unknown method '" + name + "'");
}

void TrainConfig::validate() const {
  network.validate();
  if (iterations < 0) throw ConfigError("TrainConfig: iterations must be >= 0");
  if (!(lr_initial > 0.0)) throw ConfigError("TrainConfig: lr_initial must be positive");
  if (lr_schedule_step < 1) throw ConfigError("TrainConfig: lr_schedule_step must be >= 1");
  if (batch_labeled < 1) throw ConfigError("TrainConfig: batch_labeled must be >= 1");
  if (batch_unlabeled < 0) throw ConfigError("TrainConfig: batch_unlabeled must be >= 0");
  if (is_semi(method) && batch_unlabeled < 1)
    throw ConfigError("TrainConfig: semi-supervised methods need batch_unlabeled >= 1");
  const int factor = network.level_factor();
  for (int a = 0; a < network.dims; ++a) {
    if (patch_shape[std::size_t(a)] < factor || patch_shape[std::size_t(a)] % factor != 0)
      throw ConfigError("TrainConfig: patch sides must be positive multiples of " +
                        std::to_string(factor));
  }
  if (network.dims == 2 && patch_shape[2] != 1)
    throw ConfigError("TrainConfig: 2D patches need patch_shape[2] == 1");
  if (!(ema.alpha >= 0.0 && ema.alpha < 1.0))
    throw ConfigError("TrainConfig: ema.alpha must lie in [0, 1)");
  if (!(consistency_weight >= 0.0))
    throw ConfigError("TrainConfig: consistency_weight must be >= 0");
  if (!(teacher_noise_sigma >= 0.0))
    throw ConfigError("TrainConfig: teacher_noise_sigma must be >= 0");
  if (!(sdf_k > 0.0)) throw ConfigError("TrainConfig: sdf_k must be positive");
  if (!(sgd_momentum >= 0.0 && sgd_momentum < 1.0))
    throw ConfigError("TrainConfig: sgd_momentum must lie in [0, 1)");
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw DomainError("lr_at: negative step");
  const std::int64_t decays = step / cfg.lr_schedule_step;
  return cfg.lr_initial * std::pow(0.1, static_cast<double>(decays));
}

namespace {

// Saves every patch of the failing batch next to the exception so the input
// that produced a non-finite loss can be inspected.
std::string dump_batch(const std::filesystem::path& dir, const PatchBatch& b, int dims,
                       std::int64_t step) {
  try {
    const std::filesystem::path out = dir / ("step_" + std::to_string(step));
    std::filesystem::create_directories(out);
    const auto save = [&](const Tensor& t, VolumeKind kind, const std::string& name) {
      Volume v = tensor_to_volume(t, kind, dims);
      if (kind == VolumeKind::Sdf)
        for (double& x : v.data()) x = static_cast<double>(static_cast<float>(x));
      save_volume(out / name, v);
    };
    for (std::size_t i = 0; i < b.labeled_images.size(); ++i) {
      const std::string n = std::to_string(i);
      save(b.labeled_images[i], VolumeKind::Image, "labeled_image_" + n + ".vseg");
      save(b.labeled_masks[i], VolumeKind::BinaryMask, "labeled_mask_" + n + ".vseg");
      save(b.labeled_sdfs[i], VolumeKind::Sdf, "labeled_sdf_" + n + ".vseg");
    }
    for (std::size_t i = 0; i < b.unlabeled_images.size(); ++i)
      save(b.unlabeled_images[i], VolumeKind::Image,
           "unlabeled_image_" + std::to_string(i) + ".vseg");
    return out.string();
  } catch (const std::exception& e) {
    return std::string("<dump failed: ") + e.what() + ">";
  }
}

}  // namespace

RunReport train(const TrainConfig& cfg, const SemiDataset& dataset, const TrainHooks& hooks) {
  cfg.validate();
  const bool semi = is_semi(cfg.method);
  const bool dual = is_dual(cfg.method);
  if (dataset.labeled.empty()) throw ConfigError("train: dataset has no labeled samples");
  if (semi && dataset.unlabeled.empty())
    throw ConfigError("train: " + std::string(to_string(cfg.method)) +
                      " needs unlabeled samples");

  const auto t0 = std::chrono::steady_clock::now();

  DualHeadNetwork m1 = build_network(cfg.network, Rng::mix(cfg.seed_init, 1));
  m1.set_active_head(ActiveHead::Seg);
  std::optional<DualHeadNetwork> m2;
  std::optional<DualHeadNetwork> teacher;
  if (dual) {
    // Both students start from the same weights. The teacher blends the
    // students' parameter vectors, and a convex combination is only
    // meaningful while the two trajectories share a basin; independent
    // initializations make the blended backbone useless.
    m2.emplace(build_network(cfg.network, Rng::mix(cfg.seed_init, 1)));
    m2->set_active_head(ActiveHead::Reg);
  }
  if (semi) {
    // The teacher starts as a copy of student 1 and never sees a gradient.
    teacher.emplace(build_network(cfg.network, Rng::mix(cfg.seed_init, 0)));
    teacher->set_params(m1.params());
    teacher->set_trainable(false);
    teacher->set_active_head(ActiveHead::Both);
  }

  SamplerOptions sopt;
  sopt.n_labeled = cfg.batch_labeled;
  sopt.n_unlabeled = semi ? cfg.batch_unlabeled : 0;
  Rng sampler = Rng::stream(cfg.seed_sampler, 0);

  RunReport report;
  report.config = cfg;
  report.trace.reserve(static_cast<std::size_t>(cfg.iterations));

  Tensor dseg, dsdf;
  for (std::int64_t step = 0; step < cfg.iterations; ++step) {
    const double lr = lr_at(step, cfg);
    const double lambda =
        semi ? rampup_weight(step, cfg.ramp_steps, cfg.consistency_weight) : 0.0;
    const PatchBatch batch = sample_batch(dataset, cfg.patch_shape, sampler, sopt);
    const int nl = static_cast<int>(batch.labeled_images.size());
    const int nu = static_cast<int>(batch.unlabeled_images.size());
    const int nt = nl + nu;

    // Teacher predictions on every batch input, with its own perturbation.
    std::vector<Tensor> t_seg, t_sdf;
    if (semi) {
      Rng noise = Rng::stream(cfg.seed_noise, static_cast<std::uint64_t>(step));
      const auto teacher_forward = [&](const Tensor& x) {
        Tensor input = x;
        int quarter_turns = 0;
        std::array<bool, 3> flips = {false, false, false};
        if (cfg.teacher_transform) {
          // Same group as the sampler's augmentation: independent axis flips
          // plus an in-plane right-angle rotation (half turns only when the
          // patch is not square). Flips first, then the rotation.
          const bool square = input.sp[0] == input.sp[1];
          quarter_turns = square ? static_cast<int>(noise.uniform_index(4))
                                 : 2 * static_cast<int>(noise.uniform_index(2));
          for (int a = 0; a < 3; ++a) flips[a] = input.sp[a] > 1 && noise.bernoulli();
          for (int a = 0; a < 3; ++a)
            if (flips[a]) input = flipped(input, a);
          if (quarter_turns != 0) input = rotated90(input, quarter_turns);
        }
        if (cfg.teacher_noise)
          for (double& v : input.v) v += cfg.teacher_noise_sigma * noise.normal();
        teacher->forward(input);
        Tensor seg = teacher->seg_prob();
        Tensor sdf = teacher->sdf_out();
        if (cfg.teacher_transform) {
          // Probabilities and signed distances are isometry-invariant, so the
          // inverse permutation alone maps the outputs back to the student's
          // frame: undo the rotation, then the flips.
          if (quarter_turns != 0) {
            seg = rotated90(seg, 4 - quarter_turns);
            sdf = rotated90(sdf, 4 - quarter_turns);
          }
          for (int a = 2; a >= 0; --a) {
            if (flips[a]) {
              seg = flipped(seg, a);
              sdf = flipped(sdf, a);
            }
          }
        }
        t_seg.push_back(std::move(seg));
        t_sdf.push_back(std::move(sdf));
      };
      for (const Tensor& x : batch.labeled_images) teacher_forward(x);
      for (const Tensor& x : batch.unlabeled_images) teacher_forward(x);
    }

    // Student 1: supervised segmentation loss plus consistency on all inputs.
    double loss_m1 = 0.0, loss_m2 = 0.0, l1 = 0.0, l2 = 0.0;
    m1.zero_grad();
    for (int i = 0; i < nl; ++i) {
      m1.forward(batch.labeled_images[std::size_t(i)]);
      const Tensor& prob = m1.seg_prob();
      dseg.resize(prob.ch, prob.sp);
      const LossValue sup =
          supervised_seg_loss_grad(prob, batch.labeled_masks[std::size_t(i)], dseg, 1.0 / nl);
      loss_m1 += sup.value / nl;
      l1 += sup.components.dice / nl;
      if (semi) {
        loss_m1 +=
            lambda * consistency_loss_grad(prob, t_seg[std::size_t(i)], dseg, lambda / nt) / nt;
      }
      m1.backward(&dseg, nullptr);
    }
    for (int i = 0; semi && i < nu; ++i) {
      m1.forward(batch.unlabeled_images[std::size_t(i)]);
      const Tensor& prob = m1.seg_prob();
      dseg.resize(prob.ch, prob.sp);
      loss_m1 += lambda *
                 consistency_loss_grad(prob, t_seg[std::size_t(nl + i)], dseg, lambda / nt) / nt;
      m1.backward(&dseg, nullptr);
    }

    // Student 2: supervised SDF loss plus consistency, in SDF space.
    if (dual) {
      m2->zero_grad();
      for (int i = 0; i < nl; ++i) {
        m2->forward(batch.labeled_images[std::size_t(i)]);
        const Tensor& sdf = m2->sdf_out();
        dsdf.resize(sdf.ch, sdf.sp);
        const LossValue sup = supervised_sdf_loss_grad(
            sdf, batch.labeled_sdfs[std::size_t(i)], cfg.sdf_k, dsdf, 1.0 / nl);
        loss_m2 += sup.value / nl;
        l2 += sup.components.dice / nl;
        loss_m2 +=
            lambda * consistency_loss_grad(sdf, t_sdf[std::size_t(i)], dsdf, lambda / nt) / nt;
        m2->backward(nullptr, &dsdf);
      }
      for (int i = 0; i < nu; ++i) {
        m2->forward(batch.unlabeled_images[std::size_t(i)]);
        const Tensor& sdf = m2->sdf_out();
        dsdf.resize(sdf.ch, sdf.sp);
        loss_m2 += lambda *
                   consistency_loss_grad(sdf, t_sdf[std::size_t(nl + i)], dsdf, lambda / nt) /
                   nt;
        m2->backward(nullptr, &dsdf);
      }
    }

    if (!std::isfinite(loss_m1) || !std::isfinite(loss_m2)) {
      const std::string where =
          dump_batch(cfg.abort_dump_dir, batch, cfg.network.dims, step);
      throw TrainingAborted("train: non-finite loss at step " + std::to_string(step) +
                            " (loss_m1=" + std::to_string(loss_m1) +
                            ", loss_m2=" + std::to_string(loss_m2) + "); batch dumped to " +
                            where);
    }

    m1.sgd_step(lr, cfg.sgd_momentum);
    if (dual) m2->sgd_step(lr, cfg.sgd_momentum);

    // Teacher update from the post-step students; the competitive weights use
    // the labeled dice losses measured this iteration.
    double r1 = 0.0, r2 = 0.0;
    if (cfg.method == Method::MeanTeacher) {
      teacher->set_params(ema_update_classic(teacher->params(), m1.params(), cfg.ema.alpha));
      r1 = 1.0;
    } else if (dual) {
      const double l2_eff = hooks.pin_l2 ? *hooks.pin_l2 : l2;
      const CompetitiveWeights w = cfg.method == Method::CompetitiveUni
                                       ? weights_unidirectional(l1, l2_eff)
                                       : weights_bidirectional(l1, l2_eff);
      teacher->set_params(
          ema_update_competitive(teacher->params(), m1.params(), m2->params(), w, cfg.ema));
      r1 = w.r1;
      r2 = w.r2;
    }
    if (semi && hooks.observe_teacher) hooks.observe_teacher(step, *teacher);

    report.trace.push_back({step, lr, lambda, loss_m1, loss_m2, l1, l2, r1, r2});
  }

  report.m1_params = m1.params();
  if (dual) report.m2_params = m2->params();
  if (semi) report.teacher_params = teacher->params();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Volume infer_sliding_window(DualHeadNetwork& model, const Volume& volume,
                            std::array<int, 3> patch_shape, std::array<int, 3> stride) {
  std::array<std::vector<int>, 3> starts;
  for (int a = 0; a < 3; ++a) {
    const int ext = volume.extent()[std::size_t(a)];
    const int patch = patch_shape[std::size_t(a)];
    const int s = stride[std::size_t(a)];
    if (patch < 1 || patch > ext)
      throw ShapeError("infer_sliding_window: patch must lie in [1, extent] on axis " +
                       std::to_string(a));
    if (s < 1 || s > patch)
      throw ShapeError("infer_sliding_window: stride must lie in [1, patch] on axis " +
                       std::to_string(a));
    for (int p = 0;; p += s) {
      if (p >= ext - patch) {
        starts[std::size_t(a)].push_back(ext - patch);  // clamp the last window to the edge
        break;
      }
      starts[std::size_t(a)].push_back(p);
    }
  }

  Volume prob(volume.dims(), volume.extent(), VolumeKind::Probability, volume.spacing());
  std::vector<double> coverage(volume.size(), 0.0);
  for (int z0 : starts[2]) {
    for (int y0 : starts[1]) {
      for (int x0 : starts[0]) {
        model.forward(crop_patch(volume, {x0, y0, z0}, patch_shape));
        const Tensor& out = model.seg_prob();
        const double* fg = out.channel(out.ch - 1);
        std::size_t i = 0;
        for (int z = 0; z < patch_shape[2]; ++z)
          for (int y = 0; y < patch_shape[1]; ++y)
            for (int x = 0; x < patch_shape[0]; ++x, ++i) {
              const std::size_t at = prob.index(x0 + x, y0 + y, z0 + z);
              prob.data()[at] += fg[i];
              coverage[at] += 1.0;
            }
      }
    }
  }
  for (std::size_t i = 0; i < prob.size(); ++i) prob.data()[i] /= coverage[i];
  return prob;
}

MetricsTable evaluate_run(const RunReport& report,
                          const std::vector<LabeledSample>& test_cases) {
  const bool semi = is_semi(report.config.method);
  const ParamVector& predictor = semi ? report.teacher_params : report.m1_params;
  if (predictor.values.empty())
    throw ConfigError("evaluate_run: report carries no predictor parameters");

  DualHeadNetwork net = build_network(report.config.network, 0);
  net.set_params(predictor);
  net.set_trainable(false);
  net.set_active_head(ActiveHead::Seg);

  std::vector<CaseMetrics> cases;
  cases.reserve(test_cases.size());
  for (const LabeledSample& tc : test_cases) {
    const Volume prob = infer_sliding_window(net, tc.image, report.config.patch_shape,
                                             report.config.patch_shape);
    cases.push_back(evaluate_case(threshold_probability(prob), tc.mask));
  }
  return aggregate(std::move(cases));
}

// ---------------------------------------------------------------------------
// Run artifacts
// ---------------------------------------------------------------------------

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "step,lr,lambda_con,loss_m1,loss_m2,dice_l1,dice_l2,r1,r2\n";
  char buf[512];
  for (const TraceRow& r : trace) {
    std::snprintf(buf, sizeof buf,
                  "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.step), r.lr, r.lambda_con, r.loss_m1, r.loss_m2,
                  r.dice_l1, r.dice_l2, r.r1, r.r2);
    out += buf;
  }
  return out;
}

std::vector<TraceRow> parse_trace_csv(const std::string& text) {
  const std::string header = "step,lr,lambda_con,loss_m1,loss_m2,dice_l1,dice_l2,r1,r2";
  std::vector<TraceRow> rows;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (line_no++ == 0) {
      if (line != header) throw FormatError("parse_trace_csv: unexpected header '" + line + "'");
      continue;
    }
    std::array<std::string, 9> fields;
    std::size_t start = 0;
    for (int f = 0; f < 9; ++f) {
      const std::size_t comma = line.find(',', start);
      const bool last = f == 8;
      if (last != (comma == std::string::npos))
        throw FormatError("parse_trace_csv: expected 9 fields in '" + line + "'");
      fields[std::size_t(f)] = line.substr(start, last ? std::string::npos : comma - start);
      start = comma + 1;
    }
    TraceRow r;
    try {
      r.step = std::stoll(fields[0]);
      r.lr = std::stod(fields[1]);
      r.lambda_con = std::stod(fields[2]);
      r.loss_m1 = std::stod(fields[3]);
      r.loss_m2 = std::stod(fields[4]);
      r.dice_l1 = std::stod(fields[5]);
      r.dice_l2 = std::stod(fields[6]);
      r.r1 = std::stod(fields[7]);
      r.r2 = std::stod(fields[8]);
    } catch (const std::exception&) {
      throw FormatError("parse_trace_csv: non-numeric field in '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

namespace {

json network_to_json(const NetworkConfig& n) {
  return json{{"dims", n.dims},
              {"in_channels", n.in_channels},
              {"base_channels", n.base_channels},
              {"depth", n.depth},
              {"num_classes", n.num_classes},
              {"instance_norm", n.instance_norm}};
}

NetworkConfig network_from_json(const json& j) {
  NetworkConfig n;
  n.dims = j.at("dims").get<int>();
  n.in_channels = j.at("in_channels").get<int>();
  n.base_channels = j.at("base_channels").get<int>();
  n.depth = j.at("depth").get<int>();
  n.num_classes = j.at("num_classes").get<int>();
  n.instance_norm = j.at("instance_norm").get<bool>();
  return n;
}

}  // namespace

std::string train_config_json(const TrainConfig& cfg) {
  const json j{{"method", to_string(cfg.method)},
               {"iterations", cfg.iterations},
               {"lr_initial", cfg.lr_initial},
               {"lr_schedule_step", cfg.lr_schedule_step},
               {"batch_labeled", cfg.batch_labeled},
               {"batch_unlabeled", cfg.batch_unlabeled},
               {"patch_shape", {cfg.patch_shape[0], cfg.patch_shape[1], cfg.patch_shape[2]}},
               {"network", network_to_json(cfg.network)},
               {"ema", {{"alpha", cfg.ema.alpha}, {"head_policy", to_string(cfg.ema.head_policy)}}},
               {"consistency_weight", cfg.consistency_weight},
               {"ramp_steps", cfg.ramp_steps},
               {"teacher_noise", cfg.teacher_noise},
               {"teacher_noise_sigma", cfg.teacher_noise_sigma},
               {"teacher_transform", cfg.teacher_transform},
               {"sdf_k", cfg.sdf_k},
               {"sgd_momentum", cfg.sgd_momentum},
               {"seed_init", cfg.seed_init},
               {"seed_sampler", cfg.seed_sampler},
               {"seed_noise", cfg.seed_noise},
               {"abort_dump_dir", cfg.abort_dump_dir}};
  return j.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.method = method_from_string(j.at("method").get<std::string>());
    cfg.iterations = j.at("iterations").get<std::int64_t>();
    cfg.lr_initial = j.at("lr_initial").get<double>();
    cfg.lr_schedule_step = j.at("lr_schedule_step").get<std::int64_t>();
    cfg.batch_labeled = j.at("batch_labeled").get<int>();
    cfg.batch_unlabeled = j.at("batch_unlabeled").get<int>();
    for (int a = 0; a < 3; ++a)
      cfg.patch_shape[std::size_t(a)] = j.at("patch_shape").at(std::size_t(a)).get<int>();
    cfg.network = network_from_json(j.at("network"));
    cfg.ema.alpha = j.at("ema").at("alpha").get<double>();
    cfg.ema.head_policy = head_policy_from_string(j.at("ema").at("head_policy").get<std::string>());
    cfg.consistency_weight = j.at("consistency_weight").get<double>();
    cfg.ramp_steps = j.at("ramp_steps").get<std::int64_t>();
    cfg.teacher_noise = j.at("teacher_noise").get<bool>();
    cfg.teacher_noise_sigma = j.at("teacher_noise_sigma").get<double>();
    cfg.teacher_transform = j.at("teacher_transform").get<bool>();
    cfg.sdf_k = j.at("sdf_k").get<double>();
    cfg.sgd_momentum = j.at("sgd_momentum").get<double>();
    cfg.seed_init = j.at("seed_init").get<std::uint64_t>();
    cfg.seed_sampler = j.at("seed_sampler").get<std::uint64_t>();
    cfg.seed_noise = j.at("seed_noise").get<std::uint64_t>();
    cfg.abort_dump_dir = j.at("abort_dump_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("train_config_from_json: malformed config: ") + e.what());
  }
  return cfg;
}

void save_run(const std::filesystem::path& dir, RunReport& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("save_run: cannot create " + dir.string() + ": " + ec.message());

  write_file(dir / "config.json", train_config_json(report.config));
  write_file(dir / "trace.csv", trace_csv(report.trace));

  report.checkpoint_paths.clear();
  const auto save_model = [&](const char* name, const ParamVector& p) {
    if (p.values.empty()) return;
    const std::string path = (dir / (std::string(name) + ".ckpt")).string();
    save_checkpoint(path, report.config.network, p);
    report.checkpoint_paths.push_back(path);
  };
  save_model("m1", report.m1_params);
  save_model("m2", report.m2_params);
  save_model("teacher", report.teacher_params);

  const bool has_metrics = !report.test_metrics.cases.empty();
  if (has_metrics) {
    write_file(dir / "metrics.json", metrics_json(report.test_metrics));
    write_file(dir / "eval.csv", metrics_csv(report.test_metrics));
  }

  json checkpoints = json::array();
  for (const std::string& p : report.checkpoint_paths) checkpoints.push_back(p);
  const json summary{{"method", to_string(report.config.method)},
                     {"iterations", report.config.iterations},
                     {"trace_rows", report.trace.size()},
                     {"has_test_metrics", has_metrics},
                     {"checkpoints", checkpoints},
                     {"wall_seconds", report.wall_seconds}};
  write_file(dir / "report.json", summary.dump(2) + "\n");
}

}  // namespace cemt
