// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "condet/calibration.hpp"
#include "condet/continual.hpp"
#include "condet/corpus.hpp"
#include "condet/map_eval.hpp"
#include "condet/numeric.hpp"
#include "condet/pipeline.hpp"
#include "condet/rng.hpp"
#include "condet/synth.hpp"
#include "condet/tide.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace condet;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

void note(const std::string& text) { g_notes.push_back(text); }

void require(bool ok, const std::string& what) {
  if (!ok) {
    ++g_failures;
    note("FAILED check: " + what);
  }
}

using Clock = std::chrono::steady_clock;

double run_criterion(int number, const std::string& title, double budget_seconds,
                     void (*body)()) {
  g_notes.clear();
  const int failures_before = g_failures;
  const auto start = Clock::now();
  body();
  const double elapsed =
      std::chrono::duration<double>(Clock::now() - start).count();
  bool ok = g_failures == failures_before;
  if (elapsed >= budget_seconds) {
    ok = false;
    ++g_failures;
    note("runtime " + std::to_string(elapsed) + "s exceeded budget " +
         std::to_string(budget_seconds) + "s");
  }
  std::printf("%s  criterion %2d: %s (%.3fs)\n", ok ? "PASS" : "FAIL", number,
              title.c_str(), elapsed);
  for (const std::string& n : g_notes) std::printf("      %s\n", n.c_str());
  return elapsed;
}

Detection with_logits(std::int64_t image_id, int category_id, Box box,
                      std::vector<double> logits) {
  Detection det;
  det.image_id = image_id;
  det.category_id = category_id;
  det.bbox = box;
  det.logits = std::move(logits);
  det.score = softmax(*det.logits)[static_cast<std::size_t>(category_id - 1)];
  return det;
}

// --- criterion 1: task-average arithmetic -------------------------------

void criterion_task_average() {
  const double avg = task_average({59.30, 47.00, 69.50, 73.60});
  require(avg == 62.35, "mean of the four task mAPs equals 62.35 exactly");
  require(format_fixed2(avg) == "62.35", "formatted average prints 62.35");
}

// --- criterion 2: AP oracle equivalence ----------------------------------

struct EvalCase {
  Corpus corpus;
  std::vector<Detection> detections;
};

EvalCase random_eval_case(Rng& rng) {
  const int n_images = 1 + static_cast<int>(rng.below(4));
  std::vector<testsup::GtSpec> gts;
  const int n_gts = static_cast<int>(rng.below(5));
  for (int g = 0; g < n_gts; ++g) {
    gts.push_back({static_cast<std::int64_t>(1 + rng.below(static_cast<std::uint64_t>(n_images))),
                   1 + static_cast<int>(rng.below(3)),
                   Box{10.0 * static_cast<double>(rng.below(7)),
                       10.0 * static_cast<double>(rng.below(7)),
                       10.0 * static_cast<double>(1 + rng.below(4)),
                       10.0 * static_cast<double>(1 + rng.below(4))}});
  }
  EvalCase c{testsup::make_corpus(n_images, gts), {}};
  const int n_dets = static_cast<int>(rng.below(7));
  for (int d = 0; d < n_dets; ++d) {
    c.detections.push_back(testsup::make_det(
        static_cast<std::int64_t>(1 + rng.below(static_cast<std::uint64_t>(n_images))),
        1 + static_cast<int>(rng.below(3)),
        0.05 * static_cast<double>(1 + rng.below(19)),
        Box{10.0 * static_cast<double>(rng.below(7)),
            10.0 * static_cast<double>(rng.below(7)),
            10.0 * static_cast<double>(1 + rng.below(4)),
            10.0 * static_cast<double>(1 + rng.below(4))}));
  }
  std::stable_sort(c.detections.begin(), c.detections.end(),
                   [](const Detection& a, const Detection& b) {
                     return a.image_id < b.image_id;
                   });
  return c;
}

void criterion_oracle_equivalence() {
  Rng rng(20240801);
  const EvalConfig config;
  for (int trial = 0; trial < 200; ++trial) {
    const EvalCase c = random_eval_case(rng);
    const EvalReport report = evaluate(c.corpus, c.detections, config);
    const auto expected = oracle::map_brute(c.corpus, c.detections, config);
    if (expected.has_value() != report.map.has_value()) {
      require(false, "mAP definedness diverged on trial " + std::to_string(trial));
      return;
    }
    if (expected && std::abs(*expected - *report.map) > 1e-9) {
      require(false, "mAP diverged from the oracle on trial " + std::to_string(trial));
      return;
    }
    for (int cat = 1; cat <= 3; ++cat) {
      for (std::size_t t = 0; t < config.iou_thresholds.size(); ++t) {
        const auto cell = oracle::ap_brute(c.corpus, c.detections, cat,
                                           config.iou_thresholds[t],
                                           config.recall_points);
        const auto& got =
            report.per_category[static_cast<std::size_t>(cat - 1)].ap_by_threshold[t];
        if (cell.has_value() != got.has_value() ||
            (cell && std::abs(*cell - *got) > 1e-9)) {
          require(false, "per-slice AP diverged on trial " + std::to_string(trial));
          return;
        }
      }
    }
  }
}

// --- criterion 3: perfect-corpus identity --------------------------------

void criterion_perfect_corpus() {
  SynthSpec spec;
  spec.images_per_task = {5, 4};
  spec.category_rates = {0.8, 0.8, 1.5, 0.8, 0.4, 0.3};
  const SynthResult synth = synth_generate(301, spec);
  require(!synth.corpus.ground_truth().empty(), "perfect corpus is non-empty");

  const EvalReport report = evaluate(synth.corpus, synth.detections);
  require(report.map.has_value() && std::abs(*report.map - 1.0) <= 1e-12,
          "zero-noise mAP equals 1.0 within 1e-12");

  const TideReport tide = tide_report(synth.corpus, synth.detections);
  for (int t = 0; t < kNumErrorTypes; ++t) {
    require(tide.dap[static_cast<std::size_t>(t)] == 0.0,
            "dAP[" + error_type_name(static_cast<ErrorType>(t)) + "] is zero");
  }
  require(tide.dap_false_positive == 0.0 && tide.dap_false_negative == 0.0,
          "special errors are (0, 0)");
}

// --- criterion 4: TIDE non-negativity and completeness -------------------

void criterion_tide_properties() {
  std::array<std::int64_t, kNumErrorTypes> seen{};
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthSpec spec;
    spec.images_per_task = {3, 3};
    spec.category_rates = {0.7, 0.7, 1.4, 0.7, 0.4, 0.2};
    spec.noise = NoiseModel{0.15, 0.12, 0.12, 0.08, 0.15, 0.5};
    const SynthResult synth = synth_generate(seed, spec);

    const ErrorAnalysis analysis = classify_errors(synth.corpus, synth.detections);
    std::size_t unmatched = 0;
    for (char m : analysis.det_matched) {
      if (!m) ++unmatched;
    }
    std::set<int> labeled;
    for (const FalsePositive& fp : analysis.false_positives) {
      labeled.insert(fp.det_index);
      seen[static_cast<std::size_t>(fp.type)]++;
    }
    seen[static_cast<std::size_t>(ErrorType::MissedGT)] +=
        static_cast<std::int64_t>(analysis.missed_gt_ids.size());
    if (labeled.size() != analysis.false_positives.size() ||
        labeled.size() != unmatched) {
      require(false, "false positives not labeled exactly once (seed " +
                         std::to_string(seed) + ")");
      return;
    }

    for (int t = 0; t < kNumErrorTypes; ++t) {
      if (oracle_dap(synth.corpus, synth.detections, static_cast<ErrorType>(t)) < 0.0) {
        require(false, "negative dAP (seed " + std::to_string(seed) + ")");
        return;
      }
    }

    const auto [fixed_corpus, fixed_dets] =
        apply_all_fixes(synth.corpus, synth.detections);
    const auto fixed_map = single_threshold_map(fixed_corpus, fixed_dets, 0.5);
    if (fixed_map && std::abs(*fixed_map - 1.0) > 1e-9) {
      require(false, "all-fixes mAP not 1.0 (seed " + std::to_string(seed) + ")");
      return;
    }
  }
  for (int t = 0; t < kNumErrorTypes; ++t) {
    require(seen[static_cast<std::size_t>(t)] > 0,
            "the noisy corpora exercised " +
                error_type_name(static_cast<ErrorType>(t)) + " errors");
  }
}

// --- criterion 5: calibration invariants ----------------------------------

void criterion_calibration() {
  Rng rng(505);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> logits(7);
    for (double& v : logits) v = rng.range(-10.0, 10.0);
    const auto argmax = [](const std::vector<double>& v) {
      return std::max_element(v.begin(), v.end()) - v.begin();
    };
    const auto base = argmax(logits);
    for (double t : {0.5, 1.0, 2.0, 10.0}) {
      if (argmax(softmax_scaled(logits, t)) != base) {
        require(false, "argmax changed under scaling");
        return;
      }
    }
    const Detection det = with_logits(1, 1 + static_cast<int>(rng.below(6)),
                                      Box{0, 0, 10, 10}, logits);
    const std::vector<Detection> identity = scale_scores({det}, 1.0);
    if (std::abs(identity[0].score - det.score) > 1e-12) {
      require(false, "T=1 not the identity within 1e-12");
      return;
    }
    for (double p : softmax_scaled(logits, 1e6)) {
      if (std::abs(p - 1.0 / 7.0) > 1e-5) {
        require(false, "T=1e6 probabilities not within 1e-5 of 1/7");
        return;
      }
    }
  }

  const Detection worked = with_logits(1, 1, Box{0, 0, 10, 10}, {2, 0, 0, 0, 0, 0, 0});
  const double scaled = scale_scores({worked}, 2.0)[0].score;
  require(std::abs(scaled - 0.3118) <= 1e-4,
          "logits [2,0,...,0] at T=2 give score 0.3118 within 1e-4");
}

// --- criterion 6: replay policy -------------------------------------------

Corpus replay_case(Rng& rng, int n_images) {
  std::vector<testsup::GtSpec> gts;
  for (int i = 0; i < n_images; ++i) {
    const std::int64_t image_id = i + 1;
    const int rare = static_cast<int>(rng.below(6));
    for (int k = 0; k < rare; ++k) {
      gts.push_back({image_id, 1, Box{10.0 + 20.0 * k, 10, 15, 15}});
    }
    gts.push_back({image_id, 3, Box{500, 500, 40, 40}});
  }
  return testsup::make_corpus(n_images, gts);
}

void criterion_replay() {
  Rng rng(606);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(8));
    const Corpus corpus = replay_case(rng, n);
    ReplayConfig config;
    config.per_task_quota =
        static_cast<int>(rng.below(static_cast<std::uint64_t>(n) + 1));
    std::vector<std::int64_t> actual = select_replay(corpus, 1, config);
    std::sort(actual.begin(), actual.end());
    const std::vector<std::int64_t> expected = oracle::replay_brute(
        corpus.task_images(1), corpus, config.rare_categories, config.per_task_quota);
    if (actual != expected) {
      require(false, "replay selection diverged on trial " + std::to_string(trial));
      return;
    }
  }

  const Corpus big = [] {
    std::vector<testsup::GtSpec> specs;
    for (int i = 0; i < 300; ++i) specs.push_back({i + 1, 1, Box{10, 10, 15, 15}});
    return testsup::make_corpus(300, specs);
  }();
  ReplayConfig config;  // capacity 250, quota 83
  ReplayBuffer buffer(config.capacity);
  for (int task = 1; task <= 3; ++task) {
    std::vector<std::int64_t> selection;
    for (int i = 0; i < config.per_task_quota; ++i) {
      selection.push_back(static_cast<std::int64_t>((task - 1) * 83 + i + 1));
    }
    buffer.add(big, selection, task, config.rare_categories);
  }
  require(buffer.size() == 249, "three adds of 83 give 249 entries");
  require(buffer.size() <= buffer.capacity(), "buffer stays within capacity 250");
}

// --- criterion 7: distillation --------------------------------------------

void criterion_distill() {
  Rng rng(707);
  for (int trial = 0; trial < 1000; ++trial) {
    ProposalSet proposals;
    const int n = 1 + static_cast<int>(rng.below(300));
    for (int i = 0; i < n; ++i) {
      Proposal p;
      p.logits.assign(6, 0.0);
      p.background_score = 0.05 * static_cast<double>(rng.below(21));
      proposals.push_back(std::move(p));
    }
    DistillConfig config;
    config.n_candidates = 128;
    config.n_sampled = std::min(64, n);
    config.seed = static_cast<std::uint64_t>(trial);
    const DistillSelection sel = distill_select(proposals, config);
    double worst = 0.0;
    std::set<int> in(sel.candidates.begin(), sel.candidates.end());
    for (int c : sel.candidates) {
      worst = std::max(worst, proposals[static_cast<std::size_t>(c)].background_score);
    }
    for (int i = 0; i < n; ++i) {
      if (!in.count(i) &&
          proposals[static_cast<std::size_t>(i)].background_score < worst) {
        require(false, "a non-candidate had a lower background score (trial " +
                           std::to_string(trial) + ")");
        return;
      }
    }
  }

  ProposalSet self;
  for (int i = 0; i < 10; ++i) {
    Proposal p;
    p.box = {1.0 * i, 2, 3, 4};
    p.logits = {0.5 * i, 0, 1, 2, 3, 4};
    p.background_score = 0.1;
    self.push_back(std::move(p));
  }
  const std::vector<int> sampled = {0, 4, 9};
  require(distill_l2_loss(self, self, sampled) == 0.0, "loss(x, x) is 0");

  ProposalSet teacher(2), student(2);
  teacher[0].logits = {1, 0, 0, 0, 0, 0};
  student[0].logits = {0, 0, 0, 0, 0, 0};
  teacher[1].logits = {1, 1, 1, 0, 0, 0};
  student[1].logits = {0, 0, 0, 0, 0, 0};
  const std::vector<int> both = {0, 1};
  require(distill_l2_loss(teacher, student, both) == 2.0,
          "hand example with contributions {1, 3} averages to 2.0 exactly");
}

// --- criterion 8: learning-rate schedule -----------------------------------

void criterion_lr_schedule() {
  const TrainConfig config;
  for (int epoch = 0; epoch <= 5; ++epoch) {
    require(lr_at_epoch(config, epoch) == 0.01,
            "epoch " + std::to_string(epoch) + " uses lr 0.01");
  }
  for (int epoch = 6; epoch <= 9; ++epoch) {
    require(lr_at_epoch(config, epoch) == 0.001,
            "epoch " + std::to_string(epoch) + " uses lr 0.001");
  }
}

// --- criterion 9: pipeline determinism -------------------------------------

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> contents;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      contents[fs::relative(entry.path(), dir).string()] =
          read_text_file(entry.path().string());
    }
  }
  return contents;
}

void criterion_pipeline_determinism() {
  const fs::path root = fs::temp_directory_path() / "condet_acceptance_pipeline";
  fs::remove_all(root);
  fs::create_directories(root);

  const SynthResult synth = synth_generate(909, SynthSpec::standard());
  save_annotations(synth.corpus, (root / "annotations.json").string());
  save_detections(synth.detections, (root / "detections.json").string());

  nlohmann::ordered_json teacher = nlohmann::ordered_json::array();
  nlohmann::ordered_json student = nlohmann::ordered_json::array();
  for (int i = 0; i < 200; ++i) {
    const double bg = (i * 53 % 200) / 200.0;
    teacher.push_back({{"box", {1.0 * i, 0, 10, 10}},
                       {"logits", {0.03 * i, 0, 0, 0, 0, 0}},
                       {"background_score", bg}});
    student.push_back({{"box", {1.0 * i, 0, 10, 9}},
                       {"logits", {0.03 * i, 0.1, 0, 0, 0, 0}},
                       {"background_score", bg}});
  }
  write_text_file((root / "teacher.json").string(), teacher.dump(2));
  write_text_file((root / "student.json").string(), student.dump(2));

  RunManifest manifest;
  manifest.annotations_path = (root / "annotations.json").string();
  manifest.detections_per_task[0] = (root / "detections.json").string();
  manifest.seed = 99;
  manifest.calibration = CalibrationStage{{}, true};
  manifest.calibration->config.grid = {1.0, 1.5, 2.0};
  manifest.replay.per_task_quota = 5;
  manifest.distill = DistillInputs{(root / "teacher.json").string(),
                                   (root / "student.json").string(),
                                   {}};
  std::vector<std::map<std::string, std::string>> outputs;
  int run = 0;
  for (int threads : {1, 4, 8, 1}) {  // the second threads=1 is the rerun
    manifest.output_dir = (root / ("out" + std::to_string(run++))).string();
    run_pipeline(manifest, threads);
    outputs.push_back(read_dir(manifest.output_dir));
  }
  for (std::size_t i = 1; i < outputs.size(); ++i) {
    require(outputs[i] == outputs[0],
            "output " + std::to_string(i) + " is byte-identical to the first run");
  }
  require(outputs[0].count("eval_report.json") == 1 &&
              outputs[0].count("tide_report.json") == 1 &&
              outputs[0].count("replay.json") == 1 &&
              outputs[0].count("calibration_curve.json") == 1 &&
              outputs[0].count("distill.json") == 1 &&
              outputs[0].count("summary.md") == 1,
          "bundle contains every expected file");
}

// --- criterion 10: throughput ----------------------------------------------

void criterion_throughput() {
  // 10,000 images, ~4 ground truths and 10 detections each (100k detections).
  Rng rng(1010);
  const int n_images = 10000;
  std::vector<ImageRecord> images;
  std::vector<GroundTruthBox> gts;
  std::vector<Detection> dets;
  images.reserve(n_images);
  std::int64_t gt_id = 1;
  for (int i = 0; i < n_images; ++i) {
    const std::int64_t image_id = i + 1;
    images.push_back(ImageRecord{image_id, 1920, 1280, 1 + (i % 4)});
    std::vector<Box> boxes;
    for (int g = 0; g < 4; ++g) {
      const Box box{rng.range(0, 1700), rng.range(0, 1060), rng.range(30, 200),
                    rng.range(30, 200)};
      boxes.push_back(box);
      gts.push_back(GroundTruthBox{gt_id++, image_id,
                                   1 + static_cast<int>(rng.below(6)), box});
    }
    for (int d = 0; d < 10; ++d) {
      const Box& anchor = boxes[static_cast<std::size_t>(d % 4)];
      Detection det;
      det.image_id = image_id;
      det.category_id = 1 + static_cast<int>(rng.below(6));
      det.score = rng.real();
      det.bbox = Box{anchor.x + rng.range(-20, 20), anchor.y + rng.range(-20, 20),
                     anchor.w, anchor.h};
      if (det.bbox.x < 0) det.bbox.x = 0;
      if (det.bbox.y < 0) det.bbox.y = 0;
      dets.push_back(det);
    }
  }
  const Corpus corpus =
      Corpus::build(canonical_categories(), canonical_tasks(), std::move(images),
                    std::move(gts));
  const auto start = Clock::now();
  const EvalReport report = evaluate(corpus, dets, {}, 0);
  const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
  require(report.map.has_value(), "throughput run produced a defined mAP");
  note("evaluated 100k detections in " + std::to_string(elapsed) + "s");
  require(elapsed < 5.0, "100k detections evaluated in under 5 seconds");
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  run_criterion(1, "task-average arithmetic reproduces the printed 62.35", 0.001,
                criterion_task_average);
  run_criterion(2, "evaluate matches the brute-force AP oracle on 200 corpora", 10.0,
                criterion_oracle_equivalence);
  run_criterion(3, "zero-noise corpus gives mAP 1.0 and all-zero dAPs", 1.0,
                criterion_perfect_corpus);
  run_criterion(4, "dAPs non-negative, labels complete, all fixes reach 1.0", 30.0,
                criterion_tide_properties);
  run_criterion(5, "temperature scaling invariants and the worked score", 1.0,
                criterion_calibration);
  run_criterion(6, "replay selection matches the subset oracle; buffer 249/250", 5.0,
                criterion_replay);
  run_criterion(7, "distill candidates minimal; hand loss values exact", 2.0,
                criterion_distill);
  run_criterion(8, "learning-rate schedule steps from 0.01 to 0.001 at epoch 6", 0.001,
                criterion_lr_schedule);
  run_criterion(9, "pipeline byte-identical across reruns and thread counts", 60.0,
                criterion_pipeline_determinism);
  run_criterion(10, "100k detections over 10k images evaluate in under 5s", 30.0,
                criterion_throughput);

  if (g_failures > 0) {
    std::printf("acceptance: %d failure(s)\n", g_failures);
    return 1;
  }
  std::printf("acceptance: all criteria passed\n");
  return 0;
}
