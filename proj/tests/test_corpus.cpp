#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "json.hpp"

#include "condet/corpus.hpp"
#include "condet/error.hpp"
#include "condet/map_eval.hpp"
#include "condet/rng.hpp"
#include "condet/synth.hpp"
#include "test_support.hpp"

using namespace condet;
using nlohmann::json;

namespace {

json minimal_annotations(int n_task1_images) {
  json j;
  j["images"] = json::array();
  for (int i = 0; i < n_task1_images; ++i) {
    j["images"].push_back({{"id", i + 1}, {"width", 1920}, {"height", 1280}, {"task_id", 1}});
  }
  j["annotations"] = json::array();
  return j;
}

}  // namespace

TEST_CASE("manifest declaring 4470 task-1 images summarizes to 4470") {
  const Corpus corpus = parse_annotations_json(minimal_annotations(4470));
  const CorpusSummary summary = summarize(corpus);
  CHECK(summary.images_per_task[0] == 4470);
}

TEST_CASE("empty annotation list parses to an empty corpus") {
  json j;
  j["images"] = json::array();
  j["annotations"] = json::array();
  const Corpus corpus = parse_annotations_json(j);
  CHECK(corpus.images().empty());
  CHECK(corpus.ground_truth().empty());
  CHECK(corpus.categories() == canonical_categories());
  CHECK(corpus.tasks() == canonical_tasks());
  const CorpusSummary summary = summarize(corpus);
  for (const auto& row : summary.instances) {
    for (std::int64_t v : row) CHECK(v == 0);
  }
}

TEST_CASE("zero-width box is rejected naming the annotation id") {
  json j = minimal_annotations(1);
  j["annotations"].push_back(
      {{"id", 77}, {"image_id", 1}, {"category_id", 3}, {"bbox", {10, 10, 0, 5}}});
  CHECK_THROWS_WITH_AS(parse_annotations_json(j),
                       doctest::Contains("77"), ValidationError);
}

TEST_CASE("unknown fields are ignored") {
  json j = minimal_annotations(1);
  j["images"][0]["license"] = 4;
  j["info"] = {{"version", "1.0"}};
  j["annotations"].push_back({{"id", 1},
                              {"image_id", 1},
                              {"category_id", 2},
                              {"bbox", {0, 0, 10, 10}},
                              {"area", 100.0}});
  CHECK(parse_annotations_json(j).ground_truth().size() == 1);
}

TEST_CASE("records are normalized to ascending id order") {
  json j = minimal_annotations(0);
  j["images"] = {{{"id", 3}, {"width", 100}, {"height", 100}, {"task_id", 1}},
                 {{"id", 1}, {"width", 100}, {"height", 100}, {"task_id", 2}}};
  j["annotations"] = {
      {{"id", 9}, {"image_id", 1}, {"category_id", 1}, {"bbox", {0, 0, 5, 5}}},
      {{"id", 2}, {"image_id", 3}, {"category_id", 1}, {"bbox", {0, 0, 5, 5}}}};
  const Corpus corpus = parse_annotations_json(j);
  CHECK(corpus.images()[0].image_id == 1);
  CHECK(corpus.images()[1].image_id == 3);
  CHECK(corpus.ground_truth()[0].gt_id == 2);
  CHECK(corpus.ground_truth()[1].gt_id == 9);
}

TEST_CASE("boxes overflowing the image are clamped with a warning") {
  json j;
  j["images"] = {{{"id", 1}, {"width", 100}, {"height", 100}, {"task_id", 1}}};
  j["annotations"] = {
      {{"id", 1}, {"image_id", 1}, {"category_id", 1}, {"bbox", {90, 90, 20, 20}}}};
  const Corpus corpus = parse_annotations_json(j);
  REQUIRE(corpus.warnings().size() == 1);
  CHECK(corpus.ground_truth()[0].bbox == Box{90, 90, 10, 10});

  json outside = j;
  outside["annotations"][0]["bbox"] = {200, 200, 10, 10};
  CHECK_THROWS_AS(parse_annotations_json(outside), ValidationError);
}

TEST_CASE("duplicate ids are rejected") {
  json j = minimal_annotations(2);
  j["images"][1]["id"] = 1;
  CHECK_THROWS_AS(parse_annotations_json(j), ValidationError);
}

TEST_CASE("malformed json reports a position") {
  const std::string path = "/tmp/condet_bad.json";
  write_text_file(path, "{\"images\": [,]}");
  CHECK_THROWS_AS(parse_annotations(path), ParseError);
}

TEST_CASE("missing file names the path") {
  CHECK_THROWS_WITH_AS(parse_annotations("/nonexistent/anns.json"),
                       doctest::Contains("/nonexistent/anns.json"), ValidationError);
}

TEST_CASE("custom category table overrides the canonical one") {
  json j = minimal_annotations(1);
  j["categories"] = {{{"id", 1}, {"name", "widget"}}, {{"id", 2}, {"name", "gadget"}}};
  const Corpus corpus = parse_annotations_json(j);
  CHECK(corpus.n_categories() == 2);
  CHECK(corpus.categories()[0].name == "widget");

  json bad = j;
  bad["categories"] = {{{"id", 1}, {"name", "a"}}, {{"id", 3}, {"name", "b"}}};
  CHECK_THROWS_AS(parse_annotations_json(bad), ValidationError);
}

TEST_CASE("detection for a nonexistent image is rejected naming it") {
  const Corpus corpus = parse_annotations_json(minimal_annotations(1));
  json dets = json::array();
  dets.push_back({{"image_id", 999}, {"category_id", 1}, {"score", 0.5}, {"bbox", {0, 0, 5, 5}}});
  CHECK_THROWS_WITH_AS(parse_detections_json(dets, corpus),
                       doctest::Contains("999"), ValidationError);
}

TEST_CASE("detection score outside [0,1] is rejected") {
  const Corpus corpus = parse_annotations_json(minimal_annotations(1));
  json dets = json::array();
  dets.push_back({{"image_id", 1}, {"category_id", 1}, {"score", 1.2}, {"bbox", {0, 0, 5, 5}}});
  CHECK_THROWS_AS(parse_detections_json(dets, corpus), ValidationError);
}

TEST_CASE("score/logit consistency is enforced at 1e-6") {
  const Corpus corpus = parse_annotations_json(minimal_annotations(1));
  const double exact = std::exp(2.0) / (std::exp(2.0) + 6.0);  // softmax of [2,0,...,0]

  json inconsistent = json::array();
  inconsistent.push_back({{"image_id", 1},
                          {"category_id", 1},
                          {"score", 0.549},
                          {"bbox", {0, 0, 5, 5}},
                          {"logits", {2, 0, 0, 0, 0, 0, 0}}});
  CHECK_THROWS_AS(parse_detections_json(inconsistent, corpus), ValidationError);

  json consistent = json::array();
  consistent.push_back({{"image_id", 1},
                        {"category_id", 1},
                        {"score", exact},
                        {"bbox", {0, 0, 5, 5}},
                        {"logits", {2, 0, 0, 0, 0, 0, 0}}});
  CHECK(parse_detections_json(consistent, corpus).size() == 1);

  json wrong_length = json::array();
  wrong_length.push_back({{"image_id", 1},
                          {"category_id", 1},
                          {"score", 0.5},
                          {"bbox", {0, 0, 5, 5}},
                          {"logits", {2, 0, 0}}});
  CHECK_THROWS_AS(parse_detections_json(wrong_length, corpus), ValidationError);
}

TEST_CASE("detections without logits are accepted") {
  const Corpus corpus = parse_annotations_json(minimal_annotations(1));
  json dets = json::array();
  dets.push_back({{"image_id", 1}, {"category_id", 2}, {"score", 0.9}, {"bbox", {0, 0, 5, 5}}});
  const auto parsed = parse_detections_json(dets, corpus);
  REQUIRE(parsed.size() == 1);
  CHECK_FALSE(parsed[0].logits.has_value());
}

TEST_CASE("detections are grouped by image") {
  json j = minimal_annotations(3);
  const Corpus corpus = parse_annotations_json(j);
  json dets = json::array();
  for (int image : {3, 1, 3, 2, 1}) {
    dets.push_back({{"image_id", image}, {"category_id", 1}, {"score", 0.5}, {"bbox", {0, 0, 5, 5}}});
  }
  const auto parsed = parse_detections_json(dets, corpus);
  std::vector<std::int64_t> order;
  for (const Detection& d : parsed) order.push_back(d.image_id);
  CHECK(order == std::vector<std::int64_t>{1, 1, 2, 3, 3});
}

TEST_CASE("summarize counts instances per task and category") {
  // Task-2 slice shaped like a tiny version of the real one.
  std::vector<testsup::GtSpec> gts;
  for (int i = 0; i < 30; ++i) gts.push_back({1, 1, Box{0.0 + i, 0, 5, 5}});
  for (int i = 0; i < 11; ++i) gts.push_back({1, 2, Box{100.0 + i, 0, 5, 5}});
  gts.push_back({1, 6, Box{300, 0, 5, 5}});
  const Corpus corpus = testsup::make_corpus(1, gts, {2});
  const CorpusSummary summary = summarize(corpus);
  CHECK(summary.instances[1][0] == 30);
  CHECK(summary.instances[1][1] == 11);
  CHECK(summary.instances[1][5] == 1);
  CHECK(summary.task_total(1) == 42);
  CHECK(summary.images_per_task[1] == 1);
}

TEST_CASE("three car boxes on one image count as three") {
  const Corpus corpus = testsup::make_corpus(
      1, {{1, 3, Box{0, 0, 5, 5}}, {1, 3, Box{10, 0, 5, 5}}, {1, 3, Box{20, 0, 5, 5}}});
  CHECK(summarize(corpus).instances[0][2] == 3);
}

TEST_CASE("summarize is invariant to record order") {
  json j = minimal_annotations(2);
  j["images"][1]["task_id"] = 3;
  j["annotations"] = {
      {{"id", 1}, {"image_id", 1}, {"category_id", 1}, {"bbox", {0, 0, 5, 5}}},
      {{"id", 2}, {"image_id", 2}, {"category_id", 4}, {"bbox", {0, 0, 5, 5}}},
      {{"id", 3}, {"image_id", 1}, {"category_id", 1}, {"bbox", {9, 0, 5, 5}}}};
  const CorpusSummary a = summarize(parse_annotations_json(j));

  std::reverse(j["annotations"].begin(), j["annotations"].end());
  std::reverse(j["images"].begin(), j["images"].end());
  const CorpusSummary b = summarize(parse_annotations_json(j));
  CHECK(a.instances == b.instances);
  CHECK(a.images_per_task == b.images_per_task);
}

TEST_CASE("parse -> serialize -> parse round-trips") {
  const SynthResult synth = synth_generate(42, SynthSpec::standard());
  const std::string ann_path = "/tmp/condet_roundtrip_ann.json";
  const std::string det_path = "/tmp/condet_roundtrip_det.json";
  save_annotations(synth.corpus, ann_path);
  save_detections(synth.detections, det_path);

  const Corpus reparsed = parse_annotations(ann_path);
  CHECK(reparsed.images() == synth.corpus.images());
  CHECK(reparsed.ground_truth() == synth.corpus.ground_truth());
  CHECK(reparsed.categories() == synth.corpus.categories());
  CHECK(reparsed.tasks() == synth.corpus.tasks());
  CHECK(reparsed.warnings().empty());

  const std::vector<Detection> redets = parse_detections(det_path, reparsed);
  CHECK(redets == synth.detections);

  // Serialized bytes are stable across the round trip too.
  const std::string again = "/tmp/condet_roundtrip_ann2.json";
  save_annotations(reparsed, again);
  CHECK(read_text_file(again) == read_text_file(ann_path));
}

TEST_CASE("synth is deterministic per (seed, spec)") {
  const SynthSpec spec = SynthSpec::standard();
  const SynthResult a = synth_generate(7, spec);
  const SynthResult b = synth_generate(7, spec);
  CHECK(annotations_to_json(a.corpus).dump() == annotations_to_json(b.corpus).dump());
  CHECK(detections_to_json(a.detections).dump() ==
        detections_to_json(b.detections).dump());

  const SynthResult c = synth_generate(8, spec);
  CHECK(annotations_to_json(a.corpus).dump() != annotations_to_json(c.corpus).dump());
}

TEST_CASE("zero-noise synth pairs every ground truth with one exact detection") {
  SynthSpec spec;
  spec.images_per_task = {6, 4};
  spec.category_rates = {0.8, 0.8, 1.5, 0.8, 0.4, 0.3};
  const SynthResult result = synth_generate(3, spec);
  REQUIRE(result.corpus.ground_truth().size() > 10);
  CHECK(result.detections.size() == result.corpus.ground_truth().size());
  std::size_t i = 0;
  for (const GroundTruthBox& gt : result.corpus.ground_truth()) {
    const Detection& det = result.detections[i++];
    CHECK(det.image_id == gt.image_id);
    CHECK(det.category_id == gt.category_id);
    CHECK(det.bbox == gt.bbox);
  }
}

TEST_CASE("duplicate rate 1 gives every ground truth two same-class detections") {
  SynthSpec spec;
  spec.images_per_task = {5};
  spec.category_rates = {1.0, 1.0, 1.0, 0.5, 0.5, 0.5};
  spec.noise.duplicate = 1.0;
  const SynthResult result = synth_generate(4, spec);
  REQUIRE(!result.corpus.ground_truth().empty());
  for (const GroundTruthBox& gt : result.corpus.ground_truth()) {
    int overlapping_same_class = 0;
    for (const Detection& det : result.detections) {
      if (det.image_id != gt.image_id || det.category_id != gt.category_id) continue;
      if (det.bbox == gt.bbox) ++overlapping_same_class;
    }
    CHECK(overlapping_same_class >= 2);
  }
}

TEST_CASE("synth logits are parse-consistent") {
  SynthSpec spec = SynthSpec::standard();
  spec.images_per_task = {8};
  const SynthResult result = synth_generate(5, spec);
  const std::string det_path = "/tmp/condet_synth_logits.json";
  save_detections(result.detections, det_path);
  CHECK(parse_detections(det_path, result.corpus).size() == result.detections.size());
}
