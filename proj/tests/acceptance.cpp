/* Copyright 2026 The roadcode Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "panorama_cases.hpp"
#include "roadcode/commands.hpp"
#include "roadcode/response_parser.hpp"
#include "split_cases.hpp"

namespace {

using namespace roadcode;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Tolerances and limits.
constexpr double kMetricTolerance = 1e-12;
constexpr double kFourDecimals = 5e-5;
constexpr double kMetricSeconds = 10.0;
constexpr double kAggregationSeconds = 30.0;
constexpr double kReprojectionSeconds = 5.0;
constexpr double kCentreTolerancePx = 1.0;
constexpr int kMetricTrials = 1000;
constexpr int kAggregationTrials = 10000;
constexpr int kSplitTrials = 200;
constexpr int kStarPairs = 1000;
constexpr double kPromptTarget = 100000.0;
constexpr double kPromptBand = 0.5;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& why) {
    if (!ok && pass) {
      pass = false;
      detail = why;
    }
  }
};

Outcome metric_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  double worst = 0;
  for (int i = 0; i < kMetricTrials; ++i) {
    auto [samples, m] = testing::random_confusion(rng);
    auto q = attribute_metrics(m);
    auto b = testing::brute_force_metrics(samples);
    for (auto d : {q.accuracy - b.accuracy, q.precision - b.precision, q.recall - b.recall, q.f1 - b.f1})
      worst = std::max(worst, std::abs(d));
  }
  o.require(worst <= kMetricTolerance, "max deviation " + std::to_string(worst));

  ConfusionMatrix hand("hand", {"A", "B"});
  const std::vector<std::pair<const char*, const char*>> pairs = {{"A", "A"}, {"A", "A"}, {"A", "B"}, {"B", "B"}};
  for (auto [t, p] : pairs) hand.add(t, p);
  auto q = attribute_metrics(hand);
  o.require(std::abs(q.accuracy - 0.75) < kFourDecimals && std::abs(q.precision - 0.75) < kFourDecimals &&
                std::abs(q.recall - 0.8333) < kFourDecimals && std::abs(q.f1 - 0.7333) < kFourDecimals,
            "hand example differs");
  const double secs = seconds_since(t0);
  o.require(secs < kMetricSeconds, "took " + std::to_string(secs) + " s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d matrices, max |diff| %.1e; hand %.4f/%.4f/%.4f/%.4f; %.2f s", kMetricTrials, worst,
                q.accuracy, q.precision, q.recall, q.f1, secs);
  if (o.pass) o.detail = buf;
  return o;
}

Outcome aggregation_dominance() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(777);
  for (int i = 0; i < kAggregationTrials && o.pass; ++i) {
    auto r = testing::random_segment(rng, 10);
    auto road = aggregate_segment(r.images, r.segment, r.codebook);
    auto why = testing::check_aggregation(r, road);
    o.require(why.empty(), "segment " + std::to_string(i) + ": " + why);
    auto shuffled = r.images;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto again = aggregate_segment(shuffled, r.segment, r.codebook);
    o.require(again.aggregated == road.aggregated && again.contributing == road.contributing,
              "segment " + std::to_string(i) + ": permutation changed the result");
  }
  const double secs = seconds_since(t0);
  o.require(secs < kAggregationSeconds, "took " + std::to_string(secs) + " s");
  if (o.pass) o.detail = std::to_string(kAggregationTrials) + " segments, " + std::to_string(secs).substr(0, 4) + " s";
  return o;
}

std::string rule_summary(const DatasetSplit& s) {
  std::map<std::string, int> n;
  for (const auto& e : s.provenance_log) ++n["rule" + std::to_string(e.rule) + ":" + e.action];
  std::string out;
  for (const auto& [k, v] : n) out += (out.empty() ? "" : ", ") + k + "=" + std::to_string(v);
  return out;
}

Outcome split_conformance() {
  Outcome o;
  auto f = testing::engineered_split();
  auto split = split_dataset(f.segments, f.codebook, 11);
  auto why = testing::check_engineered(f, split);
  o.require(why.empty(), "engineered manifest: " + why);
  why = testing::check_split_invariants(f.segments, split);
  o.require(why.empty(), "engineered manifest: " + why);

  std::mt19937_64 rng(4242);
  for (int i = 0; i < kSplitTrials && o.pass; ++i) {
    auto book = testing::random_codebook(rng, 4, 5);
    auto segments = testing::random_segments(rng, book, 5 + static_cast<int>(rng() % 60));
    auto s = split_dataset(segments, book, rng());
    why = testing::check_split_invariants(segments, s);
    o.require(why.empty(), "random manifest " + std::to_string(i) + ": " + why);
  }
  if (!o.pass) return o;
  o.detail = "engineered log exact; " + std::to_string(kSplitTrials) + " random manifests conserve and stay disjoint";

  const char* manifest = std::getenv("ROADCODE_THAIRAP_MANIFEST");
  if (!manifest || !*manifest) {
    o.detail += "; ThaiRAP manifest not available (set ROADCODE_THAIRAP_MANIFEST), comparison skipped";
    return o;
  }
  auto book = load_codebook(testing::shipped_codebook());
  DatasetLoadOptions load;
  load.allow_missing_images = true;
  auto data = load_dataset(manifest, fs::path(manifest).parent_path(), book, load);
  auto s = split_dataset(data.segments, book, 0);
  why = testing::check_split_invariants(data.segments, s);
  o.require(why.empty(), "ThaiRAP manifest: " + why);
  const std::vector<std::pair<std::size_t, std::size_t>> sizes = {{s.train_original.size(), 1274},
                                                                    {s.train_augmented.size(), 464},
                                                                    {s.test.size(), 492},
                                                                    {s.validation.size(), 243},
                                                                    {s.unseen.size(), 28}};
  std::string got, diff;
  for (auto [g, want] : sizes) {
    got += (got.empty() ? "" : "/") + std::to_string(g);
    if (g != want) diff = " (differs from 1274/464/492/243/28; " + rule_summary(s) + ")";
  }
  o.detail += "; ThaiRAP sizes " + got + (diff.empty() ? " match" : diff);
  return o;
}

struct RunFiles {
  std::string predictions, segments, overall, groups, attributes, report;
};

RunFiles run_pipeline(const fs::path& dir, int parallelism) {
  auto config = load_run_config(testing::fixture("e2e/config.toml"));
  config.output_dir = dir / "assess";
  config.parallelism = parallelism;
  cli::AssessCommand a;
  a.config = config;
  auto assessed = cli::cmd_assess(a);
  cli::EvaluateCommand e;
  e.codebook = config.codebook_path;
  e.manifest = config.dataset_manifest;
  e.predictions = assessed.predictions_path;
  e.output_dir = dir / "evaluate";
  cli::cmd_evaluate(e);
  return {util::read_file(assessed.predictions_path), util::read_file(assessed.segments_path),
          util::read_file(e.output_dir / "table_overall.csv"), util::read_file(e.output_dir / "table_groups.csv"),
          util::read_file(e.output_dir / "table_attributes.csv"), util::read_file(e.output_dir / "report.json")};
}

Outcome end_to_end_determinism() {
  Outcome o;
  testing::TempDir dir("acceptance_e2e");
  std::vector<RunFiles> runs;
  std::vector<std::string> labels;
  for (int i = 0; i < 3; ++i) {
    runs.push_back(run_pipeline(dir / ("p1_run" + std::to_string(i)), 1));
    labels.push_back("parallelism 1 run " + std::to_string(i + 1));
  }
  runs.push_back(run_pipeline(dir / "p4", 4));
  labels.push_back("parallelism 4");
  const auto& ref = runs.front();
  o.require(std::count(ref.predictions.begin(), ref.predictions.end(), '\n') == 13, "expected 12 prediction lines");
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const auto& r = runs[i];
    o.require(r.predictions == ref.predictions, labels[i] + ": predictions JSONL differs");
    o.require(r.segments == ref.segments, labels[i] + ": segments JSONL differs");
    o.require(r.overall == ref.overall && r.groups == ref.groups && r.attributes == ref.attributes,
              labels[i] + ": report CSV differs");
    o.require(r.report == ref.report, labels[i] + ": report JSON differs");
  }
  if (o.pass) o.detail = "12 images / 4 segments, 3 runs at parallelism 1 and 1 at 4 byte-identical";
  return o;
}

Outcome parser_robustness() {
  Outcome o;
  auto book = load_codebook(testing::fixture("codebook/two_attributes.json"));
  auto corpus = nlohmann::json::parse(util::read_file(testing::fixture("parser/corpus.json")));
  o.require(corpus.size() == 30, "corpus has " + std::to_string(corpus.size()) + " cases");
  int matched = 0;
  for (const auto& c : corpus) {
    const auto name = c["name"].get<std::string>();
    auto r = parse_response(c["response"].get<std::string>(), book);
    for (const auto& [attr, code] : r.predictions) {
      const auto* a = book.find(attr);
      o.require(a && a->has_code(code), name + ": emitted " + attr + "=" + code + " outside the codebook");
    }
    std::map<std::string, std::string> invalid;
    for (const auto& e : r.invalid) invalid[e.attribute_id] = std::string(reason_name(e.reason));
    o.require(r.predictions.size() + r.invalid.size() == book.size() && invalid.size() == r.invalid.size(),
              name + ": attributes not each classified exactly once");
    const bool labelled = r.predictions == c["predictions"].get<std::map<std::string, std::string>>() &&
                          invalid == c["invalid"].get<std::map<std::string, std::string>>();
    o.require(labelled, name + ": differs from the hand label");
    matched += labelled;
  }
  if (o.pass) o.detail = std::to_string(matched) + "/30 cases match hand labels, no out-of-set codes";
  return o;
}

Outcome reprojection() {
  Outcome o;
  double slowest = 0;
  auto timed = [&](const Image& pano, double heading) {
    const auto t0 = Clock::now();
    auto out = reproject_panorama(pano, heading, 90.0);
    slowest = std::max(slowest, seconds_since(t0));
    return out;
  };
  auto pano = testing::lit_panorama(123);
  auto out = timed(pano, testing::column_yaw(pano, 123));
  o.require(out.width == 1600 && out.height == 1200, "output is " + std::to_string(out.width) + "x" +
                                                         std::to_string(out.height));
  auto [x, y] = testing::centroid(out);
  const double cx = (out.width - 1) / 2.0, cy = (out.height - 1) / 2.0;
  o.require(std::abs(x - cx) <= kCentreTolerancePx && std::abs(y - cy) <= kCentreTolerancePx,
            "lit pixel at (" + std::to_string(x) + ", " + std::to_string(y) + ")");

  Image flat(362, 181, 3, 137);
  auto constant = timed(flat, 211.0);
  o.require(std::all_of(constant.pixels.begin(), constant.pixels.end(), [](auto p) { return p == 137; }),
            "constant panorama gave a non-constant view");
  o.require(slowest < kReprojectionSeconds, "slowest view took " + std::to_string(slowest) + " s");
  char buf[160];
  std::snprintf(buf, sizeof buf, "1600x1200, lit pixel at (%.2f, %.2f) vs (%.1f, %.1f), constant kept, %.2f s/view", x,
                y, cx, cy, slowest);
  if (o.pass) o.detail = buf;
  return o;
}

Outcome star_reporting() {
  Outcome o;
  auto m = star_rating_confusion(std::vector<int>{3, 2, 2}, std::vector<int>{3, 3, 2});
  o.require(m.counts[2][2] == 1 && m.counts[2][1] == 1 && m.counts[1][1] == 1 && m.total() == 3,
            "hand example matrix differs");

  std::mt19937_64 rng(99);
  int pairs = 0;
  for (int i = 0; i < kStarPairs && o.pass; ++i) {
    auto book = testing::random_codebook(rng, 5, 6);
    auto model = testing::random_scoring(rng, book);
    StarRatingInput safer, riskier;
    for (const auto& a : book.attributes) {
      const auto& c1 = a.classes[rng() % a.classes.size()];
      const auto& c2 = a.classes[rng() % a.classes.size()];
      const bool first_lower = c1.risk_rank <= c2.risk_rank;
      safer.road.aggregated[a.id] = (first_lower ? c1 : c2).code;
      riskier.road.aggregated[a.id] = (first_lower ? c2 : c1).code;
    }
    safer.operating_speed = riskier.operating_speed = 10.0 + static_cast<double>(rng() % 150);
    const auto a = estimate_star_rating(safer, model, book), b = estimate_star_rating(riskier, model, book);
    o.require(b.stars <= a.stars && b.score >= a.score, "pair " + std::to_string(i) + " not monotone");
    ++pairs;
  }

  testing::TempDir dir("acceptance_star");
  cli::StarMatrixCommand c;
  c.codebook = testing::shipped_codebook();
  c.manifest = testing::fixture("e2e/manifest.csv");
  c.predictions = testing::fixture("e2e/perfect_predictions.jsonl");
  c.scoring_config = testing::source_dir() / "data" / "scoring_motorcyclist.json";
  c.output_dir = dir.path();
  auto r = cli::cmd_star_matrix(c);
  const auto summary = fs::exists(dir / "star_high_risk.csv") ? util::read_file(dir / "star_high_risk.csv") : "";
  o.require(summary.find("below_3") != std::string::npos && summary.find("high_risk_recall") != std::string::npos,
            "high-risk summary not emitted");
  o.require(r.confusion.total() == 4, "fixture star matrix has " + std::to_string(r.confusion.total()) + " segments");
  if (o.pass)
    o.detail = "hand matrix exact, " + std::to_string(pairs) + " monotone pairs, star_high_risk.csv written";
  return o;
}

Outcome prompt_budget() {
  Outcome o;
  auto book = load_codebook(testing::shipped_codebook());
  const auto chars = static_cast<double>(render_attribute_details(book).size());
  o.require(book.size() == 52, "codebook has " + std::to_string(book.size()) + " attributes");
  o.require(std::abs(chars - kPromptTarget) <= kPromptBand * kPromptTarget,
            std::to_string(static_cast<long>(chars)) + " characters");
  if (o.pass) o.detail = std::to_string(static_cast<long>(chars)) + " characters (band 50,000..150,000)";
  return o;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"metric-oracle", metric_oracle},
      {"aggregation-dominance", aggregation_dominance},
      {"split-rule-conformance", split_conformance},
      {"end-to-end-determinism", end_to_end_determinism},
      {"parser-robustness", parser_robustness},
      {"reprojection", reprojection},
      {"star-rating-reporting", star_reporting},
      {"prompt-budget", prompt_budget},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
