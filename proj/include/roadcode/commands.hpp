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
#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "roadcode/assessment.hpp"
#include "roadcode/augment.hpp"
#include "roadcode/codebook.hpp"
#include "roadcode/config.hpp"
#include "roadcode/csv.hpp"
#include "roadcode/dataset.hpp"
#include "roadcode/digest.hpp"
#include "roadcode/error.hpp"
#include "roadcode/evaluation.hpp"
#include "roadcode/http.hpp"
#include "roadcode/image_io.hpp"
#include "roadcode/imagery.hpp"
#include "roadcode/panorama.hpp"
#include "roadcode/prompting.hpp"
#include "roadcode/util.hpp"
#include "roadcode/vlm_client.hpp"

namespace roadcode::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;
inline constexpr int kExitBudget = 4;

inline int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BudgetExceeded:
      return kExitBudget;
    case ErrorCode::AuthError:
    case ErrorCode::TransportError:
    case ErrorCode::RateLimitedExhausted:
    case ErrorCode::ResponseUnparseable:
    case ErrorCode::QuotaExceeded:
      return kExitBackend;
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidConfiguration:
    case ErrorCode::FileNotFound:
    case ErrorCode::SchemaViolation:
    case ErrorCode::DuplicateId:
    case ErrorCode::UnknownClassCode:
    case ErrorCode::ManifestParseError:
    case ErrorCode::DanglingReference:
    case ErrorCode::GroundTruthCodeUnknown:
    case ErrorCode::EmptyDataset:
    case ErrorCode::TemplateError:
    case ErrorCode::SegmentMismatch:
    case ErrorCode::SegmentImageMismatch:
    case ErrorCode::LengthMismatch:
      return kExitConfig;
    default:
      return kExitOther;
  }
}

// ---------------------------------------------------------------------------
// codebook validate

struct CodebookSummary {
  std::string version;
  std::size_t attributes = 0;
  std::map<AttributeGroup, std::size_t> per_group;
  std::size_t single_class = 0;
  std::size_t attribute_details_chars = 0;
  std::string digest;
};

inline CodebookSummary cmd_codebook_validate(const std::filesystem::path& path) {
  auto book = load_codebook(path);
  CodebookSummary s;
  s.version = book.version;
  s.attributes = book.size();
  for (const auto& a : book.attributes) {
    ++s.per_group[a.group];
    if (a.single_class) ++s.single_class;
  }
  s.attribute_details_chars = render_attribute_details(book).size();
  s.digest = codebook_digest(book);
  return s;
}

// ---------------------------------------------------------------------------
// dataset split / augment

struct SplitCommand {
  std::filesystem::path codebook;
  std::filesystem::path manifest;
  std::filesystem::path image_root;  // defaults to the manifest's directory
  std::filesystem::path output;      // split JSON
  std::uint64_t seed = 0;
  std::vector<NoiseKind> kinds{kAllNoiseKinds.begin(), kAllNoiseKinds.end()};
};

inline std::filesystem::path root_or_parent(const std::filesystem::path& root, const std::filesystem::path& manifest) {
  return root.empty() ? manifest.parent_path() : root;
}

inline DatasetSplit cmd_split(const SplitCommand& c) {
  auto book = load_codebook(c.codebook);
  DatasetLoadOptions load;
  load.allow_missing_images = true;
  auto data = load_dataset(c.manifest, root_or_parent(c.image_root, c.manifest), book, load);
  for (const auto& w : data.warnings) spdlog::warn("{}", w);
  SplitOptions opts;
  opts.augment_kinds = c.kinds;
  auto split = split_dataset(data.segments, book, c.seed, opts);
  spdlog::info("split: train {} (+{} augmented), validation {}, test {}, unseen {}, excluded attributes {}",
               split.train_original.size(), split.train_augmented.size(), split.validation.size(), split.test.size(),
               split.unseen.size(), split.excluded_attributes.size());
  if (!c.output.empty()) util::write_file_atomic(c.output, split_to_json(split, c.seed).dump(2) + "\n");
  return split;
}

struct AugmentCommand {
  std::filesystem::path codebook;
  std::filesystem::path manifest;
  std::filesystem::path image_root;
  std::filesystem::path split;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::vector<NoiseKind> kinds{kAllNoiseKinds.begin(), kAllNoiseKinds.end()};
  NoiseParams params;
};

/// Per-image noise seed, derived from the run seed and the augmented id.
inline std::uint64_t derived_seed(std::uint64_t seed, std::string_view id) {
  auto hex = Sha256().add_field(std::to_string(seed)).add_field(id).hex();
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

/// Writes `<output_dir>/<augmented id>.png` for every augmented training
/// image whose noise kind is selected. Returns the count per kind.
inline std::map<NoiseKind, std::size_t> cmd_augment(const AugmentCommand& c) {
  auto book = load_codebook(c.codebook);
  auto data = load_dataset(c.manifest, root_or_parent(c.image_root, c.manifest), book);
  if (!std::filesystem::exists(c.split)) fail(ErrorCode::FileNotFound, c.split.string());
  auto split_json = nlohmann::json::parse(util::read_file(c.split), nullptr, false);
  if (split_json.is_discarded()) fail(ErrorCode::SchemaViolation, c.split.string() + ": not JSON");
  auto split = split_from_json(split_json);

  const std::set<NoiseKind> wanted(c.kinds.begin(), c.kinds.end());
  std::map<NoiseKind, std::size_t> counts;
  for (auto k : c.kinds) counts[k] = 0;
  for (const auto& aug_id : split.train_augmented) {
    auto pos = aug_id.rfind("__aug_");
    if (pos == std::string::npos) fail(ErrorCode::SchemaViolation, "not an augmented id: " + aug_id);
    auto kind = parse_noise_kind(std::string_view(aug_id).substr(pos + 6));
    if (!kind) fail(ErrorCode::SchemaViolation, "unknown noise kind in " + aug_id);
    if (!wanted.count(*kind)) continue;
    const auto* img = data.find_image(aug_id.substr(0, pos));
    if (!img) fail(ErrorCode::DanglingReference, aug_id + " names an image missing from the manifest");
    auto out = augment_image(read_image(img->path), *kind, derived_seed(c.seed, aug_id), c.params);
    write_png(c.output_dir / (aug_id + ".png"), out);
    ++counts[*kind];
  }
  for (const auto& [k, n] : counts) spdlog::info("augment: {} {} images", noise_name(k), n);
  return counts;
}

// ---------------------------------------------------------------------------
// assess

/// Provenance header written as the first line of every output.
inline nlohmann::ordered_json run_manifest(const std::string& command, const RunConfig& config, const Codebook& book,
                                           const PromptTemplates& templates) {
  nlohmann::ordered_json j;
  j["tool"] = "roadcode";
  j["command"] = command;
  j["config_digest"] = config.digest();
  j["codebook_version"] = book.version;
  j["codebook_digest"] = codebook_digest(book);
  j["templates_version"] = templates.version;
  j["templates_digest"] = templates_digest(templates);
  j["model"] = config.backend.name;
  j["seed"] = config.seed;
  return j;
}

struct AssessCommand {
  RunConfig config;
  std::vector<std::string> segments;  // empty: every segment
  // Required for remote providers; the mock needs none.
  std::shared_ptr<HttpTransport> transport;
  // Replaces the retry sleeper (tests).
  std::optional<VlmClient::Sleeper> sleeper;
};

struct AssessResult {
  std::vector<ParsedPredictions> predictions;  // manifest order
  std::vector<RoadPrediction> roads;
  ClientStats stats;
  std::size_t images_planned = 0;
  std::filesystem::path predictions_path;
  std::filesystem::path segments_path;
};

inline ParsedPredictions unparseable_record(const std::string& image_id, const std::string& model,
                                            const Codebook& book) {
  ParsedPredictions p;
  p.image_id = image_id;
  p.model = model;
  for (const auto& a : book.attributes) p.invalid_attributes.push_back({a.id, InvalidReason::Unparseable});
  return p;
}

/// Classifies every image of the selected segments and aggregates each
/// segment. On a fatal error (budget, auth, transport) the completed part is
/// still written before the error propagates.
inline AssessResult cmd_assess(const AssessCommand& c) {
  const auto& cfg = c.config;
  cfg.validate();
  if (cfg.dataset_manifest.empty()) fail(ErrorCode::ConfigError, "dataset_manifest is not set");
  auto book = load_codebook(cfg.codebook_path);
  auto templates = cfg.template_dir.empty() ? default_templates() : load_templates(cfg.template_dir);
  auto data = load_dataset(cfg.dataset_manifest, root_or_parent(cfg.image_root, cfg.dataset_manifest), book);
  for (const auto& w : data.warnings) spdlog::warn("{}", w);

  std::vector<const SegmentRecord*> segments;
  if (c.segments.empty()) {
    for (const auto& s : data.segments) segments.push_back(&s);
  } else {
    for (const auto& id : c.segments) {
      const auto* s = data.find_segment(id);
      if (!s) fail(ErrorCode::ConfigError, "selected segment '" + id + "' is not in the manifest");
      segments.push_back(s);
    }
  }
  std::vector<const ImageRecord*> images;
  for (const auto* s : segments)
    for (const auto& id : s->image_ids) images.push_back(data.find_image(id));

  const auto provider = cfg.backend.resolved_provider();
  if (provider != "mock" && !c.transport)
    fail(ErrorCode::ConfigError, "backend '" + cfg.backend.name + "' needs an HTTP transport");
  auto backend = make_backend(cfg.backend, book, c.transport);
  auto budget = std::make_shared<RequestBudget>(cfg.request_budget);
  std::optional<std::filesystem::path> cache;
  if (!cfg.cache_dir.empty()) cache = cfg.cache_dir;
  VlmClient client(cfg.backend, backend, cache, budget);
  if (c.sleeper) client.set_sleeper(*c.sleeper);
  const auto system = build_system_instruction(book, cfg.prompt, templates);

  std::vector<std::optional<ParsedPredictions>> slots(images.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mutex;
  std::optional<Error> first_error;
  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= images.size()) return;
      const auto& img = *images[i];
      try {
        auto user = build_user_prompt(img, templates, cfg.prompt.country);
        try {
          slots[i] = client.classify_image(system, user, book);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ResponseUnparseable) throw;
          spdlog::warn("{}: {}", img.image_id, e.what());
          slots[i] = unparseable_record(img.image_id, backend->model(), book);
        }
      } catch (const Error& e) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = e;
        stop.store(true);
        return;
      }
    }
  };
  const int threads = std::max(1, std::min<int>(cfg.parallelism, static_cast<int>(images.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  AssessResult result;
  result.images_planned = images.size();
  result.stats = client.stats();
  std::map<std::string, const ParsedPredictions*> by_image;
  for (const auto& s : slots)
    if (s) result.predictions.push_back(*s);
  for (const auto& p : result.predictions) by_image[p.image_id] = &p;
  for (const auto* s : segments) {
    std::vector<ParsedPredictions> preds;
    for (const auto& id : s->image_ids)
      if (auto it = by_image.find(id); it != by_image.end()) preds.push_back(*it->second);
    if (preds.size() == s->image_ids.size()) result.roads.push_back(aggregate_segment(preds, *s, book));
  }

  auto header = run_manifest("assess", cfg, book, templates);
  std::filesystem::create_directories(cfg.output_dir);
  result.predictions_path = cfg.output_dir / "predictions.jsonl";
  result.segments_path = cfg.output_dir / "segments.jsonl";
  util::write_file_atomic(result.predictions_path, predictions_to_jsonl(result.predictions, header));
  std::string roads = nlohmann::ordered_json{{"run_manifest", header}}.dump() + "\n";
  for (const auto& r : result.roads) roads += to_json(r).dump() + "\n";
  util::write_file_atomic(result.segments_path, roads);

  spdlog::info("assess: {}/{} images, {} segments, {} requests ({} retries), {} cache hits, budget {}/{}",
               result.predictions.size(), images.size(), result.roads.size(), result.stats.requests,
               result.stats.retries, result.stats.cache_hits, budget->used(), budget->limit());
  if (first_error) throw *first_error;
  return result;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateCommand {
  std::filesystem::path codebook;
  std::filesystem::path manifest;
  std::filesystem::path predictions;  // image-level JSONL
  std::filesystem::path split;        // optional: test split plus unseen report
  std::filesystem::path output_dir;
  std::string model;  // defaults to the model recorded in the predictions
  EvaluationOptions options;
};

struct EvaluateResult {
  MetricsReport report;
  std::optional<MetricsReport> unseen;
  std::string model;
};

/// Aggregates image-level predictions to the segments they cover. A segment
/// with only some images predicted is aggregated over those images.
inline std::vector<RoadPrediction> aggregate_predictions(const std::vector<ParsedPredictions>& records,
                                                         const Dataset& data, const Codebook& book) {
  std::map<std::string, std::vector<ParsedPredictions>> by_segment;
  std::vector<std::string> unknown;
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.image_id).second)
      fail(ErrorCode::SchemaViolation, "image " + r.image_id + " appears twice in the predictions");
    const auto* img = data.find_image(r.image_id);
    if (!img) {
      unknown.push_back(r.image_id);
      continue;
    }
    by_segment[img->segment_id].push_back(r);
  }
  if (!unknown.empty())
    fail(ErrorCode::SegmentMismatch, "predictions for images not in the manifest: " + util::join(unknown, ", "));
  std::vector<RoadPrediction> roads;
  for (const auto& seg : data.segments) {
    auto it = by_segment.find(seg.segment_id);
    if (it == by_segment.end()) continue;
    SegmentRecord covered = seg;
    covered.image_ids.clear();
    for (const auto& id : seg.image_ids)
      for (const auto& p : it->second)
        if (p.image_id == id) covered.image_ids.push_back(id);
    roads.push_back(aggregate_segment(it->second, covered, book));
  }
  return roads;
}

namespace detail {

inline std::vector<SegmentRecord> segments_of(const Dataset& data, const std::vector<std::string>& image_ids) {
  std::set<std::string> wanted;
  for (const auto& id : image_ids) {
    const auto* img = data.find_image(id);
    if (!img) fail(ErrorCode::SegmentMismatch, "split names image '" + id + "' missing from the manifest");
    wanted.insert(img->segment_id);
  }
  std::vector<SegmentRecord> out;
  for (const auto& s : data.segments)
    if (wanted.count(s.segment_id)) out.push_back(s);
  return out;
}

inline std::vector<RoadPrediction> restrict_to(const std::vector<RoadPrediction>& roads,
                                               const std::vector<SegmentRecord>& truths) {
  std::set<std::string> ids;
  for (const auto& t : truths) ids.insert(t.segment_id);
  std::vector<RoadPrediction> out;
  for (const auto& r : roads)
    if (ids.count(r.segment_id)) out.push_back(r);
  return out;
}

inline void write_report_files(const std::filesystem::path& dir, const std::string& prefix, const std::string& model,
                               const MetricsReport& r, const Codebook& book) {
  util::write_file_atomic(dir / (prefix + "table_groups.csv"), group_table_csv(model, r));
  util::write_file_atomic(dir / (prefix + "table_attributes.csv"), attribute_table_csv(model, r, book));
  std::filesystem::create_directories(dir / (prefix + "confusion"));
  for (const auto& m : r.matrices)
    util::write_file_atomic(dir / (prefix + "confusion") / (m.attribute_id + ".csv"), confusion_csv(m));
}

}  // namespace detail

inline EvaluateResult cmd_evaluate(const EvaluateCommand& c) {
  auto book = load_codebook(c.codebook);
  DatasetLoadOptions load;
  load.allow_missing_images = true;
  auto data = load_dataset(c.manifest, c.manifest.parent_path(), book, load);
  if (!std::filesystem::exists(c.predictions)) fail(ErrorCode::FileNotFound, c.predictions.string());
  auto file = read_predictions_jsonl(c.predictions);
  for (const auto& r : file.records)
    for (const auto& [attr, code] : r.predictions) {
      const auto* a = book.find(attr);
      if (!a) fail(ErrorCode::SchemaViolation, r.image_id + ": unknown attribute '" + attr + "'");
      if (!a->has_code(code)) fail(ErrorCode::SchemaViolation, r.image_id + ": '" + attr + "' has no class '" + code + "'");
    }
  for (const auto& a : file.excluded_attributes)
    if (!book.find(a)) fail(ErrorCode::SchemaViolation, "header excludes unknown attribute '" + a + "'");

  EvaluateResult result;
  result.model = c.model;
  if (result.model.empty() && !file.records.empty()) result.model = file.records.front().model;
  if (result.model.empty() && file.header) result.model = file.header->value("model", std::string());

  auto options = c.options;
  options.excluded_attributes.insert(options.excluded_attributes.end(), file.excluded_attributes.begin(),
                                     file.excluded_attributes.end());
  auto roads = aggregate_predictions(file.records, data, book);

  std::vector<SegmentRecord> truths = data.segments;
  std::vector<SegmentRecord> unseen_truths;
  if (!c.split.empty()) {
    if (!std::filesystem::exists(c.split)) fail(ErrorCode::FileNotFound, c.split.string());
    auto j = nlohmann::json::parse(util::read_file(c.split), nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::SchemaViolation, c.split.string() + ": not JSON");
    auto split = split_from_json(j);
    truths = detail::segments_of(data, split.test);
    unseen_truths = detail::segments_of(data, split.unseen);
  }
  result.report = build_report(c.split.empty() ? roads : detail::restrict_to(roads, truths), truths, book, options);
  if (!unseen_truths.empty())
    result.unseen = build_report(detail::restrict_to(roads, unseen_truths), unseen_truths, book, options);

  if (!c.output_dir.empty()) {
    std::filesystem::create_directories(c.output_dir);
    nlohmann::ordered_json j;
    nlohmann::ordered_json provenance;
    provenance["command"] = "evaluate";
    provenance["codebook_digest"] = codebook_digest(book);
    provenance["predictions_header"] = file.header ? nlohmann::ordered_json(*file.header) : nlohmann::ordered_json();
    provenance["excluded_attributes"] = options.excluded_attributes;
    provenance["score_missing_as_wrong"] = options.score_missing_as_wrong;
    j["run_manifest"] = std::move(provenance);
    j["model"] = result.model;
    j["report"] = to_json(result.report, book);
    if (result.unseen) j["unseen"] = to_json(*result.unseen, book);
    util::write_file_atomic(c.output_dir / "report.json", j.dump(2) + "\n");
    util::write_file_atomic(c.output_dir / "table_overall.csv",
                            overall_table_csv(result.model, result.report, result.unseen));
    detail::write_report_files(c.output_dir, "", result.model, result.report, book);
    if (result.unseen) detail::write_report_files(c.output_dir, "unseen_", result.model, *result.unseen, book);
  }
  spdlog::info("evaluate: {} segments, overall accuracy {:.4f}, macro F1 {:.4f}", result.report.segments,
               result.report.overall.accuracy, result.report.overall.f1);
  return result;
}

// ---------------------------------------------------------------------------
// report star-matrix

struct StarMatrixCommand {
  std::filesystem::path codebook;
  std::filesystem::path manifest;
  std::filesystem::path predictions;  // image-level JSONL
  std::filesystem::path scoring_config;
  // CSV segment_id,stars. Without it the truth is the rating of the
  // ground-truth attributes under the same scoring configuration.
  std::filesystem::path truth_stars;
  std::optional<double> default_speed;  // km/h, for segments without one
  std::filesystem::path output_dir;
};

struct StarMatrixResult {
  std::vector<std::string> segment_ids;
  std::vector<StarRating> predicted;
  std::vector<int> truth;
  StarConfusion confusion;
};

inline StarMatrixResult cmd_star_matrix(const StarMatrixCommand& c) {
  auto book = load_codebook(c.codebook);
  DatasetLoadOptions load;
  load.allow_missing_images = true;
  auto data = load_dataset(c.manifest, c.manifest.parent_path(), book, load);
  auto model = load_scoring_config(c.scoring_config, book);
  if (!std::filesystem::exists(c.predictions)) fail(ErrorCode::FileNotFound, c.predictions.string());
  auto roads = aggregate_predictions(read_predictions_jsonl(c.predictions).records, data, book);

  std::map<std::string, int> given;
  if (!c.truth_stars.empty()) {
    if (!std::filesystem::exists(c.truth_stars)) fail(ErrorCode::FileNotFound, c.truth_stars.string());
    auto rows = csv::parse(util::read_file(c.truth_stars), c.truth_stars.string());
    if (rows.empty() || rows.front().fields.size() < 2 || util::trim(rows.front().fields[0]) != "segment_id" ||
        util::trim(rows.front().fields[1]) != "stars")
      fail(ErrorCode::SchemaViolation, c.truth_stars.string() + ": expected header segment_id,stars");
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& f = rows[i].fields;
      auto stars = f.size() >= 2 ? roadcode::detail::parse_int(f[1]) : std::nullopt;
      if (!stars || *stars < 1 || *stars > 5)
        fail(ErrorCode::SchemaViolation, c.truth_stars.string() + ":" + std::to_string(rows[i].line) + ": bad stars");
      given[util::trim(f[0])] = *stars;
    }
  }

  StarMatrixResult result;
  std::string table = csv::format_row({"segment_id", "predicted_stars", "predicted_score", "truth_stars"});
  for (const auto& road : roads) {
    const auto* seg = data.find_segment(road.segment_id);
    auto speed = seg->operating_speed ? seg->operating_speed : c.default_speed;
    if (!speed) fail(ErrorCode::ConfigError, "segment " + road.segment_id + " has no operating_speed");
    StarRatingInput in{road, seg->aadt.value_or(0.0), *speed, model.road_user};
    auto pred = estimate_star_rating(in, model, book);
    int truth = 0;
    if (!c.truth_stars.empty()) {
      auto it = given.find(road.segment_id);
      if (it == given.end()) fail(ErrorCode::SegmentMismatch, "no truth star rating for " + road.segment_id);
      truth = it->second;
    } else {
      RoadPrediction truth_road;
      truth_road.segment_id = road.segment_id;
      truth_road.aggregated = seg->ground_truth;
      for (const auto& a : book.attributes)
        if (!seg->ground_truth.count(a.id)) truth_road.unresolved.push_back(a.id);
      truth = estimate_star_rating({truth_road, in.aadt, in.operating_speed, in.road_user}, model, book).stars;
    }
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", pred.score);
    table += csv::format_row({road.segment_id, std::to_string(pred.stars), score, std::to_string(truth)});
    result.segment_ids.push_back(road.segment_id);
    result.predicted.push_back(std::move(pred));
    result.truth.push_back(truth);
  }
  result.confusion = star_rating_confusion(result.predicted, result.truth);
  if (!c.output_dir.empty()) {
    std::filesystem::create_directories(c.output_dir);
    util::write_file_atomic(c.output_dir / "star_matrix.csv", star_confusion_csv(result.confusion));
    util::write_file_atomic(c.output_dir / "star_high_risk.csv", star_high_risk_csv(result.confusion));
    util::write_file_atomic(c.output_dir / "star_ratings.csv", table);
  }
  return result;
}

// ---------------------------------------------------------------------------
// ingest

struct IngestCommand {
  std::filesystem::path codebook;
  std::filesystem::path manifest;  // query point: each segment's first image
  std::shared_ptr<HttpTransport> transport;
  std::string base_url = "https://graph.mapillary.com";
  std::string token_env = "MAPILLARY_TOKEN";
  bool require_token = true;
  double buffer_m = 50.0;
  int max_age_days = 365;
  std::optional<Timestamp> reference_time;    // default: each segment's capture time
  std::size_t max_images_per_segment = 4;
  bool download = true;
  double fov_deg = 90.0;
  double stereo_offset_deg = 0.0;
  std::optional<double> heading_deg;  // default: the candidate's compass angle
  std::filesystem::path output_dir;
};

struct IngestResult {
  std::map<std::string, std::vector<CandidateImage>> candidates;  // per segment
  std::vector<std::filesystem::path> written;
};

inline std::string heading_token(double deg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03d", static_cast<int>(std::lround(std::fmod(std::fmod(deg, 360.0) + 360.0, 360.0))) % 360);
  return buf;
}

inline IngestResult cmd_ingest(const IngestCommand& c) {
  if (!c.transport) fail(ErrorCode::ConfigError, "ingest needs an HTTP transport");
  auto book = load_codebook(c.codebook);
  DatasetLoadOptions load;
  load.allow_missing_images = true;
  auto data = load_dataset(c.manifest, c.manifest.parent_path(), book, load);
  MapillaryClient client(c.transport, c.base_url, c.require_token);

  IngestResult result;
  std::string table = csv::format_row(
      {"segment_id", "provider_id", "latitude", "longitude", "captured_at", "is_pano", "distance_m", "file"});
  for (const auto& seg : data.segments) {
    const auto& first = *data.find_image(seg.image_ids.front());
    ImageryQuery q;
    q.latitude = first.latitude;
    q.longitude = first.longitude;
    q.buffer_m = c.buffer_m;
    q.max_age_days = c.max_age_days;
    q.api_token_env = c.token_env;
    if (c.reference_time) q.reference_time = *c.reference_time;
    else if (first.captured_at) q.reference_time = *first.captured_at;
    else fail(ErrorCode::ConfigError, "segment " + seg.segment_id + " has no capture time; pass a reference date");

    auto found = client.query_images(q);
    spdlog::info("ingest: segment {}: {} candidates within {} m and {} days", seg.segment_id, found.size(), c.buffer_m,
                 c.max_age_days);
    if (found.size() > c.max_images_per_segment) found.resize(c.max_images_per_segment);
    for (const auto& cand : found) {
      std::vector<std::string> files;
      if (c.download && !c.output_dir.empty()) {
        auto bytes = client.download(cand);
        if (!bytes) {
          spdlog::warn("ingest: {} could not be downloaded", cand.provider_id);
        } else {
          auto image = decode_image(*bytes, cand.provider_id);
          const double heading = c.heading_deg.value_or(cand.compass_angle);
          std::vector<ProjectedView> views;
          if (cand.is_panorama) views = binocular_views(image, heading, c.fov_deg, c.stereo_offset_deg);
          else views.push_back({heading, std::move(image)});
          for (const auto& v : views) {
            auto path = c.output_dir / seg.segment_id / (cand.provider_id + "_" + heading_token(v.heading_deg) + ".png");
            write_png(path, v.image);
            result.written.push_back(path);
            files.push_back(path.lexically_relative(c.output_dir).generic_string());
          }
        }
      }
      char dist[32];
      std::snprintf(dist, sizeof dist, "%.2f", cand.distance_m);
      table += csv::format_row({seg.segment_id, cand.provider_id, format_coordinate(cand.latitude),
                                format_coordinate(cand.longitude), format_timestamp(cand.captured_at),
                                cand.is_panorama ? "true" : "false", dist, util::join(files, ";")});
    }
    result.candidates[seg.segment_id] = std::move(found);
  }
  if (!c.output_dir.empty()) {
    std::filesystem::create_directories(c.output_dir);
    util::write_file_atomic(c.output_dir / "candidates.csv", table);
  }
  return result;
}

}  // namespace roadcode::cli
