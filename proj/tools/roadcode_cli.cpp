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

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <iostream>

#include "roadcode/commands.hpp"
#include "roadcode/httplib_transport.hpp"

namespace {

using namespace roadcode;

std::vector<NoiseKind> parse_kinds(const std::string& list) {
  std::vector<NoiseKind> kinds;
  for (const auto& part : util::split(list, ',')) {
    auto k = parse_noise_kind(util::trim(part));
    if (!k) fail(ErrorCode::ConfigError, "unknown noise kind '" + util::trim(part) + "'");
    kinds.push_back(*k);
  }
  if (kinds.empty()) fail(ErrorCode::ConfigError, "--kinds is empty");
  return kinds;
}

// Flags left unset keep the config value.
struct Overrides {
  std::string codebook, manifest, image_root, scoring, cache_dir, output_dir, backend, endpoint, template_dir,
      country, local_context;
  std::int64_t request_budget = 0;
  std::int64_t seed = -1;
  int parallelism = 0;
  double rate_limit = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--codebook", codebook, "Codebook JSON");
    cmd->add_option("--manifest", manifest, "Dataset manifest CSV");
    cmd->add_option("--image-root", image_root, "Directory image paths are relative to");
    cmd->add_option("--scoring-config", scoring, "Star-rating scoring configuration");
    cmd->add_option("--cache-dir", cache_dir, "Response cache directory");
    cmd->add_option("--output-dir", output_dir, "Output directory");
    cmd->add_option("--backend", backend, "Backend model name");
    cmd->add_option("--endpoint", endpoint, "Backend endpoint (fixture file for the mock)");
    cmd->add_option("--template-dir", template_dir, "Prompt template directory");
    cmd->add_option("--country", country, "Country named in the prompt");
    cmd->add_option("--local-context", local_context, "Local context text");
    cmd->add_option("--request-budget", request_budget, "Maximum backend requests");
    cmd->add_option("--seed", seed, "Run seed");
    cmd->add_option("--parallelism", parallelism, "Worker threads");
    cmd->add_option("--rate-limit", rate_limit, "Requests per minute");
  }

  void apply(RunConfig& c) const {
    if (!codebook.empty()) c.codebook_path = codebook;
    if (!manifest.empty()) c.dataset_manifest = manifest;
    if (!image_root.empty()) c.image_root = image_root;
    if (!scoring.empty()) c.scoring_config_path = scoring;
    if (!cache_dir.empty()) c.cache_dir = cache_dir;
    if (!output_dir.empty()) c.output_dir = output_dir;
    if (!backend.empty()) c.backend.name = backend;
    if (!endpoint.empty()) c.backend.endpoint = endpoint;
    if (!template_dir.empty()) c.template_dir = template_dir;
    if (!country.empty()) c.prompt.country = country;
    if (!local_context.empty()) c.prompt.local_context = local_context;
    if (request_budget != 0) c.request_budget = request_budget;
    if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
    if (parallelism != 0) c.parallelism = parallelism;
    if (rate_limit != 0) c.backend.rate_limit = rate_limit;
  }
};

RunConfig resolve(const std::string& config_path, const Overrides& o) {
  RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  o.apply(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"roadcode: road-safety attribute coding from street-level images"};
  app.require_subcommand(1);
  std::string config_path;
  bool verbose = false;
  app.add_option("-c,--config", config_path, "Run configuration (TOML subset)");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  Overrides o;

  auto* codebook_cmd = app.add_subcommand("codebook", "Codebook tools");
  codebook_cmd->require_subcommand(1);
  auto* validate = codebook_cmd->add_subcommand("validate", "Validate a codebook file");
  std::string codebook_file;
  validate->add_option("path", codebook_file, "Codebook JSON")->required();

  auto* dataset_cmd = app.add_subcommand("dataset", "Dataset tools");
  dataset_cmd->require_subcommand(1);
  auto* split = dataset_cmd->add_subcommand("split", "Split a manifest into train/validation/test/unseen");
  std::string split_out = "split.json", kinds = "gaussian,saltpepper,speckle,periodic,quantisation";
  split->add_option("-o,--output", split_out, "Split JSON to write");
  split->add_option("--kinds", kinds, "Noise kinds planned for augmentation");
  o.add_to(split);
  auto* augment = dataset_cmd->add_subcommand("augment", "Write noise-augmented training images");
  std::string split_in = "split.json", augment_kinds = kinds;
  augment->add_option("--split", split_in, "Split JSON");
  augment->add_option("--kinds", augment_kinds, "Noise kinds to apply");
  o.add_to(augment);

  auto* assess = app.add_subcommand("assess", "Classify images and aggregate to segments");
  std::vector<std::string> segments;
  assess->add_option("--segment", segments, "Restrict to these segments (repeatable)");
  o.add_to(assess);

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  std::string predictions, split_file, model;
  bool skip_missing = false, exclude_single = false;
  evaluate->add_option("--predictions", predictions, "Image-level predictions JSONL")->required();
  evaluate->add_option("--split", split_file, "Split JSON: evaluate its test set, report its unseen set");
  evaluate->add_option("--model", model, "Model name for the report tables");
  evaluate->add_flag("--skip-missing", skip_missing, "Skip segments without a valid prediction");
  evaluate->add_flag("--exclude-single-class", exclude_single, "Leave out single-class attributes");
  o.add_to(evaluate);

  auto* ingest = app.add_subcommand("ingest", "Fetch nearby street-level imagery");
  cli::IngestCommand ic;
  std::string reference_date, base_url = ic.base_url, replay;
  bool metadata_only = false;
  double heading = std::nan("");
  ingest->add_option("--buffer-m", ic.buffer_m, "Search radius in metres");
  ingest->add_option("--max-age-days", ic.max_age_days, "Recency window in days");
  ingest->add_option("--reference-date", reference_date, "Date the recency window is centred on");
  ingest->add_option("--token-env", ic.token_env, "Environment variable holding the API token");
  ingest->add_option("--max-images", ic.max_images_per_segment, "Images kept per segment");
  ingest->add_option("--fov", ic.fov_deg, "Horizontal field of view for panoramas");
  ingest->add_option("--stereo-offset", ic.stereo_offset_deg, "Binocular half-separation in degrees");
  ingest->add_option("--heading", heading, "View heading (default: compass angle)");
  ingest->add_option("--base-url", base_url, "Provider API base URL");
  ingest->add_option("--replay", replay, "Serve requests from a recorded JSONL fixture");
  ingest->add_flag("--metadata-only", metadata_only, "List candidates without downloading");
  o.add_to(ingest);

  auto* report = app.add_subcommand("report", "Reports");
  report->require_subcommand(1);
  auto* star = report->add_subcommand("star-matrix", "Star-rating confusion matrix");
  std::string truth_stars;
  double default_speed = 0;
  star->add_option("--predictions", predictions, "Image-level predictions JSONL")->required();
  star->add_option("--truth-stars", truth_stars, "CSV segment_id,stars");
  star->add_option("--default-speed", default_speed, "Operating speed for segments without one (km/h)");
  o.add_to(star);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (validate->parsed()) {
      auto s = cli::cmd_codebook_validate(codebook_file);
      std::printf("codebook %s: %zu attributes, %zu single-class, attribute details %zu characters, digest %s\n",
                  s.version.c_str(), s.attributes, s.single_class, s.attribute_details_chars, s.digest.c_str());
      for (const auto& [g, n] : s.per_group) std::printf("  %s: %zu\n", std::string(group_display_name(g)).c_str(), n);
      return 0;
    }
    const auto cfg = resolve(config_path, o);
    if (split->parsed()) {
      cli::cmd_split({cfg.codebook_path, cfg.dataset_manifest, cfg.image_root, split_out, cfg.seed, parse_kinds(kinds)});
      return 0;
    }
    if (augment->parsed()) {
      cli::AugmentCommand a;
      a.codebook = cfg.codebook_path;
      a.manifest = cfg.dataset_manifest;
      a.image_root = cfg.image_root;
      a.split = split_in;
      a.output_dir = cfg.output_dir;
      a.seed = cfg.seed;
      a.kinds = parse_kinds(augment_kinds);
      cli::cmd_augment(a);
      return 0;
    }
    if (assess->parsed()) {
      cli::AssessCommand a;
      a.config = cfg;
      a.segments = segments;
      a.transport = std::make_shared<HttplibTransport>();
      auto r = cli::cmd_assess(a);
      std::printf("%zu predictions -> %s\n%zu segments -> %s\n", r.predictions.size(),
                  r.predictions_path.string().c_str(), r.roads.size(), r.segments_path.string().c_str());
      return 0;
    }
    if (evaluate->parsed()) {
      cli::EvaluateCommand e;
      e.codebook = cfg.codebook_path;
      e.manifest = cfg.dataset_manifest;
      e.predictions = predictions;
      e.split = split_file;
      e.output_dir = cfg.output_dir;
      e.model = model;
      e.options.score_missing_as_wrong = !skip_missing;
      e.options.exclude_single_class = exclude_single;
      auto r = cli::cmd_evaluate(e);
      std::fputs(overall_table_csv(r.model, r.report, r.unseen).c_str(), stdout);
      return 0;
    }
    if (ingest->parsed()) {
      ic.codebook = cfg.codebook_path;
      ic.manifest = cfg.dataset_manifest;
      ic.output_dir = cfg.output_dir;
      ic.base_url = base_url;
      ic.download = !metadata_only;
      if (!std::isnan(heading)) ic.heading_deg = heading;
      if (!reference_date.empty()) {
        ic.reference_time = parse_timestamp(reference_date);
        if (!ic.reference_time) fail(ErrorCode::ConfigError, "--reference-date: cannot parse '" + reference_date + "'");
      }
      if (replay.empty()) {
        ic.transport = std::make_shared<HttplibTransport>();
      } else {
        ic.transport = std::make_shared<ReplayTransport>(replay);
        ic.require_token = false;
      }
      auto r = cli::cmd_ingest(ic);
      std::size_t total = 0;
      for (const auto& [seg, c] : r.candidates) total += c.size();
      std::printf("%zu candidates over %zu segments, %zu images written\n", total, r.candidates.size(),
                  r.written.size());
      return 0;
    }
    if (star->parsed()) {
      cli::StarMatrixCommand s;
      s.codebook = cfg.codebook_path;
      s.manifest = cfg.dataset_manifest;
      s.predictions = predictions;
      s.scoring_config = cfg.scoring_config_path;
      s.truth_stars = truth_stars;
      if (default_speed > 0) s.default_speed = default_speed;
      s.output_dir = cfg.output_dir;
      auto r = cli::cmd_star_matrix(s);
      std::fputs(star_confusion_csv(r.confusion).c_str(), stdout);
      std::fputs(star_high_risk_csv(r.confusion).c_str(), stdout);
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cli::kExitOther;
  }
  return 0;
}
