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

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "builders.hpp"
#include "roadcode/assessment.hpp"
#include "roadcode/evaluation.hpp"
#include "roadcode/vlm_client.hpp"

namespace roadcode::testing {

struct BruteQuartet {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

/// Metrics straight from (truth, predicted) pairs, without a matrix.
inline BruteQuartet brute_force_metrics(const std::vector<std::pair<int, int>>& samples) {
  BruteQuartet q;
  std::set<int> classes;
  long correct = 0;
  for (auto [t, p] : samples) {
    classes.insert(t);
    classes.insert(p);
    correct += t == p;
  }
  q.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  for (int c : classes) {
    long tp = 0, predicted = 0, actual = 0;
    for (auto [t, p] : samples) {
      tp += t == c && p == c;
      predicted += p == c;
      actual += t == c;
    }
    const double prec = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double rec = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    q.precision += prec;
    q.recall += rec;
    q.f1 += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  }
  const double n = static_cast<double>(classes.size());
  q.precision /= n;
  q.recall /= n;
  q.f1 /= n;
  return q;
}

/// 1..50 samples over up to 5 classes, and the matrix over all of them
/// (including classes that never occur).
inline std::pair<std::vector<std::pair<int, int>>, ConfusionMatrix> random_confusion(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> k_dist(1, 5), n_dist(1, 50);
  const int k = k_dist(rng), n = n_dist(rng);
  std::vector<std::string> labels;
  for (int i = 0; i < k; ++i) labels.push_back("L" + std::to_string(i));
  ConfusionMatrix m("attr", labels);
  std::uniform_int_distribution<int> cls(0, k - 1);
  std::bernoulli_distribution agree(0.5);
  std::vector<std::pair<int, int>> samples;
  for (int i = 0; i < n; ++i) {
    const int t = cls(rng);
    const int p = agree(rng) ? t : cls(rng);
    samples.emplace_back(t, p);
    m.add(labels[static_cast<std::size_t>(t)], labels[static_cast<std::size_t>(p)]);
  }
  return {samples, m};
}

struct RandomSegment {
  Codebook codebook;
  SegmentRecord segment;
  std::vector<ParsedPredictions> images;
};

/// 1..4 images, every attribute predicted or missing at random.
inline RandomSegment random_segment(std::mt19937_64& rng, int max_classes = 10) {
  RandomSegment r;
  r.codebook = random_codebook(rng, 3, max_classes);
  std::uniform_int_distribution<int> n_images(1, 4);
  const int n = n_images(rng);
  r.segment.segment_id = "seg";
  std::bernoulli_distribution missing(0.15);
  for (int i = 0; i < n; ++i) {
    ParsedPredictions p;
    p.image_id = "img" + std::to_string(i);
    r.segment.image_ids.push_back(p.image_id);
    for (const auto& a : r.codebook.attributes) {
      if (missing(rng)) {
        p.invalid_attributes.push_back({a.id, InvalidReason::Missing});
        continue;
      }
      p.predictions[a.id] = a.classes[rng() % a.classes.size()].code;
    }
    r.images.push_back(std::move(p));
  }
  return r;
}

/// Max-rank code per attribute over every image, by exhaustive scan;
/// attributes nobody predicted are absent.
inline std::map<std::string, std::string> brute_force_aggregate(const RandomSegment& r) {
  std::map<std::string, std::string> out;
  for (const auto& a : r.codebook.attributes) {
    int best = -1;
    for (const auto& img : r.images)
      for (const auto& c : a.classes) {
        auto it = img.predictions.find(a.id);
        if (it != img.predictions.end() && it->second == c.code && c.risk_rank > best) {
          best = c.risk_rank;
          out[a.id] = c.code;
        }
      }
  }
  return out;
}

/// Empty when `road` dominates every image prediction and matches the
/// brute-force maximum.
inline std::string check_aggregation(const RandomSegment& r, const RoadPrediction& road) {
  for (const auto& a : r.codebook.attributes) {
    auto it = road.aggregated.find(a.id);
    for (const auto& img : r.images) {
      auto p = img.predictions.find(a.id);
      if (p == img.predictions.end()) continue;
      if (it == road.aggregated.end()) return a.id + " predicted but not aggregated";
      if (a.risk_rank(it->second) < a.risk_rank(p->second)) return a.id + " aggregated below an image prediction";
    }
  }
  if (road.aggregated != brute_force_aggregate(r)) return "aggregate differs from brute-force max";
  for (const auto& [attr, img] : road.contributing) {
    auto it = std::find_if(r.images.begin(), r.images.end(), [&](const auto& p) { return p.image_id == img; });
    if (it == r.images.end() || it->predictions.at(attr) != road.aggregated.at(attr))
      return attr + " witness does not carry the aggregated code";
  }
  if (road.n_images != static_cast<int>(r.images.size())) return "n_images wrong";
  return {};
}

/// Scoring model over `book` with random non-negative weights and
/// non-decreasing risk factors.
inline ScoringConfig random_scoring(std::mt19937_64& rng, const Codebook& book) {
  ScoringConfig cfg;
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (const auto& a : book.attributes) {
    cfg.weights[a.id] = u(rng);
    std::vector<const AttributeClass*> by_rank;
    for (const auto& c : a.classes) by_rank.push_back(&c);
    std::sort(by_rank.begin(), by_rank.end(), [](auto* x, auto* y) { return x->risk_rank < y->risk_rank; });
    double f = u(rng);
    for (const auto* c : by_rank) {
      cfg.risk_factors[a.id][c->code] = f;
      f += u(rng);
    }
  }
  cfg.speed_bands = {{50, 0.6}, {80, 1.0}, {200, 1.5}};
  double t = 1 + u(rng) * 5;
  for (auto& v : cfg.star_thresholds) {
    v = t;
    t += 1 + u(rng) * 5;
  }
  cfg.digest = "random";
  return cfg;
}

}  // namespace roadcode::testing
