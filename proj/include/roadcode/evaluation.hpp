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
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadcode/assessment.hpp"
#include "roadcode/codebook.hpp"
#include "roadcode/csv.hpp"
#include "roadcode/dataset.hpp"
#include "roadcode/error.hpp"

namespace roadcode {

/// Column used when a segment has no valid prediction for the attribute.
inline constexpr std::string_view kNoPrediction = "<none>";

struct ConfusionMatrix {
  std::string attribute_id;
  std::vector<std::string> labels;
  std::vector<std::vector<long>> counts;  // [truth][predicted]

  ConfusionMatrix() = default;
  ConfusionMatrix(std::string attr, std::vector<std::string> class_labels)
      : attribute_id(std::move(attr)), labels(std::move(class_labels)),
        counts(labels.size(), std::vector<long>(labels.size(), 0)) {}

  std::size_t index_of(std::string_view label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) fail(ErrorCode::UnknownClassCode, attribute_id + ": label '" + std::string(label) + "'");
    return static_cast<std::size_t>(it - labels.begin());
  }

  void add(std::string_view truth, std::string_view predicted) { ++counts[index_of(truth)][index_of(predicted)]; }

  long total() const {
    long n = 0;
    for (const auto& r : counts)
      for (auto c : r) n += c;
    return n;
  }
};

struct Quartet {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Accuracy = trace / total. Precision, recall and F1 are computed per class
/// and averaged with equal class weight over classes that occur in the truth
/// or the predictions; a zero denominator makes that class's term 0. The
/// no-prediction column counts against recall but is not itself a class.
inline Quartet attribute_metrics(const ConfusionMatrix& m) {
  const long total = m.total();
  if (total == 0) fail(ErrorCode::EmptyMatrix, "confusion matrix for '" + m.attribute_id + "' has no counts");
  const std::size_t k = m.labels.size();
  long trace = 0;
  for (std::size_t i = 0; i < k; ++i) trace += m.counts[i][i];

  Quartet q;
  q.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  std::size_t classes = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (m.labels[c] == kNoPrediction) continue;
    long row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += m.counts[c][j];
      col += m.counts[j][c];
    }
    if (row == 0 && col == 0) continue;
    const long tp = m.counts[c][c];
    const double p = col == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(col);
    const double r = row == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row);
    const double f = (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    q.precision += p;
    q.recall += r;
    q.f1 += f;
    ++classes;
  }
  if (classes > 0) {
    q.precision /= static_cast<double>(classes);
    q.recall /= static_cast<double>(classes);
    q.f1 /= static_cast<double>(classes);
  }
  return q;
}

inline Quartet mean_of(const std::vector<Quartet>& qs) {
  Quartet m;
  if (qs.empty()) return m;
  for (const auto& q : qs) {
    m.accuracy += q.accuracy;
    m.precision += q.precision;
    m.recall += q.recall;
    m.f1 += q.f1;
  }
  const double n = static_cast<double>(qs.size());
  m.accuracy /= n;
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

struct EvaluationOptions {
  // Score a segment with no valid prediction as wrong (otherwise skip it).
  bool score_missing_as_wrong = true;
  // Leave out attributes flagged single_class in the codebook.
  bool exclude_single_class = false;
  // Attributes the producer never predicted.
  std::vector<std::string> excluded_attributes;
};

struct MetricsReport {
  std::map<std::string, Quartet> per_attribute;
  std::map<AttributeGroup, Quartet> per_group;  // groups with at least one evaluated attribute
  Quartet overall;
  std::map<std::string, double> coverage;
  std::vector<ConfusionMatrix> matrices;  // codebook order
  std::size_t segments = 0;
};

/// Pairs predictions with truths by segment id (both sides must match
/// exactly), scores every attribute present in the truth, then averages
/// attributes into groups and groups into the overall quartet.
inline MetricsReport build_report(const std::vector<RoadPrediction>& predictions,
                                  const std::vector<SegmentRecord>& truths, const Codebook& codebook,
                                  const EvaluationOptions& options = {}) {
  std::map<std::string, const RoadPrediction*> by_segment;
  for (const auto& p : predictions)
    if (!by_segment.emplace(p.segment_id, &p).second)
      fail(ErrorCode::SegmentMismatch, "segment " + p.segment_id + " predicted twice");
  std::map<std::string, const SegmentRecord*> truth_by_segment;
  for (const auto& t : truths)
    if (!truth_by_segment.emplace(t.segment_id, &t).second)
      fail(ErrorCode::SegmentMismatch, "segment " + t.segment_id + " has two truth records");

  std::vector<std::string> missing_truth, missing_prediction;
  for (const auto& [id, _] : by_segment)
    if (!truth_by_segment.count(id)) missing_truth.push_back(id);
  for (const auto& [id, _] : truth_by_segment)
    if (!by_segment.count(id)) missing_prediction.push_back(id);
  if (!missing_truth.empty() || !missing_prediction.empty()) {
    std::string msg;
    if (!missing_truth.empty()) msg += "no ground truth for: " + util::join(missing_truth, ", ");
    if (!missing_prediction.empty())
      msg += std::string(msg.empty() ? "" : "; ") + "no prediction for: " + util::join(missing_prediction, ", ");
    fail(ErrorCode::SegmentMismatch, msg);
  }

  const std::set<std::string> excluded(options.excluded_attributes.begin(), options.excluded_attributes.end());
  MetricsReport report;
  report.segments = truth_by_segment.size();
  std::map<AttributeGroup, std::vector<Quartet>> grouped;

  for (const auto& attr : codebook.attributes) {
    if (excluded.count(attr.id) || (options.exclude_single_class && attr.single_class)) continue;
    std::vector<std::string> labels;
    for (const auto& c : attr.classes) labels.push_back(c.code);
    labels.emplace_back(kNoPrediction);
    ConfusionMatrix m(attr.id, labels);
    std::size_t with_truth = 0, covered = 0;
    for (const auto& [id, truth] : truth_by_segment) {
      auto t = truth->ground_truth.find(attr.id);
      if (t == truth->ground_truth.end()) continue;
      ++with_truth;
      const auto& agg = by_segment.at(id)->aggregated;
      auto p = agg.find(attr.id);
      if (p != agg.end() && attr.has_code(p->second)) {
        ++covered;
        m.add(t->second, p->second);
      } else if (options.score_missing_as_wrong) {
        m.add(t->second, kNoPrediction);
      }
    }
    if (with_truth == 0) continue;
    report.coverage[attr.id] = static_cast<double>(covered) / static_cast<double>(with_truth);
    // Drop the no-prediction column when unused.
    bool used = false;
    for (const auto& row : m.counts) used = used || row.back() > 0;
    if (!used) {
      m.labels.pop_back();
      m.counts.pop_back();
      for (auto& row : m.counts) row.pop_back();
    }
    if (m.total() == 0) continue;  // every segment skipped
    auto q = attribute_metrics(m);
    report.per_attribute[attr.id] = q;
    grouped[attr.group].push_back(q);
    report.matrices.push_back(std::move(m));
  }

  std::vector<Quartet> group_values;
  for (auto g : kAllGroups) {
    auto it = grouped.find(g);
    if (it == grouped.end()) continue;
    report.per_group[g] = mean_of(it->second);
    group_values.push_back(report.per_group[g]);
  }
  report.overall = mean_of(group_values);
  return report;
}

inline nlohmann::ordered_json to_json(const Quartet& q) {
  return {{"accuracy", q.accuracy}, {"precision", q.precision}, {"recall", q.recall}, {"f1", q.f1}};
}

inline nlohmann::ordered_json to_json(const MetricsReport& r, const Codebook& codebook) {
  nlohmann::ordered_json j;
  j["segments"] = r.segments;
  j["overall"] = to_json(r.overall);
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (auto g : kAllGroups)
    if (auto it = r.per_group.find(g); it != r.per_group.end()) groups[std::string(group_token(g))] = to_json(it->second);
  j["groups"] = std::move(groups);
  nlohmann::ordered_json attrs = nlohmann::ordered_json::object();
  nlohmann::ordered_json coverage = nlohmann::ordered_json::object();
  for (const auto& a : codebook.attributes) {
    if (auto it = r.per_attribute.find(a.id); it != r.per_attribute.end()) attrs[a.id] = to_json(it->second);
    if (auto it = r.coverage.find(a.id); it != r.coverage.end()) coverage[a.id] = it->second;
  }
  j["attributes"] = std::move(attrs);
  j["coverage"] = std::move(coverage);
  return j;
}

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline csv::Row quartet_cells(const Quartet& q) {
  return {fixed2(q.accuracy), fixed2(q.precision), fixed2(q.recall), fixed2(q.f1)};
}

/// Overall table: "All Attributes" and, when given, "Unseen Classes".
inline std::string overall_table_csv(const std::string& model, const MetricsReport& all,
                                     const std::optional<MetricsReport>& unseen) {
  std::string out = csv::format_row({"group_attribute", "model", "acc", "pre", "rec", "f1"});
  auto row = [&](const char* name, const Quartet& q) {
    csv::Row r = {name, model};
    auto cells = quartet_cells(q);
    r.insert(r.end(), cells.begin(), cells.end());
    out += csv::format_row(r);
  };
  row("All Attributes", all.overall);
  if (unseen) row("Unseen Classes", unseen->overall);
  return out;
}

/// Group table: always five rows; cells stay empty for a group without
/// evaluated attributes.
inline std::string group_table_csv(const std::string& model, const MetricsReport& r) {
  std::string out = csv::format_row({"group_attribute", "model", "acc", "pre", "rec", "f1"});
  for (auto g : kAllGroups) {
    csv::Row row = {std::string(group_display_name(g)), model};
    if (auto it = r.per_group.find(g); it != r.per_group.end()) {
      auto cells = quartet_cells(it->second);
      row.insert(row.end(), cells.begin(), cells.end());
    } else {
      row.insert(row.end(), 4, "");
    }
    out += csv::format_row(row);
  }
  return out;
}

/// Per-attribute table, grouped, each group closed by its "All <group>" row.
inline std::string attribute_table_csv(const std::string& model, const MetricsReport& r, const Codebook& codebook) {
  std::string out = csv::format_row({"group_attribute", "attribute", "model", "accuracy", "precision", "recall", "f1"});
  for (auto g : kAllGroups) {
    bool any = false;
    for (const auto& a : codebook.attributes) {
      if (a.group != g) continue;
      auto it = r.per_attribute.find(a.id);
      if (it == r.per_attribute.end()) continue;
      any = true;
      csv::Row row = {std::string(group_display_name(g)), a.display_name, model};
      auto cells = quartet_cells(it->second);
      row.insert(row.end(), cells.begin(), cells.end());
      out += csv::format_row(row);
    }
    if (!any) continue;
    csv::Row row = {std::string(group_display_name(g)), "All " + std::string(group_display_name(g)), model};
    auto cells = quartet_cells(r.per_group.at(g));
    row.insert(row.end(), cells.begin(), cells.end());
    out += csv::format_row(row);
  }
  return out;
}

inline std::string confusion_csv(const ConfusionMatrix& m) {
  csv::Row header = {"truth\\predicted"};
  header.insert(header.end(), m.labels.begin(), m.labels.end());
  std::string out = csv::format_row(header);
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    csv::Row row = {m.labels[i]};
    for (auto c : m.counts[i]) row.push_back(std::to_string(c));
    out += csv::format_row(row);
  }
  return out;
}

}  // namespace roadcode
