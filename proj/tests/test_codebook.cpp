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

#include <algorithm>
#include <random>

#include "roadcode/codebook.hpp"
#include "support.hpp"

namespace roadcode {
namespace {

using testing::error_code_of;
using testing::fixture;

TEST(Codebook, ShippedFileHasFullAttributeSet) {
  auto book = load_codebook(testing::shipped_codebook());
  EXPECT_EQ(book.attributes.size(), 52u);
  std::size_t single = 0;
  std::map<AttributeGroup, std::size_t> per_group;
  for (const auto& a : book.attributes) {
    single += a.single_class;
    ++per_group[a.group];
    if (!a.single_class) EXPECT_GE(a.classes.size(), 2u) << a.id;
  }
  EXPECT_EQ(per_group.size(), 5u);
  EXPECT_GT(single, 0u);
}

TEST(Codebook, EmptyFileIsSchemaViolation) {
  EXPECT_EQ(error_code_of([] { parse_codebook(""); }), ErrorCode::SchemaViolation);
  EXPECT_EQ(error_code_of([] { parse_codebook("  \n"); }), ErrorCode::SchemaViolation);
}

TEST(Codebook, MissingFileIsFileNotFound) {
  EXPECT_EQ(error_code_of([] { load_codebook("/nonexistent/codebook.json"); }), ErrorCode::FileNotFound);
}

TEST(Codebook, FixtureRoundTripsByteForByte) {
  auto book = load_codebook(fixture("codebook/two_attributes.json"));
  ASSERT_EQ(book.attributes.size(), 2u);
  const auto first = serialize_codebook(book);
  auto again = parse_codebook(first);
  EXPECT_EQ(again, book);
  EXPECT_EQ(serialize_codebook(again), first);
}

TEST(Codebook, ShippedFileRoundTrips) {
  auto book = load_codebook(testing::shipped_codebook());
  EXPECT_EQ(parse_codebook(serialize_codebook(book)), book);
}

nlohmann::json fixture_json() {
  return nlohmann::json::parse(util::read_file(fixture("codebook/two_attributes.json")));
}

TEST(Codebook, RejectsDuplicateAttributeId) {
  auto j = fixture_json();
  j["attributes"][1]["id"] = "street_lighting";
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::DuplicateId);
}

TEST(Codebook, RejectsDuplicateClassCode) {
  auto j = fixture_json();
  j["attributes"][1]["classes"][2]["code"] = "1";
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::DuplicateId);
}

TEST(Codebook, RejectsMissingRiskRankNamingTheClass) {
  auto j = fixture_json();
  j["attributes"][1]["classes"][0].erase("risk_rank");
  try {
    parse_codebook(j.dump());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaViolation);
    EXPECT_NE(std::string(e.what()).find("area_type"), std::string::npos);
  }
}

TEST(Codebook, RejectsDuplicateRiskRank) {
  auto j = fixture_json();
  j["attributes"][1]["classes"][2]["risk_rank"] = 1;
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::SchemaViolation);
}

TEST(Codebook, RejectsUnknownGroup) {
  auto j = fixture_json();
  j["attributes"][0]["group"] = "Shoulders";
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::SchemaViolation);
}

TEST(Codebook, RejectsSingleClassWithoutFlag) {
  auto j = fixture_json();
  j["attributes"][0]["classes"].erase(1);
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::SchemaViolation);
  j["attributes"][0]["single_class"] = true;
  EXPECT_NO_THROW(parse_codebook(j.dump()));
}

TEST(Codebook, RejectsCountMismatch) {
  auto j = fixture_json();
  j["attribute_count"] = 3;
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::SchemaViolation);
  j.erase("attribute_count");  // undeclared means the full 52
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::SchemaViolation);
}

TEST(Codebook, RejectsUnknownKeysAndEmptyCode) {
  auto j = fixture_json();
  j["attributes"][0]["colour"] = "red";
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::SchemaViolation);
  j = fixture_json();
  j["attributes"][0]["classes"][0]["code"] = "";
  EXPECT_EQ(error_code_of([&] { parse_codebook(j.dump()); }), ErrorCode::SchemaViolation);
}

TEST(RiskCompare, RankLookup) {
  auto a = testing::make_attribute("x", AttributeGroup::MidBlock, {"A", "B", "C"});
  EXPECT_EQ(risk_compare(a, "A", "A"), std::strong_ordering::equal);
  EXPECT_EQ(risk_compare(a, "A", "C"), std::strong_ordering::less);
  EXPECT_EQ(risk_compare(a, "C", "B"), std::strong_ordering::greater);
}

TEST(RiskCompare, UnknownCodeThrows) {
  auto a = testing::make_attribute("x", AttributeGroup::MidBlock, {"A", "B"});
  EXPECT_EQ(error_code_of([&] { (void)risk_compare(a, "A", "Z"); }), ErrorCode::UnknownClassCode);
}

TEST(RiskCompare, PropertySortingMatchesRankOrderAndIsAntisymmetric) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto book = testing::random_codebook(rng, 4, 10);
    for (const auto& attr : book.attributes) {
      std::vector<std::string> codes;
      for (const auto& c : attr.classes) codes.push_back(c.code);
      std::shuffle(codes.begin(), codes.end(), rng);
      std::sort(codes.begin(), codes.end(),
                [&](const auto& x, const auto& y) { return risk_compare(attr, x, y) == std::strong_ordering::less; });
      for (std::size_t i = 1; i < codes.size(); ++i) EXPECT_LT(attr.risk_rank(codes[i - 1]), attr.risk_rank(codes[i]));
      for (const auto& x : codes)
        for (const auto& y : codes) EXPECT_EQ(risk_compare(attr, x, y), 0 <=> risk_compare(attr, y, x));
    }
  }
}

TEST(RiskCompare, PropertySerializeIsIdentityOnRandomBooks) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto book = testing::random_codebook(rng, 6, 8);
    EXPECT_EQ(parse_codebook(serialize_codebook(book)), book);
  }
}

TEST(Codebook, GroupTokensParseBack) {
  for (auto g : kAllGroups) EXPECT_EQ(parse_group(group_token(g)), g);
  EXPECT_FALSE(parse_group("Shoulders"));
}

}  // namespace
}  // namespace roadcode
