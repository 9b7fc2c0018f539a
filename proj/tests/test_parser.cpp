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

#include <random>

#include "roadcode/response_parser.hpp"
#include "support.hpp"

namespace roadcode {
namespace {

Codebook two() { return load_codebook(testing::fixture("codebook/two_attributes.json")); }

bool codes_within_codebook(const ParseResult& r, const Codebook& book) {
  for (const auto& [attr, code] : r.predictions) {
    const auto* a = book.find(attr);
    if (!a || !a->has_code(code)) return false;
  }
  return true;
}

bool covers_each_attribute_once(const ParseResult& r, const Codebook& book) {
  std::map<std::string, int> seen;
  for (const auto& [attr, _] : r.predictions) ++seen[attr];
  for (const auto& e : r.invalid) ++seen[e.attribute_id];
  if (seen.size() != book.attributes.size()) return false;
  for (const auto& a : book.attributes)
    if (seen[a.id] != 1) return false;
  return true;
}

TEST(Parser, CorpusMatchesHandLabels) {
  auto book = two();
  auto corpus = nlohmann::json::parse(util::read_file(testing::fixture("parser/corpus.json")));
  ASSERT_EQ(corpus.size(), 30u);
  for (const auto& c : corpus) {
    const auto name = c["name"].get<std::string>();
    auto r = parse_response(c["response"].get<std::string>(), book);
    EXPECT_EQ(r.predictions, (c["predictions"].get<std::map<std::string, std::string>>())) << name;
    std::map<std::string, std::string> invalid;
    for (const auto& e : r.invalid) invalid[e.attribute_id] = std::string(reason_name(e.reason));
    EXPECT_EQ(invalid, (c["invalid"].get<std::map<std::string, std::string>>())) << name;
    EXPECT_TRUE(codes_within_codebook(r, book)) << name;
    EXPECT_TRUE(covers_each_attribute_once(r, book)) << name;
  }
}

TEST(Parser, FencedEqualsUnfenced) {
  auto book = load_codebook(testing::shipped_codebook());
  nlohmann::ordered_json j;
  for (const auto& a : book.attributes) j[a.id] = a.classes.back().code;
  const auto plain = j.dump();
  auto a = parse_response(plain, book);
  auto b = parse_response("```json\n" + j.dump(2) + "\n```\nI hope this helps.", book);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.invalid, b.invalid);
}

TEST(Parser, FullHappyPathAndTwoDeletedKeys) {
  auto book = load_codebook(testing::shipped_codebook());
  nlohmann::ordered_json j;
  for (const auto& a : book.attributes) j[a.id] = a.classes.front().code;
  auto all = parse_response(j.dump(), book);
  EXPECT_EQ(all.predictions.size(), 52u);
  EXPECT_TRUE(all.invalid.empty());

  j.erase(book.attributes[3].id);
  j.erase(book.attributes[40].id);
  auto partial = parse_response(j.dump(), book);
  EXPECT_EQ(partial.predictions.size(), 50u);
  ASSERT_EQ(partial.invalid.size(), 2u);
  EXPECT_EQ(partial.invalid[0], (InvalidEntry{book.attributes[3].id, InvalidReason::Missing}));
  EXPECT_EQ(partial.invalid[1], (InvalidEntry{book.attributes[40].id, InvalidReason::Missing}));
}

TEST(Parser, ClosedSetRejection) {
  auto book = testing::make_codebook({testing::make_attribute("q", AttributeGroup::MidBlock, {"1", "2", "3"})});
  auto r = parse_response(R"({"q": "99"})", book);
  EXPECT_TRUE(r.predictions.empty());
  ASSERT_EQ(r.invalid.size(), 1u);
  EXPECT_EQ(r.invalid[0].reason, InvalidReason::UnknownCode);
}

TEST(Parser, LabelSalvageCanBeDisabled) {
  auto book = two();
  ParseOptions strict;
  strict.label_salvage = false;
  auto r = parse_response(R"({"street_lighting": "Present", "area_type": "1"})", book, strict);
  EXPECT_EQ(r.predictions.count("street_lighting"), 0u);
  EXPECT_TRUE(r.label_salvaged.empty());
  auto lenient = parse_response(R"({"street_lighting": "Present", "area_type": "1"})", book);
  EXPECT_EQ(lenient.label_salvaged, std::vector<std::string>{"street_lighting"});
}

std::string random_garbage(std::mt19937_64& rng, const Codebook& book) {
  static const std::vector<std::string> pieces = {"{", "}", "[", "]", "\"", ":", ",", " ", "\n", "```", "json",
                                                  "null", "true", "-", "0", "1", "2", "3", "99", "\\", "Present",
                                                  "Rural", "{\"predictions\": ", "//", "x"};
  std::vector<std::string> tokens = pieces;
  for (const auto& a : book.attributes) {
    tokens.push_back("\"" + a.id + "\"");
    tokens.push_back("\"" + a.display_name + "\"");
    for (const auto& c : a.classes) tokens.push_back("\"" + c.code + "\"");
  }
  std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);
  std::uniform_int_distribution<int> len(0, 60);
  std::string out;
  const int n = len(rng);
  for (int i = 0; i < n; ++i) out += tokens[pick(rng)];
  return out;
}

TEST(Parser, PropertyNeverInventsCodes) {
  std::mt19937_64 rng(2024);
  auto book = two();
  for (int i = 0; i < 5000; ++i) {
    const auto text = random_garbage(rng, book);
    auto r = parse_response(text, book);
    ASSERT_TRUE(codes_within_codebook(r, book)) << text;
    ASSERT_TRUE(covers_each_attribute_once(r, book)) << text;
  }
}

TEST(Parser, PropertyStructuredNoiseOnRandomBooks) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    auto book = testing::random_codebook(rng, 5, 6);
    nlohmann::ordered_json j;
    for (const auto& a : book.attributes) {
      switch (rng() % 5) {
        case 0: break;
        case 1: j[a.id] = "bogus"; break;
        case 2: j[a.id] = a.classes[rng() % a.classes.size()].code; break;
        case 3: j[a.id] = nlohmann::ordered_json::array({1, 2}); break;
        default: j[a.display_name] = static_cast<int>(rng() % 7); break;
      }
    }
    auto r = parse_response("Answer:\n" + j.dump() + "\nDone", book);
    ASSERT_TRUE(codes_within_codebook(r, book));
    ASSERT_TRUE(covers_each_attribute_once(r, book));
  }
}

}  // namespace
}  // namespace roadcode
