#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "msb/common.hpp"
#include "msb/corpus.hpp"

using namespace msb;
using namespace msb::corpus;

namespace {

std::vector<std::string> lines(std::initializer_list<std::string> ls) { return ls; }

// high-precision oracle: ln(n+1) via long double log1p
long double log_score_oracle(long n) { return std::log1pl(static_cast<long double>(n)); }

}  // namespace

TEST_CASE("manifest parses records in file order") {
  auto records = parse_manifest_lines(lines({
      R"({"doc_id":"a","title":"A","text":"x","split":"train"})",
      R"({"doc_id":"b","title":"B","text":"y","split":"validation","accepted":true})",
      R"({"doc_id":"c","title":"C","text":"z","split":"test","citations":7})",
  }));
  REQUIRE(records.size() == 3);
  CHECK(records[0].doc_id == "a");
  CHECK(records[0].split == Split::kTrain);
  CHECK(records[1].split == Split::kValidation);
  CHECK(records[1].label.kind == LabelKind::kAcceptReject);
  CHECK(*records[1].label.accepted);
  CHECK(records[2].label.kind == LabelKind::kCitationCount);
  CHECK(*records[2].label.citations == 7);
}

TEST_CASE("duplicate doc_id is an integrity error") {
  CHECK_THROWS_AS(parse_manifest_lines(lines({
                      R"({"doc_id":"p1","title":"A","text":"x","split":"train"})",
                      R"({"doc_id":"p1","title":"B","text":"y","split":"train"})",
                  })),
                  IntegrityError);
}

TEST_CASE("empty manifest yields empty list") {
  CHECK(parse_manifest_lines({}).empty());
}

TEST_CASE("malformed line names its line number") {
  try {
    parse_manifest_lines(lines({
        R"({"doc_id":"a","title":"A","text":"x","split":"train"})",
        "{not json",
    }));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("unknown split tag is a schema error") {
  CHECK_THROWS_AS(parse_manifest_lines(lines({
                      R"({"doc_id":"a","title":"A","text":"x","split":"dev"})",
                  })),
                  ParseError);
}

TEST_CASE("citation_score matches the log oracle") {
  CHECK(citation_score(0) == 0.0);
  CHECK(citation_score(1) == doctest::Approx(static_cast<double>(log_score_oracle(1))).epsilon(1e-14));
  CHECK(citation_score(100) ==
        doctest::Approx(static_cast<double>(log_score_oracle(100))).epsilon(1e-14));
  CHECK_THROWS_AS(citation_score(-1), DomainError);
}

TEST_CASE("citation_score is strictly monotone") {
  for (long n = 0; n < 10000; ++n) {
    CHECK(citation_score(n + 1) > citation_score(n));
  }
}

TEST_CASE("split statistics") {
  std::vector<DocumentRecord> records;
  for (int i = 0; i < 4; ++i) {
    DocumentRecord r;
    r.doc_id = "d" + std::to_string(i);
    r.text = "t";
    r.split = Split::kTrain;
    r.label.kind = LabelKind::kAcceptReject;
    r.label.accepted = (i == 0);
    records.push_back(r);
  }
  auto stats = split_statistics(records, Split::kTrain);
  CHECK(stats.count == 4);
  CHECK(*stats.accept_fraction == doctest::Approx(0.25));

  SUBCASE("zero-citation labels give zero mean and std") {
    for (auto& r : records) {
      r.label = {LabelKind::kCitationCount, std::nullopt, 0};
    }
    records.resize(2);
    auto s = split_statistics(records, Split::kTrain);
    CHECK(*s.label_mean == 0.0);
    CHECK(*s.label_std == 0.0);
  }

  SUBCASE("two-point citation stats match the arithmetic oracle") {
    records.resize(2);
    records[0].label = {LabelKind::kCitationCount, std::nullopt, 0};
    records[1].label = {LabelKind::kCitationCount, std::nullopt, 2};
    auto s = split_statistics(records, Split::kTrain);
    const long double expected = std::log(3.0L) / 2.0L;  // mean of {0, ln 3}
    CHECK(*s.label_mean == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
    CHECK(*s.label_std == doctest::Approx(static_cast<double>(expected)).epsilon(1e-12));
  }

  SUBCASE("empty split is an error") {
    CHECK_THROWS_AS(split_statistics(records, Split::kTest), DomainError);
  }
}

TEST_CASE("manifest round-trip is the identity") {
  std::mt19937 rng(7);
  std::vector<DocumentRecord> records;
  for (int i = 0; i < 25; ++i) {
    DocumentRecord r;
    r.doc_id = "doc-" + std::to_string(i);
    r.title = "Title " + std::to_string(rng() % 1000);
    r.text = "some text with unicode \xC3\xA9 " + std::to_string(rng());
    r.split = static_cast<Split>(rng() % 3);
    if (rng() % 2) {
      r.label.accepted = rng() % 2 == 0;
      r.label.kind = LabelKind::kAcceptReject;
    } else {
      r.label.citations = static_cast<long>(rng() % 500);
      r.label.kind = LabelKind::kCitationCount;
    }
    if (rng() % 3 == 0) r.page_paths = {"p1.png", "p2.png"};
    records.push_back(r);
  }
  const auto path = std::filesystem::temp_directory_path() / "msb_manifest_rt.jsonl";
  write_manifest(records, path.string());
  auto loaded = load_manifest(path.string());
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].doc_id == records[i].doc_id);
    CHECK(loaded[i].title == records[i].title);
    CHECK(loaded[i].text == records[i].text);
    CHECK(loaded[i].split == records[i].split);
    CHECK(loaded[i].page_paths == records[i].page_paths);
    CHECK(loaded[i].label.accepted == records[i].label.accepted);
    CHECK(loaded[i].label.citations == records[i].label.citations);
  }
  std::filesystem::remove(path);
}

TEST_CASE("per-split counts sum to the total") {
  std::mt19937 rng(11);
  std::vector<DocumentRecord> records;
  for (int i = 0; i < 60; ++i) {
    DocumentRecord r;
    r.doc_id = "d" + std::to_string(i);
    r.text = "t";
    r.split = static_cast<Split>(rng() % 3);
    r.label.accepted = rng() % 2 == 0;
    records.push_back(r);
  }
  long total = 0;
  for (Split s : {Split::kTrain, Split::kValidation, Split::kTest}) {
    auto stats = split_statistics(records, s);
    total += stats.count;
    CHECK(*stats.accept_fraction >= 0.0);
    CHECK(*stats.accept_fraction <= 1.0);
  }
  CHECK(total == 60);
}
