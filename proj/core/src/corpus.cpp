#include "msb/corpus.hpp"

#include <cmath>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "msb/common.hpp"

namespace msb::corpus {

using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  throw DomainError("unknown split enum value");
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw ParseError("unknown split tag: '" + name + "'");
}

double citation_score(long citations) {
  if (citations < 0) {
    throw DomainError("citation count must be non-negative, got " +
                      std::to_string(citations));
  }
  return std::log1p(static_cast<double>(citations));
}

namespace {

DocumentRecord record_from_json(const json& j, std::size_t line_no) {
  auto fail = [line_no](const std::string& what) -> ParseError {
    return ParseError("manifest line " + std::to_string(line_no) + ": " + what);
  };
  if (!j.is_object()) throw fail("expected a JSON object");
  for (const char* key : {"doc_id", "title", "text", "split"}) {
    if (!j.contains(key)) throw fail(std::string("missing required key \"") + key + "\"");
  }
  DocumentRecord rec;
  try {
    rec.doc_id = j.at("doc_id").get<std::string>();
    rec.title = j.at("title").get<std::string>();
    rec.text = j.at("text").get<std::string>();
    rec.split = parse_split(j.at("split").get<std::string>());
    if (j.contains("page_paths")) {
      rec.page_paths = j.at("page_paths").get<std::vector<std::string>>();
    }
    bool has_accepted = j.contains("accepted");
    bool has_citations = j.contains("citations");
    if (has_accepted) rec.label.accepted = j.at("accepted").get<bool>();
    if (has_citations) {
      long n = j.at("citations").get<long>();
      if (n < 0) throw fail("\"citations\" must be >= 0");
      rec.label.citations = n;
    }
    if (has_accepted && has_citations) {
      rec.label.kind = LabelKind::kBoth;
    } else if (has_citations) {
      rec.label.kind = LabelKind::kCitationCount;
    } else {
      rec.label.kind = LabelKind::kAcceptReject;
    }
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  return rec;
}

}  // namespace

std::vector<DocumentRecord> parse_manifest_lines(const std::vector<std::string>& lines) {
  std::vector<DocumentRecord> records;
  std::unordered_set<std::string> seen_ids;
  std::size_t line_no = 0;
  for (const auto& line : lines) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": malformed JSON");
    }
    DocumentRecord rec = record_from_json(j, line_no);
    if (!seen_ids.insert(rec.doc_id).second) {
      throw IntegrityError("duplicate doc_id \"" + rec.doc_id + "\" at manifest line " +
                           std::to_string(line_no));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<DocumentRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return parse_manifest_lines(lines);
}

std::string record_to_json_line(const DocumentRecord& rec) {
  json j;
  j["doc_id"] = rec.doc_id;
  j["title"] = rec.title;
  j["text"] = rec.text;
  j["split"] = split_name(rec.split);
  if (!rec.page_paths.empty()) j["page_paths"] = rec.page_paths;
  if (rec.label.accepted) j["accepted"] = *rec.label.accepted;
  if (rec.label.citations) j["citations"] = *rec.label.citations;
  return j.dump();
}

void write_manifest(const std::vector<DocumentRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open manifest for writing: " + path);
  for (const auto& rec : records) out << record_to_json_line(rec) << '\n';
}

SplitStatistics split_statistics(const std::vector<DocumentRecord>& records, Split split) {
  SplitStatistics stats;
  stats.split = split;
  long accepted = 0, with_accept = 0;
  std::vector<double> scores;
  for (const auto& rec : records) {
    if (rec.split != split) continue;
    ++stats.count;
    if (rec.label.accepted) {
      ++with_accept;
      if (*rec.label.accepted) ++accepted;
    }
    if (rec.label.citations) scores.push_back(citation_score(*rec.label.citations));
  }
  if (stats.count == 0) {
    throw DomainError(std::string("no records in split '") + split_name(split) + "'");
  }
  if (with_accept > 0) {
    stats.accept_fraction = static_cast<double>(accepted) / static_cast<double>(with_accept);
  }
  if (!scores.empty()) {
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(scores.size());
    stats.label_mean = mean;
    stats.label_std = std::sqrt(var);
  }
  return stats;
}

}  // namespace msb::corpus
