#pragma once

#include <optional>
#include <string>
#include <vector>

namespace msb::corpus {

enum class Split { kTrain, kValidation, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& name);

enum class LabelKind { kAcceptReject, kCitationCount, kBoth };

struct LabelValue {
  LabelKind kind = LabelKind::kAcceptReject;
  std::optional<bool> accepted;
  std::optional<long> citations;
};

struct DocumentRecord {
  std::string doc_id;
  std::string title;
  std::string text;
  std::vector<std::string> page_paths;
  LabelValue label;
  Split split = Split::kTrain;
};

struct SplitStatistics {
  Split split = Split::kTrain;
  long count = 0;
  std::optional<double> accept_fraction;
  std::optional<double> label_mean;  // citation-score units
  std::optional<double> label_std;   // population std
};

// ln(n + 1); 0 at n = 0, strictly increasing.
double citation_score(long citations);

// JSON-lines manifest, one record per line. Preserves file order,
// rejects duplicate doc_ids.
std::vector<DocumentRecord> load_manifest(const std::string& path);
void write_manifest(const std::vector<DocumentRecord>& records, const std::string& path);

std::vector<DocumentRecord> parse_manifest_lines(const std::vector<std::string>& lines);
std::string record_to_json_line(const DocumentRecord& rec);

SplitStatistics split_statistics(const std::vector<DocumentRecord>& records, Split split);

}  // namespace msb::corpus
