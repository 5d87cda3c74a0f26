#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "msb/corpus.hpp"

namespace msb::leakage {

// Canonical title form: case-folded, compatibility-mapped (ligatures,
// typographic quotes/dashes, accented Latin), punctuation stripped,
// whitespace collapsed and trimmed. Idempotent.
std::string normalize_title(const std::string& title);

struct TitleIndex {
  std::unordered_set<std::string> normalized_titles;
  std::string source_name;
  long raw_count = 0;

  bool contains(const std::string& title) const {
    return normalized_titles.count(normalize_title(title)) > 0;
  }
};

TitleIndex build_title_index(const std::vector<std::string>& titles,
                             const std::string& source_name);
// Accepts a JSON file (array or JSON-lines of objects with a "title" field)
// or plain text, one title per line.
TitleIndex load_title_index(const std::vector<std::string>& paths,
                            const std::string& source_name);

enum class FilterMode { kTestOnly, kAllSplits };

struct OverlapReport {
  corpus::Split split = corpus::Split::kTrain;
  long total = 0;
  long overlapping = 0;
  long empty_title = 0;  // retained but flagged
  double ratio = 0.0;
  bool filtered = false;  // whether this split was subject to removal
};

struct FilterResult {
  std::vector<corpus::DocumentRecord> kept;
  std::vector<OverlapReport> reports;  // one per split present in the input
};

// Removes a record iff its normalized title is in the index and its split
// is covered by the mode. Reports count overlap per split before removal.
FilterResult filter_split(const std::vector<corpus::DocumentRecord>& records,
                          const TitleIndex& index, FilterMode mode);

struct DistributionDelta {
  double mean_delta = 0.0;
  double std_delta = 0.0;
  long count_delta = 0;
};

DistributionDelta compare_label_distributions(const corpus::SplitStatistics& before,
                                              const corpus::SplitStatistics& after);

}  // namespace msb::leakage
