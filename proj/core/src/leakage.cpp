#include "msb/leakage.hpp"

#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msb/common.hpp"

namespace msb::leakage {

using nlohmann::json;

namespace {

// Decodes one UTF-8 codepoint; malformed bytes are treated as Latin-1.
char32_t next_codepoint(const std::string& s, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  const unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int extra = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    ++i;
    return b0;
  }
  if (i + static_cast<std::size_t>(extra) >= s.size()) {
    ++i;
    return b0;
  }
  for (int k = 1; k <= extra; ++k) {
    const unsigned char bk = byte(i + static_cast<std::size_t>(k));
    if ((bk & 0xC0) != 0x80) {
      ++i;
      return b0;
    }
    cp = (cp << 6) | (bk & 0x3F);
  }
  i += static_cast<std::size_t>(extra) + 1;
  return cp;
}

// Compatibility folding for the characters that actually occur in parsed
// paper titles: typographic punctuation, Latin ligatures, accented Latin.
std::string fold_codepoint(char32_t cp) {
  switch (cp) {
    case 0x00DF: return "ss";
    case 0x00C6: case 0x00E6: return "ae";
    case 0x0152: case 0x0153: return "oe";
    case 0xFB00: return "ff";
    case 0xFB01: return "fi";
    case 0xFB02: return "fl";
    case 0xFB03: return "ffi";
    case 0xFB04: return "ffl";
    default: break;
  }
  struct Range {
    char32_t lo, hi;
    char base;
  };
  static constexpr std::array<Range, 14> kLatin = {{
      {0x00C0, 0x00C5, 'a'}, {0x00E0, 0x00E5, 'a'}, {0x00C8, 0x00CB, 'e'},
      {0x00E8, 0x00EB, 'e'}, {0x00CC, 0x00CF, 'i'}, {0x00EC, 0x00EF, 'i'},
      {0x00D2, 0x00D6, 'o'}, {0x00F2, 0x00F6, 'o'}, {0x00D9, 0x00DC, 'u'},
      {0x00F9, 0x00FC, 'u'}, {0x00C7, 0x00C7, 'c'}, {0x00E7, 0x00E7, 'c'},
      {0x00D1, 0x00D1, 'n'}, {0x00F1, 0x00F1, 'n'},
  }};
  for (const auto& r : kLatin) {
    if (cp >= r.lo && cp <= r.hi) return std::string(1, r.base);
  }
  if (cp < 0x80) {
    const char c = static_cast<char>(cp);
    if (c >= 'A' && c <= 'Z') return std::string(1, static_cast<char>(c - 'A' + 'a'));
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) return std::string(1, c);
    return " ";  // ASCII punctuation and controls
  }
  // Latin Extended-A: strip the diacritic via the 2-codepoint pairing
  if (cp >= 0x0100 && cp <= 0x017F) {
    static constexpr const char* kExtA = "aaccccddeeeeeegggghhiiiiiijjkklllllnnnnnoooorrrssssttuuuuuuwwyyzzz";
    const std::size_t idx = (cp - 0x0100) / 2;
    if (idx < 66) return std::string(1, kExtA[idx]);
  }
  // typographic quotes, dashes, and other symbols act as separators
  if ((cp >= 0x2000 && cp <= 0x206F) || cp == 0x00A0 || cp == 0x00AD) return " ";
  if (cp >= 0x00A1 && cp <= 0x00BF) return " ";
  // anything else (e.g. CJK) passes through unchanged in UTF-8
  std::string out;
  if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

}  // namespace

std::string normalize_title(const std::string& title) {
  std::string folded;
  folded.reserve(title.size());
  std::size_t i = 0;
  while (i < title.size()) {
    folded += fold_codepoint(next_codepoint(title, i));
  }
  // collapse whitespace and trim
  std::string out;
  bool pending_space = false;
  for (char c : folded) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += c;
  }
  return out;
}

TitleIndex build_title_index(const std::vector<std::string>& titles,
                             const std::string& source_name) {
  TitleIndex index;
  index.source_name = source_name;
  index.raw_count = static_cast<long>(titles.size());
  for (const auto& t : titles) {
    std::string norm = normalize_title(t);
    if (!norm.empty()) index.normalized_titles.insert(std::move(norm));
  }
  return index;
}

TitleIndex load_title_index(const std::vector<std::string>& paths,
                            const std::string& source_name) {
  std::vector<std::string> titles;
  for (const auto& path : paths) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open title list: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string content = buf.str();

    json j = json::parse(content, nullptr, false);
    if (j.is_array()) {
      for (const auto& item : j) {
        if (item.is_object() && item.contains("title")) {
          titles.push_back(item.at("title").get<std::string>());
        } else if (item.is_string()) {
          titles.push_back(item.get<std::string>());
        }
      }
      continue;
    }
    // JSON-lines of objects, or plain text one title per line
    std::istringstream lines(content);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      json lj = json::parse(line, nullptr, false);
      if (lj.is_object() && lj.contains("title")) {
        titles.push_back(lj.at("title").get<std::string>());
      } else if (!lj.is_discarded() && lj.is_string()) {
        titles.push_back(lj.get<std::string>());
      } else {
        titles.push_back(line);
      }
    }
  }
  return build_title_index(titles, source_name);
}

FilterResult filter_split(const std::vector<corpus::DocumentRecord>& records,
                          const TitleIndex& index, FilterMode mode) {
  auto covered = [mode](corpus::Split s) {
    return mode == FilterMode::kAllSplits || s == corpus::Split::kTest;
  };
  std::map<corpus::Split, OverlapReport> by_split;
  FilterResult result;
  for (const auto& rec : records) {
    OverlapReport& rep = by_split[rec.split];
    rep.split = rec.split;
    rep.filtered = covered(rec.split);
    ++rep.total;
    const std::string norm = normalize_title(rec.title);
    if (norm.empty()) {
      ++rep.empty_title;  // counted as non-overlapping
      result.kept.push_back(rec);
      continue;
    }
    const bool overlap = index.normalized_titles.count(norm) > 0;
    if (overlap) ++rep.overlapping;
    if (overlap && covered(rec.split)) continue;
    result.kept.push_back(rec);
  }
  for (auto& [split, rep] : by_split) {
    rep.ratio = rep.total > 0 ? static_cast<double>(rep.overlapping) / rep.total : 0.0;
    result.reports.push_back(rep);
  }
  return result;
}

DistributionDelta compare_label_distributions(const corpus::SplitStatistics& before,
                                              const corpus::SplitStatistics& after) {
  if (before.label_mean.has_value() != after.label_mean.has_value()) {
    throw IntegrityError("compare_label_distributions: mismatched label kinds");
  }
  DistributionDelta delta;
  if (before.label_mean) delta.mean_delta = *after.label_mean - *before.label_mean;
  if (before.label_std && after.label_std) delta.std_delta = *after.label_std - *before.label_std;
  delta.count_delta = after.count - before.count;
  return delta;
}

}  // namespace msb::leakage
