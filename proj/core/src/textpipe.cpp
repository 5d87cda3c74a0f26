#include "msb/textpipe.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace msb::textpipe {

using nlohmann::json;

void ChunkerConfig::validate() const {
  if (sequence_length <= 0) throw DomainError("chunker: sequence_length must be > 0");
  if (overlap < 0 || overlap >= sequence_length) {
    throw DomainError("chunker: overlap must satisfy 0 <= overlap < sequence_length");
  }
  if (max_chunks && *max_chunks < 1) throw DomainError("chunker: max_chunks must be >= 1");
}

std::vector<std::vector<std::int32_t>> chunk_tokens(std::span<const std::int32_t> token_ids,
                                                    const ChunkerConfig& cfg) {
  cfg.validate();
  if (token_ids.empty()) throw DomainError("chunker: empty token list");
  const std::size_t len = static_cast<std::size_t>(cfg.sequence_length);
  const std::size_t stride = len - static_cast<std::size_t>(cfg.overlap);
  std::vector<std::vector<std::int32_t>> chunks;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = std::min(start + len, token_ids.size());
    chunks.emplace_back(token_ids.begin() + start, token_ids.begin() + end);
    if (end >= token_ids.size()) break;
    start += stride;
  }
  if (cfg.max_chunks && chunks.size() > static_cast<std::size_t>(*cfg.max_chunks)) {
    chunks.resize(static_cast<std::size_t>(*cfg.max_chunks));  // keep the earliest
  }
  return chunks;
}

// ---------------------------------------------------------------------------
// Mock encoder

MockEncoder::MockEncoder(int dimension) : dimension_(dimension) {
  if (dimension <= 0) throw DomainError("encoder dimension must be > 0");
}

std::vector<std::int32_t> MockEncoder::tokenize(const std::string& text) const {
  std::vector<std::int32_t> ids;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    std::uint64_t h = fnv1a64({reinterpret_cast<const std::uint8_t*>(word.data()), word.size()});
    ids.push_back(static_cast<std::int32_t>(h & 0x7FFFFFFF));
  }
  return ids;
}

nn::Mat MockEncoder::encode_chunk(std::span<const std::int32_t> token_ids) const {
  if (token_ids.empty()) throw EncoderError("mock encoder: empty chunk");
  const std::uint64_t base = fnv1a64_ints({token_ids.data(), token_ids.size()});
  nn::Mat out(dimension_, static_cast<Eigen::Index>(token_ids.size()));
  for (std::size_t t = 0; t < token_ids.size(); ++t) {
    Rng rng(base ^ (0x9E3779B97F4A7C15ULL * (t + 1)));
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (int i = 0; i < dimension_; ++i) out(i, static_cast<Eigen::Index>(t)) = dist(rng);
  }
  return out;
}

std::unique_ptr<EncoderAdapter> make_encoder(const std::string& name, int dimension) {
  if (name == "mock") return std::make_unique<MockEncoder>(dimension);
  static const char* known[] = {"bert-base", "scibert", "scincl", "specter", "specter2"};
  for (const char* k : known) {
    if (name == k) {
      throw EnvironmentError("encoder '" + name +
                             "' requires external pretrained weights that are not bundled; "
                             "point the pipeline at a pre-built embedding cache or use 'mock'");
    }
  }
  throw DomainError("unknown encoder: '" + name + "'");
}

// ---------------------------------------------------------------------------
// Document encoding

ChunkEmbeddingSequence encode_document(const corpus::DocumentRecord& record,
                                       const EncoderAdapter& adapter,
                                       const ChunkerConfig& cfg) {
  if (record.text.empty()) throw DomainError("encode_document: empty text for doc " + record.doc_id);
  const auto token_ids = adapter.tokenize(record.text);
  if (token_ids.empty()) {
    throw DomainError("encode_document: text of doc " + record.doc_id + " produced no tokens");
  }
  const auto chunks = chunk_tokens(token_ids, cfg);
  ChunkEmbeddingSequence seq;
  seq.doc_id = record.doc_id;
  seq.encoder_name = adapter.name();
  seq.chunker = cfg;
  seq.vectors.resize(adapter.dimension(), static_cast<Eigen::Index>(chunks.size()));
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    nn::Mat token_enc;
    try {
      token_enc = adapter.encode_chunk(chunks[c]);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw EncoderError("adapter failed on chunk " + std::to_string(c) + " of doc " +
                         record.doc_id + ": " + e.what());
    }
    if (token_enc.rows() != adapter.dimension()) {
      throw IntegrityError("adapter returned dimension " + std::to_string(token_enc.rows()) +
                           " on chunk " + std::to_string(c) + ", expected " +
                           std::to_string(adapter.dimension()));
    }
    seq.vectors.col(static_cast<Eigen::Index>(c)) = token_enc.rowwise().mean();
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Embedding cache

namespace {

json header_json(const ChunkEmbeddingSequence& seq) {
  json h;
  h["encoder_name"] = seq.encoder_name;
  h["dimension"] = seq.dimension();
  h["sequence_length"] = seq.chunker.sequence_length;
  h["overlap"] = seq.chunker.overlap;
  if (seq.chunker.max_chunks) {
    h["max_chunks"] = *seq.chunker.max_chunks;
  } else {
    h["max_chunks"] = nullptr;
  }
  return h;
}

void check_homogeneous(const std::vector<ChunkEmbeddingSequence>& seqs) {
  for (const auto& s : seqs) {
    if (s.encoder_name != seqs.front().encoder_name || s.chunker != seqs.front().chunker ||
        s.dimension() != seqs.front().dimension()) {
      throw IntegrityError("cache write: sequences mix encoder or chunker configurations");
    }
  }
}

std::string record_line(const ChunkEmbeddingSequence& seq) {
  json j;
  j["doc_id"] = seq.doc_id;
  j["n_chunks"] = seq.n_chunks();
  // column-major (dim x chunks) memory == row-major (chunks x dim)
  j["data"] = base64_encode({reinterpret_cast<const std::uint8_t*>(seq.vectors.data()),
                             static_cast<std::size_t>(seq.vectors.size()) * sizeof(float)});
  return j.dump();
}

void write_records(std::ofstream& out, const std::vector<ChunkEmbeddingSequence>& seqs) {
  for (const auto& s : seqs) out << record_line(s) << '\n';
}

}  // namespace

void write_cache(const std::vector<ChunkEmbeddingSequence>& seqs, const std::string& path) {
  if (seqs.empty()) throw DomainError("cache write: nothing to write");
  check_homogeneous(seqs);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open cache for writing: " + path);
  out << header_json(seqs.front()).dump() << '\n';
  write_records(out, seqs);
}

void append_cache(const std::vector<ChunkEmbeddingSequence>& seqs, const std::string& path) {
  if (seqs.empty()) return;
  check_homogeneous(seqs);
  std::ifstream probe(path, std::ios::binary);
  if (!probe) {
    write_cache(seqs, path);
    return;
  }
  std::string header_line;
  std::getline(probe, header_line);
  probe.close();
  json existing = json::parse(header_line, nullptr, false);
  if (existing.is_discarded() || existing != header_json(seqs.front())) {
    throw IntegrityError("cache append: header/config mismatch at " + path);
  }
  std::ofstream out(path, std::ios::binary | std::ios::app);
  write_records(out, seqs);
}

std::vector<ChunkEmbeddingSequence> read_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open cache: " + path);
  std::string line;
  if (!std::getline(in, line)) throw CorruptionError("cache truncated at byte offset 0: " + path);
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.contains("encoder_name") || !header.contains("dimension")) {
    throw CorruptionError("cache header invalid at byte offset 0: " + path);
  }
  ChunkerConfig cfg;
  cfg.sequence_length = header.at("sequence_length").get<int>();
  cfg.overlap = header.at("overlap").get<int>();
  if (!header.at("max_chunks").is_null()) cfg.max_chunks = header.at("max_chunks").get<int>();
  const std::string encoder_name = header.at("encoder_name").get<std::string>();
  const int dim = header.at("dimension").get<int>();

  std::vector<ChunkEmbeddingSequence> seqs;
  std::streampos offset = in.tellg();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw CorruptionError("cache record corrupt at byte offset " +
                            std::to_string(static_cast<long long>(offset)) + ": " + path);
    }
    ChunkEmbeddingSequence seq;
    seq.doc_id = j.at("doc_id").get<std::string>();
    const int n_chunks = j.at("n_chunks").get<int>();
    const auto bytes = base64_decode(j.at("data").get<std::string>());
    const std::size_t expected = static_cast<std::size_t>(n_chunks) * dim * sizeof(float);
    if (bytes.size() != expected) {
      throw CorruptionError("cache record for doc " + seq.doc_id + " at byte offset " +
                            std::to_string(static_cast<long long>(offset)) + " holds " +
                            std::to_string(bytes.size() / sizeof(float)) + " floats, expected " +
                            std::to_string(expected / sizeof(float)));
    }
    seq.encoder_name = encoder_name;
    seq.chunker = cfg;
    seq.vectors.resize(dim, n_chunks);
    std::memcpy(seq.vectors.data(), bytes.data(), bytes.size());
    seqs.push_back(std::move(seq));
    offset = in.tellg();
  }
  return seqs;
}

}  // namespace msb::textpipe
