#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msb/corpus.hpp"
#include "msb/nn.hpp"

namespace msb::textpipe {

struct ChunkerConfig {
  int sequence_length = 512;
  int overlap = 0;
  std::optional<int> max_chunks;

  void validate() const;
  bool operator==(const ChunkerConfig&) const = default;
};

// Produces sub-word token ids and per-token encodings for one chunk.
// Implementations must be deterministic: the same chunk always yields
// bit-identical vectors.
class EncoderAdapter {
 public:
  virtual ~EncoderAdapter() = default;
  virtual const std::string& name() const = 0;
  virtual int dimension() const = 0;
  virtual std::vector<std::int32_t> tokenize(const std::string& text) const = 0;
  // Returns (dimension x n_tokens): one column per non-padding input token.
  virtual nn::Mat encode_chunk(std::span<const std::int32_t> token_ids) const = 0;
};

// Weight-free stand-in encoder: whitespace tokenization with hashed token
// ids, per-token encodings drawn from a generator seeded by a stable hash
// of the chunk's token ids, values in [-1, 1].
class MockEncoder : public EncoderAdapter {
 public:
  explicit MockEncoder(int dimension = 768);
  const std::string& name() const override { return name_; }
  int dimension() const override { return dimension_; }
  std::vector<std::int32_t> tokenize(const std::string& text) const override;
  nn::Mat encode_chunk(std::span<const std::int32_t> token_ids) const override;

 private:
  std::string name_ = "mock";
  int dimension_;
};

// "mock" is the only encoder runnable without external weights; the named
// pretrained encoders raise EnvironmentError.
std::unique_ptr<EncoderAdapter> make_encoder(const std::string& name, int dimension = 768);

struct ChunkEmbeddingSequence {
  std::string doc_id;
  nn::Mat vectors;  // dimension x n_chunks, one column per chunk
  std::string encoder_name;
  ChunkerConfig chunker;

  int n_chunks() const { return static_cast<int>(vectors.cols()); }
  int dimension() const { return static_cast<int>(vectors.rows()); }
};

std::vector<std::vector<std::int32_t>> chunk_tokens(std::span<const std::int32_t> token_ids,
                                                    const ChunkerConfig& cfg);

ChunkEmbeddingSequence encode_document(const corpus::DocumentRecord& record,
                                       const EncoderAdapter& adapter,
                                       const ChunkerConfig& cfg);

// Cache file: JSON header line {encoder_name, dimension, sequence_length,
// overlap, max_chunks}, then one JSON line per document {doc_id, n_chunks,
// data} with data = base64 of little-endian f32, row-major n_chunks x dim.
void write_cache(const std::vector<ChunkEmbeddingSequence>& seqs, const std::string& path);
void append_cache(const std::vector<ChunkEmbeddingSequence>& seqs, const std::string& path);
std::vector<ChunkEmbeddingSequence> read_cache(const std::string& path);

}  // namespace msb::textpipe
