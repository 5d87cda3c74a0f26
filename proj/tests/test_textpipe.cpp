#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "msb/textpipe.hpp"

using namespace msb;
using namespace msb::textpipe;

namespace {

std::vector<std::int32_t> iota_tokens(int n) {
  std::vector<std::int32_t> t(n);
  std::iota(t.begin(), t.end(), 0);
  return t;
}

// independent oracle: enumerate every window start directly
std::vector<std::vector<std::int32_t>> window_oracle(const std::vector<std::int32_t>& ids,
                                                     const ChunkerConfig& cfg) {
  std::vector<std::vector<std::int32_t>> out;
  if (ids.empty()) return out;
  const int stride = cfg.sequence_length - cfg.overlap;
  for (int start = 0;; start += stride) {
    const int end = std::min<int>(start + cfg.sequence_length, static_cast<int>(ids.size()));
    out.emplace_back(ids.begin() + start, ids.begin() + end);
    if (end == static_cast<int>(ids.size())) break;
  }
  if (cfg.max_chunks && static_cast<int>(out.size()) > *cfg.max_chunks) {
    out.resize(*cfg.max_chunks);
  }
  return out;
}

}  // namespace

TEST_CASE("chunker worked example: 1024 tokens, length 512, overlap 50") {
  auto chunks = chunk_tokens(iota_tokens(1024), {.sequence_length = 512, .overlap = 50});
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].front() == 0);
  CHECK(chunks[1].front() == 462);
  CHECK(chunks[2].front() == 924);
  CHECK(chunks[0].size() == 512);
  CHECK(chunks[1].size() == 512);
  CHECK(chunks[2].size() == 100);  // final partial chunk kept
}

TEST_CASE("chunker keeps the earliest chunks under max_chunks") {
  auto chunks =
      chunk_tokens(iota_tokens(1024), {.sequence_length = 512, .overlap = 50, .max_chunks = 2});
  REQUIRE(chunks.size() == 2);
  CHECK(chunks[0].front() == 0);
  CHECK(chunks[1].front() == 462);
}

TEST_CASE("chunker edge cases") {
  CHECK_THROWS_AS(
      chunk_tokens(std::vector<std::int32_t>{}, {.sequence_length = 4, .overlap = 0}),
      DomainError);
  auto one = chunk_tokens(iota_tokens(3), {.sequence_length = 8, .overlap = 2});
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 3);
  auto exact = chunk_tokens(iota_tokens(8), {.sequence_length = 8, .overlap = 2});
  CHECK(exact.size() == 1);
}

TEST_CASE("chunker config validation") {
  CHECK_THROWS_AS(chunk_tokens(iota_tokens(4), {.sequence_length = 0, .overlap = 0}), DomainError);
  CHECK_THROWS_AS(chunk_tokens(iota_tokens(4), {.sequence_length = 4, .overlap = 4}), DomainError);
  CHECK_THROWS_AS(chunk_tokens(iota_tokens(4), {.sequence_length = 4, .overlap = -1}), DomainError);
  CHECK_THROWS_AS(
      chunk_tokens(iota_tokens(4), {.sequence_length = 4, .overlap = 0, .max_chunks = 0}),
      DomainError);
}

TEST_CASE("chunker agrees with the brute-force window oracle") {
  for (int len = 1; len <= 64; ++len) {
    auto ids = iota_tokens(len);
    for (int seq = 1; seq <= 16; ++seq) {
      for (int ov = 0; ov < seq; ++ov) {
        ChunkerConfig cfg{.sequence_length = seq, .overlap = ov};
        auto got = chunk_tokens(ids, cfg);
        auto want = window_oracle(ids, cfg);
        REQUIRE(got == want);
      }
    }
  }
}

TEST_CASE("every token is covered and strides are constant") {
  auto ids = iota_tokens(737);
  ChunkerConfig cfg{.sequence_length = 64, .overlap = 13};
  auto chunks = chunk_tokens(ids, cfg);
  std::vector<bool> seen(ids.size(), false);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    for (std::int32_t t : chunks[c]) seen[t] = true;
    if (c > 0) CHECK(chunks[c].front() - chunks[c - 1].front() == 64 - 13);
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
}

TEST_CASE("mock encoder is deterministic and bounded") {
  MockEncoder enc(32);
  auto toks = enc.tokenize("alpha beta gamma alpha");
  REQUIRE(toks.size() == 4);
  CHECK(toks[0] == toks[3]);  // same word, same id
  CHECK(toks[0] != toks[1]);
  nn::Mat a = enc.encode_chunk(toks);
  nn::Mat b = enc.encode_chunk(toks);
  CHECK(a == b);
  CHECK(a.rows() == 32);
  CHECK(a.cols() == 4);
  CHECK(a.minCoeff() >= -1.0f);
  CHECK(a.maxCoeff() <= 1.0f);
  // different chunk contents give different encodings
  auto other = enc.tokenize("alpha beta gamma delta");
  CHECK(enc.encode_chunk(other) != a);
}

TEST_CASE("make_encoder dispatch") {
  auto enc = make_encoder("mock", 16);
  CHECK(enc->dimension() == 16);
  CHECK_THROWS_AS(make_encoder("scibert"), EnvironmentError);
  CHECK_THROWS_AS(make_encoder("bert-base"), EnvironmentError);
  CHECK_THROWS_AS(make_encoder("no-such-encoder"), DomainError);
}

TEST_CASE("encode_document mean-pools each chunk") {
  MockEncoder enc(8);
  corpus::DocumentRecord rec;
  rec.doc_id = "doc";
  rec.text = "one two three four five six seven eight nine";
  ChunkerConfig cfg{.sequence_length = 4, .overlap = 1};
  auto seq = encode_document(rec, enc, cfg);
  CHECK(seq.doc_id == "doc");
  CHECK(seq.encoder_name == "mock");
  CHECK(seq.dimension() == 8);
  auto chunks = chunk_tokens(enc.tokenize(rec.text), cfg);
  REQUIRE(seq.n_chunks() == static_cast<int>(chunks.size()));
  for (int c = 0; c < seq.n_chunks(); ++c) {
    nn::Mat per_token = enc.encode_chunk(chunks[c]);
    nn::Vec mean = per_token.rowwise().mean();
    CHECK((seq.vectors.col(c) - mean).cwiseAbs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("cache round-trip is bit exact") {
  MockEncoder enc(24);
  ChunkerConfig cfg{.sequence_length = 6, .overlap = 2, .max_chunks = 4};
  std::vector<ChunkEmbeddingSequence> seqs;
  for (int i = 0; i < 5; ++i) {
    corpus::DocumentRecord rec;
    rec.doc_id = "d" + std::to_string(i);
    rec.text = "word" + std::to_string(i) + " lorem ipsum dolor sit amet consectetur adipiscing";
    seqs.push_back(encode_document(rec, enc, cfg));
  }
  const auto path = (std::filesystem::temp_directory_path() / "msb_cache_rt.jsonl").string();
  write_cache(seqs, path);
  auto loaded = read_cache(path);
  REQUIRE(loaded.size() == seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    CHECK(loaded[i].doc_id == seqs[i].doc_id);
    CHECK(loaded[i].encoder_name == seqs[i].encoder_name);
    CHECK(loaded[i].chunker == seqs[i].chunker);
    CHECK(loaded[i].vectors == seqs[i].vectors);  // bit-exact through base64
  }
  std::filesystem::remove(path);
}

TEST_CASE("cache append extends and rejects mismatched headers") {
  MockEncoder enc(8);
  ChunkerConfig cfg{.sequence_length = 4, .overlap = 0};
  corpus::DocumentRecord a, b;
  a.doc_id = "a";
  a.text = "alpha beta gamma delta epsilon";
  b.doc_id = "b";
  b.text = "zeta eta theta";
  const auto path = (std::filesystem::temp_directory_path() / "msb_cache_append.jsonl").string();
  write_cache({encode_document(a, enc, cfg)}, path);
  append_cache({encode_document(b, enc, cfg)}, path);
  auto loaded = read_cache(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1].doc_id == "b");

  MockEncoder other(16);
  CHECK_THROWS_AS(append_cache({encode_document(b, other, cfg)}, path), IntegrityError);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt cache lines name a byte offset") {
  const auto path = (std::filesystem::temp_directory_path() / "msb_cache_bad.jsonl").string();
  {
    MockEncoder enc(8);
    corpus::DocumentRecord a;
    a.doc_id = "a";
    a.text = "alpha beta";
    write_cache({encode_document(a, enc, {.sequence_length = 4, .overlap = 0})}, path);
    std::ofstream out(path, std::ios::app);
    out << "{broken json\n";
  }
  try {
    read_cache(path);
    FAIL("expected CorruptionError");
  } catch (const CorruptionError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("missing cache file is an input error") {
  CHECK_THROWS_AS(read_cache("/nonexistent/msb_cache.jsonl"), InputError);
}
