#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "retbench/corpus.hpp"

namespace retbench {

class Embedder;

enum class ChunkStrategy { kFixed, kSliding, kSemantic };

std::string to_string(ChunkStrategy s);
/// Accepts "fixed", "sliding", "semantic" (case-insensitive).
ChunkStrategy parse_strategy(std::string_view name);

/// Half-open range of whitespace-token offsets into the parent body.
struct TokenSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - start; }
  bool operator==(const TokenSpan&) const = default;
};

struct Chunk {
  std::string chunk_id;
  std::string parent_doc_id;
  std::string text;
  TokenSpan span;
  /// Semantic chunks that had to be re-split by the fixed rule.
  bool fallback = false;

  bool operator==(const Chunk&) const = default;
};

struct ChunkingConfig {
  ChunkStrategy strategy = ChunkStrategy::kFixed;
  std::size_t target_size = 32;
  double tau = 0.75;
  double trailing_min_fraction = 0.25;
};

std::vector<std::string> tokenize_ws(std::string_view text);

/// Fixed segments of `size` tokens; a trailing fragment shorter than
/// size * min_fraction is dropped, but a document shorter than that
/// threshold is kept whole.
std::vector<Chunk> chunk_fixed(const Document& doc, std::size_t size,
                               double min_fraction = 0.25);

/// Windows of `size` tokens every size/2 tokens, truncated at the end of the
/// document and subject to the same trailing and short-document rules.
std::vector<Chunk> chunk_sliding(const Document& doc, std::size_t size,
                                 double min_fraction = 0.25);

struct Sentence {
  std::string text;
  TokenSpan span;
};

/// Breaks after tokens ending in '.', '!', '?' or ';'. No abbreviation handling.
std::vector<Sentence> split_sentences(std::string_view text);

/// Boundaries between adjacent sentences whose embedding cosine is below tau;
/// segments outside [size/2, 2*size] tokens are re-split with chunk_fixed.
std::vector<Chunk> chunk_semantic(const Document& doc, std::size_t size, double tau,
                                  Embedder& embedder, double min_fraction = 0.25);

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg,
                                  Embedder* embedder);

/// Chunks every document in corpus order. Semantic needs a non-null embedder.
std::vector<Chunk> chunk_corpus(const Corpus& corpus, const ChunkingConfig& cfg,
                                Embedder* embedder);

/// One JSON record per line: chunk_id, parent_doc_id, start, end, text.
void write_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& path);
std::vector<Chunk> read_chunks(const std::filesystem::path& path);

}  // namespace retbench
