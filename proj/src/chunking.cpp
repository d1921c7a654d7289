#include "retbench/chunking.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "retbench/embedding.hpp"
#include "retbench/error.hpp"
#include "retbench/index.hpp"

namespace retbench {

std::string to_string(ChunkStrategy s) {
  switch (s) {
    case ChunkStrategy::kFixed: return "fixed";
    case ChunkStrategy::kSliding: return "sliding";
    case ChunkStrategy::kSemantic: return "semantic";
  }
  return "?";
}

ChunkStrategy parse_strategy(std::string_view name) {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "fixed") return ChunkStrategy::kFixed;
  if (lower == "sliding" || lower == "sliding_window") return ChunkStrategy::kSliding;
  if (lower == "semantic") return ChunkStrategy::kSemantic;
  throw UsageError("unknown chunking strategy '" + std::string(name) + "'");
}

namespace {

// Length in bytes of a Unicode White_Space code point starting at i, or 0.
std::size_t whitespace_len(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  if (c == ' ' || (c >= 0x09 && c <= 0x0D)) return 1;
  auto at = [&](std::size_t k) {
    return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) : 0u;
  };
  if (c == 0xC2 && (at(1) == 0x85 || at(1) == 0xA0)) return 2;
  if (c == 0xE1 && at(1) == 0x9A && at(2) == 0x80) return 3;  // U+1680
  if (c == 0xE2 && at(1) == 0x80) {
    const auto t = at(2);
    if ((t >= 0x80 && t <= 0x8A) || t == 0xA8 || t == 0xA9 || t == 0xAF) return 3;
  }
  if (c == 0xE2 && at(1) == 0x81 && at(2) == 0x9F) return 3;  // U+205F
  if (c == 0xE3 && at(1) == 0x80 && at(2) == 0x80) return 3;  // U+3000
  return 0;
}

std::string join(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) {
    if (i > begin) out += ' ';
    out += tokens[i];
  }
  return out;
}

Chunk make_chunk(const Document& doc, const std::vector<std::string>& tokens, TokenSpan span,
                 bool fallback = false) {
  return Chunk{fmt::format("{}#{}-{}", doc.doc_id, span.start, span.end), doc.doc_id,
               join(tokens, span.start, span.end), span, fallback};
}

// f >= size * fraction, evaluated without rounding size * fraction.
bool long_enough(std::size_t length, std::size_t size, double fraction) {
  return static_cast<double>(length) >= static_cast<double>(size) * fraction;
}

// Fixed segmentation of tokens [begin, end) relative to the whole document.
std::vector<TokenSpan> fixed_spans(std::size_t begin, std::size_t end, std::size_t size,
                                   double fraction) {
  std::vector<TokenSpan> spans;
  const std::size_t n = end - begin;
  if (n == 0) return spans;
  if (!long_enough(n, size, fraction)) return {{begin, end}};
  for (std::size_t s = begin; s < end; s += size) {
    const std::size_t e = std::min(s + size, end);
    if (e - s < size && !long_enough(e - s, size, fraction)) break;
    spans.push_back({s, e});
  }
  return spans;
}

}  // namespace

std::vector<std::string> tokenize_ws(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  std::size_t start = std::string_view::npos;
  while (i < text.size()) {
    const std::size_t ws = whitespace_len(text, i);
    if (ws > 0) {
      if (start != std::string_view::npos) {
        tokens.emplace_back(text.substr(start, i - start));
        start = std::string_view::npos;
      }
      i += ws;
    } else {
      if (start == std::string_view::npos) start = i;
      ++i;
    }
  }
  if (start != std::string_view::npos) tokens.emplace_back(text.substr(start));
  return tokens;
}

std::vector<Chunk> chunk_fixed(const Document& doc, std::size_t size, double min_fraction) {
  if (size == 0) throw UsageError("fixed chunk size must be positive");
  const auto tokens = tokenize_ws(doc.body);
  std::vector<Chunk> out;
  for (const auto& span : fixed_spans(0, tokens.size(), size, min_fraction)) {
    out.push_back(make_chunk(doc, tokens, span));
  }
  return out;
}

std::vector<Chunk> chunk_sliding(const Document& doc, std::size_t size, double min_fraction) {
  if (size < 2) throw UsageError("sliding window size must be at least 2");
  const auto tokens = tokenize_ws(doc.body);
  const std::size_t n = tokens.size();
  std::vector<Chunk> out;
  if (n == 0) return out;
  if (!long_enough(n, size, min_fraction)) {
    out.push_back(make_chunk(doc, tokens, {0, n}));
    return out;
  }
  const std::size_t stride = size / 2;
  for (std::size_t s = 0; s < n; s += stride) {
    const std::size_t e = std::min(s + size, n);
    if (e - s < size && !long_enough(e - s, size, min_fraction)) break;
    out.push_back(make_chunk(doc, tokens, {s, e}));
  }
  return out;
}

std::vector<Sentence> split_sentences(std::string_view text) {
  const auto tokens = tokenize_ws(text);
  std::vector<Sentence> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const char last = tokens[i].back();
    if (last == '.' || last == '!' || last == '?' || last == ';' || i + 1 == tokens.size()) {
      out.push_back({join(tokens, start, i + 1), {start, i + 1}});
      start = i + 1;
    }
  }
  return out;
}

std::vector<Chunk> chunk_semantic(const Document& doc, std::size_t size, double tau,
                                  Embedder& embedder, double min_fraction) {
  if (size < 2) throw UsageError("semantic target size must be at least 2");
  if (tau < 0.0 || tau > 1.0) throw UsageError("tau must lie in [0, 1]");
  const auto tokens = tokenize_ws(doc.body);
  const auto sentences = split_sentences(doc.body);
  std::vector<Chunk> out;
  if (sentences.empty()) return out;

  std::vector<TokenSpan> segments;
  if (sentences.size() == 1) {
    segments.push_back(sentences.front().span);
  } else {
    std::vector<std::string> texts;
    texts.reserve(sentences.size());
    for (const auto& s : sentences) texts.push_back(s.text);
    const auto vecs = embedder.embed_batch(texts, TaskType::kRetrievalDocument);
    TokenSpan current = sentences.front().span;
    for (std::size_t i = 1; i < sentences.size(); ++i) {
      if (cosine(vecs[i - 1], vecs[i]) < tau) {
        segments.push_back(current);
        current = sentences[i].span;
      } else {
        current.end = sentences[i].span.end;
      }
    }
    segments.push_back(current);
  }

  for (const auto& seg : segments) {
    const std::size_t len = seg.size();
    if (2 * len >= size && len <= 2 * size) {
      out.push_back(make_chunk(doc, tokens, seg));
      continue;
    }
    for (const auto& span : fixed_spans(seg.start, seg.end, size, min_fraction)) {
      out.push_back(make_chunk(doc, tokens, span, true));
    }
  }
  return out;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& cfg,
                                  Embedder* embedder) {
  switch (cfg.strategy) {
    case ChunkStrategy::kFixed:
      return chunk_fixed(doc, cfg.target_size, cfg.trailing_min_fraction);
    case ChunkStrategy::kSliding:
      return chunk_sliding(doc, cfg.target_size, cfg.trailing_min_fraction);
    case ChunkStrategy::kSemantic:
      if (embedder == nullptr) throw UsageError("semantic chunking needs an embedder");
      return chunk_semantic(doc, cfg.target_size, cfg.tau, *embedder, cfg.trailing_min_fraction);
  }
  return {};
}

std::vector<Chunk> chunk_corpus(const Corpus& corpus, const ChunkingConfig& cfg,
                                Embedder* embedder) {
  std::vector<Chunk> out;
  for (const auto& doc : corpus.documents) {
    auto chunks = chunk_document(doc, cfg, embedder);
    std::move(chunks.begin(), chunks.end(), std::back_inserter(out));
  }
  return out;
}

void write_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& c : chunks) {
    nlohmann::json rec{{"chunk_id", c.chunk_id}, {"parent_doc_id", c.parent_doc_id},
                       {"start", c.span.start}, {"end", c.span.end}, {"text", c.text}};
    if (c.fallback) rec["fallback"] = true;
    out << rec.dump() << '\n';
  }
}

std::vector<Chunk> read_chunks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Chunk> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Chunk c;
      c.chunk_id = rec.at("chunk_id").get<std::string>();
      c.parent_doc_id = rec.at("parent_doc_id").get<std::string>();
      c.span = {rec.at("start").get<std::size_t>(), rec.at("end").get<std::size_t>()};
      c.text = rec.at("text").get<std::string>();
      c.fallback = rec.value("fallback", false);
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

}  // namespace retbench
