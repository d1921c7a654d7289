#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace retbench {

struct Document {
  std::string doc_id;
  std::string title;
  std::string body;
  std::string source_tag;
};

struct Query {
  std::string query_id;
  std::string text;
};

/// Graded relevance in {0,1,2}; pairs that were never set read as 0.
class RelevanceJudgments {
 public:
  /// Throws DataError when grade is outside {0,1,2}.
  void set(const std::string& query_id, const std::string& doc_id, int grade);
  int grade(const std::string& query_id, const std::string& doc_id) const;

  /// Documents with grade > 0 for the query.
  std::vector<std::string> relevant(const std::string& query_id) const;
  /// All stored (doc, grade) pairs for the query, grade 0 included.
  const std::map<std::string, int>& graded(const std::string& query_id) const;

  std::size_t pair_count() const;
  const std::map<std::string, std::map<std::string, int>>& all() const { return grades_; }

 private:
  std::map<std::string, std::map<std::string, int>> grades_;
};

struct Corpus {
  std::string name;
  std::vector<Document> documents;
  std::vector<Query> queries;
  RelevanceJudgments judgments;

  const Document* find_document(const std::string& doc_id) const;
  /// Throws DataError on duplicate ids, empty bodies or dangling judgments.
  void validate() const;
};

struct LoadReport {
  std::size_t dropped_qrels = 0;
  std::size_t dropped_documents = 0;
};

/// Reads `corpus.jsonl`, `queries.jsonl` and `qrels/<split>.tsv` from root.
/// Qrels rows whose query or document is unknown are dropped and counted.
Corpus load_beir_corpus(const std::filesystem::path& root, const std::string& split = "test",
                        LoadReport* report = nullptr);

/// Writes the same layout load_beir_corpus reads. Output is byte-stable.
void write_beir_corpus(const Corpus& corpus, const std::filesystem::path& root,
                       const std::string& split = "test");

struct SynthConfig {
  /// Ordered (source tag, passage count); order fixes document ids.
  std::vector<std::pair<std::string, std::size_t>> passage_counts;
  std::size_t query_count = 0;
  std::uint64_t seed = 42;
  /// Query templates with {title} and {keyphrase} slots.
  std::vector<std::string> templates;
  std::map<std::string, std::filesystem::path> source_texts;
  std::size_t min_passage_tokens = 40;
  std::size_t max_passage_tokens = 80;
  std::string name = "synthetic";
};

/// Carves passages out of the text pools, samples them per source tag and
/// writes one templated query per sampled document (grade 1).
Corpus synthesize_corpus(const SynthConfig& cfg);

/// Passages a pool file yields under cfg's length bounds. Exposed for tests.
std::vector<Document> carve_pool(const std::string& pool_text, const std::string& source_tag,
                                 std::size_t min_tokens, std::size_t max_tokens, std::uint64_t seed);

/// Most frequent bigram of non-stopword tokens, earliest on ties. Falls back
/// to the first content word, then the first word, then "".
std::string extract_keyphrase(const std::string& body);

/// Replaces {title} and {keyphrase}; other braces are left alone.
std::string fill_template(const std::string& tmpl, const std::string& title,
                          const std::string& keyphrase);

std::vector<std::string> read_template_file(const std::filesystem::path& path);

struct CorpusStats {
  std::size_t documents = 0;
  std::size_t queries = 0;
  double mean_tokens = 0.0;
  double median_tokens = 0.0;
  std::size_t max_tokens = 0;
};

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace retbench
