#include "retbench/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "retbench/chunking.hpp"
#include "retbench/error.hpp"
#include "retbench/rng.hpp"

namespace retbench {

namespace fs = std::filesystem;
using nlohmann::json;

void RelevanceJudgments::set(const std::string& query_id, const std::string& doc_id, int grade) {
  if (grade < 0 || grade > 2) {
    throw DataError(fmt::format("grade {} for ({}, {}) outside {{0,1,2}}", grade, query_id, doc_id));
  }
  grades_[query_id][doc_id] = grade;
}

int RelevanceJudgments::grade(const std::string& query_id, const std::string& doc_id) const {
  auto q = grades_.find(query_id);
  if (q == grades_.end()) return 0;
  auto d = q->second.find(doc_id);
  return d == q->second.end() ? 0 : d->second;
}

std::vector<std::string> RelevanceJudgments::relevant(const std::string& query_id) const {
  std::vector<std::string> out;
  for (const auto& [doc, g] : graded(query_id)) {
    if (g > 0) out.push_back(doc);
  }
  return out;
}

const std::map<std::string, int>& RelevanceJudgments::graded(const std::string& query_id) const {
  static const std::map<std::string, int> kEmpty;
  auto q = grades_.find(query_id);
  return q == grades_.end() ? kEmpty : q->second;
}

std::size_t RelevanceJudgments::pair_count() const {
  std::size_t n = 0;
  for (const auto& [q, docs] : grades_) n += docs.size();
  return n;
}

const Document* Corpus::find_document(const std::string& doc_id) const {
  for (const auto& d : documents) {
    if (d.doc_id == doc_id) return &d;
  }
  return nullptr;
}

void Corpus::validate() const {
  std::unordered_set<std::string> doc_ids;
  for (const auto& d : documents) {
    if (!doc_ids.insert(d.doc_id).second) throw DataError("duplicate doc_id " + d.doc_id);
    if (d.body.empty()) throw DataError("empty body for doc_id " + d.doc_id);
  }
  std::unordered_set<std::string> query_ids;
  for (const auto& q : queries) {
    if (!query_ids.insert(q.query_id).second) throw DataError("duplicate query_id " + q.query_id);
    if (q.text.empty()) throw DataError("empty text for query_id " + q.query_id);
  }
  for (const auto& [q, docs] : judgments.all()) {
    if (!query_ids.contains(q)) throw DataError("judgment references unknown query " + q);
    for (const auto& [d, g] : docs) {
      if (!doc_ids.contains(d)) throw DataError("judgment references unknown document " + d);
    }
  }
}

namespace {

std::string json_id(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw DataError("_id is neither string nor integer");
}

std::string json_text(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw DataError(fmt::format("field '{}' is not a string", key));
  return it->get<std::string>();
}

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    try {
      fn(line, lineno);
    } catch (const json::exception& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    } catch (const DataError& e) {
      throw DataError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Corpus load_beir_corpus(const fs::path& root, const std::string& split, LoadReport* report) {
  const fs::path corpus_path = root / "corpus.jsonl";
  const fs::path queries_path = root / "queries.jsonl";
  const fs::path qrels_path = root / "qrels" / (split + ".tsv");
  for (const auto& p : {corpus_path, queries_path, qrels_path}) {
    if (!fs::exists(p)) throw DataError("missing file " + p.string());
  }

  Corpus corpus;
  corpus.name = root.filename().string();
  if (corpus.name.empty()) corpus.name = root.parent_path().filename().string();
  LoadReport local;

  std::unordered_set<std::string> doc_ids;
  for_each_line(corpus_path, [&](const std::string& line, std::size_t) {
    const json rec = json::parse(line);
    if (!rec.is_object() || !rec.contains("_id")) throw DataError("record without _id");
    Document doc;
    doc.doc_id = json_id(rec.at("_id"));
    doc.title = json_text(rec, "title");
    doc.body = json_text(rec, "text");
    if (auto meta = rec.find("metadata"); meta != rec.end() && meta->is_object()) {
      doc.source_tag = json_text(*meta, "source");
    }
    if (is_blank(doc.body)) doc.body = doc.title;
    if (is_blank(doc.body)) {
      ++local.dropped_documents;
      return;
    }
    if (!doc_ids.insert(doc.doc_id).second) throw DataError("duplicate _id " + doc.doc_id);
    corpus.documents.push_back(std::move(doc));
  });
  if (corpus.documents.empty()) throw DataError("no documents in " + corpus_path.string());

  std::unordered_set<std::string> query_ids;
  for_each_line(queries_path, [&](const std::string& line, std::size_t) {
    const json rec = json::parse(line);
    if (!rec.is_object() || !rec.contains("_id")) throw DataError("record without _id");
    Query q{json_id(rec.at("_id")), json_text(rec, "text")};
    if (is_blank(q.text)) throw DataError("empty query text for " + q.query_id);
    if (!query_ids.insert(q.query_id).second) throw DataError("duplicate _id " + q.query_id);
    corpus.queries.push_back(std::move(q));
  });
  if (corpus.queries.empty()) throw DataError("no queries in " + queries_path.string());

  bool first = true;
  for_each_line(qrels_path, [&](const std::string& line, std::size_t) {
    const auto fields = split_tabs(line);
    const bool header = first && fields.size() >= 1 && fields[0] == "query-id";
    first = false;
    if (header) return;
    if (fields.size() < 3) throw DataError("expected 3 tab-separated fields");
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw DataError("grade '" + fields[2] + "' is not an integer");
    }
    if (!query_ids.contains(fields[0]) || !doc_ids.contains(fields[1])) {
      ++local.dropped_qrels;
      return;
    }
    corpus.judgments.set(fields[0], fields[1], grade);
  });

  if (report) *report = local;
  return corpus;
}

void write_beir_corpus(const Corpus& corpus, const fs::path& root, const std::string& split) {
  fs::create_directories(root / "qrels");
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(root / "corpus.jsonl");
    for (const auto& d : corpus.documents) {
      json rec{{"_id", d.doc_id}, {"title", d.title}, {"text", d.body}};
      if (!d.source_tag.empty()) rec["metadata"] = json{{"source", d.source_tag}};
      out << rec.dump() << '\n';
    }
  }
  {
    auto out = open(root / "queries.jsonl");
    for (const auto& q : corpus.queries) {
      out << json{{"_id", q.query_id}, {"text", q.text}}.dump() << '\n';
    }
  }
  {
    auto out = open(root / "qrels" / (split + ".tsv"));
    out << "query-id\tcorpus-id\tscore\n";
    for (const auto& q : corpus.queries) {
      for (const auto& [doc, g] : corpus.judgments.graded(q.query_id)) {
        out << q.query_id << '\t' << doc << '\t' << g << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpora

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kWords = {
      // Italian
      "il", "lo", "la", "i", "gli", "le", "un", "uno", "una", "di", "a", "da", "in", "con", "su",
      "per", "tra", "fra", "e", "ed", "o", "ma", "che", "non", "si", "del", "dello", "della",
      "dei", "degli", "delle", "al", "allo", "alla", "ai", "agli", "alle", "dal", "dalla", "dai",
      "dalle", "nel", "nello", "nella", "nei", "negli", "nelle", "sul", "sulla", "sui", "sulle",
      "come", "anche", "più", "è", "sono", "essere", "ha", "hanno", "viene", "questo", "questa",
      "quale", "cui", "se", "ogni", "suo", "sua", "loro", "l", "d", "all", "dell", "nell", "sull",
      // English
      "the", "an", "of", "to", "and", "or", "is", "are", "was", "be", "for", "on", "at", "by",
      "with", "from", "as", "it", "this", "that", "which", "not", "its", "into", "than"};
  return kWords;
}

std::string normalize_token(std::string_view token) {
  auto is_punct = [](unsigned char c) { return c < 0x80 && !std::isalnum(c); };
  std::size_t b = 0, e = token.size();
  while (b < e && is_punct(static_cast<unsigned char>(token[b]))) ++b;
  while (e > b && is_punct(static_cast<unsigned char>(token[e - 1]))) --e;
  std::string out(token.substr(b, e - b));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  // Elided articles: "dell'art" -> "art".
  if (auto apos = out.find('\''); apos != std::string::npos && apos + 1 < out.size()) {
    out = out.substr(apos + 1);
  }
  return out;
}

}  // namespace

std::string extract_keyphrase(const std::string& body) {
  std::vector<std::string> words;
  for (const auto& t : tokenize_ws(body)) words.push_back(normalize_token(t));
  auto content = [&](const std::string& w) { return !w.empty() && !stopwords().contains(w); };

  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> counts;  // count, first
  std::string best;
  std::size_t best_count = 0, best_first = 0;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) {
    if (!content(words[i]) || !content(words[i + 1])) continue;
    std::string bigram = words[i] + " " + words[i + 1];
    auto [it, inserted] = counts.try_emplace(bigram, 0, i);
    ++it->second.first;
  }
  for (const auto& [bigram, cf] : counts) {
    const auto [count, first] = cf;
    if (count > best_count || (count == best_count && first < best_first)) {
      best = bigram;
      best_count = count;
      best_first = first;
    }
  }
  if (!best.empty()) return best;
  for (const auto& w : words) {
    if (content(w)) return w;
  }
  for (const auto& w : words) {
    if (!w.empty()) return w;
  }
  return {};
}

std::string fill_template(const std::string& tmpl, const std::string& title,
                          const std::string& keyphrase) {
  std::string out;
  out.reserve(tmpl.size() + title.size() + keyphrase.size());
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 7, "{title}") == 0) {
      out += title;
      i += 7;
    } else if (tmpl.compare(i, 11, "{keyphrase}") == 0) {
      out += keyphrase;
      i += 11;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

std::vector<std::string> read_template_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open template file " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line) || line.front() == '#') continue;
    out.push_back(line);
  }
  if (out.empty()) throw DataError("no templates in " + path.string());
  return out;
}

std::vector<Document> carve_pool(const std::string& pool_text, const std::string& source_tag,
                                 std::size_t min_tokens, std::size_t max_tokens,
                                 std::uint64_t seed) {
  if (min_tokens == 0 || max_tokens < min_tokens) {
    throw UsageError(fmt::format("passage length bounds [{}, {}] invalid", min_tokens, max_tokens));
  }
  struct Article {
    std::string title;
    std::string text;
  };
  std::vector<Article> articles;
  std::istringstream in(pool_text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("# ", 0) == 0) {
      articles.push_back({line.substr(2), {}});
    } else if (!is_blank(line)) {
      if (articles.empty()) articles.push_back({source_tag, {}});
      articles.back().text += line;
      articles.back().text += ' ';
    }
  }

  Rng rng(seed);
  std::vector<Document> out;
  for (const auto& article : articles) {
    const auto tokens = tokenize_ws(article.text);
    std::size_t pos = 0;
    while (tokens.size() - pos >= min_tokens) {
      const std::size_t len = std::min<std::size_t>(rng.between(min_tokens, max_tokens),
                                                    tokens.size() - pos);
      std::string body;
      for (std::size_t i = pos; i < pos + len; ++i) {
        if (i > pos) body += ' ';
        body += tokens[i];
      }
      out.push_back({{}, article.title, std::move(body), source_tag});
      pos += len;
    }
  }
  return out;
}

Corpus synthesize_corpus(const SynthConfig& cfg) {
  if (cfg.templates.empty()) throw UsageError("synthesis needs at least one query template");
  std::size_t total = 0;
  for (const auto& [tag, n] : cfg.passage_counts) total += n;
  if (total == 0) throw UsageError("passage counts sum to zero");

  Corpus corpus;
  corpus.name = cfg.name;
  std::uint64_t tag_index = 0;
  for (const auto& [tag, count] : cfg.passage_counts) {
    ++tag_index;
    if (count == 0) continue;
    auto src = cfg.source_texts.find(tag);
    if (src == cfg.source_texts.end()) throw UsageError("no source text configured for '" + tag + "'");
    std::ifstream in(src->second, std::ios::binary);
    if (!in) throw DataError("cannot open source pool " + src->second.string());
    std::stringstream buf;
    buf << in.rdbuf();

    const std::uint64_t tag_seed = cfg.seed ^ (0x9E3779B97F4A7C15ULL * tag_index);
    auto passages = carve_pool(buf.str(), tag, cfg.min_passage_tokens, cfg.max_passage_tokens,
                               tag_seed);
    if (passages.size() < count) {
      throw DataError(fmt::format("source '{}' ({}) yields {} passages, {} required (shortfall {})",
                                  tag, src->second.string(), passages.size(), count,
                                  count - passages.size()));
    }
    Rng pick(tag_seed + 1);
    pick.shuffle(std::span<Document>(passages));
    for (std::size_t i = 0; i < count; ++i) {
      Document doc = std::move(passages[i]);
      doc.doc_id = fmt::format("{}-{:05d}", tag, i);
      corpus.documents.push_back(std::move(doc));
    }
  }

  Rng rng(cfg.seed);
  std::unordered_map<std::size_t, std::string> keyphrases;
  for (std::size_t q = 0; q < cfg.query_count; ++q) {
    const std::size_t d = rng.below(corpus.documents.size());
    const std::string& tmpl = cfg.templates[rng.below(cfg.templates.size())];
    const Document& doc = corpus.documents[d];
    auto kp = keyphrases.find(d);
    if (kp == keyphrases.end()) kp = keyphrases.emplace(d, extract_keyphrase(doc.body)).first;
    Query query{fmt::format("q{:05d}", q), fill_template(tmpl, doc.title, kp->second)};
    corpus.judgments.set(query.query_id, doc.doc_id, 1);
    corpus.queries.push_back(std::move(query));
  }
  return corpus;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  if (corpus.documents.empty()) throw DataError("corpus_stats on an empty corpus");
  std::vector<std::size_t> lengths;
  lengths.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) lengths.push_back(tokenize_ws(d.body).size());

  CorpusStats s;
  s.documents = corpus.documents.size();
  s.queries = corpus.queries.size();
  double sum = 0.0;
  for (auto n : lengths) sum += static_cast<double>(n);
  s.mean_tokens = sum / static_cast<double>(lengths.size());
  std::sort(lengths.begin(), lengths.end());
  const std::size_t mid = lengths.size() / 2;
  s.median_tokens = lengths.size() % 2 == 1
                        ? static_cast<double>(lengths[mid])
                        : (static_cast<double>(lengths[mid - 1]) + lengths[mid]) / 2.0;
  s.max_tokens = lengths.back();
  return s;
}

}  // namespace retbench
