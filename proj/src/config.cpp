#include "retbench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "retbench/error.hpp"

namespace retbench {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw UsageError(fmt::format("config key '{}': {}", key, why));
}

void check_keys(const YAML::Node& node, const std::string& where, const std::set<std::string>& allowed) {
  if (!node) return;
  if (!node.IsMap()) bad(where, "expected a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.contains(key)) bad(where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, const std::string& where, T& out) {
  if (!node || !node[key]) return;
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception& e) {
    bad(where + key, e.what());
  }
}

template <typename T>
void read_opt(const YAML::Node& node, const char* key, const std::string& where, std::optional<T>& out) {
  if (!node || !node[key] || node[key].IsNull()) return;
  T value{};
  read(node, key, where, value);
  out = value;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    item = item.substr(b, e - b + 1);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || v == 0 || item.front() == '-') {
      throw UsageError("'" + item + "' is not a positive integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw UsageError("empty list '" + text + "'");
  return out;
}

void RunConfig::propagate_seed() {
  hnsw.seed = seed;
  latency.seed = seed;
  if (synth) synth->seed = seed;
}

void RunConfig::validate(bool need_corpus) const {
  embedder.validate();
  hnsw.validate();
  if (need_corpus && !beir_path && !synth) throw UsageError("config has no corpus source");
  if (beir_path && synth) throw UsageError("corpus.beir and corpus.synth are mutually exclusive");
  if (k_values.empty()) throw UsageError("eval.k is empty");
  for (auto k : k_values) {
    if (k == 0) throw UsageError("eval.k values must be positive");
  }
  if (chunking.target_size == 0) throw UsageError("chunking.size must be positive");
  if (chunking.tau < 0.0 || chunking.tau > 1.0) throw UsageError("chunking.tau must lie in [0, 1]");
  if (batch_size == 0) throw UsageError("embedder.batch_size must be positive");
  if (latency.n_runs == 0) throw UsageError("latency.runs must be positive");
  if (jobs == 0) throw UsageError("jobs must be positive");
  if (need_corpus && beir_path && !fs::is_directory(*beir_path)) {
    throw DataError("corpus directory " + beir_path->string() + " does not exist");
  }
  if (need_corpus && synth) {
    for (const auto& [tag, n] : synth->passage_counts) {
      auto it = synth->source_texts.find(tag);
      if (it == synth->source_texts.end()) throw UsageError("corpus.synth.sources lacks '" + tag + "'");
      if (!fs::is_regular_file(it->second)) {
        throw DataError("source pool " + it->second.string() + " does not exist");
      }
    }
  }
}

RunConfig parse_config(const std::string& yaml_text, const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw UsageError(std::string("config is not valid YAML: ") + e.what());
  }
  RunConfig cfg;
  if (!root || root.IsNull()) return cfg;
  check_keys(root, "", {"seed", "corpus", "embedder", "chunking", "eval", "hnsw", "latency",
                        "ablation", "cache_dir", "output_dir", "cost_per_million_tokens", "jobs"});

  read(root, "seed", "", cfg.seed);
  read(root, "jobs", "", cfg.jobs);
  read_opt(root, "cost_per_million_tokens", "", cfg.cost_per_million_tokens);
  std::string path;
  if (root["cache_dir"]) {
    read(root, "cache_dir", "", path);
    cfg.cache_dir = resolve(base_dir, path);
  } else {
    cfg.cache_dir = resolve(base_dir, cfg.cache_dir.string());
  }
  if (root["output_dir"]) {
    read(root, "output_dir", "", path);
    cfg.output_dir = resolve(base_dir, path);
  } else {
    cfg.output_dir = resolve(base_dir, cfg.output_dir.string());
  }

  if (const auto corpus = root["corpus"]) {
    check_keys(corpus, "corpus", {"beir", "split", "synth"});
    if (corpus["beir"]) {
      read(corpus, "beir", "corpus.", path);
      cfg.beir_path = resolve(base_dir, path);
    }
    read(corpus, "split", "corpus.", cfg.beir_split);
    if (const auto s = corpus["synth"]) {
      check_keys(s, "corpus.synth", {"name", "passage_counts", "query_count", "templates",
                                      "templates_file", "sources", "passage_tokens"});
      SynthConfig sc;
      read(s, "name", "corpus.synth.", sc.name);
      read(s, "query_count", "corpus.synth.", sc.query_count);
      if (const auto counts = s["passage_counts"]) {
        if (!counts.IsMap()) bad("corpus.synth.passage_counts", "expected a mapping");
        for (const auto& kv : counts) {
          sc.passage_counts.emplace_back(kv.first.as<std::string>(), kv.second.as<std::size_t>());
        }
      }
      if (const auto sources = s["sources"]) {
        if (!sources.IsMap()) bad("corpus.synth.sources", "expected a mapping");
        for (const auto& kv : sources) {
          sc.source_texts[kv.first.as<std::string>()] = resolve(base_dir, kv.second.as<std::string>());
        }
      }
      read(s, "templates", "corpus.synth.", sc.templates);
      if (s["templates_file"]) {
        read(s, "templates_file", "corpus.synth.", path);
        auto more = read_template_file(resolve(base_dir, path));
        sc.templates.insert(sc.templates.end(), more.begin(), more.end());
      }
      if (const auto bounds = s["passage_tokens"]) {
        std::vector<std::size_t> b;
        read(s, "passage_tokens", "corpus.synth.", b);
        if (b.size() != 2) bad("corpus.synth.passage_tokens", "expected [min, max]");
        sc.min_passage_tokens = b[0];
        sc.max_passage_tokens = b[1];
      }
      cfg.synth = std::move(sc);
    }
  }

  if (const auto e = root["embedder"]) {
    check_keys(e, "embedder", {"name", "dim", "max_tokens", "prefix_policy", "backend", "endpoint",
                               "normalize", "batch_size", "rate_limit_rps", "retry_max_attempts",
                               "retry_base_ms", "timeout_ms"});
    read(e, "name", "embedder.", cfg.embedder.name);
    read(e, "dim", "embedder.", cfg.embedder.dim);
    read(e, "max_tokens", "embedder.", cfg.embedder.max_tokens);
    std::string s;
    if (e["prefix_policy"]) {
      read(e, "prefix_policy", "embedder.", s);
      cfg.embedder.prefix_policy = parse_prefix_policy(s);
    }
    if (e["backend"]) {
      read(e, "backend", "embedder.", s);
      cfg.embedder.backend = parse_backend_kind(s);
    }
    read_opt(e, "endpoint", "embedder.", cfg.embedder.endpoint);
    read(e, "normalize", "embedder.", cfg.embedder.normalize);
    read(e, "batch_size", "embedder.", cfg.batch_size);
    read(e, "rate_limit_rps", "embedder.", cfg.rate_limit_rps);
    read(e, "retry_max_attempts", "embedder.", cfg.retry_max_attempts);
    read(e, "retry_base_ms", "embedder.", cfg.retry_base_ms);
    read(e, "timeout_ms", "embedder.", cfg.timeout_ms);
  }

  if (const auto c = root["chunking"]) {
    check_keys(c, "chunking", {"strategy", "size", "tau", "trailing_min_fraction"});
    std::string s;
    if (c["strategy"]) {
      read(c, "strategy", "chunking.", s);
      cfg.chunking.strategy = parse_strategy(s);
    }
    read(c, "size", "chunking.", cfg.chunking.target_size);
    read(c, "tau", "chunking.", cfg.chunking.tau);
    read(c, "trailing_min_fraction", "chunking.", cfg.chunking.trailing_min_fraction);
  }

  if (const auto ev = root["eval"]) {
    check_keys(ev, "eval", {"k", "oversample"});
    read(ev, "k", "eval.", cfg.k_values);
    read(ev, "oversample", "eval.", cfg.oversample);
  }

  if (const auto h = root["hnsw"]) {
    check_keys(h, "hnsw", {"M", "ef_construction", "ef_search", "activation_threshold"});
    read(h, "M", "hnsw.", cfg.hnsw.M);
    read(h, "ef_construction", "hnsw.", cfg.hnsw.ef_construction);
    read(h, "ef_search", "hnsw.", cfg.hnsw.ef_search);
    read(h, "activation_threshold", "hnsw.", cfg.hnsw.activation_threshold);
  }

  if (const auto l = root["latency"]) {
    check_keys(l, "latency", {"warmups", "runs", "query_id"});
    read(l, "warmups", "latency.", cfg.latency.n_warmups);
    read(l, "runs", "latency.", cfg.latency.n_runs);
    read_opt(l, "query_id", "latency.", cfg.latency_query_id);
  }

  if (const auto a = root["ablation"]) {
    check_keys(a, "ablation", {"strategies", "sizes"});
    if (a["strategies"]) {
      std::vector<std::string> names;
      read(a, "strategies", "ablation.", names);
      cfg.ablation_strategies.clear();
      for (const auto& n : names) cfg.ablation_strategies.push_back(parse_strategy(n));
    }
    read(a, "sizes", "ablation.", cfg.ablation_sizes);
  }

  cfg.propagate_seed();
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), fs::absolute(path).parent_path());
}

std::string config_to_yaml(const RunConfig& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << cfg.seed;
  out << YAML::Key << "jobs" << YAML::Value << cfg.jobs;
  out << YAML::Key << "cache_dir" << YAML::Value << cfg.cache_dir.string();
  out << YAML::Key << "output_dir" << YAML::Value << cfg.output_dir.string();
  if (cfg.cost_per_million_tokens) {
    out << YAML::Key << "cost_per_million_tokens" << YAML::Value << *cfg.cost_per_million_tokens;
  }

  out << YAML::Key << "corpus" << YAML::Value << YAML::BeginMap;
  if (cfg.beir_path) {
    out << YAML::Key << "beir" << YAML::Value << cfg.beir_path->string();
    out << YAML::Key << "split" << YAML::Value << cfg.beir_split;
  }
  if (cfg.synth) {
    const auto& s = *cfg.synth;
    out << YAML::Key << "synth" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << s.name;
    out << YAML::Key << "passage_counts" << YAML::Value << YAML::BeginMap;
    for (const auto& [tag, n] : s.passage_counts) out << YAML::Key << tag << YAML::Value << n;
    out << YAML::EndMap;
    out << YAML::Key << "query_count" << YAML::Value << s.query_count;
    out << YAML::Key << "passage_tokens" << YAML::Value << YAML::Flow << YAML::BeginSeq
        << s.min_passage_tokens << s.max_passage_tokens << YAML::EndSeq;
    out << YAML::Key << "sources" << YAML::Value << YAML::BeginMap;
    for (const auto& [tag, p] : s.source_texts) out << YAML::Key << tag << YAML::Value << p.string();
    out << YAML::EndMap;
    out << YAML::Key << "templates" << YAML::Value << YAML::BeginSeq;
    for (const auto& t : s.templates) out << YAML::DoubleQuoted << t;
    out << YAML::EndSeq;
    out << YAML::EndMap;
  }
  out << YAML::EndMap;

  const auto& e = cfg.embedder;
  out << YAML::Key << "embedder" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << e.name;
  out << YAML::Key << "dim" << YAML::Value << e.dim;
  out << YAML::Key << "max_tokens" << YAML::Value << e.max_tokens;
  out << YAML::Key << "prefix_policy" << YAML::Value << to_string(e.prefix_policy);
  out << YAML::Key << "backend" << YAML::Value << to_string(e.backend);
  if (e.endpoint) out << YAML::Key << "endpoint" << YAML::Value << *e.endpoint;
  out << YAML::Key << "normalize" << YAML::Value << e.normalize;
  out << YAML::Key << "batch_size" << YAML::Value << cfg.batch_size;
  out << YAML::Key << "rate_limit_rps" << YAML::Value << cfg.rate_limit_rps;
  out << YAML::Key << "retry_max_attempts" << YAML::Value << cfg.retry_max_attempts;
  out << YAML::Key << "retry_base_ms" << YAML::Value << cfg.retry_base_ms;
  out << YAML::Key << "timeout_ms" << YAML::Value << cfg.timeout_ms;
  out << YAML::EndMap;

  out << YAML::Key << "chunking" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "strategy" << YAML::Value << to_string(cfg.chunking.strategy);
  out << YAML::Key << "size" << YAML::Value << cfg.chunking.target_size;
  out << YAML::Key << "tau" << YAML::Value << cfg.chunking.tau;
  out << YAML::Key << "trailing_min_fraction" << YAML::Value << cfg.chunking.trailing_min_fraction;
  out << YAML::EndMap;

  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "k" << YAML::Value << YAML::Flow << cfg.k_values;
  out << YAML::Key << "oversample" << YAML::Value << cfg.oversample;
  out << YAML::EndMap;

  out << YAML::Key << "hnsw" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "M" << YAML::Value << cfg.hnsw.M;
  out << YAML::Key << "ef_construction" << YAML::Value << cfg.hnsw.ef_construction;
  out << YAML::Key << "ef_search" << YAML::Value << cfg.hnsw.ef_search;
  out << YAML::Key << "activation_threshold" << YAML::Value << cfg.hnsw.activation_threshold;
  out << YAML::EndMap;

  out << YAML::Key << "latency" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "warmups" << YAML::Value << cfg.latency.n_warmups;
  out << YAML::Key << "runs" << YAML::Value << cfg.latency.n_runs;
  if (cfg.latency_query_id) out << YAML::Key << "query_id" << YAML::Value << *cfg.latency_query_id;
  out << YAML::EndMap;

  out << YAML::Key << "ablation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "strategies" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto s : cfg.ablation_strategies) out << to_string(s);
  out << YAML::EndSeq;
  out << YAML::Key << "sizes" << YAML::Value << YAML::Flow << cfg.ablation_sizes;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace retbench
