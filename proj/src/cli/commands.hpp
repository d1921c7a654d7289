#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "retbench/config.hpp"
#include "retbench/corpus.hpp"
#include "retbench/embedding.hpp"

namespace retbench::cli {

struct Context {
  RunConfig config;
  std::ostream& out;
  std::ostream& err;
};

Corpus load_corpus(const Context& ctx);
std::shared_ptr<Embedder> make_embedder(const RunConfig& cfg);
/// Writes resolved_config.yaml into the output directory.
void echo_config(const RunConfig& cfg, const std::filesystem::path& dir);
void write_text(const std::filesystem::path& path, const std::string& text);

void cmd_synth(Context& ctx, const std::filesystem::path& out_dir);
void cmd_chunk(Context& ctx);
void cmd_embed(Context& ctx);
void cmd_index(Context& ctx);
void cmd_eval(Context& ctx);
void cmd_latency(Context& ctx);
void cmd_ablate(Context& ctx);
/// Returns false when verify found corrupt entries.
bool cmd_cache(Context& ctx, const std::string& action);
void cmd_report(Context& ctx, const std::vector<std::filesystem::path>& runs);

}  // namespace retbench::cli
