// Regenerates the synthetic inputs under samples/: three small corpora with
// manifests, dev examples for two tasks, and a mock provider table whose
// classification answers are known per document. Run from the repo root:
//   ./build/make_samples samples

#include <filesystem>
#include <iostream>

#include "datamix/io.hpp"
#include "datamix/rng.hpp"
#include "medu_fixture.hpp"

namespace fs = std::filesystem;
using namespace datamix;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_samples <samples dir>\n";
    return 2;
  }
  const fs::path root = argv[1];
  for (const char* sub : {"corpora", "dev", "manifests"}) fs::create_directories(root / sub);

  io::write_file(root / "mock_table.json", fixture::provider().to_json().dump(1) + "\n");
  io::write_file(root / "provider.json",
                 "{\n  \"kind\": \"mock\",\n  \"table\": \"mock_table.json\",\n"
                 "  \"temperature\": 0.0,\n  \"max_tokens\": 512\n}\n");

  for (const auto& task : fixture::kTasks) {
    std::string lines;
    for (const auto& e : fixture::dev_examples(task)) lines += nlohmann::json{{"text", e}}.dump() + "\n";
    io::write_file(root / "dev" / (task + ".jsonl"), lines);
  }

  // Manifest lengths are synthetic; each corpus gets its own size range.
  const std::uint64_t lo[3] = {500, 100, 2000}, hi[3] = {3000, 1500, 8000};
  std::string table = "name,tokens\n";
  for (std::size_t c = 0; c < fixture::kCorpora.size(); ++c) {
    const auto& name = fixture::kCorpora[c];
    const auto docs = fixture::corpus(c);
    std::string corpus;
    std::vector<Document> manifest;
    Rng rng(derive_seed(2024, c));
    std::uint64_t total = 0;
    for (const auto& d : docs) {
      corpus += nlohmann::json{{"id", d.id}, {"text", d.text}}.dump() + "\n";
      manifest.push_back({d.id, lo[c] + rng.below(hi[c] - lo[c] + 1)});
      total += manifest.back().token_count;
    }
    io::write_file(root / "corpora" / (name + ".jsonl"), corpus);
    io::write_file(root / "manifests" / (name + ".jsonl"), io::manifest_jsonl(manifest));
    table += name + "," + std::to_string(total) + "\n";
  }
  io::write_file(root / "tokens_small.csv", table);
  std::cout << "wrote samples to " << root << "\n";
  return 0;
}
