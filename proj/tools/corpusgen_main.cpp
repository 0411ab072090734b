#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "clip/corpus.hpp"

int main(int argc, char** argv) {
  CLI::App app{"emit the bundled synthetic corpus"};
  std::string out_dir = "data/synthetic";
  app.add_option("--out", out_dir, "output directory");
  CLI11_PARSE(app, argc, argv);

  const clip::Corpus corpus = clip::make_synthetic_corpus();
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir + "/corpus.jsonl", std::ios::binary);
    out << clip::corpus_jsonl(corpus);
  }
  {
    std::ofstream out(out_dir + "/truth.json", std::ios::binary);
    out << clip::corpus_truth_json(corpus);
  }
  std::cout << "wrote " << corpus.queries.size() << " query batches to " << out_dir
            << "\n";
  return 0;
}
