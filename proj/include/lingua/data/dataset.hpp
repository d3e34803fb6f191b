#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lingua/bpe/bpe.hpp"

namespace lingua::util {
class ConfigFile;
}

namespace lingua::data {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Utterance {
  std::string id;
  int lang = 0;
  std::size_t num_frames = 0;
  std::size_t feat_dim = 0;
  std::vector<float> features;  // num_frames x feat_dim, row-major
  std::string transcript;

  const float* frame(std::size_t t) const { return features.data() + t * feat_dim; }
  bool operator==(const Utterance&) const = default;
};

struct LangSpec {
  int lang = 0;
  std::string name;
  std::vector<std::string> words;
  std::vector<std::vector<double>> prototypes;  // one per word, feat_dim each
  std::size_t min_frames = 8;                   // frames per word, inclusive range
  std::size_t max_frames = 12;
  double noise = 1.0;
};

struct CorpusSpec {
  std::size_t feat_dim = 80;
  std::size_t min_words = 3;
  std::size_t max_words = 12;
  // Silence between words and at both ends: zero mean, noise of the language.
  std::size_t min_gap = 0;
  std::size_t max_gap = 0;
  std::vector<LangSpec> langs;
  // Utterances per language for each split.
  std::vector<std::size_t> train_counts, dev_counts, test_counts;
};

// Frame span [begin, end) of each word in a generated utterance.
using WordSpans = std::vector<std::pair<std::size_t, std::size_t>>;

std::vector<Utterance> generate_corpus(const CorpusSpec& corpus, const std::vector<std::size_t>& counts,
                                       std::uint64_t seed, const std::string& id_prefix = "utt",
                                       std::vector<WordSpans>* spans = nullptr);

// Builds prototypes from a `[corpus]` + `[langN]` description; see configs/.
CorpusSpec corpus_spec_from_config(const util::ConfigFile& cfg);

void write_dataset(const std::filesystem::path& stem, const std::vector<Utterance>& utts);
std::vector<Utterance> read_dataset(const std::filesystem::path& stem);

struct Batch {
  std::size_t max_frames = 0;
  std::size_t feat_dim = 0;
  std::vector<float> features;  // size() x max_frames x feat_dim, zero padded
  std::vector<std::size_t> frame_lengths;
  std::vector<std::vector<bpe::TokenId>> labels;
  std::vector<std::size_t> label_lengths;
  std::vector<int> langs;
  std::vector<std::uint8_t> mask;  // size() x max_frames
  std::vector<std::size_t> source_index;

  std::size_t size() const { return frame_lengths.size(); }
  const float* frame(std::size_t b, std::size_t t) const {
    return features.data() + (b * max_frames + t) * feat_dim;
  }
};

std::vector<Batch> make_batches(const std::vector<Utterance>& utts, std::size_t max_frames_per_batch,
                                const bpe::Vocabulary& vocab, std::uint64_t seed);

std::vector<std::string> transcripts(const std::vector<Utterance>& utts);
std::size_t count_langs(const std::vector<Utterance>& utts);

}  // namespace lingua::data
