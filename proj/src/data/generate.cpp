#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>

#include "lingua/data/dataset.hpp"
#include "lingua/util/config_file.hpp"

namespace lingua::data {

namespace {

std::vector<double> gaussian_vector(std::uint64_t seed, std::uint64_t stream, std::size_t dim, double scale) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(dim);
  for (auto& x : v) x = scale * normal(rng);
  return v;
}

std::pair<std::size_t, std::size_t> range_of(const util::ConfigFile& cfg, const std::string& key,
                                             std::pair<std::size_t, std::size_t> fallback) {
  if (!cfg.has(key)) return fallback;
  const auto v = cfg.get_ints(key);
  if (v.size() != 2 || v[0] < 0 || v[1] < v[0]) {
    throw util::ConfigError("key '" + key + "' must be 'min max' with 0 <= min <= max");
  }
  return {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1])};
}

}  // namespace

std::vector<Utterance> generate_corpus(const CorpusSpec& corpus, const std::vector<std::size_t>& counts,
                                       std::uint64_t seed, const std::string& id_prefix,
                                       std::vector<WordSpans>* spans) {
  if (corpus.langs.size() < 2) throw DatasetError("corpus needs at least two languages");
  if (counts.size() != corpus.langs.size()) throw DatasetError("one utterance count per language required");
  if (corpus.min_words < 1 || corpus.max_words < corpus.min_words) throw DatasetError("bad words-per-utterance range");
  for (std::size_t k = 0; k < corpus.langs.size(); ++k) {
    const auto& spec = corpus.langs[k];
    if (spec.words.empty()) throw DatasetError("language " + std::to_string(k) + " has an empty alphabet");
    if (spec.prototypes.size() != spec.words.size()) throw DatasetError("prototype count != word count");
    for (const auto& p : spec.prototypes) {
      if (p.size() != corpus.feat_dim) throw DatasetError("prototype width != feat_dim");
    }
    if (spec.min_frames < 1 || spec.max_frames < spec.min_frames) throw DatasetError("bad frames-per-word range");
    if (!(spec.noise >= 0.0)) throw DatasetError("negative noise scale");
    if (counts[k] < 1) throw DatasetError("utterance count must be at least 1");
  }

  std::vector<Utterance> out;
  if (spans) spans->clear();
  const std::size_t F = corpus.feat_dim;
  for (std::size_t k = 0; k < corpus.langs.size(); ++k) {
    const auto& spec = corpus.langs[k];
    for (std::size_t i = 0; i < counts[k]; ++i) {
      // Independent stream per utterance.
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(i)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> normal(0.0, 1.0);
      std::uniform_int_distribution<std::size_t> n_words(corpus.min_words, corpus.max_words);
      std::uniform_int_distribution<std::size_t> pick(0, spec.words.size() - 1);
      std::uniform_int_distribution<std::size_t> dur(spec.min_frames, spec.max_frames);
      std::uniform_int_distribution<std::size_t> gap(corpus.min_gap, corpus.max_gap);

      Utterance u;
      char buf[32];
      std::snprintf(buf, sizeof(buf), "-l%zu-%05zu", k, i);
      u.id = id_prefix + buf;
      u.lang = spec.lang;
      u.feat_dim = F;
      WordSpans word_spans;

      auto emit = [&](const std::vector<double>* mean, std::size_t frames) {
        for (std::size_t t = 0; t < frames; ++t) {
          for (std::size_t f = 0; f < F; ++f) {
            const double m = mean ? (*mean)[f] : 0.0;
            u.features.push_back(static_cast<float>(m + spec.noise * normal(rng)));
          }
        }
        u.num_frames += frames;
      };

      const std::size_t n = n_words(rng);
      emit(nullptr, gap(rng));
      for (std::size_t w = 0; w < n; ++w) {
        const std::size_t idx = pick(rng);
        if (w) u.transcript += ' ';
        u.transcript += spec.words[idx];
        const std::size_t begin = u.num_frames;
        emit(&spec.prototypes[idx], dur(rng));
        word_spans.emplace_back(begin, u.num_frames);
        emit(nullptr, gap(rng));
      }
      out.push_back(std::move(u));
      if (spans) spans->push_back(std::move(word_spans));
    }
  }
  return out;
}

CorpusSpec corpus_spec_from_config(const util::ConfigFile& cfg) {
  CorpusSpec corpus;
  corpus.feat_dim = static_cast<std::size_t>(cfg.get_int_or("corpus.feat_dim", 80));
  if (corpus.feat_dim < 1) throw util::ConfigError("corpus.feat_dim must be positive");
  std::tie(corpus.min_words, corpus.max_words) = range_of(cfg, "corpus.words_per_utterance", {3, 12});
  std::tie(corpus.min_gap, corpus.max_gap) = range_of(cfg, "corpus.gap_frames", {0, 0});
  const auto proto_seed = static_cast<std::uint64_t>(cfg.get_int_or("corpus.prototype_seed", 1));
  const double proto_scale = cfg.get_double_or("corpus.prototype_scale", 1.0);

  std::vector<std::string> lang_sections;
  for (const auto& s : cfg.sections()) {
    if (s.rfind("lang", 0) == 0) lang_sections.push_back(s);
  }
  // Prototype banks are shared between languages that name the same bank,
  // so identical slots sound alike up to each language's accent.
  std::map<long, std::vector<std::vector<double>>> banks;
  for (std::size_t k = 0; k < lang_sections.size(); ++k) {
    const auto& s = lang_sections[k];
    if (s != "lang" + std::to_string(k)) {
      throw util::ConfigError("language sections must be named lang0, lang1, ... in order; found [" + s + "]");
    }
    LangSpec spec;
    spec.lang = static_cast<int>(k);
    spec.name = cfg.get_or(s + ".name", s);
    spec.words = cfg.get_words(s + ".words");
    if (spec.words.empty()) throw DatasetError("[" + s + "] has an empty alphabet");
    std::tie(spec.min_frames, spec.max_frames) = range_of(cfg, s + ".frames_per_word", {8, 12});
    spec.noise = cfg.get_double_or(s + ".noise", 1.0);
    const long bank = cfg.get_int_or(s + ".bank", static_cast<long>(k));
    std::vector<long> slots;
    if (cfg.has(s + ".slots")) {
      slots = cfg.get_ints(s + ".slots");
    } else {
      for (std::size_t i = 0; i < spec.words.size(); ++i) slots.push_back(static_cast<long>(i));
    }
    if (slots.size() != spec.words.size()) throw util::ConfigError("[" + s + "] slots must match words");
    const double accent = cfg.get_double_or(s + ".accent", 0.0);
    const auto accent_vec = gaussian_vector(proto_seed, 1000000 + k, corpus.feat_dim, accent);
    auto& bank_vecs = banks[bank];
    for (long slot : slots) {
      if (slot < 0) throw util::ConfigError("[" + s + "] negative slot");
      while (bank_vecs.size() <= static_cast<std::size_t>(slot)) {
        bank_vecs.push_back(gaussian_vector(proto_seed, static_cast<std::uint64_t>(bank) * 1000 + bank_vecs.size(),
                                            corpus.feat_dim, proto_scale));
      }
      auto p = bank_vecs[slot];
      for (std::size_t f = 0; f < p.size(); ++f) p[f] += accent_vec[f];
      spec.prototypes.push_back(std::move(p));
    }
    corpus.train_counts.push_back(static_cast<std::size_t>(cfg.get_int_or(s + ".train", 100)));
    corpus.dev_counts.push_back(static_cast<std::size_t>(cfg.get_int_or(s + ".dev", 20)));
    corpus.test_counts.push_back(static_cast<std::size_t>(cfg.get_int_or(s + ".test", 20)));
    corpus.langs.push_back(std::move(spec));
  }
  if (corpus.langs.size() < 2) throw util::ConfigError("corpus spec needs at least two [langN] sections");
  return corpus;
}

std::vector<std::string> transcripts(const std::vector<Utterance>& utts) {
  std::vector<std::string> out;
  out.reserve(utts.size());
  for (const auto& u : utts) out.push_back(u.transcript);
  return out;
}

std::size_t count_langs(const std::vector<Utterance>& utts) {
  int k = -1;
  for (const auto& u : utts) k = std::max(k, u.lang);
  return static_cast<std::size_t>(k + 1);
}

}  // namespace lingua::data
