#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "lingua/data/dataset.hpp"

namespace lingua::data {

namespace {

static_assert(std::endian::native == std::endian::little, "feature files assume a little-endian host");

constexpr char kMagic[4] = {'L', 'C', 'F', '1'};

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

bool get_u32(std::istream& is, std::uint32_t& v) {
  return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), 4));
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  auto p = stem;
  p += ext;
  return p;
}

}  // namespace

void write_dataset(const std::filesystem::path& stem, const std::vector<Utterance>& utts) {
  std::ofstream tsv(with_ext(stem, ".tsv"), std::ios::binary | std::ios::trunc);
  std::ofstream feat(with_ext(stem, ".feat"), std::ios::binary | std::ios::trunc);
  if (!tsv || !feat) throw DatasetError("cannot create dataset files at " + stem.string());
  feat.write(kMagic, 4);
  put_u32(feat, static_cast<std::uint32_t>(utts.size()));
  for (const auto& u : utts) {
    if (u.num_frames < 1 || u.features.size() != u.num_frames * u.feat_dim) {
      throw DatasetError("utterance " + u.id + " has inconsistent feature shape");
    }
    if (u.id.find_first_of("\t\n") != std::string::npos || u.transcript.find_first_of("\t\n") != std::string::npos) {
      throw DatasetError("utterance " + u.id + " contains a tab or newline");
    }
    if (!std::all_of(u.features.begin(), u.features.end(), [](float x) { return std::isfinite(x); })) {
      throw DatasetError("utterance " + u.id + " has non-finite features");
    }
    tsv << u.id << '\t' << u.lang << '\t' << u.transcript << '\n';
    put_u32(feat, static_cast<std::uint32_t>(u.id.size()));
    feat.write(u.id.data(), static_cast<std::streamsize>(u.id.size()));
    put_u32(feat, static_cast<std::uint32_t>(u.num_frames));
    put_u32(feat, static_cast<std::uint32_t>(u.feat_dim));
    feat.write(reinterpret_cast<const char*>(u.features.data()),
               static_cast<std::streamsize>(u.features.size() * sizeof(float)));
  }
  if (!tsv || !feat) throw DatasetError("write failed for " + stem.string());
}

std::vector<Utterance> read_dataset(const std::filesystem::path& stem) {
  const auto tsv_path = with_ext(stem, ".tsv");
  const auto feat_path = with_ext(stem, ".feat");
  std::ifstream tsv(tsv_path, std::ios::binary);
  if (!tsv) throw DatasetError("cannot open " + tsv_path.string());
  std::ifstream feat(feat_path, std::ios::binary);
  if (!feat) throw DatasetError("cannot open " + feat_path.string());

  std::vector<Utterance> utts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(tsv, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) {
      throw DatasetError(tsv_path.string() + ":" + std::to_string(line_no) + ": expected id<TAB>lang<TAB>transcript");
    }
    Utterance u;
    u.id = line.substr(0, a);
    const auto lang_text = line.substr(a + 1, b - a - 1);
    std::size_t used = 0;
    try {
      u.lang = std::stoi(lang_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != lang_text.size() || lang_text.empty() || u.lang < 0) {
      throw DatasetError(tsv_path.string() + ":" + std::to_string(line_no) + ": bad language id '" + lang_text + "'");
    }
    u.transcript = line.substr(b + 1);
    utts.push_back(std::move(u));
  }

  char magic[4];
  if (!feat.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DatasetError(feat_path.string() + ": bad magic, expected LCF1");
  }
  std::uint32_t count = 0;
  if (!get_u32(feat, count)) throw DatasetError(feat_path.string() + ": truncated header");
  if (count != utts.size()) {
    throw DatasetError(feat_path.string() + ": holds " + std::to_string(count) + " utterances but transcript file has " +
                       std::to_string(utts.size()));
  }
  for (auto& u : utts) {
    const std::string where = feat_path.string() + ": utterance " + u.id;
    std::uint32_t id_len = 0;
    if (!get_u32(feat, id_len)) throw DatasetError(where + ": truncated record");
    std::string id(id_len, '\0');
    if (!feat.read(id.data(), id_len)) throw DatasetError(where + ": truncated id");
    if (id != u.id) throw DatasetError(where + ": id mismatch, feature file has '" + id + "'");
    std::uint32_t T = 0, F = 0;
    if (!get_u32(feat, T) || !get_u32(feat, F)) throw DatasetError(where + ": truncated shape");
    if (T < 1 || F < 1) throw DatasetError(where + ": empty feature matrix");
    u.num_frames = T;
    u.feat_dim = F;
    u.features.resize(static_cast<std::size_t>(T) * F);
    if (!feat.read(reinterpret_cast<char*>(u.features.data()),
                   static_cast<std::streamsize>(u.features.size() * sizeof(float)))) {
      throw DatasetError(where + ": truncated feature payload");
    }
  }
  if (feat.peek() != std::char_traits<char>::eof()) throw DatasetError(feat_path.string() + ": trailing bytes");
  return utts;
}

std::vector<Batch> make_batches(const std::vector<Utterance>& utts, std::size_t max_frames_per_batch,
                                const bpe::Vocabulary& vocab, std::uint64_t seed) {
  std::vector<std::size_t> order(utts.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  std::vector<std::size_t> pending;
  std::size_t pending_max = 0;

  auto flush = [&] {
    if (pending.empty()) return;
    Batch b;
    b.max_frames = pending_max;
    b.feat_dim = utts[pending.front()].feat_dim;
    b.features.assign(pending.size() * pending_max * b.feat_dim, 0.0f);
    b.mask.assign(pending.size() * pending_max, 0);
    for (std::size_t i = 0; i < pending.size(); ++i) {
      const auto& u = utts[pending[i]];
      if (u.feat_dim != b.feat_dim) throw DatasetError("mixed feature widths in one dataset");
      std::copy(u.features.begin(), u.features.end(), b.features.begin() + i * pending_max * b.feat_dim);
      std::fill_n(b.mask.begin() + i * pending_max, u.num_frames, 1);
      b.frame_lengths.push_back(u.num_frames);
      b.labels.push_back(vocab.encode(u.transcript));
      b.label_lengths.push_back(b.labels.back().size());
      b.langs.push_back(u.lang);
      b.source_index.push_back(pending[i]);
    }
    batches.push_back(std::move(b));
    pending.clear();
    pending_max = 0;
  };

  for (auto idx : order) {
    const auto T = utts[idx].num_frames;
    if (T > max_frames_per_batch) {
      throw DatasetError("utterance " + utts[idx].id + " has " + std::to_string(T) +
                         " frames, more than the batch budget of " + std::to_string(max_frames_per_batch));
    }
    const auto new_max = std::max(pending_max, T);
    if ((pending.size() + 1) * new_max > max_frames_per_batch) flush();
    pending.push_back(idx);
    pending_max = std::max(pending_max, T);
  }
  flush();
  return batches;
}

}  // namespace lingua::data
