#include "lingua/bpe/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace lingua::bpe {

namespace {

std::uint64_t pair_key(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

// Replaces non-overlapping occurrences of (a, b), scanning left to right.
void apply_merge(std::vector<TokenId>& seq, TokenId a, TokenId b, TokenId merged) {
  if (seq.size() < 2) return;
  std::size_t w = 0;
  for (std::size_t r = 0; r < seq.size();) {
    if (r + 1 < seq.size() && seq[r] == a && seq[r + 1] == b) {
      seq[w++] = merged;
      r += 2;
    } else {
      seq[w++] = seq[r++];
    }
  }
  seq.resize(w);
}

template <class Fn>
void for_each_word(std::string_view text, Fn&& fn) {
  std::size_t i = 0;
  while (i < text.size()) {
    const bool space = is_space_byte(static_cast<unsigned char>(text[i]));
    std::size_t j = i;
    while (j < text.size() && is_space_byte(static_cast<unsigned char>(text[j])) == space) ++j;
    fn(text.substr(i, j - i), space);
    i = j;
  }
}

}  // namespace

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::size_t first_invalid_utf8(std::string_view s) {
  const auto* b = reinterpret_cast<const unsigned char*>(s.data());
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = b[i];
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > n) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((b[i + k] & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (b[i + k] & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::string_view::npos;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<Merge>{}) {}

Vocabulary::Vocabulary(std::vector<Merge> merges) : merges_(std::move(merges)) {
  tokens_.reserve(256 + merges_.size());
  for (int b = 0; b < 256; ++b) tokens_.emplace_back(1, static_cast<char>(b));
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    const auto [l, r] = merges_[i];
    const auto limit = static_cast<TokenId>(tokens_.size());
    if (l < 0 || r < 0 || l >= limit || r >= limit) {
      throw std::invalid_argument("merge " + std::to_string(i) + " references undefined token");
    }
    tokens_.push_back(tokens_[l] + tokens_[r]);
    rank_index_.emplace_back(pair_key(l, r), static_cast<int>(i));
  }
  std::sort(rank_index_.begin(), rank_index_.end());
}

const std::string& Vocabulary::token_bytes(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

void Vocabulary::encode_word(std::string_view word, std::vector<TokenId>& out) const {
  std::vector<TokenId> seq;
  seq.reserve(word.size());
  for (unsigned char c : word) seq.push_back(c);
  // Lowest-rank pair first; equivalent to replaying merges in training order
  // because a merge never creates an adjacency of two older tokens.
  while (seq.size() > 1) {
    int best_rank = -1;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      const auto key = pair_key(seq[i], seq[i + 1]);
      auto it = std::lower_bound(rank_index_.begin(), rank_index_.end(), std::make_pair(key, -1));
      if (it != rank_index_.end() && it->first == key && (best_rank < 0 || it->second < best_rank)) {
        best_rank = it->second;
      }
    }
    if (best_rank < 0) break;
    const auto [a, b] = merges_[best_rank];
    apply_merge(seq, a, b, 256 + best_rank);
  }
  out.insert(out.end(), seq.begin(), seq.end());
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for_each_word(text, [&](std::string_view piece, bool space) {
    if (space) {
      for (unsigned char c : piece) out.push_back(c);
    } else {
      encode_word(piece, out);
    }
  });
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tokens_.size()) {
      throw DecodeError("token id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                            " outside vocabulary of " + std::to_string(tokens_.size()),
                        out.size());
    }
    out += tokens_[ids[i]];
  }
  const auto bad = first_invalid_utf8(out);
  if (bad != std::string_view::npos) {
    throw DecodeError("decoded bytes are not valid UTF-8 at byte offset " + std::to_string(bad), bad);
  }
  return out;
}

std::string Vocabulary::decode_lossy(std::span<const TokenId> ids) const {
  std::string raw;
  for (auto id : ids) {
    if (id >= 0 && static_cast<std::size_t>(id) < tokens_.size()) raw += tokens_[id];
  }
  std::string out;
  std::string_view rest = raw;
  while (!rest.empty()) {
    const auto bad = first_invalid_utf8(rest);
    if (bad == std::string_view::npos) {
      out += rest;
      break;
    }
    out += rest.substr(0, bad);
    out += "\xEF\xBF\xBD";
    rest.remove_prefix(bad + 1);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "bpe-v1 " << size() << '\n';
  for (const auto& [l, r] : merges_) os << l << ' ' << r << '\n';
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ":1: empty vocabulary file");
  std::istringstream header(line);
  std::string tag;
  std::size_t size = 0;
  if (!(header >> tag >> size) || tag != "bpe-v1" || size < 256) {
    throw std::runtime_error(path.string() + ":1: expected header 'bpe-v1 <size>'");
  }
  std::vector<Merge> merges;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TokenId l, r;
    if (!(ls >> l >> r)) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed merge");
    merges.emplace_back(l, r);
  }
  if (merges.size() + 256 != size) {
    throw std::runtime_error(path.string() + ": header declares " + std::to_string(size) + " tokens but file has " +
                             std::to_string(merges.size() + 256));
  }
  return Vocabulary(std::move(merges));
}

Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t target_size) {
  if (target_size < 256) throw std::invalid_argument("target vocabulary size must be at least 256");
  if (corpus.empty()) throw std::invalid_argument("empty training corpus");

  std::map<std::string, long> word_counts;
  for (const auto& text : corpus) {
    for_each_word(text, [&](std::string_view piece, bool space) {
      if (!space) ++word_counts[std::string(piece)];
    });
  }
  std::vector<std::vector<TokenId>> words;
  std::vector<long> freq;
  for (const auto& [w, c] : word_counts) {
    words.emplace_back(w.begin(), w.end());
    for (auto& id : words.back()) id = static_cast<unsigned char>(id);
    freq.push_back(c);
  }

  std::vector<Merge> merges;
  std::map<Merge, long> counts;
  std::vector<std::pair<Merge, std::size_t>> last_seen;
  while (256 + merges.size() < target_size) {
    counts.clear();
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& seq = words[w];
      last_seen.clear();
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        const Merge p{seq[i], seq[i + 1]};
        auto it = std::find_if(last_seen.begin(), last_seen.end(), [&](const auto& e) { return e.first == p; });
        if (it != last_seen.end()) {
          if (it->second + 1 == i) continue;  // overlaps the occurrence just counted
          it->second = i;
        } else {
          last_seen.emplace_back(p, i);
        }
        counts[p] += freq[w];
      }
    }
    // std::map iterates pairs in ascending order, so the first maximum wins ties.
    const Merge* best = nullptr;
    long best_count = 0;
    for (const auto& [p, c] : counts) {
      if (c > best_count) {
        best = &p;
        best_count = c;
      }
    }
    if (best == nullptr || best_count < 2) break;
    const Merge chosen = *best;
    const auto id = static_cast<TokenId>(256 + merges.size());
    merges.push_back(chosen);
    for (auto& seq : words) apply_merge(seq, chosen.first, chosen.second, id);
  }
  return Vocabulary(std::move(merges));
}

}  // namespace lingua::bpe
