#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lingua::bpe {

using TokenId = int;
using Merge = std::pair<TokenId, TokenId>;

class DecodeError : public std::runtime_error {
 public:
  DecodeError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// Byte-level vocabulary: ids 0..255 are raw bytes, id 256 + i is the i-th
// merge. Tokens never contain whitespace.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<Merge> merges);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& token_bytes(TokenId id) const;

  std::vector<TokenId> encode(std::string_view text) const;
  // Strict inverse of encode; throws DecodeError on bad ids or invalid UTF-8.
  std::string decode(std::span<const TokenId> ids) const;
  // For model hypotheses, which may split multi-byte characters: invalid
  // sequences become U+FFFD instead of failing.
  std::string decode_lossy(std::span<const TokenId> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void encode_word(std::string_view word, std::vector<TokenId>& out) const;

  std::vector<Merge> merges_;
  std::vector<std::string> tokens_;
  // (left << 32 | right) -> merge rank, sorted for binary search.
  std::vector<std::pair<std::uint64_t, int>> rank_index_;
};

// Greedy most-frequent-pair merging over whitespace-separated words, with
// non-overlapping left-to-right pair counts. Stops at target_size tokens or
// when the best pair occurs fewer than twice; ties go to the smallest
// (left, right) pair.
Vocabulary train_bpe(std::span<const std::string> corpus, std::size_t target_size);

bool is_space_byte(unsigned char c);
// Offset of the first invalid UTF-8 byte, or npos when `bytes` is valid.
std::size_t first_invalid_utf8(std::string_view bytes);

}  // namespace lingua::bpe
