#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace glm {

// Word-level vocabulary with reserved special ids.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kCls = 1;
  static constexpr std::int32_t kMask = 2;
  static constexpr std::int32_t kUnk = 3;
  static constexpr std::int32_t kSep = 4;
  static constexpr std::int32_t kFirstWord = 5;

  Vocabulary();

  // Words with count >= min_count, most frequent first, ties alphabetical.
  // max_words == 0 means unbounded.
  static Vocabulary build(std::span<const std::string> texts, std::size_t min_count = 2,
                          std::size_t max_words = 0);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  static bool is_special(std::int32_t id) noexcept { return id >= 0 && id < kFirstWord; }

  std::vector<std::int32_t> ids(std::span<const std::string> words) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> lookup_;
};

// [cls] words..., clipped to max_len ids.
std::vector<std::int32_t> encode_single(const Vocabulary& vocab, std::span<const std::string> words,
                                        std::size_t max_len);
// [cls] a [sep] b, clipped to max_len ids.
std::vector<std::int32_t> encode_pair(const Vocabulary& vocab, std::span<const std::string> a,
                                      std::span<const std::string> b, std::size_t max_len);

}  // namespace glm
