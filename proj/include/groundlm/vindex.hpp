#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "groundlm/embed.hpp"

namespace glm {

enum class SourceKind : std::uint8_t { caption = 0, synset = 1 };

// Region features of every image: exactly n_regions rows of feat_dim floats.
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::uint32_t n_regions, std::uint32_t feat_dim)
      : n_regions_(n_regions), feat_dim_(feat_dim) {}
  FeatureStore(const FeatureStore& other);
  FeatureStore& operator=(const FeatureStore& other);
  FeatureStore(FeatureStore&& other) noexcept;
  FeatureStore& operator=(FeatureStore&& other) noexcept;

  std::uint32_t n_regions() const noexcept { return n_regions_; }
  std::uint32_t feat_dim() const noexcept { return feat_dim_; }
  std::size_t row_floats() const noexcept { return std::size_t(n_regions_) * feat_dim_; }
  std::size_t size() const noexcept { return ids_.size(); }

  // Returns the ordinal of the new image. Throws on a duplicate id or a
  // feature block of the wrong size.
  std::size_t add(std::string id, std::span<const float> features);

  std::optional<std::size_t> find(const std::string& id) const;
  const std::string& id(std::size_t ordinal) const { return ids_.at(ordinal); }

  // N x d_v block of one image. Every call is counted.
  std::span<const float> features(std::size_t ordinal) const;
  std::uint64_t read_count() const noexcept { return reads_.load(); }

  // Overwrites the feature block of an existing image.
  void replace(std::size_t ordinal, std::span<const float> features);

 private:
  std::uint32_t n_regions_ = 0;
  std::uint32_t feat_dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> lookup_;
  mutable std::atomic<std::uint64_t> reads_{0};
};

// VFTR file plus a "<path>.manifest" sidecar of "id<TAB>byte offset" lines.
void save_feature_store(const FeatureStore& store, const std::filesystem::path& path);
FeatureStore load_feature_store(const std::filesystem::path& path);
void write_feature_store(const FeatureStore& store, std::ostream& out,
                         std::vector<std::uint64_t>* offsets = nullptr);
FeatureStore read_feature_store(std::istream& in);

struct IndexEntry {
  std::string id;
  std::vector<float> key;  // raw, normalised on insertion
  std::uint64_t payload_ref = 0;
  SourceKind source_kind = SourceKind::caption;
};

struct KeyedImageView {
  const std::string& id;
  std::span<const float> key;
  std::uint64_t payload_ref;
  SourceKind source_kind;
};

struct SearchHit {
  std::string id;
  std::size_t position = 0;  // insertion position in the index
  float similarity = 0;

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

// Archive of unit-norm image keys. Immutable once built.
class ImageKeyIndex {
 public:
  static constexpr std::size_t kDefaultShardSize = 4096;

  ImageKeyIndex() = default;
  explicit ImageKeyIndex(std::size_t dim, std::size_t shard_size = kDefaultShardSize)
      : dim_(dim), shard_size_(shard_size == 0 ? kDefaultShardSize : shard_size) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t shard_size() const noexcept { return shard_size_; }
  KeyedImageView item(std::size_t i) const;
  std::optional<std::size_t> find(const std::string& id) const;

  // Exact top-K by cosine; ties broken by ascending id. threads > 1 scans
  // shards concurrently and merges to the same list as a serial scan.
  std::vector<SearchHit> top_k(const QueryVector& query, std::size_t k,
                               std::size_t threads = 1) const;
  std::vector<SearchHit> top_k(std::span<const float> query, std::size_t k,
                               std::size_t threads = 1) const;

  // Appends an already unit-normalised key. Throws on a duplicate id or a
  // dimension mismatch.
  void append(std::string id, std::span<const float> unit_key, std::uint64_t payload,
              SourceKind kind);

  friend bool operator==(const ImageKeyIndex& a, const ImageKeyIndex& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.keys_ == b.keys_ &&
           a.payload_ == b.payload_ && a.kinds_ == b.kinds_;
  }

 private:
  std::size_t dim_ = 0;
  std::size_t shard_size_ = kDefaultShardSize;
  std::vector<std::string> ids_;
  std::vector<float> keys_;
  std::vector<std::uint64_t> payload_;
  std::vector<SourceKind> kinds_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct BuildReport {
  std::size_t inserted = 0;
  std::size_t skipped_degenerate = 0;
};

// Normalises keys and preserves insertion order. Zero keys are skipped and
// counted; duplicate ids and mixed dimensions throw.
ImageKeyIndex build_index(std::span<const IndexEntry> entries, BuildReport* report = nullptr,
                          std::size_t shard_size = ImageKeyIndex::kDefaultShardSize);

void save_index(const ImageKeyIndex& index, const std::filesystem::path& path);
ImageKeyIndex load_index(const std::filesystem::path& path);
void write_index(const ImageKeyIndex& index, std::ostream& out);
ImageKeyIndex read_index(std::istream& in);

}  // namespace glm
