#include "groundlm/vindex.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "groundlm/binary_io.hpp"

namespace glm {

namespace {

constexpr char kIndexMagic[5] = "VIDX";
constexpr char kStoreMagic[5] = "VFTR";
constexpr std::uint32_t kIndexVersion = 1;
constexpr std::uint32_t kStoreVersion = 1;

struct Candidate {
  float sim;
  std::size_t pos;
};

// Strict weak order: higher similarity first, then ascending id.
struct Better {
  const std::vector<std::string>* ids;
  bool operator()(const Candidate& a, const Candidate& b) const {
    if (a.sim != b.sim) return a.sim > b.sim;
    return (*ids)[a.pos] < (*ids)[b.pos];
  }
};

void scan_range(const float* keys, std::size_t dim, const float* q, std::size_t begin,
                std::size_t end, std::size_t k, const Better& better,
                std::vector<Candidate>& heap) {
  heap.clear();
  heap.reserve(k + 1);
  for (std::size_t i = begin; i < end; ++i) {
    const float* key = keys + i * dim;
    float s = 0;
    for (std::size_t j = 0; j < dim; ++j) s += key[j] * q[j];
    Candidate c{s, i};
    if (heap.size() < k) {
      heap.push_back(c);
      std::push_heap(heap.begin(), heap.end(), better);
    } else if (better(c, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), better);
      heap.back() = c;
      std::push_heap(heap.begin(), heap.end(), better);
    }
  }
}

}  // namespace

// ---- FeatureStore -----------------------------------------------------------

FeatureStore::FeatureStore(const FeatureStore& o)
    : n_regions_(o.n_regions_),
      feat_dim_(o.feat_dim_),
      ids_(o.ids_),
      data_(o.data_),
      lookup_(o.lookup_),
      reads_(0) {}

FeatureStore& FeatureStore::operator=(const FeatureStore& o) {
  if (this != &o) {
    n_regions_ = o.n_regions_;
    feat_dim_ = o.feat_dim_;
    ids_ = o.ids_;
    data_ = o.data_;
    lookup_ = o.lookup_;
    reads_ = 0;
  }
  return *this;
}

FeatureStore::FeatureStore(FeatureStore&& o) noexcept
    : n_regions_(o.n_regions_),
      feat_dim_(o.feat_dim_),
      ids_(std::move(o.ids_)),
      data_(std::move(o.data_)),
      lookup_(std::move(o.lookup_)),
      reads_(o.reads_.load()) {}

FeatureStore& FeatureStore::operator=(FeatureStore&& o) noexcept {
  n_regions_ = o.n_regions_;
  feat_dim_ = o.feat_dim_;
  ids_ = std::move(o.ids_);
  data_ = std::move(o.data_);
  lookup_ = std::move(o.lookup_);
  reads_ = o.reads_.load();
  return *this;
}

std::size_t FeatureStore::add(std::string id, std::span<const float> features) {
  if (features.size() != row_floats()) {
    throw std::invalid_argument("feature store: image '" + id + "' has " +
                                std::to_string(features.size()) + " floats, expected " +
                                std::to_string(row_floats()));
  }
  if (lookup_.contains(id)) throw std::invalid_argument("feature store: duplicate id '" + id + "'");
  const std::size_t ordinal = ids_.size();
  lookup_.emplace(id, ordinal);
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), features.begin(), features.end());
  return ordinal;
}

std::optional<std::size_t> FeatureStore::find(const std::string& id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> FeatureStore::features(std::size_t ordinal) const {
  if (ordinal >= ids_.size()) {
    throw std::out_of_range("feature store: ordinal " + std::to_string(ordinal) +
                            " out of range (" + std::to_string(ids_.size()) + " images)");
  }
  reads_.fetch_add(1, std::memory_order_relaxed);
  return std::span<const float>(data_).subspan(ordinal * row_floats(), row_floats());
}

void FeatureStore::replace(std::size_t ordinal, std::span<const float> features) {
  if (ordinal >= ids_.size() || features.size() != row_floats()) {
    throw std::invalid_argument("feature store: bad replacement for ordinal " +
                                std::to_string(ordinal));
  }
  std::copy(features.begin(), features.end(), data_.begin() + ordinal * row_floats());
}

void write_feature_store(const FeatureStore& store, std::ostream& out,
                         std::vector<std::uint64_t>* offsets) {
  io::write_bytes(out, kStoreMagic, 4);
  io::write_pod<std::uint32_t>(out, kStoreVersion);
  io::write_pod<std::uint32_t>(out, store.n_regions());
  io::write_pod<std::uint32_t>(out, store.feat_dim());
  io::write_pod<std::uint64_t>(out, store.size());
  std::uint64_t at = 4 + 4 + 4 + 4 + 8;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (offsets) offsets->push_back(at);
    const std::string& id = store.id(i);
    io::write_string(out, id);
    const auto block = store.features(i);
    io::write_bytes(out, block.data(), block.size() * sizeof(float));
    at += 4 + id.size() + block.size() * sizeof(float);
  }
}

FeatureStore read_feature_store(std::istream& in) {
  io::expect_magic(in, kStoreMagic, "feature store");
  io::expect_version(io::read_pod<std::uint32_t>(in, "version"), kStoreVersion, "feature store");
  const auto n = io::read_pod<std::uint32_t>(in, "region count");
  const auto dv = io::read_pod<std::uint32_t>(in, "feature dim");
  const auto count = io::read_pod<std::uint64_t>(in, "image count");
  if (n == 0 || dv == 0) {
    throw io::FormatError("feature store: invalid shape N=" + std::to_string(n) +
                          " d_v=" + std::to_string(dv));
  }
  FeatureStore store(n, dv);
  std::vector<float> block(std::size_t(n) * dv);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id = io::read_string(in, "image id");
    io::read_bytes(in, block.data(), block.size() * sizeof(float), "features");
    store.add(std::move(id), block);
  }
  return store;
}

void save_feature_store(const FeatureStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write feature store " + path.string());
  std::vector<std::uint64_t> offsets;
  write_feature_store(store, out, &offsets);
  std::ofstream manifest(path.string() + ".manifest");
  for (std::size_t i = 0; i < store.size(); ++i) {
    manifest << store.id(i) << '\t' << offsets[i] << '\n';
  }
  if (!out || !manifest) throw std::runtime_error("failed writing " + path.string());
}

FeatureStore load_feature_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open feature store " + path.string());
  FeatureStore s = read_feature_store(in);
  return s;
}

// ---- ImageKeyIndex ----------------------------------------------------------

KeyedImageView ImageKeyIndex::item(std::size_t i) const {
  return KeyedImageView{ids_.at(i), std::span<const float>(keys_).subspan(i * dim_, dim_),
                        payload_[i], kinds_[i]};
}

std::optional<std::size_t> ImageKeyIndex::find(const std::string& id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

void ImageKeyIndex::append(std::string id, std::span<const float> unit_key,
                           std::uint64_t payload, SourceKind kind) {
  if (unit_key.size() != dim_) {
    throw std::invalid_argument("index: key for '" + id + "' has dimension " +
                                std::to_string(unit_key.size()) + ", index has " +
                                std::to_string(dim_));
  }
  if (lookup_.contains(id)) throw std::invalid_argument("index: duplicate id '" + id + "'");
  lookup_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  keys_.insert(keys_.end(), unit_key.begin(), unit_key.end());
  payload_.push_back(payload);
  kinds_.push_back(kind);
}

std::vector<SearchHit> ImageKeyIndex::top_k(const QueryVector& query, std::size_t k,
                                            std::size_t threads) const {
  if (query.is_degenerate) throw std::invalid_argument("top_k: degenerate query");
  return top_k(std::span<const float>(query.values), k, threads);
}

std::vector<SearchHit> ImageKeyIndex::top_k(std::span<const float> query, std::size_t k,
                                            std::size_t threads) const {
  if (k == 0) throw std::invalid_argument("top_k: K must be >= 1");
  if (query.size() != dim_) {
    throw std::invalid_argument("top_k: query dimension " + std::to_string(query.size()) +
                                " does not match index dimension " + std::to_string(dim_));
  }
  double norm = 0;
  for (float v : query) norm += double(v) * v;
  if (norm == 0) throw std::invalid_argument("top_k: degenerate query");
  std::vector<float> q(dim_);
  const double inv = 1.0 / std::sqrt(norm);
  for (std::size_t i = 0; i < dim_; ++i) q[i] = static_cast<float>(query[i] * inv);

  const Better better{&ids_};
  const std::size_t n = size();
  std::vector<Candidate> merged;
  if (threads <= 1 || n <= shard_size_) {
    scan_range(keys_.data(), dim_, q.data(), 0, n, k, better, merged);
  } else {
    const std::size_t shards = (n + shard_size_ - 1) / shard_size_;
    std::vector<std::vector<Candidate>> partial(shards);
    std::vector<std::thread> pool;
    const std::size_t workers = std::min(threads, shards);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t s = w; s < shards; s += workers) {
          const std::size_t begin = s * shard_size_;
          scan_range(keys_.data(), dim_, q.data(), begin, std::min(n, begin + shard_size_), k,
                     better, partial[s]);
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& p : partial) merged.insert(merged.end(), p.begin(), p.end());
  }
  std::sort(merged.begin(), merged.end(), better);
  if (merged.size() > k) merged.resize(k);
  std::vector<SearchHit> hits;
  hits.reserve(merged.size());
  for (const auto& c : merged) hits.push_back(SearchHit{ids_[c.pos], c.pos, c.sim});
  return hits;
}

ImageKeyIndex build_index(std::span<const IndexEntry> entries, BuildReport* report,
                          std::size_t shard_size) {
  BuildReport rep;
  ImageKeyIndex index(entries.empty() ? 0 : entries.front().key.size(), shard_size);
  std::vector<float> unit;
  for (const auto& e : entries) {
    if (e.key.size() != index.dim()) {
      throw std::invalid_argument("build_index: key for '" + e.id + "' has dimension " +
                                  std::to_string(e.key.size()) + ", expected " +
                                  std::to_string(index.dim()));
    }
    double norm = 0;
    for (float v : e.key) norm += double(v) * v;
    if (norm == 0) {
      ++rep.skipped_degenerate;
      continue;
    }
    const double inv = 1.0 / std::sqrt(norm);
    unit.resize(e.key.size());
    for (std::size_t i = 0; i < e.key.size(); ++i) unit[i] = static_cast<float>(e.key[i] * inv);
    index.append(e.id, unit, e.payload_ref, e.source_kind);
    ++rep.inserted;
  }
  if (report) *report = rep;
  return index;
}

void write_index(const ImageKeyIndex& index, std::ostream& out) {
  io::write_bytes(out, kIndexMagic, 4);
  io::write_pod<std::uint32_t>(out, kIndexVersion);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  io::write_pod<std::uint64_t>(out, index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto item = index.item(i);
    io::write_string(out, item.id);
    io::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(item.source_kind));
    io::write_pod<std::uint64_t>(out, item.payload_ref);
    io::write_bytes(out, item.key.data(), item.key.size() * sizeof(float));
  }
}

ImageKeyIndex read_index(std::istream& in) {
  io::expect_magic(in, kIndexMagic, "index");
  io::expect_version(io::read_pod<std::uint32_t>(in, "version"), kIndexVersion, "index");
  const auto dim = io::read_pod<std::uint32_t>(in, "dim");
  const auto count = io::read_pod<std::uint64_t>(in, "count");
  if (dim == 0 && count > 0) throw io::FormatError("index: invalid dim 0");
  ImageKeyIndex index(dim);
  std::vector<float> key(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string id = io::read_string(in, "item id");
    const auto kind = io::read_pod<std::uint8_t>(in, "source kind");
    if (kind > 1) throw io::FormatError("index: invalid source kind " + std::to_string(kind));
    const auto payload = io::read_pod<std::uint64_t>(in, "payload ref");
    io::read_bytes(in, key.data(), key.size() * sizeof(float), "key");
    index.append(std::move(id), key, payload, static_cast<SourceKind>(kind));
  }
  return index;
}

void save_index(const ImageKeyIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write index " + path.string());
  write_index(index, out);
  if (!out) throw std::runtime_error("failed writing index " + path.string());
}

ImageKeyIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open index " + path.string());
  return read_index(in);
}

}  // namespace glm
