#include "groundlm/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "groundlm/binary_io.hpp"
#include "groundlm/gmm.hpp"

namespace glm {

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \r\n\t");
  if (b == s.npos) return {};
  const auto e = s.find_last_not_of(" \r\n\t");
  return std::string(s.substr(b, e - b + 1));
}

double cosine(const std::vector<double>& a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += double(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

}  // namespace

const char* to_string(AssocStrategy s) {
  switch (s) {
    case AssocStrategy::scene: return "scene";
    case AssocStrategy::object: return "object";
    case AssocStrategy::keyword_baseline: return "keyword";
  }
  return "unknown";
}

AssocStrategy parse_assoc_strategy(std::string_view name) {
  if (name == "scene") return AssocStrategy::scene;
  if (name == "object") return AssocStrategy::object;
  if (name == "keyword" || name == "keyword_baseline") return AssocStrategy::keyword_baseline;
  throw std::invalid_argument("unknown association strategy '" + std::string(name) + "'");
}

void resolve_features(Association& assoc, const FeatureStore& store) {
  for (auto& item : assoc.items) {
    const auto ordinal = store.find(item.image_id);
    if (!ordinal) {
      throw std::runtime_error("image '" + item.image_id + "' missing from feature store");
    }
    const auto block = store.features(*ordinal);
    item.features.assign(block.begin(), block.end());
  }
}

// ---- nouns ------------------------------------------------------------------

NounLexicon::NounLexicon(std::unordered_set<std::string> nouns) : nouns_(std::move(nouns)) {
  if (nouns_.empty()) throw std::invalid_argument("noun lexicon is empty");
}

NounLexicon load_noun_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open noun lexicon " + path.string());
  std::unordered_set<std::string> nouns;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& tok : tokenize(line)) nouns.insert(std::move(tok));
  }
  return NounLexicon(std::move(nouns));
}

std::vector<std::string> LexiconTagger::nouns(std::span<const std::string> tokens) const {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (lexicon_->contains(t)) out.push_back(t);
  }
  return out;
}

std::vector<std::string> extract_nouns(std::string_view text, const NounLexicon& lexicon) {
  const auto tokens = tokenize(text);
  return LexiconTagger(lexicon).nouns(tokens);
}

// ---- strategies ---------------------------------------------------------------

Association associate_scene(std::span<const std::string> surviving_tokens,
                            const ImageKeyIndex& index, const WordEmbeddingTable& table,
                            std::size_t k, std::size_t threads) {
  Association out;
  out.strategy = AssocStrategy::scene;
  const QueryVector q = encode_cbow(surviving_tokens, table);
  if (q.is_degenerate || index.size() == 0) return out;
  const auto hits = index.top_k(q, k, threads);
  for (std::size_t r = 0; r < hits.size(); ++r) {
    out.items.push_back(AssociatedImage{hits[r].id, static_cast<std::uint32_t>(r),
                                        hits[r].similarity, {}});
  }
  return out;
}

Association associate_object(std::span<const std::string> tokens, const ImageKeyIndex& synset_index,
                             const WordEmbeddingTable& table, const NounTagger& tagger,
                             const ObjectAssocOptions& options) {
  if (options.k == 0) throw std::invalid_argument("associate_object: K must be >= 1");
  if (options.kappa == 0 || options.kappa > options.k) {
    throw std::invalid_argument("associate_object: kappa must be in [1, K]");
  }
  Association out;
  out.strategy = AssocStrategy::object;

  std::vector<std::string> nouns;
  std::vector<std::vector<double>> points;
  std::unordered_set<std::string> seen;
  for (auto& n : tagger.nouns(tokens)) {
    if (seen.contains(n)) continue;
    const auto* v = table.find(n);
    if (v == nullptr) continue;
    double norm = 0;
    for (float x : *v) norm += double(x) * x;
    if (norm == 0) continue;
    seen.insert(n);
    points.emplace_back(v->begin(), v->end());
    nouns.push_back(std::move(n));
  }
  if (nouns.empty() || synset_index.size() == 0) return out;

  std::uint64_t h = io::fnv1a(&options.seed, sizeof(options.seed));
  for (const auto& t : tokens) {
    h = io::fnv1a(t, h);
    h = io::fnv1a(" ", 1, h);
  }
  const GmmModel gmm = fit_gmm(points, std::min(options.kappa, nouns.size()), h);

  std::vector<std::size_t> order(gmm.kappa);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return gmm.weights[a] > gmm.weights[b];
  });

  const std::size_t per_component = (options.k + gmm.kappa - 1) / gmm.kappa;
  std::unordered_set<std::string> taken;
  for (std::size_t c : order) {
    std::size_t best = 0;
    double best_cos = -2;
    for (std::size_t i = 0; i < nouns.size(); ++i) {
      const double cs = cosine(gmm.means[c], *table.find(nouns[i]));
      if (cs > best_cos) {
        best_cos = cs;
        best = i;
      }
    }
    const auto* rep = table.find(nouns[best]);
    const auto hits = synset_index.top_k(std::span<const float>(*rep), per_component,
                                         options.threads);
    for (const auto& hit : hits) {
      if (out.items.size() == options.k) break;
      if (!taken.insert(hit.id).second) continue;
      out.items.push_back(AssociatedImage{
          hit.id, static_cast<std::uint32_t>(out.items.size()), hit.similarity, {}});
    }
  }
  return out;
}

void KeywordCorpus::add(std::string image_id, std::string_view caption) {
  auto toks = tokenize(caption);
  ids_.push_back(std::move(image_id));
  tokens_.emplace_back(toks.begin(), toks.end());
}

Association associate_keyword_baseline(std::span<const std::string> tokens,
                                       const KeywordCorpus& corpus, const StopwordSet& stopwords,
                                       std::size_t k) {
  if (k == 0) throw std::invalid_argument("associate_keyword_baseline: K must be >= 1");
  std::unordered_set<std::string> content;
  for (const auto& t : tokens) {
    if (!stopwords.contains(t)) content.insert(t);
  }
  struct Scored {
    std::size_t score;
    std::size_t pos;
  };
  std::vector<Scored> scored;
  scored.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::size_t s = 0;
    const auto& cap = corpus.tokens(i);
    for (const auto& t : content) s += cap.contains(t) ? 1 : 0;
    scored.push_back({s, i});
  }
  const std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), [&](const Scored& a, const Scored& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return corpus.id(a.pos) < corpus.id(b.pos);
                    });
  Association out;
  out.strategy = AssocStrategy::keyword_baseline;
  for (std::size_t r = 0; r < take; ++r) {
    out.items.push_back(AssociatedImage{corpus.id(scored[r].pos), static_cast<std::uint32_t>(r),
                                        static_cast<float>(scored[r].score), {}});
  }
  return out;
}

// ---- input files ----------------------------------------------------------------

std::vector<CaptionRecord> load_captions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open caption file " + path.string());
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected image_id<TAB>caption");
    }
    out.push_back(CaptionRecord{trim(line.substr(0, tab)), trim(line.substr(tab + 1))});
  }
  return out;
}

std::vector<SynsetRecord> load_synsets(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open synset file " + path.string());
  std::vector<SynsetRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 4 tab-separated fields, found " +
                               std::to_string(fields.size()));
    }
    SynsetRecord rec;
    rec.synset_id = trim(fields[0]);
    for (auto& l : split(fields[1], ',')) {
      if (auto t = trim(l); !t.empty()) rec.lemmas.push_back(std::move(t));
    }
    rec.definition = trim(fields[2]);
    for (auto& id : split(fields[3], ',')) {
      if (auto t = trim(id); !t.empty()) rec.image_ids.push_back(std::move(t));
    }
    if (rec.lemmas.empty()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": synset without lemmas");
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<IndexEntry> caption_entries(std::span<const CaptionRecord> captions,
                                        const WordEmbeddingTable& table,
                                        const FeatureStore& store) {
  std::vector<IndexEntry> out;
  out.reserve(captions.size());
  for (const auto& c : captions) {
    const auto ordinal = store.find(c.image_id);
    if (!ordinal) throw std::runtime_error("image '" + c.image_id + "' missing from feature store");
    out.push_back(IndexEntry{c.image_id, encode_cbow(c.caption, table).values, *ordinal,
                             SourceKind::caption});
  }
  return out;
}

std::vector<IndexEntry> synset_entries(std::span<const SynsetRecord> synsets,
                                       const WordEmbeddingTable& table, const FeatureStore& store) {
  std::vector<IndexEntry> out;
  for (const auto& s : synsets) {
    const QueryVector key = encode_synset_key(s.lemmas, s.definition, table);
    for (const auto& id : s.image_ids) {
      const auto ordinal = store.find(id);
      if (!ordinal) throw std::runtime_error("image '" + id + "' missing from feature store");
      out.push_back(IndexEntry{id, key.values, *ordinal, SourceKind::synset});
    }
  }
  return out;
}

}  // namespace glm
