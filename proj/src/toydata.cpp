#include "groundlm/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace glm {

namespace {

std::string numbered(const char* stem, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", stem, width, i);
  return buf;
}

std::vector<float> unit_vector(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(dim);
  double norm = 0;
  for (auto& x : v) {
    x = n(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

std::vector<float> jitter(const std::vector<float>& centre, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  std::vector<float> out(centre.size());
  for (std::size_t i = 0; i < centre.size(); ++i) out[i] = static_cast<float>(centre[i] + n(rng));
  return out;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

void write_task(const TaskFile& t, const std::filesystem::path& p) {
  auto out = open_out(p);
  out << "metric=" << to_string(t.metric);
  if (!t.labels.empty()) {
    out << " labels=";
    for (std::size_t i = 0; i < t.labels.size(); ++i) out << (i ? "," : "") << t.labels[i];
  }
  out << '\n';
  for (const auto& ex : t.examples) {
    out << ex.raw_label << '\t' << ex.text_a;
    if (ex.text_b) out << '\t' << *ex.text_b;
    out << '\n';
  }
}

}  // namespace

void ToySpec::validate() const {
  if (n_concepts < 2) throw std::invalid_argument("toy spec: need at least 2 concepts");
  if (vocab_size < n_concepts + 2) throw std::invalid_argument("toy spec: vocab_size must exceed n_concepts + 1");
  if (n_examples < 2) throw std::invalid_argument("toy spec: need at least 2 examples");
  if (!(eval_fraction >= 0 && eval_fraction < 1)) throw std::invalid_argument("toy spec: eval_fraction must be in [0, 1)");
  if (!(grounding_strength >= 0 && grounding_strength <= 1)) {
    throw std::invalid_argument("toy spec: grounding_strength must be in [0, 1]");
  }
  if (d_w == 0 || d_v == 0 || n_regions == 0) throw std::invalid_argument("toy spec: dimensions must be positive");
  if (!(image_noise >= 0) || !(word_noise >= 0)) throw std::invalid_argument("toy spec: noise must be >= 0");
}

EntropyFloor entropy_floor(const ToySpec& spec) {
  // Approximation: every selected position is treated as if it showed [masked].
  EntropyFloor f;
  f.filler_nats = std::log(static_cast<double>(spec.n_fillers()));
  f.concept_nats_ungrounded = std::log(static_cast<double>(spec.n_concepts));
  f.concept_nats_grounded = (1.0 - spec.grounding_strength) * f.concept_nats_ungrounded;
  f.ppl_grounded = std::exp((f.filler_nats + f.concept_nats_grounded) / 3.0);
  f.ppl_ungrounded = std::exp((f.filler_nats + f.concept_nats_ungrounded) / 3.0);
  return f;
}

ToyCorpus generate_toy_corpus(const ToySpec& spec) {
  spec.validate();
  ToyCorpus c;
  c.spec = spec;
  c.floor = entropy_floor(spec);
  std::mt19937_64 rng(spec.seed);

  const std::size_t C = spec.n_concepts, F = spec.n_fillers();
  for (std::size_t i = 0; i < C; ++i) c.concept_words.push_back(numbered("concept", i, 3));
  for (std::size_t i = 0; i < F; ++i) c.filler_words.push_back(numbered("filler", i, 3));
  c.trigger_word = c.filler_words.front();

  c.vectors = WordEmbeddingTable(spec.d_w);
  std::vector<std::vector<float>> centres;
  for (std::size_t i = 0; i < C; ++i) centres.push_back(unit_vector(spec.d_w, rng));
  const double word_sigma = spec.word_noise / std::sqrt(static_cast<double>(spec.d_w));
  for (std::size_t i = 0; i < C; ++i) c.vectors.insert(c.concept_words[i], jitter(centres[i], word_sigma, rng));
  for (const auto& w : c.filler_words) c.vectors.insert(w, unit_vector(spec.d_w, rng));
  c.vectors.set_stopwords(StopwordSet(c.filler_words.begin(), c.filler_words.end()));

  // Prototype region vectors v_c.
  std::vector<std::vector<float>> proto;
  for (std::size_t i = 0; i < C; ++i) {
    std::vector<float> block;
    for (std::size_t r = 0; r < spec.n_regions; ++r) {
      auto v = unit_vector(spec.d_v, rng);
      block.insert(block.end(), v.begin(), v.end());
    }
    proto.push_back(std::move(block));
  }

  c.store = FeatureStore(static_cast<std::uint32_t>(spec.n_regions), static_cast<std::uint32_t>(spec.d_v));
  std::uniform_int_distribution<std::size_t> pick_concept(0, C - 1), pick_filler(0, F - 1);
  std::bernoulli_distribution grounded(spec.grounding_strength);
  const double pure_sigma = 1.0 / std::sqrt(static_cast<double>(spec.d_v));
  const std::size_t n_eval = static_cast<std::size_t>(std::floor(spec.eval_fraction * spec.n_examples));
  const std::size_t n_train = spec.n_examples - n_eval;
  std::size_t descriptor = 0;
  auto sentence = [&](std::size_t concept_id) {
    std::string d = numbered("desc", descriptor++, 5);
    c.vectors.insert(d, jitter(centres[concept_id], word_sigma, rng));
    return c.filler_words[pick_filler(rng)] + " " + d + " " + c.concept_words[concept_id];
  };

  for (std::size_t i = 0; i < spec.n_examples; ++i) {
    const std::size_t k = pick_concept(rng);
    const std::string caption = sentence(k);
    const bool g = grounded(rng);
    const std::vector<float> image = g ? jitter(proto[k], spec.image_noise, rng)
                                       : jitter(std::vector<float>(proto[k].size(), 0.0f), pure_sigma, rng);
    const std::string id = numbered("img", i, 5);
    c.store.add(id, image);
    c.example_concept.push_back(k);
    c.example_grounded.push_back(g);
    (i < n_train ? c.train : c.eval).push_back(CaptionRecord{id, caption});
  }
  for (std::size_t i = 0; i < spec.n_text_only; ++i) c.text_only.push_back(sentence(pick_concept(rng)));

  for (std::size_t k = 0; k < C; ++k) {
    SynsetRecord s;
    s.synset_id = "syn." + c.concept_words[k];
    s.lemmas.push_back(c.concept_words[k]);
    for (std::size_t i = 0; i < n_train; ++i) {
      if (c.example_concept[i] != k) continue;
      s.image_ids.push_back(c.train[i].image_id);
      if (s.image_ids.size() <= 2) {
        // Definition: the descriptors of the first two captions.
        const auto toks = tokenize(c.train[i].caption);
        s.definition += (s.definition.empty() ? "" : " ") + toks[1];
      }
    }
    if (!s.image_ids.empty()) c.synsets.push_back(std::move(s));
  }

  // Pair task: label is whether the trigger filler occurs in text_b.
  std::uniform_int_distribution<std::size_t> non_trigger(1, F - 1), slot(0, 2);
  std::bernoulli_distribution coin(0.5);
  for (auto [t, n] : {std::pair{&c.pair_train, spec.pair_train_examples},
                      std::pair{&c.pair_test, spec.pair_test_examples}}) {
    t->metric = MetricKind::accuracy;
    t->labels = {"no", "yes"};
    for (std::size_t i = 0; i < n; ++i) {
      TaskExample ex;
      ex.line = i + 2;
      const bool yes = coin(rng);
      ex.label = yes ? 1 : 0;
      ex.raw_label = yes ? "yes" : "no";
      ex.text_a = c.filler_words[non_trigger(rng)] + " " + c.concept_words[pick_concept(rng)];
      std::string b[3];
      for (auto& w : b) w = c.filler_words[non_trigger(rng)];
      if (yes) b[slot(rng)] = c.trigger_word;
      ex.text_b = b[0] + " " + b[1] + " " + b[2];
      t->examples.push_back(std::move(ex));
    }
  }
  return c;
}

void write_toy_corpus(const ToyCorpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write_captions = [&](const std::vector<CaptionRecord>& rows, const char* name) {
    auto out = open_out(dir / name);
    for (const auto& r : rows) out << r.image_id << '\t' << r.caption << '\n';
  };
  write_captions(c.train, "captions_train.tsv");
  write_captions(c.eval, "captions_eval.tsv");
  {
    auto out = open_out(dir / "text_only.txt");
    for (const auto& t : c.text_only) out << t << '\n';
  }
  save_feature_store(c.store, dir / "features.vftr");
  {
    // Deterministic order: concepts, fillers, then descriptors in creation order.
    auto out = open_out(dir / "vectors.txt");
    std::vector<std::string> words = c.concept_words;
    words.insert(words.end(), c.filler_words.begin(), c.filler_words.end());
    const std::size_t n_desc = c.vectors.size() - words.size();
    for (std::size_t i = 0; i < n_desc; ++i) words.push_back(numbered("desc", i, 5));
    out << words.size() << ' ' << c.spec.d_w << '\n';
    char buf[32];
    for (const auto& w : words) {
      out << w;
      for (float x : *c.vectors.find(w)) {
        std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(x));
        out << buf;
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(dir / "stopwords.txt");
    for (const auto& w : c.filler_words) out << w << '\n';
  }
  {
    auto out = open_out(dir / "nouns.txt");
    for (const auto& w : c.concept_words) out << w << '\n';
  }
  {
    auto out = open_out(dir / "synsets.tsv");
    for (const auto& s : c.synsets) {
      out << s.synset_id << '\t';
      for (std::size_t i = 0; i < s.lemmas.size(); ++i) out << (i ? "," : "") << s.lemmas[i];
      out << '\t' << s.definition << '\t';
      for (std::size_t i = 0; i < s.image_ids.size(); ++i) out << (i ? "," : "") << s.image_ids[i];
      out << '\n';
    }
  }
  write_task(c.pair_train, dir / "pair_train.tsv");
  write_task(c.pair_test, dir / "pair_test.tsv");

  const ToySpec& s = c.spec;
  nlohmann::ordered_json meta;
  meta["spec"] = {{"vocab_size", s.vocab_size},       {"n_concepts", s.n_concepts},
                  {"n_examples", s.n_examples},       {"n_text_only", s.n_text_only},
                  {"eval_fraction", s.eval_fraction}, {"d_w", s.d_w},
                  {"d_v", s.d_v},                     {"n_regions", s.n_regions},
                  {"grounding_strength", s.grounding_strength},
                  {"image_noise", s.image_noise},     {"word_noise", s.word_noise},
                  {"pair_train_examples", s.pair_train_examples},
                  {"pair_test_examples", s.pair_test_examples}, {"seed", s.seed}};
  meta["counts"] = {{"train", c.train.size()},
                    {"eval", c.eval.size()},
                    {"text_only", c.text_only.size()},
                    {"images", c.store.size()},
                    {"word_vectors", c.vectors.size()},
                    {"synsets", c.synsets.size()}};
  meta["entropy_floor"] = {{"filler_nats", c.floor.filler_nats},
                           {"concept_nats_grounded", c.floor.concept_nats_grounded},
                           {"concept_nats_ungrounded", c.floor.concept_nats_ungrounded},
                           {"ppl_grounded", c.floor.ppl_grounded},
                           {"ppl_ungrounded", c.floor.ppl_ungrounded}};
  meta["trigger_word"] = c.trigger_word;
  auto out = open_out(dir / "meta.json");
  out << meta.dump(2) << '\n';
}

}  // namespace glm
