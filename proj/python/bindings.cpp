#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundlm/downstream.hpp"
#include "groundlm/embed.hpp"
#include "groundlm/gmm.hpp"
#include "groundlm/model.hpp"
#include "groundlm/toydata.hpp"
#include "groundlm/vindex.hpp"
#include "groundlm/vocab.hpp"

namespace py = pybind11;
using namespace glm;

namespace {

using FloatRows = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleRows = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageKeyIndex index_from_arrays(const std::vector<std::string>& ids, const FloatRows& keys,
                                std::size_t shard_size) {
  if (keys.ndim() != 2 || static_cast<std::size_t>(keys.shape(0)) != ids.size())
    throw std::invalid_argument("keys must be a (len(ids), dim) array");
  const auto dim = static_cast<std::size_t>(keys.shape(1));
  std::vector<IndexEntry> entries(ids.size());
  const float* p = keys.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    entries[i].id = ids[i];
    entries[i].key.assign(p + i * dim, p + (i + 1) * dim);
    entries[i].payload_ref = i;
  }
  return build_index(entries, nullptr, shard_size);
}

py::list hits_to_list(const std::vector<SearchHit>& hits) {
  py::list out;
  for (const auto& h : hits) out.append(py::make_tuple(h.id, h.similarity));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core routines of the groundlm toolkit";

  m.def("tokenize", [](const std::string& text) { return tokenize(text); });

  py::class_<ImageKeyIndex>(m, "ImageKeyIndex")
      .def(py::init(&index_from_arrays), py::arg("ids"), py::arg("keys"),
           py::arg("shard_size") = ImageKeyIndex::kDefaultShardSize)
      .def_static("load", [](const std::filesystem::path& p) { return load_index(p); })
      .def("save", [](const ImageKeyIndex& ix, const std::filesystem::path& p) { save_index(ix, p); })
      .def_property_readonly("dim", &ImageKeyIndex::dim)
      .def("__len__", &ImageKeyIndex::size)
      .def(
          "top_k",
          [](const ImageKeyIndex& ix, const std::vector<float>& q, std::size_t k, std::size_t threads) {
            std::vector<SearchHit> hits;
            {
              py::gil_scoped_release release;
              hits = ix.top_k(std::span<const float>(q), k, threads);
            }
            return hits_to_list(hits);
          },
          py::arg("query"), py::arg("k"), py::arg("threads") = 1,
          "List of (id, cosine) pairs, best first, ties by ascending id.");

  py::class_<GmmModel>(m, "GmmModel")
      .def_readonly("kappa", &GmmModel::kappa)
      .def_readonly("means", &GmmModel::means)
      .def_readonly("variances", &GmmModel::variances)
      .def_readonly("weights", &GmmModel::weights)
      .def_readonly("loglik", &GmmModel::loglik)
      .def_readonly("loglik_trace", &GmmModel::loglik_trace)
      .def("responsibilities", &GmmModel::responsibilities);

  m.def(
      "fit_gmm",
      [](const DoubleRows& points, std::size_t kappa, std::uint64_t seed) {
        if (points.ndim() != 2) throw std::invalid_argument("points must be a 2-D array");
        const auto n = static_cast<std::size_t>(points.shape(0));
        const auto d = static_cast<std::size_t>(points.shape(1));
        std::vector<std::vector<double>> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i].assign(points.data() + i * d, points.data() + (i + 1) * d);
        return fit_gmm(rows, kappa, seed);
      },
      py::arg("points"), py::arg("kappa"), py::arg("seed") = 0);

  m.def(
      "mask_tokens",
      [](const std::vector<std::int32_t>& ids, double rate, std::uint64_t seed, std::size_t vocab_size) {
        std::mt19937_64 rng(seed);
        const TokenMasking t = mask_tokens(ids, rate, rng, vocab_size);
        return py::make_tuple(t.input, t.original, t.flags);
      },
      py::arg("ids"), py::arg("rate"), py::arg("seed"), py::arg("vocab_size"),
      "Returns (input, original, flags).");

  m.def("spearman", [](const std::vector<double>& a, const std::vector<double>& b) { return spearman(a, b); });
  m.def("accuracy", [](const std::vector<int>& a, const std::vector<int>& b) { return accuracy(a, b); });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static(
          "build", [](const std::vector<std::string>& texts, std::size_t min_count) {
            return Vocabulary::build(texts, min_count);
          },
          py::arg("texts"), py::arg("min_count") = 2)
      .def_static("load", [](const std::filesystem::path& p) { return Vocabulary::load(p); })
      .def("save", &Vocabulary::save)
      .def("__len__", &Vocabulary::size)
      .def("id", [](const Vocabulary& v, const std::string& t) { return v.id(t); })
      .def("token", &Vocabulary::token)
      .def(
          "encode",
          [](const Vocabulary& v, const std::string& a, std::optional<std::string> b, std::size_t max_len) {
            const auto wa = tokenize(a);
            if (!b) return encode_single(v, wa, max_len);
            return encode_pair(v, wa, tokenize(*b), max_len);
          },
          py::arg("text_a"), py::arg("text_b") = py::none(), py::arg("max_len") = 64);

  m.def(
      "checkpoint_config",
      [](const std::filesystem::path& p) { return load_checkpoint(p).config().serialize(); },
      "key=value configuration stored in a checkpoint");

  py::class_<ToySpec>(m, "ToySpec")
      .def(py::init<>())
      .def_readwrite("vocab_size", &ToySpec::vocab_size)
      .def_readwrite("n_concepts", &ToySpec::n_concepts)
      .def_readwrite("n_examples", &ToySpec::n_examples)
      .def_readwrite("n_text_only", &ToySpec::n_text_only)
      .def_readwrite("eval_fraction", &ToySpec::eval_fraction)
      .def_readwrite("d_w", &ToySpec::d_w)
      .def_readwrite("d_v", &ToySpec::d_v)
      .def_readwrite("n_regions", &ToySpec::n_regions)
      .def_readwrite("grounding_strength", &ToySpec::grounding_strength)
      .def_readwrite("image_noise", &ToySpec::image_noise)
      .def_readwrite("word_noise", &ToySpec::word_noise)
      .def_readwrite("pair_train_examples", &ToySpec::pair_train_examples)
      .def_readwrite("pair_test_examples", &ToySpec::pair_test_examples)
      .def_readwrite("seed", &ToySpec::seed);

  m.def(
      "write_toy_corpus",
      [](const ToySpec& spec, const std::filesystem::path& dir) {
        write_toy_corpus(generate_toy_corpus(spec), dir);
      },
      py::arg("spec"), py::arg("out_dir"));

  // Translate the library's argument and numeric errors to Python ones.
  py::register_exception<std::domain_error>(m, "DomainError", PyExc_ArithmeticError);
}
