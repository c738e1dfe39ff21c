#include "groundlm/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "groundlm/binary_io.hpp"
#include "groundlm/optim.hpp"

namespace glm {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \r\n\t");
  if (b == s.npos) return {};
  const auto e = s.find_last_not_of(" \r\n\t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

const char* to_string(MetricKind m) {
  return m == MetricKind::accuracy ? "accuracy" : "spearman";
}

TaskFile parse_task(std::istream& in, const std::string& source) {
  TaskFile task;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  bool declared_labels = false;
  auto fail = [&](const std::string& msg) -> void {
    throw std::runtime_error(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!have_header) {
      have_header = true;
      std::istringstream hs(line);
      std::string kv;
      bool have_metric = false;
      while (hs >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail("header expects key=value pairs, got '" + kv + "'");
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "metric") {
          if (v == "accuracy") task.metric = MetricKind::accuracy;
          else if (v == "spearman") task.metric = MetricKind::spearman;
          else fail("unknown metric '" + v + "'");
          have_metric = true;
        } else if (k == "labels") {
          for (auto& l : split(v, ',')) {
            if (auto t = trim(l); !t.empty()) task.labels.push_back(t);
          }
          declared_labels = true;
        } else {
          fail("unknown header key '" + k + "'");
        }
      }
      if (!have_metric) fail("header must declare metric=accuracy|spearman");
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() < 2 || fields.size() > 3) {
      fail("expected label<TAB>text_a[<TAB>text_b], found " + std::to_string(fields.size()) + " fields");
    }
    TaskExample ex;
    ex.line = line_no;
    ex.raw_label = trim(fields[0]);
    ex.text_a = trim(fields[1]);
    if (fields.size() == 3 && !trim(fields[2]).empty()) ex.text_b = trim(fields[2]);
    if (task.metric == MetricKind::spearman) {
      std::size_t pos = 0;
      try {
        ex.label = std::stod(ex.raw_label, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != ex.raw_label.size() || !std::isfinite(ex.label)) {
        fail("label '" + ex.raw_label + "' is not a real number");
      }
    }
    task.examples.push_back(std::move(ex));
  }
  if (!have_header) throw std::runtime_error(source + ": missing header line");
  if (task.examples.empty()) throw std::runtime_error(source + ": no examples");

  if (task.metric == MetricKind::accuracy) {
    if (!declared_labels) {
      std::set<std::string> seen;
      for (const auto& ex : task.examples) seen.insert(ex.raw_label);
      task.labels.assign(seen.begin(), seen.end());
    }
    for (auto& ex : task.examples) {
      const auto it = std::find(task.labels.begin(), task.labels.end(), ex.raw_label);
      if (it == task.labels.end()) {
        throw std::runtime_error(source + ":" + std::to_string(ex.line) + ": label '" +
                                 ex.raw_label + "' outside the declared label set");
      }
      ex.label = static_cast<double>(it - task.labels.begin());
    }
    if (task.labels.size() < 2) throw std::runtime_error(source + ": need at least two labels");
  }
  return task;
}

TaskFile load_task(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open task file " + path.string());
  return parse_task(in, path.string());
}

void align_labels(const TaskFile& reference, TaskFile& other) {
  if (reference.metric != other.metric) throw std::runtime_error("task files declare different metrics");
  if (reference.metric != MetricKind::accuracy) return;
  for (auto& ex : other.examples) {
    const auto it = std::find(reference.labels.begin(), reference.labels.end(), ex.raw_label);
    if (it == reference.labels.end()) {
      throw std::runtime_error("line " + std::to_string(ex.line) + ": label '" + ex.raw_label +
                               "' outside the declared label set");
    }
    ex.label = static_cast<double>(it - reference.labels.begin());
  }
  other.labels = reference.labels;
}

double accuracy(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size() || gold.empty()) {
    throw std::invalid_argument("accuracy: need equal, non-empty inputs");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hit += predicted[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

double spearman(std::span<const double> predicted, std::span<const double> gold) {
  if (predicted.size() != gold.size() || gold.size() < 2) {
    throw std::invalid_argument("spearman: need two equal-length inputs of size >= 2");
  }
  const auto rp = average_ranks(predicted);
  const auto rg = average_ranks(gold);
  const double n = static_cast<double>(rp.size());
  const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
  const double mg = std::accumulate(rg.begin(), rg.end(), 0.0) / n;
  double cov = 0, vp = 0, vg = 0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    cov += (rp[i] - mp) * (rg[i] - mg);
    vp += (rp[i] - mp) * (rp[i] - mp);
    vg += (rg[i] - mg) * (rg[i] - mg);
  }
  if (vp == 0 || vg == 0) throw std::domain_error("spearman: undefined for a constant input");
  return cov / std::sqrt(vp * vg);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string FinetuneConfig::digest() const {
  std::ostringstream os;
  os.precision(17);
  os << "runs=" << runs << ";base_seed=" << base_seed << ";epochs=" << epochs
     << ";batch_size=" << batch_size << ";lr=" << lr << ";unfreeze_text=" << unfreeze_text
     << ";k=" << assoc.k << ";kappa=" << assoc.kappa << ";assoc_seed=" << assoc.seed;
  const std::string s = os.str();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(io::fnv1a(s)));
  return buf;
}

std::string TaskReport::to_json() const {
  nlohmann::ordered_json j;
  j["metric"] = to_string(metric);
  j["strategy"] = strategy;
  auto runs_json = nlohmann::ordered_json::array();
  for (const auto& r : runs) {
    nlohmann::ordered_json o;
    o["seed"] = r.seed;
    o["completed"] = r.completed;
    if (r.completed) o["score"] = r.score;
    else o["error"] = r.error;
    runs_json.push_back(std::move(o));
  }
  j["runs"] = std::move(runs_json);
  j["median"] = median ? nlohmann::ordered_json(*median) : nlohmann::ordered_json(nullptr);
  j["config_digest"] = config_digest;
  return j.dump(2) + "\n";
}

// ---- fine-tuning --------------------------------------------------------------------

TaskRunner::TaskRunner(Strategy strategy, const Vocabulary& vocab, const GroundingResources& res,
                       FinetuneConfig config)
    : strategy_(strategy), vocab_(&vocab), res_(res), config_(config) {
  if (config_.runs == 0) throw std::invalid_argument("finetune: runs must be >= 1");
  if (config_.batch_size == 0) throw std::invalid_argument("finetune: batch_size must be >= 1");
  if (config_.epochs == 0) throw std::invalid_argument("finetune: epochs must be >= 1");
  if (!(config_.lr > 0)) throw std::invalid_argument("finetune: lr must be > 0");
}

std::vector<EncodedExample> TaskRunner::encode(const CrossModalModel& model,
                                               std::span<const TaskExample> examples) const {
  // Transferred and ungrounded models see the placeholder; associative ones retrieve.
  const VisualMode mode = is_associative(strategy_) ? VisualMode::strategy : VisualMode::placeholder;
  ExampleEncoder enc(strategy_, *vocab_, model.config(), res_, config_.assoc);
  std::mt19937_64 unused(0);
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    TextItem item;
    item.words = tokenize(ex.text_a);
    if (ex.text_b) {
      item.is_pair = true;
      item.words_b = tokenize(*ex.text_b);
    }
    out.push_back(enc.encode(item, unused, false, 0.0, mode));
  }
  return out;
}

namespace {

Var head(Graph& g, CrossModalModel& model, const ForwardOutput& out) {
  return add_bias(matmul(out.cls, g.param(model.param("cls_w"))), g.param(model.param("cls_b")));
}

}  // namespace

CrossModalModel TaskRunner::train_run(const CrossModalModel& pretrained, const TaskFile& train,
                                      std::uint64_t seed) const {
  CrossModalModel model = pretrained;
  model.reset_cls_head(train.num_outputs(), seed);
  if (config_.unfreeze_text) model.set_text_frozen(false);
  const auto encoded = encode(model, train.examples);
  const auto params = model.parameters();
  AdamState adam;
  adam.lr = config_.lr;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t d_v = model.config().d_v;
  for (std::size_t epoch = 0; epoch < config_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config_.batch_size) {
      const std::size_t end = std::min(order.size(), start + config_.batch_size);
      std::vector<EncodedExample> chunk;
      std::vector<double> labels;
      for (std::size_t i = start; i < end; ++i) {
        chunk.push_back(encoded[order[i]]);
        labels.push_back(train.examples[order[i]].label);
      }
      const MaskedBatch b = collate(chunk, d_v);
      Graph g;
      ForwardOutput out = model.forward(g, b);
      Var logits = head(g, model, out);
      const Real inv_b = Real(1) / Real(labels.size());
      Var loss;
      if (train.metric == MetricKind::accuracy) {
        std::vector<std::int32_t> targets(labels.begin(), labels.end());
        loss = scale(cross_entropy(logits, targets), inv_b);
      } else {
        Tensor target({labels.size(), 1});
        for (std::size_t i = 0; i < labels.size(); ++i) target[i] = static_cast<Real>(labels[i]);
        const std::vector<std::uint8_t> all(labels.size(), 1);
        loss = scale(lp_loss(logits, target, all, Real(2)), inv_b);
      }
      zero_grads(params);
      g.backward(loss);
      adam_step(params, adam);
    }
  }
  return model;
}

Predictions TaskRunner::predict(CrossModalModel& model, const TaskFile& task) const {
  if (!model.cls_outputs() || *model.cls_outputs() != task.num_outputs()) {
    throw std::invalid_argument("predict: classification head does not match the task");
  }
  const auto encoded = encode(model, task.examples);
  Predictions p;
  for (std::size_t start = 0; start < encoded.size(); start += config_.batch_size) {
    const std::size_t end = std::min(encoded.size(), start + config_.batch_size);
    const MaskedBatch b = collate(std::span(encoded).subspan(start, end - start), model.config().d_v);
    Graph g(false);
    ForwardOutput out = model.forward(g, b);
    const Tensor& logits = head(g, model, out).value();
    const std::size_t c = logits.cols();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      const Real* row = logits.data() + r * c;
      p.classes.push_back(static_cast<int>(std::max_element(row, row + c) - row));
      p.scores.push_back(static_cast<double>(row[0]));
    }
  }
  return p;
}

double TaskRunner::score(CrossModalModel& model, const TaskFile& task) const {
  const Predictions p = predict(model, task);
  if (task.metric == MetricKind::accuracy) {
    std::vector<int> gold;
    for (const auto& ex : task.examples) gold.push_back(static_cast<int>(ex.label));
    return accuracy(p.classes, gold);
  }
  std::vector<double> gold;
  for (const auto& ex : task.examples) gold.push_back(ex.label);
  return spearman(p.scores, gold);
}

TaskReport TaskRunner::run_all(const CrossModalModel& pretrained, const TaskFile& train,
                               const TaskFile& test) const {
  if (train.metric != test.metric || train.num_outputs() != test.num_outputs()) {
    throw std::invalid_argument("finetune: train and test tasks disagree on metric or labels");
  }
  TaskReport report;
  report.metric = train.metric;
  report.strategy = to_string(strategy_);
  report.config_digest = config_.digest();
  report.runs.resize(config_.runs);

  auto one = [&](std::size_t i) {
    RunScore r;
    r.seed = config_.base_seed + i;
    try {
      CrossModalModel m = train_run(pretrained, train, r.seed);
      r.score = score(m, test);
      r.completed = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  };
  const std::size_t width = std::max<std::size_t>(1, config_.parallel_runs);
  for (std::size_t start = 0; start < config_.runs; start += width) {
    const std::size_t end = std::min(config_.runs, start + width);
    if (width == 1) {
      report.runs[start] = one(start);
      continue;
    }
    std::vector<std::future<RunScore>> jobs;
    for (std::size_t i = start; i < end; ++i) jobs.push_back(std::async(std::launch::async, one, i));
    for (std::size_t i = start; i < end; ++i) report.runs[i] = jobs[i - start].get();
  }
  std::vector<double> done;
  for (const auto& r : report.runs) {
    if (r.completed) done.push_back(r.score);
  }
  if (!done.empty()) report.median = median(done);
  return report;
}

TaskReport finetune(const CrossModalModel& pretrained, const Vocabulary& vocab,
                    const TaskFile& train, const TaskFile& test, Strategy strategy,
                    const GroundingResources& res, const FinetuneConfig& config) {
  return TaskRunner(strategy, vocab, res, config).run_all(pretrained, train, test);
}

}  // namespace glm
