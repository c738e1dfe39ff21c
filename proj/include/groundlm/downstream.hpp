#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "groundlm/train.hpp"

namespace glm {

enum class MetricKind { accuracy, spearman };

const char* to_string(MetricKind m);

struct TaskExample {
  std::size_t line = 0;
  double label = 0;  // class id for accuracy tasks, real target otherwise
  std::string raw_label;
  std::string text_a;
  std::optional<std::string> text_b;
};

struct TaskFile {
  MetricKind metric = MetricKind::accuracy;
  std::vector<std::string> labels;  // declared class names (accuracy only)
  std::vector<TaskExample> examples;

  std::size_t num_outputs() const { return metric == MetricKind::accuracy ? labels.size() : 1; }
};

// Header line: whitespace-separated key=value pairs, `metric=accuracy|spearman`
// required, `labels=a,b,...` optional (otherwise the sorted distinct labels).
// Body lines: label<TAB>text_a[<TAB>text_b].
TaskFile parse_task(std::istream& in, const std::string& source = "<task>");
TaskFile load_task(const std::filesystem::path& path);
// Re-maps the class ids of `other` onto the label set of `reference`.
// Throws naming the line of the first label the reference does not declare.
void align_labels(const TaskFile& reference, TaskFile& other);

double accuracy(std::span<const int> predicted, std::span<const int> gold);
// Average-rank Spearman correlation. Throws when either side is constant.
double spearman(std::span<const double> predicted, std::span<const double> gold);
double median(std::vector<double> values);

struct FinetuneConfig {
  std::size_t runs = 8;
  std::uint64_t base_seed = 0;
  std::size_t epochs = 4;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  bool unfreeze_text = true;
  std::size_t parallel_runs = 1;
  AssociationOptions assoc;

  std::string digest() const;
};

struct RunScore {
  std::uint64_t seed = 0;
  bool completed = false;
  double score = 0;
  std::string error;
};

struct TaskReport {
  MetricKind metric = MetricKind::accuracy;
  std::string strategy;
  std::vector<RunScore> runs;
  std::optional<double> median;
  std::string config_digest;

  std::string to_json() const;
};

// Scores on `test` for one fine-tuned model.
struct Predictions {
  std::vector<int> classes;
  std::vector<double> scores;
};

class TaskRunner {
 public:
  TaskRunner(Strategy strategy, const Vocabulary& vocab, const GroundingResources& res,
             FinetuneConfig config);

  // Fine-tunes a copy of `pretrained` with seed `seed` and returns it.
  CrossModalModel train_run(const CrossModalModel& pretrained, const TaskFile& train,
                            std::uint64_t seed) const;
  Predictions predict(CrossModalModel& model, const TaskFile& task) const;
  double score(CrossModalModel& model, const TaskFile& task) const;

  TaskReport run_all(const CrossModalModel& pretrained, const TaskFile& train,
                     const TaskFile& test) const;

 private:
  std::vector<EncodedExample> encode(const CrossModalModel& model,
                                     std::span<const TaskExample> examples) const;

  Strategy strategy_;
  const Vocabulary* vocab_;
  GroundingResources res_;
  FinetuneConfig config_;
};

TaskReport finetune(const CrossModalModel& pretrained, const Vocabulary& vocab,
                    const TaskFile& train, const TaskFile& test, Strategy strategy,
                    const GroundingResources& res, const FinetuneConfig& config);

}  // namespace glm
