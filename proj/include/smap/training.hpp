#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smap/models.hpp"
#include "smap/preprocess.hpp"
#include "smap/synthdata.hpp"

namespace smap {

template <typename T>
struct LabeledInput {
  Tensor<T> input;  // preprocessed, (1, 32, 16, 32)
  int label = 0;
};

using PreparedSample = LabeledInput<float>;
using PreparedDataset = std::vector<PreparedSample>;

// Preprocesses every sample; labels must be 0..3.
PreparedDataset prepare(std::span<const LabeledSample> samples, const PreprocessConfig& cfg = {});

struct TrainConfig {
  double learning_rate = 1e-5;
  int patience = 10;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int max_epochs = 300;

  // Learning rate 1e-6 for Baseline, 1e-5 for Reduced and Logistic.
  static TrainConfig for_arch(ArchKind kind, std::uint64_t seed = 42);
  void validate() const;
};

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion{};  // [true][predicted]
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  int epochs_run = 0;
  ConfusionMatrix confusion{};  // evaluated with the best-epoch parameters

  bool operator==(const TrainReport&) const = default;
};

bool operator==(const EpochRecord& a, const EpochRecord& b);

// -log p[label] from logits through a fused log-softmax.
template <typename T>
T cross_entropy_logits(std::span<const T> logits, int label);

// -log probs[label]; probs is a probability vector.
double cross_entropy(std::span<const double> probs, int label);

template <typename T>
using Gradients = std::vector<LayerParams<T>>;

template <typename T>
Gradients<T> zero_gradients(const BasicModelParams<T>& model);

// Adds the cross-entropy gradient of one sample into acc; returns its loss.
template <typename T>
T accumulate_gradient(const BasicModelParams<T>& model, const Tensor<T>& input, int label,
                      Gradients<T>& acc);

template <typename T>
struct BatchGradient {
  Gradients<T> grads;  // mean over the batch
  T loss{};            // mean loss
};

template <typename T>
BatchGradient<T> backward(const BasicModelParams<T>& model, std::span<const LabeledInput<T>> batch);

template <typename T>
T batch_loss(const BasicModelParams<T>& model, std::span<const LabeledInput<T>> batch);

struct AdamState {
  Gradients<float> m;
  Gradients<float> v;
  std::uint64_t t = 0;
};

AdamState make_adam_state(const ModelParams& model);

// One bias-corrected Adam update, applied in place.
void adam_step(ModelParams& model, const Gradients<float>& grads, AdamState& state,
               const TrainConfig& cfg);

// Stops once `patience` consecutive epochs fail to strictly improve on the best accuracy.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  // Records the next epoch; returns true when it is a new best.
  bool update(double accuracy);
  bool should_stop() const { return stale_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_accuracy() const { return best_; }
  int epochs_seen() const { return epoch_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int stale_ = 0;
  double best_ = -1.0;
};

Evaluation evaluate(const ModelParams& model, std::span<const PreparedSample> data);

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
  ModelParams model;  // best-epoch parameters
  TrainReport report;
};

TrainResult train(ArchKind kind, std::span<const PreparedSample> train_set,
                  std::span<const PreparedSample> test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

std::string train_report_csv(const TrainReport& report);
std::string confusion_csv(const ConfusionMatrix& m);

}  // namespace smap
