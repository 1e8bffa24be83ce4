#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "smap/models.hpp"
#include "smap/preprocess.hpp"
#include "smap/synthdata.hpp"

namespace smap {

// Exponentially weighted moving average over class labels, which are treated
// as an ordinal scale. The first label seeds the running value.
class EwmaFilter {
 public:
  explicit EwmaFilter(double alpha = 0.1);

  // Feeds one classification (0..3) and returns the rounded running value.
  int step(int label);

  double alpha() const noexcept { return alpha_; }
  double value() const noexcept { return y_; }
  bool initialized() const noexcept { return initialized_; }

 private:
  double alpha_;
  double y_ = 0.0;
  bool initialized_ = false;
};

struct RoiConfig {
  double threshold = 0.5;
  double decay = 0.001;
  std::set<int> regions{1, 2};

  void validate() const;
};

class RoiDetector {
 public:
  explicit RoiDetector(RoiConfig cfg = {});

  // One filtered label in, current membership out.
  bool check(int label);

  double indicator() const noexcept { return indicator_; }
  bool in_roi() const noexcept { return in_roi_; }
  const RoiConfig& config() const noexcept { return cfg_; }

 private:
  RoiConfig cfg_;
  double indicator_ = 0.0;
  bool in_roi_ = false;
};

struct RoiRunConfig {
  double alpha = 0.1;
  RoiConfig roi;
  PreprocessConfig preprocess;
};

struct TraceRecord {
  std::size_t index = 0;
  int true_label = 0;
  int raw_pred = 0;
  int ewma_pred = 0;
  double indicator = 0.0;
  bool in_roi = false;
};

// Maps a preprocessed (1,32,16,32) skymap to a class label.
using Classifier = std::function<int(const Tensor<float>&)>;

std::vector<TraceRecord> run_stream(const ModelParams& model, const LabeledStream& stream,
                                    const RoiRunConfig& cfg = {});
std::vector<TraceRecord> run_stream(const Classifier& classifier, const LabeledStream& stream,
                                    const RoiRunConfig& cfg = {});

// Filter and detector applied to an existing prediction sequence.
std::vector<TraceRecord> run_predictions(std::span<const int> predictions,
                                         std::span<const int> truth, double alpha,
                                         const RoiConfig& roi);

struct CoverageRow {
  int label = 0;
  std::size_t in_roi = 0;
  std::size_t outside = 0;
  std::size_t total() const { return in_roi + outside; }
  double percent() const;  // 0 when the label never occurs
};

// One row per ground-truth label -1..3.
std::array<CoverageRow, 5> coverage_report(std::span<const TraceRecord> trace,
                                           std::span<const int> truth);
std::array<CoverageRow, 5> coverage_report(std::span<const TraceRecord> trace);

std::string trace_csv(std::span<const TraceRecord> trace);
std::string coverage_csv(const std::array<CoverageRow, 5>& rows);

}  // namespace smap
