#include "smap/roi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace smap {

namespace {

void check_class(int label, const char* who) {
  if (label < 0 || label >= static_cast<int>(kNumClasses)) {
    throw std::out_of_range(std::string(who) + ": label must be 0..3, got " +
                            std::to_string(label));
  }
}

}  // namespace

EwmaFilter::EwmaFilter(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("EWMA alpha must be in (0, 1]");
}

int EwmaFilter::step(int label) {
  check_class(label, "ewma");
  const double c = static_cast<double>(label);
  if (!initialized_) {
    y_ = c;
    initialized_ = true;
  } else {
    y_ = (1.0 - alpha_) * y_ + alpha_ * c;
  }
  return static_cast<int>(std::lround(y_));
}

void RoiConfig::validate() const {
  if (!(threshold >= 0.0 && threshold < 1.0)) throw std::invalid_argument("ROI threshold must be in [0, 1)");
  if (!(decay > 0.0 && decay < 1.0)) throw std::invalid_argument("ROI decay must be in (0, 1)");
  for (int r : regions) check_class(r, "roi regions");
}

RoiDetector::RoiDetector(RoiConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

bool RoiDetector::check(int label) {
  check_class(label, "roi");
  const bool interesting = cfg_.regions.count(label) != 0;
  if (in_roi_) {
    if (interesting) {
      indicator_ = std::min(indicator_ / (1.0 - cfg_.decay), 1.0);
    } else {
      indicator_ *= 1.0 - cfg_.decay;
      if (indicator_ <= cfg_.threshold) {
        indicator_ = 0.0;
        in_roi_ = false;
      }
    }
  } else if (interesting) {
    indicator_ = 1.0;
    in_roi_ = true;
  }
  return in_roi_;
}

std::vector<TraceRecord> run_stream(const Classifier& classifier, const LabeledStream& stream,
                                    const RoiRunConfig& cfg) {
  const std::size_t n = stream.samples.size();
  if (!stream.timestamps.empty() && stream.timestamps.size() != n) {
    throw std::invalid_argument("run_stream: timestamps do not match samples");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!stream.timestamps.empty()) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return stream.timestamps[a] < stream.timestamps[b];
    });
  }
  EwmaFilter filter(cfg.alpha);
  RoiDetector detector(cfg.roi);
  std::vector<TraceRecord> trace;
  trace.reserve(n);
  for (std::size_t i : order) {
    const LabeledSample& s = stream.samples[i];
    TraceRecord r;
    r.index = i;
    r.true_label = s.label;
    r.raw_pred = classifier(preprocess(s.raw, cfg.preprocess));
    r.ewma_pred = filter.step(r.raw_pred);
    r.in_roi = detector.check(r.ewma_pred);
    r.indicator = detector.indicator();
    trace.push_back(r);
  }
  return trace;
}

std::vector<TraceRecord> run_stream(const ModelParams& model, const LabeledStream& stream,
                                    const RoiRunConfig& cfg) {
  return run_stream([&model](const Tensor<float>& x) { return classify(model, x); }, stream, cfg);
}

std::vector<TraceRecord> run_predictions(std::span<const int> predictions,
                                         std::span<const int> truth, double alpha,
                                         const RoiConfig& roi) {
  if (!truth.empty() && truth.size() != predictions.size()) {
    throw std::invalid_argument("run_predictions: truth and predictions differ in length");
  }
  EwmaFilter filter(alpha);
  RoiDetector detector(roi);
  std::vector<TraceRecord> trace(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    TraceRecord& r = trace[i];
    r.index = i;
    r.true_label = truth.empty() ? predictions[i] : truth[i];
    r.raw_pred = predictions[i];
    r.ewma_pred = filter.step(r.raw_pred);
    r.in_roi = detector.check(r.ewma_pred);
    r.indicator = detector.indicator();
  }
  return trace;
}

double CoverageRow::percent() const {
  const std::size_t n = total();
  return n == 0 ? 0.0 : 100.0 * static_cast<double>(in_roi) / static_cast<double>(n);
}

std::array<CoverageRow, 5> coverage_report(std::span<const TraceRecord> trace,
                                           std::span<const int> truth) {
  if (trace.size() != truth.size()) {
    throw std::invalid_argument("coverage_report: trace has " + std::to_string(trace.size()) +
                                " records but " + std::to_string(truth.size()) + " labels");
  }
  std::array<CoverageRow, 5> rows{};
  for (int k = 0; k < 5; ++k) rows[static_cast<std::size_t>(k)].label = k - 1;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const int label = truth[i];
    if (label < -1 || label > 3) {
      throw std::out_of_range("coverage_report: label must be -1..3, got " + std::to_string(label));
    }
    CoverageRow& row = rows[static_cast<std::size_t>(label + 1)];
    (trace[i].in_roi ? row.in_roi : row.outside) += 1;
  }
  return rows;
}

std::array<CoverageRow, 5> coverage_report(std::span<const TraceRecord> trace) {
  std::vector<int> truth(trace.size());
  std::transform(trace.begin(), trace.end(), truth.begin(),
                 [](const TraceRecord& r) { return r.true_label; });
  return coverage_report(trace, truth);
}

std::string trace_csv(std::span<const TraceRecord> trace) {
  std::ostringstream os;
  os.precision(17);
  os << "index,true_label,raw_pred,ewma_pred,indicator,in_roi\n";
  for (const TraceRecord& r : trace) {
    os << r.index << ',' << r.true_label << ',' << r.raw_pred << ',' << r.ewma_pred << ','
       << r.indicator << ',' << (r.in_roi ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string coverage_csv(const std::array<CoverageRow, 5>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << "label,region,in_roi,outside,total,percent_in_roi\n";
  for (const CoverageRow& r : rows) {
    os << r.label << ',' << region_name(r.label) << ',' << r.in_roi << ',' << r.outside << ','
       << r.total() << ',' << r.percent() << '\n';
  }
  return os.str();
}

}  // namespace smap
