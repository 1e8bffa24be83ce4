#include "smap/training.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace smap {

namespace {

// Flushes subnormal floats to zero for the lifetime of the guard. Adam's
// second-moment estimates decay into the subnormal range and would otherwise
// slow every update by an order of magnitude.
class FlushDenormals {
 public:
#if defined(__SSE__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

void check_label(int label) {
  if (label < 0 || label >= static_cast<int>(kNumClasses)) {
    throw std::out_of_range("class label must be 0..3, got " + std::to_string(label));
  }
}

}  // namespace

bool operator==(const EpochRecord& a, const EpochRecord& b) {
  return a.epoch == b.epoch && a.train_loss == b.train_loss && a.test_accuracy == b.test_accuracy;
}

PreparedDataset prepare(std::span<const LabeledSample> samples, const PreprocessConfig& cfg) {
  PreparedDataset out;
  out.reserve(samples.size());
  for (const LabeledSample& s : samples) {
    check_label(s.label);
    out.push_back({preprocess(s.raw, cfg), s.label});
  }
  return out;
}

TrainConfig TrainConfig::for_arch(ArchKind kind, std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = kind == ArchKind::Baseline ? 1e-6 : 1e-5;
  c.seed = seed;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("max epochs must be >= 1");
}

template <typename T>
T cross_entropy_logits(std::span<const T> logits, int label) {
  check_label(label);
  if (logits.size() != kNumClasses) throw ShapeError("cross entropy expects 4 logits");
  return -log_softmax(logits)[static_cast<std::size_t>(label)];
}

double cross_entropy(std::span<const double> probs, int label) {
  check_label(label);
  if (probs.size() != kNumClasses) throw ShapeError("cross entropy expects 4 probabilities");
  return -std::log(probs[static_cast<std::size_t>(label)]);
}

template <typename T>
Gradients<T> zero_gradients(const BasicModelParams<T>& model) {
  Gradients<T> g;
  g.reserve(model.layers.size());
  for (const auto& l : model.layers) g.push_back({Tensor<T>(l.weight.shape()), Tensor<T>(l.bias.shape())});
  return g;
}

template <typename T>
T accumulate_gradient(const BasicModelParams<T>& model, const Tensor<T>& input, int label,
                      Gradients<T>& acc) {
  check_label(label);
  const ArchitectureSpec& arch = model.arch;
  if (acc.size() != model.layers.size()) throw ShapeError("gradient buffer does not match model");
  const ForwardTrace<T> trace = forward_trace(model, input);
  const Tensor<T>& logits = trace.activations.back();
  const std::vector<T> logp = log_softmax(logits.data());
  const T loss = -logp[static_cast<std::size_t>(label)];

  // dL/dlogits = softmax - onehot
  Tensor<T> grad(logits.shape());
  for (std::size_t k = 0; k < grad.size(); ++k) grad[k] = std::exp(logp[k]);
  grad[static_cast<std::size_t>(label)] -= T{1};

  std::size_t first_param = arch.layers.size();
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    if (arch.layers[i].parametric()) {
      first_param = i;
      break;
    }
  }

  std::size_t p = model.layers.size();
  for (std::size_t i = arch.layers.size(); i-- > first_param;) {
    const LayerSpec& l = arch.layers[i];
    const Tensor<T>& in = trace.activations[i];
    const bool need_input = i > first_param;
    switch (l.type) {
      case LayerType::Linear: {
        const LayerParams<T>& lp = model.layers[--p];
        if (l.activation == Activation::ReLU) {
          relu_backward_inplace(grad.data(), trace.activations[i + 1].data());
        }
        std::vector<T> dinput(need_input ? in.size() : 0);
        linear_backward_accumulate(in.data(), lp.weight, grad.data(), acc[p].weight.data(),
                                   acc[p].bias.data(), std::span<T>(dinput));
        if (need_input) grad = Tensor<T>(in.shape(), std::move(dinput));
        break;
      }
      case LayerType::Conv3D: {
        const LayerParams<T>& lp = model.layers[--p];
        Tensor<T> dinput;
        conv3d_backward_accumulate(in, lp.weight, grad, l.stride, acc[p].weight.data(),
                                   acc[p].bias.data(), need_input ? &dinput : nullptr);
        if (need_input) grad = std::move(dinput);
        break;
      }
      case LayerType::MaxPool3D:
        grad = maxpool3d_backward(grad, trace.argmax[i], in.shape());
        break;
      case LayerType::Flatten:
        grad = grad.reshaped(in.shape());
        break;
    }
  }
  return loss;
}

template <typename T>
BatchGradient<T> backward(const BasicModelParams<T>& model, std::span<const LabeledInput<T>> batch) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  BatchGradient<T> out{zero_gradients(model), T{0}};
  for (const auto& s : batch) out.loss += accumulate_gradient(model, s.input, s.label, out.grads);
  const T inv = T{1} / static_cast<T>(batch.size());
  for (auto& l : out.grads) {
    for (T& v : l.weight.data()) v *= inv;
    for (T& v : l.bias.data()) v *= inv;
  }
  out.loss *= inv;
  return out;
}

template <typename T>
T batch_loss(const BasicModelParams<T>& model, std::span<const LabeledInput<T>> batch) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  T sum{0};
  for (const auto& s : batch) {
    const std::vector<T> logits = forward_logits(model, s.input);
    sum += cross_entropy_logits(std::span<const T>(logits), s.label);
  }
  return sum / static_cast<T>(batch.size());
}

AdamState make_adam_state(const ModelParams& model) {
  return {zero_gradients(model), zero_gradients(model), 0};
}

void adam_step(ModelParams& model, const Gradients<float>& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.size() != model.layers.size() || state.m.size() != model.layers.size()) {
    throw ShapeError("adam_step: gradient/state layout does not match model");
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  // Bias corrections folded into the step size; epsilon is added to the raw sqrt(v).
  const double step = cfg.learning_rate * std::sqrt(1.0 - std::pow(cfg.beta2, t)) /
                      (1.0 - std::pow(cfg.beta1, t));
  const float b1 = static_cast<float>(cfg.beta1);
  const float b2 = static_cast<float>(cfg.beta2);
  const float c1 = static_cast<float>(1.0 - cfg.beta1);
  const float c2 = static_cast<float>(1.0 - cfg.beta2);
  const float eps = static_cast<float>(cfg.epsilon);
  const float lr_t = static_cast<float>(step);

  auto update = [&](std::span<float> theta, std::span<const float> g, std::span<float> m,
                    std::span<float> v) {
    if (theta.size() != g.size() || m.size() != g.size() || v.size() != g.size()) {
      throw ShapeError("adam_step: tensor size mismatch");
    }
    using Array = Eigen::Map<Eigen::ArrayXf>;
    // Cache-sized chunks so the three passes reuse data already in L1.
    constexpr std::size_t kChunk = 2048;
    for (std::size_t at = 0; at < theta.size(); at += kChunk) {
      const auto n = static_cast<Eigen::Index>(std::min(kChunk, theta.size() - at));
      Array th(theta.data() + at, n), mm(m.data() + at, n), vv(v.data() + at, n);
      const Eigen::Map<const Eigen::ArrayXf> gg(g.data() + at, n);
      mm = b1 * mm + c1 * gg;
      vv = b2 * vv + c2 * gg.square();
      th -= lr_t * mm / (vv.sqrt() + eps);
    }
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    update(model.layers[l].weight.data(), grads[l].weight.data(), state.m[l].weight.data(),
           state.v[l].weight.data());
    update(model.layers[l].bias.data(), grads[l].bias.data(), state.m[l].bias.data(),
           state.v[l].bias.data());
  }
}

bool EarlyStopping::update(double accuracy) {
  ++epoch_;
  if (accuracy > best_) {
    best_ = accuracy;
    best_epoch_ = epoch_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

Evaluation evaluate(const ModelParams& model, std::span<const PreparedSample> data) {
  Evaluation e;
  std::size_t correct = 0;
  for (const PreparedSample& s : data) {
    check_label(s.label);
    const int pred = classify(model, s.input);
    ++e.confusion[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(pred)];
    if (pred == s.label) ++correct;
  }
  e.accuracy = data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  return e;
}

TrainResult train(ArchKind kind, std::span<const PreparedSample> train_set,
                  std::span<const PreparedSample> test_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty() || test_set.empty()) throw std::invalid_argument("train: empty dataset");
  const FlushDenormals ftz;

  ModelParams model = build(kind, cfg.seed);
  AdamState adam = make_adam_state(model);
  Gradients<float> grads = zero_gradients(model);
  EarlyStopping stopper(cfg.patience);
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0xE90C5));

  TrainResult best{model, {}};
  Evaluation best_eval;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& l : grads) {
        std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0f);
        std::fill(l.bias.data().begin(), l.bias.data().end(), 0.0f);
      }
      for (std::size_t k = start; k < end; ++k) {
        const PreparedSample& s = train_set[order[k]];
        loss_sum += accumulate_gradient(model, s.input, s.label, grads);
      }
      if (end - start > 1) {
        const float inv = 1.0f / static_cast<float>(end - start);
        for (auto& l : grads) {
          for (float& v : l.weight.data()) v *= inv;
          for (float& v : l.bias.data()) v *= inv;
        }
      }
      adam_step(model, grads, adam, cfg);
    }
    const double train_loss = loss_sum / static_cast<double>(train_set.size());
    if (!std::isfinite(train_loss)) {
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                            " (non-finite loss)");
    }
    const Evaluation ev = evaluate(model, test_set);
    const EpochRecord rec{epoch, train_loss, ev.accuracy};
    best.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.update(ev.accuracy)) {
      best.model = model;
      best_eval = ev;
    }
    if (stopper.should_stop()) break;
  }
  best.report.best_epoch = stopper.best_epoch();
  best.report.epochs_run = stopper.epochs_seen();
  best.report.confusion = best_eval.confusion;
  return best;
}

std::string train_report_csv(const TrainReport& report) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,train_loss,test_accuracy\n";
  for (const EpochRecord& r : report.epochs) {
    os << r.epoch << ',' << r.train_loss << ',' << r.test_accuracy << '\n';
  }
  return os.str();
}

std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t j = 0; j < kNumClasses; ++j) os << ',' << region_name(static_cast<int>(j));
  os << '\n';
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    os << region_name(static_cast<int>(i));
    for (std::size_t j = 0; j < kNumClasses; ++j) os << ',' << m[i][j];
    os << '\n';
  }
  return os.str();
}

template float cross_entropy_logits(std::span<const float>, int);
template double cross_entropy_logits(std::span<const double>, int);
template Gradients<float> zero_gradients(const BasicModelParams<float>&);
template Gradients<double> zero_gradients(const BasicModelParams<double>&);
template float accumulate_gradient(const BasicModelParams<float>&, const Tensor<float>&, int,
                                   Gradients<float>&);
template double accumulate_gradient(const BasicModelParams<double>&, const Tensor<double>&, int,
                                    Gradients<double>&);
template BatchGradient<float> backward(const BasicModelParams<float>&,
                                       std::span<const LabeledInput<float>>);
template BatchGradient<double> backward(const BasicModelParams<double>&,
                                        std::span<const LabeledInput<double>>);
template float batch_loss(const BasicModelParams<float>&, std::span<const LabeledInput<float>>);
template double batch_loss(const BasicModelParams<double>&, std::span<const LabeledInput<double>>);

}  // namespace smap
