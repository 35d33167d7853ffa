#include "jtln/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace jtln {

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kTargetOrderStream = 12;
constexpr std::uint64_t kSourceOrderStream = 13;
constexpr std::uint64_t kSourcePhaseStream = 14;
constexpr std::uint64_t kHeadReinitStream = 15;

Vector uniform_vector(Eigen::Index n, double bound, Rng& rng) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-bound, bound);
  return v;
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

Vector softmax(const Vector& logits) {
  Vector z = (logits.array() - logits.maxCoeff()).exp();
  return z / z.sum();
}

// Transpose-Jacobian of softmax applied to an output-side gradient:
// J^T g = h .* (g - <h, g>).
Vector softmax_backprop(const Vector& h, const Vector& grad_out) {
  return h.array() * (grad_out.array() - h.dot(grad_out));
}

struct StepResult {
  double value = 0;
  ObjectiveComponents components;
  ModelParams grad;
};

// One pass over a (target batch, source batch) pair computing the objective
// and, when requested, its full analytic gradient. Keeping value and gradient
// in one place guarantees each per-sample transport problem is solved once.
StepResult eval_step(const ModelParams& params, const LabeledSet& target_batch,
                     const LabeledSet& source_batch, const CostMatrix& cost,
                     const TrainConfig& config, bool want_grad) {
  params.validate();
  config.validate();
  target_batch.validate();
  if (target_batch.features.cols() != params.input_dim())
    throw DimensionMismatch("target batch feature dimension does not match the model");
  if (target_batch.label_count != params.target_classes())
    throw DimensionMismatch("target batch label count does not match the target head");
  const bool use_source = config.lambda_s > 0;
  const bool use_ot = config.lambda_ot > 0;
  if (use_source) {
    source_batch.validate();
    if (source_batch.features.cols() != params.input_dim())
      throw DimensionMismatch("source batch feature dimension does not match the model");
    if (source_batch.label_count != params.source_classes())
      throw DimensionMismatch("source batch label count does not match the source head");
  }
  if (use_ot) {
    cost.validate();
    if (cost.rows() != params.source_classes() || cost.cols() != params.target_classes())
      throw DimensionMismatch("cost matrix shape does not match the two heads");
  }

  StepResult result;
  if (want_grad) result.grad = ModelParams::zeros_like(params);
  const double n_t = static_cast<double>(target_batch.size());

  for (Eigen::Index k = 0; k < target_batch.size(); ++k) {
    const Vector x = target_batch.features.row(k).transpose();
    const Vector pre = params.extractor_w * x + params.extractor_b;
    const Vector f = pre.cwiseMax(0.0);
    const Vector h_s = softmax(params.source_w * f + params.source_b);
    const Vector h_t = softmax(params.target_w * f + params.target_b);
    const Eigen::Index label = target_batch.labels[static_cast<std::size_t>(k)] - 1;

    result.components.target_ce += -std::log(std::max(h_t[label], 1e-300)) / n_t;

    Vector d_logits_t = Vector::Zero(h_t.size());
    Vector d_logits_s = Vector::Zero(h_s.size());
    if (want_grad) {
      d_logits_t = h_t / n_t;
      d_logits_t[label] -= 1.0 / n_t;
    }

    if (use_ot) {
      OtSolution solution;
      try {
        solution = sinkhorn_solve(Histogram{h_s, {}}, Histogram{h_t, {}}, cost, config.sinkhorn);
      } catch (const NumericalUnderflow& e) {
        throw NumericalUnderflow("transport term failed at target sample " + std::to_string(k) +
                                 ": " + e.what());
      }
      result.components.ot += solution.loss / n_t;
      if (want_grad) {
        const GradientPair g = ot_loss_gradients(solution, config.sinkhorn);
        const double w = config.lambda_ot / n_t;
        d_logits_s += softmax_backprop(h_s, w * g.d_mu);
        d_logits_t += softmax_backprop(h_t, w * g.d_nu);
      }
    }

    if (want_grad) {
      result.grad.target_w.noalias() += d_logits_t * f.transpose();
      result.grad.target_b += d_logits_t;
      result.grad.source_w.noalias() += d_logits_s * f.transpose();
      result.grad.source_b += d_logits_s;
      const Vector d_f =
          params.target_w.transpose() * d_logits_t + params.source_w.transpose() * d_logits_s;
      const Vector d_pre = (pre.array() > 0.0).select(d_f, Vector::Zero(d_f.size()));
      result.grad.extractor_w.noalias() += d_pre * x.transpose();
      result.grad.extractor_b += d_pre;
    }
  }

  if (use_source) {
    const double n_s = static_cast<double>(source_batch.size());
    for (Eigen::Index k = 0; k < source_batch.size(); ++k) {
      const Vector x = source_batch.features.row(k).transpose();
      const Vector pre = params.extractor_w * x + params.extractor_b;
      const Vector f = pre.cwiseMax(0.0);
      const Vector h_s = softmax(params.source_w * f + params.source_b);
      const Eigen::Index label = source_batch.labels[static_cast<std::size_t>(k)] - 1;

      result.components.source_ce += -std::log(std::max(h_s[label], 1e-300)) / n_s;

      if (want_grad) {
        Vector d_logits_s = (config.lambda_s / n_s) * h_s;
        d_logits_s[label] -= config.lambda_s / n_s;
        result.grad.source_w.noalias() += d_logits_s * f.transpose();
        result.grad.source_b += d_logits_s;
        const Vector d_f = params.source_w.transpose() * d_logits_s;
        const Vector d_pre = (pre.array() > 0.0).select(d_f, Vector::Zero(d_f.size()));
        result.grad.extractor_w.noalias() += d_pre * x.transpose();
        result.grad.extractor_b += d_pre;
      }
    }
  }

  result.value = result.components.target_ce + config.lambda_s * result.components.source_ce +
                 config.lambda_ot * result.components.ot;
  return result;
}

// Draws the next `count` indices from a cycling, reshuffling order.
class CyclingSampler {
 public:
  CyclingSampler(Eigen::Index n, Rng rng) : rng_(std::move(rng)), n_(n) { reshuffle(); }

  std::vector<int> next(Eigen::Index count) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) {
      out.push_back(order_[cursor_++]);
      if (cursor_ == order_.size()) {
        reshuffle();
        cursor_ = 0;
      }
    }
    return out;
  }

 private:
  void reshuffle() { order_ = rng_.permutation(static_cast<int>(n_)); }

  Rng rng_;
  Eigen::Index n_;
  std::vector<int> order_;
  std::size_t cursor_ = 0;
};

}  // namespace

ModelParams ModelParams::init(Eigen::Index input_dim, Eigen::Index hidden_dim,
                              Eigen::Index source_classes, Eigen::Index target_classes, Rng& rng) {
  ModelParams p;
  const double extractor_bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  p.extractor_w = uniform_matrix(hidden_dim, input_dim, extractor_bound, rng);
  p.extractor_b = uniform_vector(hidden_dim, extractor_bound, rng);
  p.target_w = uniform_matrix(target_classes, hidden_dim, head_bound, rng);
  p.target_b = uniform_vector(target_classes, head_bound, rng);
  p.source_w = uniform_matrix(source_classes, hidden_dim, head_bound, rng);
  p.source_b = uniform_vector(source_classes, head_bound, rng);
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p;
  p.extractor_w = Matrix::Zero(other.extractor_w.rows(), other.extractor_w.cols());
  p.extractor_b = Vector::Zero(other.extractor_b.size());
  p.source_w = Matrix::Zero(other.source_w.rows(), other.source_w.cols());
  p.source_b = Vector::Zero(other.source_b.size());
  p.target_w = Matrix::Zero(other.target_w.rows(), other.target_w.cols());
  p.target_b = Vector::Zero(other.target_b.size());
  return p;
}

void ModelParams::axpy(double alpha, const ModelParams& other) {
  extractor_w += alpha * other.extractor_w;
  extractor_b += alpha * other.extractor_b;
  source_w += alpha * other.source_w;
  source_b += alpha * other.source_b;
  target_w += alpha * other.target_w;
  target_b += alpha * other.target_b;
}

bool ModelParams::all_finite() const {
  return extractor_w.allFinite() && extractor_b.allFinite() && source_w.allFinite() &&
         source_b.allFinite() && target_w.allFinite() && target_b.allFinite();
}

void ModelParams::validate() const {
  if (extractor_w.rows() != extractor_b.size() || source_w.cols() != extractor_w.rows() ||
      target_w.cols() != extractor_w.rows() || source_w.rows() != source_b.size() ||
      target_w.rows() != target_b.size())
    throw DimensionMismatch("model parameter shapes are inconsistent");
  if (!all_finite()) throw std::invalid_argument("model parameters must be finite");
}

void LabeledSet::validate() const {
  if (features.rows() < 1) throw std::invalid_argument("labeled set is empty");
  if (!features.allFinite()) throw std::invalid_argument("features must be finite");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw DimensionMismatch("label count differs from feature row count");
  if (label_count < 1) throw std::invalid_argument("label_count must be at least 1");
  for (const int label : labels) {
    if (label < 1 || label > label_count)
      throw SchemaError("label " + std::to_string(label) + " outside [1, " +
                        std::to_string(label_count) + "]");
  }
}

LabeledSet subset(const LabeledSet& set, const std::vector<int>& rows) {
  LabeledSet out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), set.features.cols());
  out.labels.reserve(rows.size());
  out.label_count = set.label_count;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = set.features.row(rows[i]);
    out.labels.push_back(set.labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

void TrainConfig::validate() const {
  if (lambda_s < 0 || lambda_ot < 0) throw std::invalid_argument("loss weights must be nonnegative");
  if (learning_rate < 0) throw std::invalid_argument("learning_rate must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (hidden_dim < 1) throw std::invalid_argument("hidden_dim must be at least 1");
  sinkhorn.validate();
}

ForwardResult forward(const ModelParams& params, const Eigen::Ref<const Vector>& x) {
  params.validate();
  if (x.size() != params.input_dim())
    throw DimensionMismatch("input has " + std::to_string(x.size()) + " features, model expects " +
                            std::to_string(params.input_dim()));
  ForwardResult out;
  out.features = (params.extractor_w * x + params.extractor_b).cwiseMax(0.0);
  out.h_s = Histogram{softmax(params.source_w * out.features + params.source_b), {}};
  out.h_t = Histogram{softmax(params.target_w * out.features + params.target_b), {}};
  return out;
}

double cross_entropy(const Histogram& pred, Eigen::Index label_index) {
  if (label_index < 0 || label_index >= pred.size())
    throw DimensionMismatch("label index " + std::to_string(label_index) +
                            " outside the prediction's " + std::to_string(pred.size()) + " bins");
  return -std::log(std::max(pred.weights[label_index], 1e-300));
}

ObjectiveValue jtln_objective(const ModelParams& params, const LabeledSet& target_batch,
                              const LabeledSet& source_batch, const CostMatrix& cost,
                              const TrainConfig& config) {
  const StepResult r = eval_step(params, target_batch, source_batch, cost, config, false);
  return ObjectiveValue{r.value, r.components};
}

ModelParams backward(const ModelParams& params, const LabeledSet& target_batch,
                     const LabeledSet& source_batch, const CostMatrix& cost,
                     const TrainConfig& config) {
  return eval_step(params, target_batch, source_batch, cost, config, true).grad;
}

double evaluate_accuracy(const ModelParams& params, const LabeledSet& set) {
  set.validate();
  Eigen::Index correct = 0;
  for (Eigen::Index k = 0; k < set.size(); ++k) {
    const ForwardResult out = forward(params, set.features.row(k).transpose());
    Eigen::Index pred = 0;
    out.h_t.weights.maxCoeff(&pred);
    if (pred == set.labels[static_cast<std::size_t>(k)] - 1) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

ModelParams seeded_init(Eigen::Index input_dim, int hidden_dim, Eigen::Index source_classes,
                        Eigen::Index target_classes, std::uint64_t seed) {
  Rng rng(seed, kInitStream);
  return ModelParams::init(input_dim, hidden_dim, source_classes, target_classes, rng);
}

void reinitialize_target_head(ModelParams& params, std::uint64_t seed) {
  Rng rng(seed, kHeadReinitStream);
  const double bound = 1.0 / std::sqrt(static_cast<double>(params.hidden_dim()));
  params.target_w = uniform_matrix(params.target_classes(), params.hidden_dim(), bound, rng);
  params.target_b = uniform_vector(params.target_classes(), bound, rng);
}

TrainReport train(const LabeledSet& target_train, const LabeledSet& source, const CostMatrix& cost,
                  const TrainConfig& config, const LabeledSet& target_test) {
  config.validate();
  target_train.validate();
  const bool use_source = config.lambda_s > 0;
  if (use_source) source.validate();
  Eigen::Index source_classes = use_source ? source.label_count : 1;
  if (config.lambda_ot > 0) {
    cost.validate();
    if (use_source && cost.rows() != source.label_count)
      throw DimensionMismatch("cost matrix rows do not match the source label count");
    source_classes = cost.rows();
  }
  return train_from(seeded_init(target_train.features.cols(), config.hidden_dim, source_classes,
                                target_train.label_count, config.seed),
                    target_train, source, cost, config, target_test);
}

TrainReport train_from(ModelParams initial, const LabeledSet& target_train,
                       const LabeledSet& source, const CostMatrix& cost, const TrainConfig& config,
                       const LabeledSet& target_test) {
  config.validate();
  target_train.validate();
  target_test.validate();
  const bool use_source = config.lambda_s > 0;
  if (use_source) source.validate();
  if (config.lambda_ot > 0) {
    cost.validate();
    if (cost.rows() != initial.source_classes())
      throw DimensionMismatch("cost matrix rows do not match the source head");
    if (cost.cols() != target_train.label_count)
      throw DimensionMismatch("cost matrix columns do not match the target label count");
  }
  ModelParams params = std::move(initial);

  Rng target_order_rng(config.seed, kTargetOrderStream);
  CyclingSampler source_sampler(std::max<Eigen::Index>(source.size(), 1),
                                Rng(config.seed, kSourceOrderStream));

  const Eigen::Index n_t = target_train.size();
  TrainReport report;
  report.epochs.reserve(static_cast<std::size_t>(config.epochs));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<int> order = target_order_rng.permutation(static_cast<int>(n_t));
    EpochRecord record;
    int steps = 0;
    for (Eigen::Index begin = 0; begin < n_t; begin += config.batch_size) {
      const Eigen::Index end = std::min<Eigen::Index>(begin + config.batch_size, n_t);
      const std::vector<int> batch_rows(order.begin() + begin, order.begin() + end);
      const LabeledSet target_batch = subset(target_train, batch_rows);
      LabeledSet source_batch;
      if (use_source) source_batch = subset(source, source_sampler.next(config.batch_size));

      const StepResult step = eval_step(params, target_batch, source_batch, cost, config, true);
      if (!std::isfinite(step.value))
        throw NonFiniteLoss("objective became non-finite at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(steps));
      params.axpy(-config.learning_rate, step.grad);
      if (!params.all_finite())
        throw NonFiniteLoss("parameters became non-finite at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(steps));

      record.target_ce += step.components.target_ce;
      record.source_ce += step.components.source_ce;
      record.ot_loss += step.components.ot;
      record.objective += step.value;
      ++steps;
    }
    record.target_ce /= steps;
    record.source_ce /= steps;
    record.ot_loss /= steps;
    record.objective /= steps;
    record.test_accuracy = evaluate_accuracy(params, target_test);
    report.epochs.push_back(record);
  }
  report.final_params = std::move(params);
  return report;
}

ModelParams train_source_phase(ModelParams params, const LabeledSet& source,
                               const TrainConfig& config) {
  config.validate();
  source.validate();
  params.validate();
  if (source.features.cols() != params.input_dim())
    throw DimensionMismatch("source feature dimension does not match the model");
  if (source.label_count != params.source_classes())
    throw DimensionMismatch("source label count does not match the source head");

  Rng order_rng(config.seed, kSourcePhaseStream);
  const Eigen::Index n_s = source.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<int> order = order_rng.permutation(static_cast<int>(n_s));
    for (Eigen::Index begin = 0; begin < n_s; begin += config.batch_size) {
      const Eigen::Index end = std::min<Eigen::Index>(begin + config.batch_size, n_s);
      const std::vector<int> batch_rows(order.begin() + begin, order.begin() + end);
      const LabeledSet batch = subset(source, batch_rows);

      ModelParams grad = ModelParams::zeros_like(params);
      const double n_b = static_cast<double>(batch.size());
      double value = 0;
      for (Eigen::Index k = 0; k < batch.size(); ++k) {
        const Vector x = batch.features.row(k).transpose();
        const Vector pre = params.extractor_w * x + params.extractor_b;
        const Vector f = pre.cwiseMax(0.0);
        const Vector h_s = softmax(params.source_w * f + params.source_b);
        const Eigen::Index label = batch.labels[static_cast<std::size_t>(k)] - 1;
        value += -std::log(std::max(h_s[label], 1e-300)) / n_b;

        Vector d_logits = h_s / n_b;
        d_logits[label] -= 1.0 / n_b;
        grad.source_w.noalias() += d_logits * f.transpose();
        grad.source_b += d_logits;
        const Vector d_f = params.source_w.transpose() * d_logits;
        const Vector d_pre = (pre.array() > 0.0).select(d_f, Vector::Zero(d_f.size()));
        grad.extractor_w.noalias() += d_pre * x.transpose();
        grad.extractor_b += d_pre;
      }
      if (!std::isfinite(value))
        throw NonFiniteLoss("source phase objective became non-finite at epoch " +
                            std::to_string(epoch));
      params.axpy(-config.learning_rate, grad);
    }
  }
  return params;
}

}  // namespace jtln
