#include "dtdr/linear_head.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "dtdr/errors.hpp"
#include "dtdr/hash.hpp"
#include "dtdr/rng.hpp"

namespace dtdr {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(lr_decay > 0.0)) throw std::invalid_argument("lr_decay must be > 0");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
}

LinearHead::LinearHead(std::size_t tools, std::size_t dim, bool bias)
    : tools_(tools), dim_(dim), bias_(bias), weights_(tools * dim, 0.0), biases_(tools, 0.0) {
  if (tools == 0 || dim == 0) throw std::invalid_argument("linear head needs tools and dim > 0");
}

LinearHead LinearHead::initialized(std::size_t tools, std::size_t dim, bool bias,
                                   std::uint64_t seed) {
  LinearHead h(tools, dim, bias);
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : h.weights_) v = (2.0 * rng.uniform() - 1.0) * bound;
  if (bias) {
    for (double& v : h.biases_) v = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return h;
}

std::vector<double> LinearHead::logits(const Embedding& x) const {
  if (x.dim() != dim_) {
    throw DimMismatch("linear head expects dim " + std::to_string(dim_) + ", got " +
                      std::to_string(x.dim()));
  }
  std::vector<double> z(tools_);
  for (std::size_t f = 0; f < tools_; ++f) {
    const double* row = weights_.data() + f * dim_;
    double s = bias_ ? biases_[f] : 0.0;
    for (std::size_t j = 0; j < dim_; ++j) s += row[j] * x.values[j];
    z[f] = s;
  }
  return z;
}

std::vector<double> LinearHead::softmax(const Embedding& x) const {
  auto z = logits(x);
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

std::string LinearHead::to_json(std::string_view catalog_fingerprint,
                                std::span<const std::string> tool_names) const {
  if (tool_names.size() != tools_) throw std::invalid_argument("tool name count != head rows");
  json rows = json::array();
  for (std::size_t f = 0; f < tools_; ++f) {
    rows.push_back(std::vector<double>(weights_.begin() + static_cast<std::ptrdiff_t>(f * dim_),
                                       weights_.begin() + static_cast<std::ptrdiff_t>((f + 1) * dim_)));
  }
  json root = {{"format", "dtdr-linear-head/1"},
               {"catalog_fingerprint", catalog_fingerprint},
               {"tools", std::vector<std::string>(tool_names.begin(), tool_names.end())},
               {"dim", dim_},
               {"bias", bias_},
               {"history_len", history_len},
               {"threshold", threshold},
               {"weights", std::move(rows)},
               {"biases", biases_}};
  return root.dump() + "\n";
}

LinearHead LinearHead::from_json(std::string_view text, std::string_view catalog_fingerprint) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("model", std::string("invalid JSON: ") + e.what());
  }
  try {
    if (root.at("format").get<std::string>() != "dtdr-linear-head/1") {
      throw SchemaError("model.format", "not a linear head file");
    }
    const auto fp = root.at("catalog_fingerprint").get<std::string>();
    if (fp != catalog_fingerprint) {
      throw CatalogMismatch("model was trained on catalog " + fp + ", not " +
                            std::string(catalog_fingerprint));
    }
    const auto& rows = root.at("weights");
    const auto dim = root.at("dim").get<std::size_t>();
    LinearHead h(rows.size(), dim, root.at("bias").get<bool>());
    for (std::size_t f = 0; f < rows.size(); ++f) {
      const auto row = rows[f].get<std::vector<double>>();
      if (row.size() != dim) throw SchemaError("model.weights", "ragged weight matrix");
      std::copy(row.begin(), row.end(), h.weights_.begin() + static_cast<std::ptrdiff_t>(f * dim));
    }
    h.biases_ = root.at("biases").get<std::vector<double>>();
    if (h.biases_.size() != h.tools_) throw SchemaError("model.biases", "bias count != rows");
    for (double v : h.weights_) {
      if (!std::isfinite(v)) throw SchemaError("model.weights", "non-finite weight");
    }
    h.history_len = root.value("history_len", std::size_t{0});
    h.threshold = root.value("threshold", 0.2);
    return h;
  } catch (const json::exception& e) {
    throw SchemaError("model", e.what());
  }
}

namespace {

template <typename Get>
double accumulate(const LinearHead& head, std::size_t n, Get get, std::vector<double>* grad_w,
                  std::vector<double>* grad_b) {
  const std::size_t F = head.tools(), D = head.dim();
  if (grad_w) grad_w->assign(F * D, 0.0);
  if (grad_b) grad_b->assign(F, 0.0);
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const TrainingExample& ex = get(i);
    if (ex.target.size() != F) throw std::invalid_argument("target size != head rows");
    const auto z = head.logits(ex.input);
    for (std::size_t f = 0; f < F; ++f) {
      const double y = ex.target[f];
      // log(1 + e^z) - y z, written to stay finite for large |z|.
      const double softplus =
          z[f] > 0 ? z[f] + std::log1p(std::exp(-z[f])) : std::log1p(std::exp(z[f]));
      loss += softplus - y * z[f];
      const double sig = z[f] >= 0 ? 1.0 / (1.0 + std::exp(-z[f]))
                                   : std::exp(z[f]) / (1.0 + std::exp(z[f]));
      const double g = (sig - y) * inv_n;
      if (grad_w) {
        double* row = grad_w->data() + f * D;
        for (std::size_t j = 0; j < D; ++j) row[j] += g * ex.input.values[j];
      }
      if (grad_b && head.has_bias()) (*grad_b)[f] += g;
    }
  }
  return loss * inv_n;
}

}  // namespace

double loss_and_gradient(const LinearHead& head, std::span<const TrainingExample> batch,
                         std::vector<double>* grad_w, std::vector<double>* grad_b) {
  return accumulate(
      head, batch.size(), [&](std::size_t i) -> const TrainingExample& { return batch[i]; },
      grad_w, grad_b);
}

namespace {

struct Adam {
  std::vector<double> m, v;
  std::size_t t = 0;

  void step(std::vector<double>& param, std::vector<double>& grad, double lr,
            const TrainConfig& c) {
    if (m.empty()) {
      m.assign(param.size(), 0.0);
      v.assign(param.size(), 0.0);
    }
    const double b1t = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double b2t = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = grad[i] + c.weight_decay * param[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      param[i] -= lr * (m[i] / b1t) / (std::sqrt(v[i] / b2t) + c.adam_eps);
    }
  }
};

}  // namespace

LinearHead train_linear_head(std::span<const TrainingExample> examples, std::size_t tools,
                             const TrainConfig& config, TrainLog* log,
                             const std::function<void(int, double)>& on_epoch) {
  config.validate();
  if (examples.empty()) throw EmptyCorpus("no training examples");
  const std::size_t dim = examples.front().input.dim();
  for (const auto& ex : examples) {
    if (ex.input.dim() != dim) throw DimMismatch("training inputs have different dims");
  }

  LinearHead head = LinearHead::initialized(tools, dim, config.bias, config.seed);
  Rng rng(mix64(config.seed ^ 0x5eedULL));
  const double initial = loss_and_gradient(head, examples, nullptr, nullptr);
  if (!std::isfinite(initial)) throw NonFiniteLoss("initial loss is not finite");
  if (log) {
    log->initial_loss = initial;
    log->epoch_loss.clear();
  }

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Adam adam_w, adam_b;
  std::vector<double> gw, gb;
  double lr = config.learning_rate;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double loss = accumulate(
          head, end - start,
          [&](std::size_t i) -> const TrainingExample& { return examples[order[start + i]]; },
          &gw, &gb);
      if (!std::isfinite(loss)) {
        throw NonFiniteLoss("loss became non-finite in epoch " + std::to_string(epoch) +
                            " at example offset " + std::to_string(start) +
                            " (learning rate " + std::to_string(lr) + ")");
      }
      ++adam_w.t;
      ++adam_b.t;
      adam_w.step(head.weights(), gw, lr, config);
      if (head.has_bias()) adam_b.step(head.biases(), gb, lr, config);
    }
    lr *= config.lr_decay;
    const double full = loss_and_gradient(head, examples, nullptr, nullptr);
    if (!std::isfinite(full)) {
      throw NonFiniteLoss("loss became non-finite after epoch " + std::to_string(epoch));
    }
    if (log) log->epoch_loss.push_back(full);
    if (on_epoch) on_epoch(epoch, full);
  }
  return head;
}

}  // namespace dtdr
