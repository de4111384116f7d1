#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "attrib/nn.hpp"

namespace attrib::nn {

template <typename T>
TrainResult<T> train(const ModelGraph<T>& model, const Dataset<T>& data,
                     const TrainOptions& options) {
  if (data.size() == 0) throw Error("train: empty dataset");
  if (data.labels.size() != data.images.size()) {
    throw Error("train: " + std::to_string(data.images.size()) + " images but " +
                std::to_string(data.labels.size()) + " labels");
  }
  const std::size_t classes = model.metadata().num_classes;
  for (std::size_t label : data.labels) {
    if (label >= classes) {
      throw Error("train: label " + std::to_string(label) + " outside " +
                  std::to_string(classes) + " classes");
    }
  }
  if (options.batch_size == 0) throw Error("train: batch size must be >= 1");

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(data.size());
  ModelGraph<T> current = model;
  std::vector<EpochMetrics> history;
  const T lr = static_cast<T>(options.learning_rate);

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<LayerParams<T>> grad_sum;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const auto trace = forward(current, data.images[idx]);
        const std::size_t label = data.labels[idx];
        loss_sum -= std::log(std::max(static_cast<double>(trace.probabilities[label]), 1e-300));
        if (trace.predicted == label) ++correct;
        // d cross-entropy / d logits = p - onehot(label)
        Tensor<T> seed(Shape{classes}, trace.probabilities);
        seed[label] -= T{1};
        auto g = backward(current, trace, seed, /*param_grads=*/true);
        if (grad_sum.empty()) {
          grad_sum = std::move(g.params);
          continue;
        }
        for (std::size_t i = 0; i < grad_sum.size(); ++i) {
          auto& acc = grad_sum[i];
          if (acc.weight.empty()) continue;
          for (std::size_t k = 0; k < acc.weight.size(); ++k) acc.weight[k] += g.params[i].weight[k];
          for (std::size_t k = 0; k < acc.bias.size(); ++k) acc.bias[k] += g.params[i].bias[k];
        }
      }
      const T scale = lr / static_cast<T>(end - start);
      std::vector<LayerParams<T>> next = current.params();
      for (std::size_t i = 0; i < next.size(); ++i) {
        if (next[i].weight.empty()) continue;
        for (std::size_t k = 0; k < next[i].weight.size(); ++k) {
          next[i].weight[k] -= scale * grad_sum[i].weight[k];
        }
        for (std::size_t k = 0; k < next[i].bias.size(); ++k) {
          next[i].bias[k] -= scale * grad_sum[i].bias[k];
        }
      }
      current = current.with_params(std::move(next));
    }
    history.push_back({loss_sum / static_cast<double>(data.size()),
                       static_cast<double>(correct) / static_cast<double>(data.size())});
  }
  return {std::move(current), std::move(history)};
}

template <typename T>
double accuracy(const ModelGraph<T>& model, const Dataset<T>& data) {
  if (data.size() == 0) throw Error("accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (forward(model, data.images[i]).predicted == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

template TrainResult<float> train(const ModelGraph<float>&, const Dataset<float>&,
                                  const TrainOptions&);
template TrainResult<double> train(const ModelGraph<double>&, const Dataset<double>&,
                                   const TrainOptions&);
template double accuracy(const ModelGraph<float>&, const Dataset<float>&);
template double accuracy(const ModelGraph<double>&, const Dataset<double>&);

}  // namespace attrib::nn
