#include "xaibench/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <thread>

#include "xaibench/questions.hpp"

namespace xaibench {

namespace {

struct Example {
  int image_index = -1;
  std::string key;
  int answer_class = -1;
  bool simple_color = false;
};

struct AdamState {
  std::vector<double> m, v;
  int t = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_step(std::vector<double>& param, AdamState& state, const std::vector<double>& grad,
               double lr) {
  ++state.t;
  double c1 = 1.0 - std::pow(kBeta1, state.t);
  double c2 = 1.0 - std::pow(kBeta2, state.t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * grad[i];
    state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    param[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + kAdamEps);
  }
}

// Mutable views of a layer's two parameter arrays (empty when it has none).
struct ParamView {
  std::vector<double>* a = nullptr;
  std::vector<double>* b = nullptr;
};

ParamView param_view(Layer& layer) {
  return std::visit(
      [](auto& l) -> ParamView {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          return {&l.kernels.data, &l.bias};
        } else if constexpr (std::is_same_v<T, Dense>) {
          return {&l.weights.data, &l.bias};
        } else if constexpr (std::is_same_v<T, BatchNorm>) {
          return {&l.gamma, &l.beta};
        } else {
          return {};
        }
      },
      layer);
}

// Sets each BatchNorm's running statistics to the per-channel moments of its
// input over the given images, walking the layers in order so later blocks
// see already-normalized features. Statistics stay frozen during training.
void calibrate_batchnorm(Model& model, const std::vector<const Tensor*>& images) {
  std::vector<double> zero_q(model.question_dim, 0.0);
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    BatchNorm* bn = std::get_if<BatchNorm>(&model.layers[k]);
    if (!bn) continue;
    std::vector<double> sum(bn->channels, 0.0), sq(bn->channels, 0.0);
    std::size_t per_channel = 0;
    for (const Tensor* image : images) {
      ForwardTrace trace = forward(model, *image, zero_q);
      const Tensor& a = trace.activations[k];
      int spatial = a.shape[1] * a.shape[2];
      per_channel += spatial;
      for (int c = 0; c < bn->channels; ++c) {
        for (int i = 0; i < spatial; ++i) {
          double v = a.data[static_cast<std::size_t>(c) * spatial + i];
          sum[c] += v;
          sq[c] += v * v;
        }
      }
    }
    for (int c = 0; c < bn->channels; ++c) {
      double mean = sum[c] / per_channel;
      bn->mean[c] = mean;
      bn->var[c] = std::max(sq[c] / per_channel - mean * mean, 1e-8);
    }
  }
}

std::vector<Example> collect_examples(const std::vector<DatasetQuestion>& questions,
                                      bool simple) {
  std::vector<Example> out;
  for (const DatasetQuestion& q : questions) {
    Example e;
    e.image_index = q.image_index;
    e.key = program_key(q.raw);
    e.answer_class = q.answer_class;
    e.simple_color = simple && q.program.nodes.back().function == Fn::QueryColor;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

Model train_toy_model(const Dataset& ds, const TrainParams& params, TrainReport* report) {
  if (params.epochs < 0 || params.batch <= 0 || params.threads <= 0 ||
      params.conv_width <= 0 || params.rn_hidden <= 0 ||
      params.holdout_fraction < 0 || params.holdout_fraction >= 1) {
    throw std::invalid_argument("bad training parameters");
  }
  Rng root(params.seed);

  NetConfig cfg;
  cfg.input_height = ds.params.image_height;
  cfg.input_width = ds.params.image_width;
  cfg.conv_width = params.conv_width;
  cfg.rn_hidden = params.rn_hidden;
  Rng init_rng = root.fork(0);
  Model model = make_relation_network(cfg, init_rng);

  std::vector<Example> all = collect_examples(ds.simple_questions, true);
  {
    std::vector<Example> complex_examples = collect_examples(ds.complex_questions, false);
    all.insert(all.end(), complex_examples.begin(), complex_examples.end());
  }

  std::map<std::string, std::vector<std::string>> key_tokens;
  std::set<std::string> tokens;
  for (const Example& e : all) {
    auto [it, fresh] = key_tokens.try_emplace(e.key);
    if (fresh) it->second = question_tokens(e.key);
    tokens.insert(it->second.begin(), it->second.end());
  }
  Rng embed_rng = root.fork(1);
  for (const std::string& token : tokens) {
    std::vector<double> q(cfg.question_dim);
    for (double& v : q) v = embed_rng.next_gaussian();
    model.question_table[token] = std::move(q);
  }

  int holdout_scenes =
      std::max(1, static_cast<int>(std::lround(params.holdout_fraction * ds.scenes.size())));
  int split = static_cast<int>(ds.scenes.size()) - holdout_scenes;
  std::vector<Example> train, heldout;
  for (Example& e : all) {
    (e.image_index < split ? train : heldout).push_back(std::move(e));
  }
  if (train.empty()) throw std::invalid_argument("no training examples after the split");

  {
    std::vector<const Tensor*> calib;
    for (int s = 0; s < split && calib.size() < 64; ++s) calib.push_back(&ds.images[s]);
    calibrate_batchnorm(model, calib);
  }

  std::map<std::string, AdamState> embed_adam;
  std::vector<ParamView> views;
  std::vector<AdamState> adam_a, adam_b;
  std::vector<bool> decay_a;  // decay weight matrices, not biases or norm scales
  for (Layer& layer : model.layers) {
    ParamView v = param_view(layer);
    views.push_back(v);
    adam_a.emplace_back(v.a ? v.a->size() : 0);
    adam_b.emplace_back(v.b ? v.b->size() : 0);
    decay_a.push_back(std::holds_alternative<Conv2D>(layer) ||
                      std::holds_alternative<Dense>(layer));
  }

  double epoch_loss = 0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    // Cosine decay to lr/10; convs drift during training, so the frozen
    // normalizer statistics are refreshed from the same calibration images.
    double span = std::max(1, params.epochs - 1);
    double lr = params.lr * (0.1 + 0.45 * (1.0 + std::cos(M_PI * epoch / span)));
    if (epoch > 0 && epoch % 10 == 0) {
      std::vector<const Tensor*> calib;
      for (int s = 0; s < split && static_cast<int>(calib.size()) < 64; ++s) {
        calib.push_back(&ds.images[s]);
      }
      calibrate_batchnorm(model, calib);
    }
    Rng shuffle_rng = root.fork(2 + static_cast<std::uint64_t>(epoch));
    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
    }

    epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += params.batch) {
      std::size_t count = std::min<std::size_t>(params.batch, order.size() - start);
      std::vector<ParamGrads> slots(count);
      std::vector<double> losses(count, 0.0);

      auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
          const Example& e = train[order[start + s]];
          ForwardTrace trace =
              forward(model, ds.images[e.image_index], model.embedding(e.key));
          std::vector<double> probs = softmax(trace.logits().data);
          losses[s] = -std::log(std::max(probs[e.answer_class], 1e-300));
          std::vector<double> logit_grad = probs;
          logit_grad[e.answer_class] -= 1.0;
          for (double& g : logit_grad) g /= static_cast<double>(count);
          slots[s] = backward_training(model, trace, logit_grad);
        }
      };
      if (params.threads == 1 || count == 1) {
        worker(0, count);
      } else {
        std::vector<std::thread> pool;
        std::size_t per = (count + params.threads - 1) / params.threads;
        for (int t = 0; t < params.threads; ++t) {
          std::size_t begin = t * per;
          std::size_t end = std::min(count, begin + per);
          if (begin < end) pool.emplace_back(worker, begin, end);
        }
        for (std::thread& t : pool) t.join();
      }

      for (double l : losses) epoch_loss += l;

      // Reduce in slot order so the sums never depend on thread scheduling.
      std::vector<std::vector<double>> grad_a(model.layers.size()), grad_b(model.layers.size());
      for (std::size_t k = 0; k < model.layers.size(); ++k) {
        if (views[k].a) grad_a[k].assign(views[k].a->size(), 0.0);
        if (views[k].b) grad_b[k].assign(views[k].b->size(), 0.0);
      }
      std::map<std::string, std::vector<double>> grad_q;
      for (std::size_t s = 0; s < count; ++s) {
        const ParamGrads& g = slots[s];
        for (std::size_t k = 0; k < model.layers.size(); ++k) {
          for (std::size_t i = 0; i < grad_a[k].size(); ++i) grad_a[k][i] += g.layer_a[k][i];
          for (std::size_t i = 0; i < grad_b[k].size(); ++i) grad_b[k][i] += g.layer_b[k][i];
        }
        // The embedding is the token mean, so each token takes 1/n of dL/dq.
        const std::vector<std::string>& toks = key_tokens[train[order[start + s]].key];
        double share = 1.0 / static_cast<double>(toks.size());
        for (const std::string& token : toks) {
          auto [it, fresh] = grad_q.try_emplace(token, g.question.size(), 0.0);
          for (std::size_t i = 0; i < g.question.size(); ++i) {
            it->second[i] += share * g.question[i];
          }
        }
      }

      for (std::size_t k = 0; k < model.layers.size(); ++k) {
        if (views[k].a && !grad_a[k].empty()) {
          adam_step(*views[k].a, adam_a[k], grad_a[k], lr);
          if (decay_a[k]) {
            for (double& w : *views[k].a) w -= lr * params.weight_decay * w;
          }
        }
        if (views[k].b && !grad_b[k].empty()) {
          adam_step(*views[k].b, adam_b[k], grad_b[k], lr);
        }
      }
      for (auto& [key, grad] : grad_q) {
        auto [it, fresh] = embed_adam.try_emplace(key, grad.size());
        adam_step(model.question_table[key], it->second, grad, lr);
      }
    }
    epoch_loss /= static_cast<double>(train.size());
    if (!std::isfinite(epoch_loss)) {
      throw DivergedTraining("non-finite loss at epoch " + std::to_string(epoch));
    }
    if (params.verbose) {
      std::fprintf(stderr, "epoch %d loss %.6f\n", epoch, epoch_loss);
    }
  }

  if (report) {
    report->final_loss = epoch_loss;
    int train_hits = 0;
    for (const Example& e : train) {
      Prediction p = predict(model, ds.images[e.image_index], model.embedding(e.key));
      train_hits += p.class_id == e.answer_class;
    }
    report->train_accuracy = static_cast<double>(train_hits) / train.size();
    int hits = 0, color_hits = 0, color_total = 0;
    for (const Example& e : heldout) {
      Prediction p = predict(model, ds.images[e.image_index], model.embedding(e.key));
      bool hit = p.class_id == e.answer_class;
      hits += hit;
      if (e.simple_color) {
        ++color_total;
        color_hits += hit;
      }
    }
    report->heldout_count = static_cast<int>(heldout.size());
    report->heldout_accuracy = heldout.empty() ? 0.0 : static_cast<double>(hits) / heldout.size();
    report->heldout_color_count = color_total;
    report->heldout_color_accuracy =
        color_total == 0 ? 0.0 : static_cast<double>(color_hits) / color_total;
  }
  return model;
}

}  // namespace xaibench
