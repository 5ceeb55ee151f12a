#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "xaibench/attribution.hpp"
#include "xaibench/net.hpp"
#include "xaibench/rng.hpp"
#include "xaibench/tensor.hpp"

using namespace xaibench;

namespace {

Dense make_dense(int in, int out, const std::vector<double>& weights,
                 const std::vector<double>& bias) {
  Dense d;
  d.in_features = in;
  d.out_features = out;
  d.weights = Tensor({out, in});
  d.weights.data = weights;
  d.bias = bias;
  return d;
}

Conv2D make_conv(int in, int out, int kernel, int stride, const std::vector<double>& kernels,
                 const std::vector<double>& bias) {
  Conv2D c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel = kernel;
  c.stride = stride;
  c.kernels = Tensor({out, in, kernel, kernel});
  c.kernels.data = kernels;
  c.bias = bias;
  return c;
}

Model dense_chain(const std::vector<Layer>& layers, const std::vector<Stage>& stages,
                  int input_len) {
  Model m;
  m.layers = layers;
  m.stages = stages;
  m.input_channels = 1;
  m.input_height = 1;
  m.input_width = input_len;
  m.question_dim = 0;
  return m;
}

Tensor vec_input(const std::vector<double>& values) {
  Tensor x({1, 1, static_cast<int>(values.size())});
  x.data = values;
  return x;
}

// Conv -> relu -> bn -> pairs -> sum -> dense over a small image, random
// weights, so attribution paths cross every layer kind.
Model small_stack(Rng& rng) {
  Model m;
  m.input_channels = 2;
  m.input_height = 6;
  m.input_width = 6;
  m.question_dim = 0;

  Conv2D conv;
  conv.in_channels = 2;
  conv.out_channels = 3;
  conv.kernel = 3;
  conv.stride = 1;
  conv.kernels = Tensor({3, 2, 3, 3});
  for (double& v : conv.kernels.data) v = rng.next_gaussian() * 0.5;
  conv.bias = {0.1, -0.2, 0.05};
  m.layers.emplace_back(std::move(conv));
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(ReLU{});
  m.stages.push_back(Stage::Conv);
  BatchNorm bn;
  bn.channels = 3;
  bn.gamma = {1.1, 0.9, 1.0};
  bn.beta = {0.0, 0.1, -0.1};
  bn.mean = {0.2, -0.1, 0.0};
  bn.var = {1.5, 0.8, 1.0};
  m.layers.emplace_back(std::move(bn));
  m.stages.push_back(Stage::Conv);

  m.layers.emplace_back(PairConcat{0});
  m.stages.push_back(Stage::Relation);
  m.layers.emplace_back(SumPool{});
  m.stages.push_back(Stage::Relation);

  Dense d = make_dense(6, 4, {}, std::vector<double>(4, 0.0));
  d.weights = Tensor({4, 6});
  for (double& v : d.weights.data) v = rng.next_gaussian() * 0.3;
  m.layers.emplace_back(std::move(d));
  m.stages.push_back(Stage::Classifier);
  return m;
}

Tensor random_image(Rng& rng, int c, int h, int w) {
  Tensor x({c, h, w});
  for (double& v : x.data) v = rng.next_double();
  return x;
}

// Regenerates the smoothgrad noise stream: one gaussian per element, samples
// drawn back to back from Rng(seed), amplitude sigma·(max − min).
std::vector<Tensor> reference_noisy_inputs(const Tensor& x, const NoiseConfig& cfg) {
  auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
  double amplitude = cfg.sigma * (*hi - *lo);
  Rng rng(cfg.seed);
  std::vector<Tensor> out;
  for (int k = 0; k < cfg.n; ++k) {
    Tensor xk = x;
    for (double& v : xk.data) v += amplitude * rng.next_gaussian();
    out.push_back(std::move(xk));
  }
  return out;
}

}  // namespace

TEST_CASE("gradient transforms scale the raw gradient") {
  // Linear single layer: the gradient of logit c is exactly row c.
  Model m = dense_chain({make_dense(3, 2, {1.0, -2.0, 0.5, 3.0, 0.0, -1.0}, {0.3, -0.7})},
                        {Stage::Classifier}, 3);
  Tensor x = vec_input({2.0, -1.0, 4.0});

  Tensor g = gradient_attribution(m, x, {}, 0, false, false);
  CHECK(g.data == std::vector<double>{1.0, -2.0, 0.5});

  Tensor g2 = gradient_attribution(m, x, {}, 0, true, false);
  CHECK(g2.data == std::vector<double>{1.0, 4.0, 0.25});

  Tensor gx = gradient_attribution(m, x, {}, 0, false, true);
  CHECK(gx.data == std::vector<double>{2.0, 2.0, 2.0});

  Tensor g2x = gradient_attribution(m, x, {}, 1, true, true);
  CHECK(g2x.data == std::vector<double>{18.0, 0.0, 4.0});
}

TEST_CASE("smoothgrad with zero sigma is bit-identical to the gradient") {
  Rng rng(41);
  Model m = small_stack(rng);
  Tensor x = random_image(rng, 2, 6, 6);
  NoiseConfig cfg{0.0, 50, 9};
  for (bool squared : {false, true}) {
    for (bool times_input : {false, true}) {
      Tensor direct = gradient_attribution(m, x, {}, 2, squared, times_input);
      Tensor smooth = smoothgrad(m, x, {}, 2, cfg, squared, times_input);
      CHECK(smooth.data == direct.data);
    }
  }
}

TEST_CASE("smoothgrad equals the mean over the regenerated noisy samples") {
  Rng rng(42);
  Model m = small_stack(rng);
  Tensor x = random_image(rng, 2, 6, 6);
  NoiseConfig cfg{0.15, 7, 123};

  for (bool squared : {false, true}) {
    for (bool times_input : {false, true}) {
      Tensor expected(x.shape);
      for (const Tensor& xk : reference_noisy_inputs(x, cfg)) {
        Tensor g = gradient_attribution(m, xk, {}, 1, false, false);
        for (std::size_t i = 0; i < g.data.size(); ++i) {
          double v = squared ? g.data[i] * g.data[i] : g.data[i];
          // The input factor is the clean input, not the noisy sample.
          if (times_input) v *= x.data[i];
          expected.data[i] += v;
        }
      }
      for (double& v : expected.data) v /= cfg.n;
      Tensor got = smoothgrad(m, x, {}, 1, cfg, squared, times_input);
      REQUIRE(got.data.size() == expected.data.size());
      for (std::size_t i = 0; i < got.data.size(); ++i) {
        CHECK(got.data[i] == doctest::Approx(expected.data[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("vargrad is exactly zero for a relu-free model") {
  // Constant gradient: the population variance must be exactly 0, not just
  // small, because the variance uses a shifted two-pass sum.
  Model m = dense_chain({make_dense(4, 3,
                                    {0.5, -1.0, 2.0, 0.1, 1.5, 0.0, -0.5, 0.7, 0.2, 0.9, -1.1,
                                     0.4},
                                    {0.0, 0.0, 0.0})},
                        {Stage::Classifier}, 4);
  Tensor x = vec_input({1.0, 2.0, 3.0, 4.0});
  Tensor var = vargrad(m, x, {}, 2, NoiseConfig{0.3, 12, 5});
  for (double v : var.data) CHECK(v == 0.0);
}

TEST_CASE("vargrad matches a naive two-pass variance over the same samples") {
  Rng rng(43);
  Model m = small_stack(rng);
  Tensor x = random_image(rng, 2, 6, 6);
  NoiseConfig cfg{0.2, 9, 77};

  std::vector<Tensor> grads;
  for (const Tensor& xk : reference_noisy_inputs(x, cfg)) {
    grads.push_back(gradient_attribution(m, xk, {}, 0, false, false));
  }
  Tensor got = vargrad(m, x, {}, 0, cfg);
  for (std::size_t i = 0; i < got.data.size(); ++i) {
    double mean = 0;
    for (const Tensor& g : grads) mean += g.data[i];
    mean /= cfg.n;
    double sq = 0;
    for (const Tensor& g : grads) sq += (g.data[i] - mean) * (g.data[i] - mean);
    CHECK(got.data[i] == doctest::Approx(sq / cfg.n).epsilon(1e-9));
    CHECK(got.data[i] >= 0.0);
  }
}

TEST_CASE("noise config validation") {
  Model m = dense_chain({make_dense(2, 2, {1, 0, 0, 1}, {0, 0})}, {Stage::Classifier}, 2);
  Tensor x = vec_input({1.0, 2.0});
  CHECK_THROWS_AS(smoothgrad(m, x, {}, 0, NoiseConfig{-0.1, 5, 0}, false, false),
                  std::invalid_argument);
  CHECK_THROWS_AS(vargrad(m, x, {}, 0, NoiseConfig{0.1, 0, 0}), std::invalid_argument);
  Tensor zero = vargrad(m, x, {}, 0, NoiseConfig{0.0, 5, 0});
  for (double v : zero.data) CHECK(v == 0.0);
}

TEST_CASE("integrated gradients is exact for a linear model") {
  Model m = dense_chain({make_dense(3, 2, {1.0, -2.0, 0.5, 3.0, 0.0, -1.0}, {0.4, -0.2})},
                        {Stage::Classifier}, 3);
  Tensor x = vec_input({2.0, -1.0, 4.0});
  IGConfig cfg;
  cfg.step_schedule = {1, 7};
  cfg.tolerance = 1e-9;

  IGResult res = integrated_gradients(m, x, {}, 0, cfg);
  CHECK(res.steps_used == 1);
  CHECK(res.relative_error <= 1e-12);
  // Bias cancels in f(x) − f(0); relevance is w_i · x_i per pixel.
  CHECK(res.relevance.data[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(res.relevance.data[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(res.relevance.data[2] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("integrated gradients midpoint sum on a single-kink path") {
  // f(x) = relu(x − 0.6) from baseline 0 to x = 1: the gradient is active on
  // the top 40% of the path, so 1000 midpoints hit exactly 400 active steps.
  Model m = dense_chain({make_dense(1, 1, {1.0}, {-0.6}), ReLU{},
                         make_dense(1, 1, {1.0}, {0.0})},
                        {Stage::Conv, Stage::Conv, Stage::Classifier}, 1);
  Tensor x = vec_input({1.0});
  IGConfig cfg;
  cfg.step_schedule = {1000};
  cfg.tolerance = 1e-9;

  IGResult res = integrated_gradients(m, x, {}, 0, cfg);
  CHECK(res.steps_used == 1000);
  CHECK(res.relevance.data[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(res.relative_error <= 1e-12);

  // A single midpoint lands at t = 0.5 where the relu is closed, so the sum
  // misses the whole span and the schedule is exhausted.
  IGConfig one;
  one.step_schedule = {1};
  CHECK_THROWS_AS(integrated_gradients(m, x, {}, 0, one), DiscardPoint);
}

TEST_CASE("integrated gradients satisfies completeness on a random relu stack") {
  Rng rng(44);
  Model m = small_stack(rng);
  Tensor x = random_image(rng, 2, 6, 6);
  IGConfig cfg;

  IGResult res = integrated_gradients(m, x, {}, 3, cfg);
  double fx = forward(m, x, {}).logits().data[3];
  double fb = forward(m, Tensor(x.shape), {}).logits().data[3];
  double total = 0;
  for (double v : res.relevance.data) total += v;
  CHECK(res.relative_error < cfg.tolerance);
  CHECK(std::abs(total - (fx - fb)) / std::abs(fx - fb) ==
        doctest::Approx(res.relative_error).epsilon(1e-9));
}

TEST_CASE("integrated gradients baselines") {
  Model m = dense_chain({make_dense(3, 1, {1.0, 2.0, -1.0}, {0.5})}, {Stage::Classifier}, 3);
  Tensor x = vec_input({0.9, 0.3, 0.6});
  double mean = (0.9 + 0.3 + 0.6) / 3.0;

  IGConfig cfg;
  cfg.baseline = IGConfig::Baseline::MeanImage;
  cfg.step_schedule = {1};
  cfg.tolerance = 1e-6;
  IGResult res = integrated_gradients(m, x, {}, 0, cfg);
  CHECK(res.relevance.data[0] == doctest::Approx(1.0 * (0.9 - mean)).epsilon(1e-12));
  CHECK(res.relevance.data[1] == doctest::Approx(2.0 * (0.3 - mean)).epsilon(1e-12));
  CHECK(res.relevance.data[2] == doctest::Approx(-1.0 * (0.6 - mean)).epsilon(1e-12));

  // Per-channel means: each channel of a 2×1×2 input is its own plane. A 1×1
  // conv sums the channels, then unequal pixel weights keep f sensitive to
  // deviations from the channel means.
  Model m2;
  m2.input_channels = 2;
  m2.input_height = 1;
  m2.input_width = 2;
  m2.question_dim = 0;
  m2.layers.emplace_back(make_conv(2, 1, 1, 1, {1.0, 1.0}, {0.0}));
  m2.stages.push_back(Stage::Conv);
  m2.layers.emplace_back(make_dense(2, 1, {1.0, 3.0}, {0.0}));
  m2.stages.push_back(Stage::Classifier);
  Tensor x2({2, 1, 2});
  x2.data = {0.2, 0.4, 1.0, 0.0};
  IGConfig ch;
  ch.baseline = IGConfig::Baseline::MeanChannels;
  ch.step_schedule = {1};
  ch.tolerance = 1e-6;
  IGResult res2 = integrated_gradients(m2, x2, {}, 0, ch);
  CHECK(res2.relevance.data[0] == doctest::Approx(1.0 * (0.2 - 0.3)).epsilon(1e-12));
  CHECK(res2.relevance.data[1] == doctest::Approx(3.0 * (0.4 - 0.3)).epsilon(1e-12));
  CHECK(res2.relevance.data[2] == doctest::Approx(1.0 * (1.0 - 0.5)).epsilon(1e-12));
  CHECK(res2.relevance.data[3] == doctest::Approx(3.0 * (0.0 - 0.5)).epsilon(1e-12));

  IGConfig custom;
  custom.baseline = IGConfig::Baseline::Custom;
  custom.custom = Tensor({1, 1, 2});
  CHECK_THROWS_AS(integrated_gradients(m, x, {}, 0, custom), std::invalid_argument);
}

TEST_CASE("integrated gradients degenerate span and config validation") {
  // Class 0 has zero weights: f(x) and f(baseline) are both exactly the bias.
  Model m = dense_chain({make_dense(2, 2, {0.0, 0.0, 1.0, 1.0}, {0.7, 0.0})},
                        {Stage::Classifier}, 2);
  Tensor x = vec_input({1.0, 2.0});
  CHECK_THROWS_AS(integrated_gradients(m, x, {}, 0, IGConfig{}), DegenerateSpan);

  IGConfig bad;
  bad.step_schedule = {10, 10};
  CHECK_THROWS_AS(integrated_gradients(m, x, {}, 1, bad), std::invalid_argument);
  IGConfig neg;
  neg.tolerance = 0.0;
  CHECK_THROWS_AS(integrated_gradients(m, x, {}, 1, neg), std::invalid_argument);
}

TEST_CASE("lrp epsilon rule on a worked two-layer example") {
  // W1 = [[1,−1],[2,0]], W2 = [1,1], x = [1,1]: hidden = [0,2], logit = 2.
  // All relevance flows through hidden unit 1 into input 0.
  Model m = dense_chain({make_dense(2, 2, {1.0, -1.0, 2.0, 0.0}, {0.0, 0.0}),
                         make_dense(2, 1, {1.0, 1.0}, {0.0})},
                        {Stage::Relation, Stage::Classifier}, 2);
  Tensor x = vec_input({1.0, 1.0});
  ForwardTrace trace = forward(m, x, {});
  REQUIRE(trace.logits().data[0] == 2.0);

  LRPConfig cfg;  // epsilon everywhere, default epsilon 0.001
  LrpDiagnostics diag;
  Tensor r = lrp(m, trace, 0, cfg, &diag);
  CHECK(r.data[0] == doctest::Approx(8.0 / (2.001 * 2.001)).epsilon(1e-12));
  CHECK(r.data[1] == 0.0);
  REQUIRE(diag.boundary_sums.size() == 3);
  CHECK(diag.boundary_sums[2] == 2.0);

  LRPConfig ab = LRPConfig::excitation_backprop();
  Tensor rab = lrp(m, trace, 0, ab);
  // Alpha-beta keeps only positive contributions and has no stabilizer, so
  // the worked example is exact: everything lands on input 0.
  CHECK(rab.data[0] == 2.0);
  CHECK(rab.data[1] == 0.0);
}

TEST_CASE("lrp epsilon conservation on zero-bias stacks") {
  // With zero biases the epsilon rule leaks only O(eps/|z|) per layer, so a
  // tiny stabilizer keeps every boundary sum equal to the seed logit.
  Rng rng(45);
  Model m = small_stack(rng);
  for (Layer& layer : m.layers) {
    if (auto* conv = std::get_if<Conv2D>(&layer)) {
      std::fill(conv->bias.begin(), conv->bias.end(), 0.0);
    } else if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      bn->beta.assign(bn->channels, 0.0);
      bn->mean.assign(bn->channels, 0.0);
    } else if (auto* dense = std::get_if<Dense>(&layer)) {
      std::fill(dense->bias.begin(), dense->bias.end(), 0.0);
    }
  }
  Tensor x = random_image(rng, 2, 6, 6);
  ForwardTrace trace = forward(m, x, {});

  LRPConfig cfg;
  cfg.epsilon = 1e-9;
  LrpDiagnostics diag;
  lrp(m, trace, 1, cfg, &diag);
  REQUIRE(diag.boundary_sums.size() == m.layers.size() + 1);
  double seed = trace.logits().data[1];
  CHECK(diag.boundary_sums.back() == seed);
  for (double sum : diag.boundary_sums) {
    CHECK(std::abs(sum - seed) <= 1e-6 * std::abs(seed));
  }
}

TEST_CASE("lrp input rules conserve and follow their redistribution") {
  // Flat splits a neuron's relevance equally across its inputs.
  Model m = dense_chain({make_dense(2, 1, {5.0, -3.0}, {0.0})}, {Stage::Classifier}, 2);
  Tensor x = vec_input({1.0, 2.0});
  ForwardTrace trace = forward(m, x, {});
  double logit = trace.logits().data[0];

  LRPConfig flat;
  flat.input_rule = LRPConfig::InputRule::Flat;
  Tensor rf = lrp(m, trace, 0, flat);
  CHECK(rf.data[0] == doctest::Approx(logit / 2).epsilon(1e-12));
  CHECK(rf.data[1] == doctest::Approx(logit / 2).epsilon(1e-12));

  // w² splits by squared weight, ignoring the input values.
  LRPConfig wsq;
  wsq.input_rule = LRPConfig::InputRule::WSquared;
  Tensor rw = lrp(m, trace, 0, wsq);
  CHECK(rw.data[0] == doctest::Approx(logit * 25.0 / 34.0).epsilon(1e-12));
  CHECK(rw.data[1] == doctest::Approx(logit * 9.0 / 34.0).epsilon(1e-12));

  // Box rule with the input range [0,1]: conservation only, value checked
  // against the closed form z − l·w⁺ − h·w⁻ per connection.
  LRPConfig box;
  box.input_rule = LRPConfig::InputRule::Box;
  box.epsilon = 1e-9;
  box.input_low = 0.0;
  box.input_high = 1.0;
  Tensor rb = lrp(m, trace, 0, box);
  double t0 = 1.0 * 5.0 - 0.0 * 5.0;
  double t1 = 2.0 * -3.0 - 1.0 * -3.0;
  CHECK(rb.data[0] == doctest::Approx(logit * t0 / (t0 + t1)).epsilon(1e-6));
  CHECK(rb.data[1] == doctest::Approx(logit * t1 / (t0 + t1)).epsilon(1e-6));
}

TEST_CASE("lrp input rule applies only to the first linear layer") {
  Rng rng(46);
  Model m = small_stack(rng);
  // The flat rule ignores the bias share, so equal totals need a bias-free
  // first layer; deeper layers are treated identically by both configs.
  std::get<Conv2D>(m.layers[0]).bias.assign(3, 0.0);
  Tensor x = random_image(rng, 2, 6, 6);
  ForwardTrace trace = forward(m, x, {});

  LRPConfig plain;
  plain.epsilon = 1e-9;
  LRPConfig flat = plain;
  flat.input_rule = LRPConfig::InputRule::Flat;
  Tensor rp = lrp(m, trace, 0, plain);
  Tensor rf = lrp(m, trace, 0, flat);
  // The first conv is rewired, so the maps differ, but both conserve.
  bool differs = false;
  double sp = 0, sf = 0;
  for (std::size_t i = 0; i < rp.data.size(); ++i) {
    differs = differs || rp.data[i] != rf.data[i];
    sp += rp.data[i];
    sf += rf.data[i];
  }
  CHECK(differs);
  CHECK(sp == doctest::Approx(sf).epsilon(1e-6));
}

TEST_CASE("lrp alpha1beta0 yields non-negative relevance for a positive logit") {
  Rng rng(47);
  NetConfig nc;
  nc.input_channels = 3;
  nc.input_height = 20;
  nc.input_width = 20;
  nc.conv_width = 3;
  nc.rn_hidden = 5;
  nc.question_dim = 4;
  nc.classes = 6;
  Model m = make_relation_network(nc, rng);
  Tensor x = random_image(rng, 3, 20, 20);
  std::vector<double> q = {0.3, -0.2, 0.8, 0.1};
  ForwardTrace trace = forward(m, x, q);

  int target = -1;
  for (int c = 0; c < nc.classes; ++c) {
    if (trace.logits().data[c] > 0) target = c;
  }
  REQUIRE(target >= 0);

  Tensor r = lrp(m, trace, target, LRPConfig::excitation_backprop());
  double total = 0;
  for (double v : r.data) {
    CHECK(v >= 0.0);
    total += v;
  }
  // The pair layer drops the question share, so the input keeps at most the
  // seeded logit.
  CHECK(total <= trace.logits().data[target] + 1e-9);
}

TEST_CASE("lrp composites switch the dense rule by stage") {
  // Mixed-sign weights make epsilon and alpha-beta disagree, so each
  // composite produces a distinct input map.
  Model m = dense_chain({make_dense(2, 2, {1.0, -0.5, -2.0, 1.5}, {0.0, 0.0}), ReLU{},
                         make_dense(2, 2, {1.0, -1.0, 0.5, 2.0}, {0.0, 0.0})},
                        {Stage::Relation, Stage::Relation, Stage::Classifier}, 2);
  Tensor x = vec_input({1.0, 0.4});
  ForwardTrace trace = forward(m, x, {});
  REQUIRE(trace.logits().data[0] > 0);

  LRPConfig none = LRPConfig::excitation_backprop();
  LRPConfig classifier_eps = none;
  classifier_eps.composite = LRPConfig::Composite::ClassifierEpsilon;
  LRPConfig all_eps = none;
  all_eps.composite = LRPConfig::Composite::AllDenseEpsilon;

  Tensor r_none = lrp(m, trace, 0, none);
  Tensor r_cls = lrp(m, trace, 0, classifier_eps);
  Tensor r_all = lrp(m, trace, 0, all_eps);
  CHECK(r_none.data != r_cls.data);
  CHECK(r_cls.data != r_all.data);
  CHECK(r_none.data != r_all.data);
  // Pure alpha-beta never goes negative; the epsilon composites do here.
  for (double v : r_none.data) CHECK(v >= 0.0);
  CHECK(std::any_of(r_all.data.begin(), r_all.data.end(), [](double v) { return v < 0.0; }));
}

TEST_CASE("lrp merge_batchnorm equals an explicitly folded model") {
  Rng rng(48);
  Model m;
  m.input_channels = 1;
  m.input_height = 5;
  m.input_width = 5;
  m.question_dim = 0;
  std::vector<double> k1(9), k2(2 * 9);
  for (double& v : k1) v = rng.next_gaussian() * 0.4;
  for (double& v : k2) v = rng.next_gaussian() * 0.4;
  m.layers.emplace_back(make_conv(1, 1, 3, 1, k1, {0.2}));
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(ReLU{});
  m.stages.push_back(Stage::Conv);
  BatchNorm bn;
  bn.channels = 1;
  bn.gamma = {1.7};
  bn.beta = {0.3};
  bn.mean = {0.4};
  bn.var = {2.2};
  m.layers.emplace_back(bn);
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(make_conv(1, 2, 3, 1, k2, {0.1, -0.1}));
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(PairConcat{0});
  m.stages.push_back(Stage::Relation);
  m.layers.emplace_back(SumPool{});
  m.stages.push_back(Stage::Relation);
  m.layers.emplace_back(make_dense(4, 2, {0.5, -0.2, 0.3, 0.8, -0.6, 0.4, 0.2, 0.1}, {0.0, 0.0}));
  m.stages.push_back(Stage::Classifier);

  // Fold the batchnorm into the consuming conv by hand.
  Model folded = m;
  double scale = bn.gamma[0] / std::sqrt(bn.var[0] + bn.eps);
  double shift = bn.beta[0] - bn.mean[0] * scale;
  Conv2D merged = std::get<Conv2D>(m.layers[3]);
  for (int oc = 0; oc < 2; ++oc) {
    for (int kk = 0; kk < 9; ++kk) {
      merged.bias[oc] += merged.kernels.data[oc * 9 + kk] * shift;
      merged.kernels.data[oc * 9 + kk] *= scale;
    }
  }
  folded.layers.erase(folded.layers.begin() + 2);
  folded.stages.erase(folded.stages.begin() + 2);
  folded.layers[2] = merged;

  Tensor x = random_image(rng, 1, 5, 5);
  ForwardTrace trace = forward(m, x, {});
  ForwardTrace folded_trace = forward(folded, x, {});
  REQUIRE(trace.logits().data[0] ==
          doctest::Approx(folded_trace.logits().data[0]).epsilon(1e-9));

  LRPConfig cfg;
  cfg.merge_batchnorm = true;
  Tensor r_merge = lrp(m, trace, 0, cfg);
  LRPConfig plain;
  Tensor r_folded = lrp(folded, folded_trace, 0, plain);
  REQUIRE(r_merge.data.size() == r_folded.data.size());
  for (std::size_t i = 0; i < r_merge.data.size(); ++i) {
    CHECK(r_merge.data[i] == doctest::Approx(r_folded.data[i]).epsilon(1e-9));
  }
}

TEST_CASE("lrp rejects mismatched traces and bad configs") {
  Model m = dense_chain({make_dense(2, 2, {1, 0, 0, 1}, {0, 0})}, {Stage::Classifier}, 2);
  Model longer = dense_chain({make_dense(2, 2, {1, 0, 0, 1}, {0, 0}), ReLU{}},
                             {Stage::Classifier, Stage::Classifier}, 2);
  Tensor x = vec_input({1.0, 2.0});
  ForwardTrace trace = forward(m, x, {});
  CHECK_THROWS_AS(lrp(longer, trace, 0, LRPConfig{}), TraceMismatch);
  CHECK_THROWS_AS(lrp(m, trace, 5, LRPConfig{}), TraceMismatch);

  LRPConfig bad_eps;
  bad_eps.epsilon = 0.0;
  CHECK_THROWS_AS(lrp(m, trace, 0, bad_eps), std::invalid_argument);
  LRPConfig bad_box;
  bad_box.input_low = 2.0;
  bad_box.input_high = 1.0;
  CHECK_THROWS_AS(lrp(m, trace, 0, bad_box), std::invalid_argument);
}

namespace {

// One conv cell feeding a two-class head: every grad-cam quantity has a
// closed form. gamma scales the batchnorm output so the three layer choices
// expose different feature tensors.
Model one_cell_cam_model(double gamma, const std::vector<double>& head_weights) {
  Model m;
  m.input_channels = 1;
  m.input_height = 3;
  m.input_width = 3;
  m.question_dim = 0;
  m.layers.emplace_back(make_conv(1, 1, 3, 1, std::vector<double>(9, 0.5), {0.0}));
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(ReLU{});
  m.stages.push_back(Stage::Conv);
  BatchNorm bn;
  bn.channels = 1;
  bn.gamma = {gamma};
  bn.beta = {0.0};
  bn.mean = {0.0};
  bn.var = {1.0 - bn.eps};  // scale is exactly gamma
  m.layers.emplace_back(bn);
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(PairConcat{0});
  m.stages.push_back(Stage::Relation);
  m.layers.emplace_back(SumPool{});
  m.stages.push_back(Stage::Relation);
  m.layers.emplace_back(make_dense(2, 2, head_weights, {0.0, 0.0}));
  m.stages.push_back(Stage::Classifier);
  return m;
}

}  // namespace

TEST_CASE("grad_cam single-cell hand values") {
  Model m = one_cell_cam_model(2.0, {0.7, 0.3, -0.4, -0.6});
  Tensor x({1, 3, 3});
  x.data.assign(9, 1.0);
  ForwardTrace trace = forward(m, x, {});
  // conv output 4.5, relu 4.5, bn 9; logit0 = 9, logit1 = −9.
  REQUIRE(trace.logits().data[0] == doctest::Approx(9.0).epsilon(1e-12));

  GradCamIntermediate bn_cam = grad_cam(m, trace, 0, GradCamLayer::Batchnorm);
  CHECK(bn_cam.features.data[0] == doctest::Approx(9.0).epsilon(1e-12));
  REQUIRE(bn_cam.alpha.size() == 1);
  CHECK(bn_cam.alpha[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bn_cam.raw.height == 1);
  CHECK(bn_cam.raw.values[0] == doctest::Approx(9.0).epsilon(1e-12));
  CHECK_FALSE(bn_cam.zero_flag);
  // 1×1 upsampled to the 3×3 input: constant maps stay constant.
  CHECK(bn_cam.upsampled.height == 3);
  CHECK(bn_cam.upsampled.width == 3);
  for (double v : bn_cam.upsampled.values) CHECK(v == doctest::Approx(9.0).epsilon(1e-12));

  GradCamIntermediate relu_cam = grad_cam(m, trace, 0, GradCamLayer::Relu);
  CHECK(relu_cam.features.data[0] == doctest::Approx(4.5).epsilon(1e-12));
  CHECK(relu_cam.alpha[0] == doctest::Approx(2.0).epsilon(1e-12));
  GradCamIntermediate conv_cam = grad_cam(m, trace, 0, GradCamLayer::Conv);
  CHECK(conv_cam.features.data[0] == doctest::Approx(4.5).epsilon(1e-12));

  // Class 1 pulls the cell down: the rectified map is identically zero.
  GradCamIntermediate neg = grad_cam(m, trace, 1, GradCamLayer::Batchnorm);
  CHECK(neg.zero_flag);
  for (double v : neg.raw.values) CHECK(v == 0.0);
}

TEST_CASE("grad_cam picks the last matching layer of the conv stage") {
  Model m;
  m.input_channels = 1;
  m.input_height = 2;
  m.input_width = 2;
  m.question_dim = 0;
  m.layers.emplace_back(make_conv(1, 1, 1, 1, {2.0}, {0.0}));
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(ReLU{});
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(make_conv(1, 1, 1, 1, {3.0}, {0.0}));
  m.stages.push_back(Stage::Conv);
  m.layers.emplace_back(PairConcat{0});
  m.stages.push_back(Stage::Relation);
  m.layers.emplace_back(SumPool{});
  m.stages.push_back(Stage::Relation);
  m.layers.emplace_back(make_dense(2, 1, {1.0, 1.0}, {0.0}));
  m.stages.push_back(Stage::Classifier);

  Tensor x({1, 2, 2});
  x.data = {1.0, 2.0, 3.0, 4.0};
  ForwardTrace trace = forward(m, x, {});
  GradCamIntermediate cam = grad_cam(m, trace, 0, GradCamLayer::Conv);
  CHECK(cam.features.data == std::vector<double>{6.0, 12.0, 18.0, 24.0});

  CHECK_THROWS_AS(grad_cam(m, trace, 0, GradCamLayer::Batchnorm), LayerNotFound);
}

TEST_CASE("guided_grad_cam gates guided backprop by the upsampled map") {
  Model m = one_cell_cam_model(2.0, {0.7, 0.3, -0.4, -0.6});
  Tensor x({1, 3, 3});
  x.data = {1.0, 0.5, 0.25, 1.0, 0.75, 0.5, 0.25, 1.0, 0.5};
  ForwardTrace trace = forward(m, x, {});
  GradCamIntermediate cam = grad_cam(m, trace, 0, GradCamLayer::Batchnorm);
  Tensor guided = backward(m, trace, 0, ReluMode::Guided, ReluScope::All);

  Tensor got = guided_grad_cam(m, x, {}, 0, GradCamLayer::Batchnorm);
  REQUIRE(got.data.size() == guided.data.size());
  for (std::size_t i = 0; i < got.data.size(); ++i) {
    CHECK(got.data[i] == guided.data[i] * cam.upsampled.values[i]);
  }

  // The negative class zeroes the map, which discards the question.
  CHECK_THROWS_AS(guided_grad_cam(m, x, {}, 1, GradCamLayer::Batchnorm), DiscardPoint);
}
