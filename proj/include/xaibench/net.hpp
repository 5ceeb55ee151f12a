#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "xaibench/rng.hpp"
#include "xaibench/tensor.hpp"

namespace xaibench {

// Valid convolution, no padding.
struct Conv2D {
  int in_channels = 0, out_channels = 0, kernel = 0, stride = 1;
  Tensor kernels;             // {out, in, k, k}
  std::vector<double> bias;   // out
};

// Inference-mode affine normalization with fixed running statistics.
struct BatchNorm {
  int channels = 0;
  std::vector<double> gamma, beta, mean, var;
  double eps = 1e-5;
};

// Applied to the last axis; leading axes are independent rows.
struct Dense {
  int in_features = 0, out_features = 0;
  Tensor weights;             // {out, in}
  std::vector<double> bias;   // out
};

struct ReLU {};

// {C,H,W} -> {cells², 2C + question_dim}; pair row i·cells + j is [f_i, f_j, q].
struct PairConcat {
  int question_dim = 0;
};

// Sums over the pair axis: {P, D} -> {D}.
struct SumPool {};

using Layer = std::variant<Conv2D, BatchNorm, Dense, ReLU, PairConcat, SumPool>;

enum class Stage { Conv, Relation, Classifier };

struct Model {
  std::vector<Layer> layers;
  std::vector<Stage> stages;  // parallel to layers
  int input_channels = 0, input_height = 0, input_width = 0;
  int question_dim = 0;
  // One vector per program token; a question embeds as the mean over its
  // tokens, so unseen questions still embed as long as every token was seen.
  std::map<std::string, std::vector<double>> question_table;

  std::vector<double> embedding(const std::string& key) const;
};

// Program-node tokens of a canonical program key, input wiring stripped:
// "filter_color[red](0)|query_shape(1)" -> {"filter_color[red]", "query_shape"}.
std::vector<std::string> question_tokens(const std::string& key);

struct ForwardTrace {
  std::vector<Tensor> activations;  // [0] = input, [k+1] = output of layer k
  std::vector<double> question;

  const Tensor& logits() const { return activations.back(); }
};

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteActivation : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TraceMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnknownQuestionKey : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ForwardTrace forward(const Model& model, const Tensor& x, const std::vector<double>& q);

enum class ReluMode { Standard, Deconvnet, Guided };
enum class ReluScope { All, ConvOnly };

// Backward pass to the input. Standard mode is the exact partial derivative of
// the target logit; the other modes replace the ReLU rule, either everywhere
// or only at ReLUs inside the convolutional stage.
Tensor backward(const Model& model, const ForwardTrace& trace, int target_class,
                ReluMode relu_mode = ReluMode::Standard,
                ReluScope relu_scope = ReluScope::All);

// Gradient of the target logit with respect to trace.activations[index].
Tensor backward_to_activation(const Model& model, const ForwardTrace& trace, int target_class,
                              std::size_t activation_index);

struct ParamGrads {
  std::vector<std::vector<double>> layer_a;  // kernels / weights / gamma
  std::vector<std::vector<double>> layer_b;  // bias / beta
  std::vector<double> question;
  Tensor input;
};

// Full gradient for training, seeded with dL/dlogits.
ParamGrads backward_training(const Model& model, const ForwardTrace& trace,
                             const std::vector<double>& logit_grad);

struct Prediction {
  int class_id = -1;
  double probability = 0;
};

std::vector<double> softmax(const std::vector<double>& logits);
Prediction predict(const Model& model, const Tensor& x, const std::vector<double>& q);

struct BadMagic : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CorruptPayload : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

struct NetConfig {
  int input_channels = 3;
  int input_height = 32;
  int input_width = 32;
  int conv_width = 12;
  int rn_hidden = 32;
  int question_dim = 32;
  int classes = 28;
};

// conv->relu->batchnorm ×4 (strides 2,1,2,1), pairwise concat with the
// question, 4 relation Dense+ReLU, sum over pairs, then a 3-Dense classifier.
Model make_relation_network(const NetConfig& config, Rng& rng);

}  // namespace xaibench
