#include "xaibench/net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace xaibench {

static_assert(std::endian::native == std::endian::little, "file formats assume little-endian");

std::vector<std::string> question_tokens(const std::string& key) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos <= key.size()) {
    std::size_t bar = key.find('|', pos);
    if (bar == std::string::npos) bar = key.size();
    std::string node = key.substr(pos, bar - pos);
    std::size_t paren = node.find('(');
    if (paren != std::string::npos) node.erase(paren);
    if (!node.empty()) tokens.push_back(std::move(node));
    pos = bar + 1;
  }
  return tokens;
}

std::vector<double> Model::embedding(const std::string& key) const {
  std::vector<std::string> tokens = question_tokens(key);
  if (tokens.empty()) throw UnknownQuestionKey("empty question key");
  std::vector<double> q(question_dim, 0.0);
  for (const std::string& token : tokens) {
    auto it = question_table.find(token);
    if (it == question_table.end()) throw UnknownQuestionKey("no embedding for token: " + token);
    for (int d = 0; d < question_dim; ++d) q[d] += it->second[d];
  }
  for (double& v : q) v /= static_cast<double>(tokens.size());
  return q;
}

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeMismatch(what);
}

Tensor conv_forward(const Conv2D& l, const Tensor& x) {
  require(x.shape.size() == 3 && x.shape[0] == l.in_channels, "conv input shape");
  int h = x.shape[1], w = x.shape[2];
  require(h >= l.kernel && w >= l.kernel, "conv input smaller than kernel");
  int oh = (h - l.kernel) / l.stride + 1;
  int ow = (w - l.kernel) / l.stride + 1;
  Tensor y({l.out_channels, oh, ow});
  for (int oc = 0; oc < l.out_channels; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = l.bias[oc];
        for (int ic = 0; ic < l.in_channels; ++ic) {
          for (int kh = 0; kh < l.kernel; ++kh) {
            const double* xrow = &x.data[(static_cast<std::size_t>(ic) * h +
                                          oy * l.stride + kh) * w + ox * l.stride];
            const double* krow = &l.kernels.data[((static_cast<std::size_t>(oc) * l.in_channels +
                                                   ic) * l.kernel + kh) * l.kernel];
            for (int kw = 0; kw < l.kernel; ++kw) acc += krow[kw] * xrow[kw];
          }
        }
        y.at3(oc, oy, ox) = acc;
      }
    }
  }
  return y;
}

Tensor conv_backward(const Conv2D& l, const Tensor& x, const Tensor& g, ParamGrads* pg,
                     std::size_t idx) {
  int h = x.shape[1], w = x.shape[2];
  int oh = g.shape[1], ow = g.shape[2];
  Tensor gin(x.shape);
  double* dk = nullptr;
  double* db = nullptr;
  if (pg) {
    pg->layer_a[idx].assign(l.kernels.data.size(), 0.0);
    pg->layer_b[idx].assign(l.bias.size(), 0.0);
    dk = pg->layer_a[idx].data();
    db = pg->layer_b[idx].data();
  }
  for (int oc = 0; oc < l.out_channels; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double gv = g.at3(oc, oy, ox);
        if (db) db[oc] += gv;
        for (int ic = 0; ic < l.in_channels; ++ic) {
          for (int kh = 0; kh < l.kernel; ++kh) {
            std::size_t xbase = (static_cast<std::size_t>(ic) * h + oy * l.stride + kh) * w +
                                ox * l.stride;
            std::size_t kbase = ((static_cast<std::size_t>(oc) * l.in_channels + ic) * l.kernel +
                                 kh) * l.kernel;
            for (int kw = 0; kw < l.kernel; ++kw) {
              gin.data[xbase + kw] += gv * l.kernels.data[kbase + kw];
              if (dk) dk[kbase + kw] += gv * x.data[xbase + kw];
            }
          }
        }
      }
    }
  }
  return gin;
}

Tensor bn_forward(const BatchNorm& l, const Tensor& x) {
  require(x.shape.size() == 3 && x.shape[0] == l.channels, "batchnorm input shape");
  Tensor y(x.shape);
  std::size_t plane = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
  for (int c = 0; c < l.channels; ++c) {
    double scale = l.gamma[c] / std::sqrt(l.var[c] + l.eps);
    double shift = l.beta[c] - l.mean[c] * scale;
    const double* in = x.data.data() + c * plane;
    double* out = y.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) out[i] = in[i] * scale + shift;
  }
  return y;
}

Tensor bn_backward(const BatchNorm& l, const Tensor& x, const Tensor& g, ParamGrads* pg,
                   std::size_t idx) {
  Tensor gin(x.shape);
  std::size_t plane = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
  double* dgamma = nullptr;
  double* dbeta = nullptr;
  if (pg) {
    pg->layer_a[idx].assign(l.gamma.size(), 0.0);
    pg->layer_b[idx].assign(l.beta.size(), 0.0);
    dgamma = pg->layer_a[idx].data();
    dbeta = pg->layer_b[idx].data();
  }
  for (int c = 0; c < l.channels; ++c) {
    double inv = 1.0 / std::sqrt(l.var[c] + l.eps);
    double scale = l.gamma[c] * inv;
    const double* in = x.data.data() + c * plane;
    const double* gout = g.data.data() + c * plane;
    double* out = gin.data.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      out[i] = gout[i] * scale;
      if (dgamma) {
        dgamma[c] += gout[i] * (in[i] - l.mean[c]) * inv;
        dbeta[c] += gout[i];
      }
    }
  }
  return gin;
}

Tensor dense_forward(const Dense& l, const Tensor& x) {
  require(!x.shape.empty() && x.shape.back() == l.in_features, "dense input features");
  std::vector<int> oshape = x.shape;
  oshape.back() = l.out_features;
  Tensor y(oshape);
  std::size_t rows = x.data.size() / l.in_features;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data.data() + r * l.in_features;
    double* out = y.data.data() + r * l.out_features;
    for (int o = 0; o < l.out_features; ++o) {
      const double* wrow = l.weights.data.data() + static_cast<std::size_t>(o) * l.in_features;
      double acc = l.bias[o];
      for (int i = 0; i < l.in_features; ++i) acc += wrow[i] * in[i];
      out[o] = acc;
    }
  }
  return y;
}

Tensor dense_backward(const Dense& l, const Tensor& x, const Tensor& g, ParamGrads* pg,
                      std::size_t idx) {
  Tensor gin(x.shape);
  std::size_t rows = x.data.size() / l.in_features;
  double* dw = nullptr;
  double* db = nullptr;
  if (pg) {
    pg->layer_a[idx].assign(l.weights.data.size(), 0.0);
    pg->layer_b[idx].assign(l.bias.size(), 0.0);
    dw = pg->layer_a[idx].data();
    db = pg->layer_b[idx].data();
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data.data() + r * l.in_features;
    const double* gout = g.data.data() + r * l.out_features;
    double* out = gin.data.data() + r * l.in_features;
    for (int o = 0; o < l.out_features; ++o) {
      double gv = gout[o];
      const double* wrow = l.weights.data.data() + static_cast<std::size_t>(o) * l.in_features;
      for (int i = 0; i < l.in_features; ++i) out[i] += gv * wrow[i];
      if (dw) {
        double* drow = dw + static_cast<std::size_t>(o) * l.in_features;
        for (int i = 0; i < l.in_features; ++i) drow[i] += gv * in[i];
        db[o] += gv;
      }
    }
  }
  return gin;
}

Tensor pair_forward(const PairConcat& l, const Tensor& x, const std::vector<double>& q) {
  require(x.shape.size() == 3, "pair concat expects C×H×W");
  require(static_cast<int>(q.size()) == l.question_dim, "question length");
  int c = x.shape[0];
  int cells = x.shape[1] * x.shape[2];
  std::size_t plane = static_cast<std::size_t>(cells);
  Tensor y({cells * cells, 2 * c + l.question_dim});
  int d = 2 * c + l.question_dim;
  for (int i = 0; i < cells; ++i) {
    for (int j = 0; j < cells; ++j) {
      double* row = y.data.data() + (static_cast<std::size_t>(i) * cells + j) * d;
      for (int ch = 0; ch < c; ++ch) {
        row[ch] = x.data[ch * plane + i];
        row[c + ch] = x.data[ch * plane + j];
      }
      std::copy(q.begin(), q.end(), row + 2 * c);
    }
  }
  return y;
}

Tensor pair_backward(const PairConcat& l, const Tensor& x, const Tensor& g, ParamGrads* pg) {
  int c = x.shape[0];
  int cells = x.shape[1] * x.shape[2];
  std::size_t plane = static_cast<std::size_t>(cells);
  int d = 2 * c + l.question_dim;
  Tensor gin(x.shape);
  double* dq = nullptr;
  if (pg) {
    pg->question.assign(l.question_dim, 0.0);
    dq = pg->question.data();
  }
  for (int i = 0; i < cells; ++i) {
    for (int j = 0; j < cells; ++j) {
      const double* row = g.data.data() + (static_cast<std::size_t>(i) * cells + j) * d;
      for (int ch = 0; ch < c; ++ch) {
        gin.data[ch * plane + i] += row[ch];
        gin.data[ch * plane + j] += row[c + ch];
      }
      if (dq) {
        for (int k = 0; k < l.question_dim; ++k) dq[k] += row[2 * c + k];
      }
    }
  }
  return gin;
}

Tensor sumpool_forward(const Tensor& x) {
  require(x.shape.size() == 2, "sum pool expects P×D");
  int p = x.shape[0], d = x.shape[1];
  Tensor y({d});
  for (int r = 0; r < p; ++r) {
    const double* row = x.data.data() + static_cast<std::size_t>(r) * d;
    for (int k = 0; k < d; ++k) y.data[k] += row[k];
  }
  return y;
}

Tensor sumpool_backward(const Tensor& x, const Tensor& g) {
  int p = x.shape[0], d = x.shape[1];
  Tensor gin(x.shape);
  for (int r = 0; r < p; ++r) {
    std::copy(g.data.begin(), g.data.end(), gin.data.begin() + static_cast<std::size_t>(r) * d);
  }
  return gin;
}

Tensor relu_backward(const Tensor& x, const Tensor& g, ReluMode mode) {
  Tensor gin(x.shape);
  switch (mode) {
    case ReluMode::Standard:
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        gin.data[i] = x.data[i] > 0 ? g.data[i] : 0.0;
      }
      break;
    case ReluMode::Deconvnet:
      for (std::size_t i = 0; i < x.data.size(); ++i) gin.data[i] = std::max(g.data[i], 0.0);
      break;
    case ReluMode::Guided:
      for (std::size_t i = 0; i < x.data.size(); ++i) {
        gin.data[i] = x.data[i] > 0 ? std::max(g.data[i], 0.0) : 0.0;
      }
      break;
  }
  return gin;
}

Tensor backward_core(const Model& model, const ForwardTrace& trace, Tensor g, ReluMode mode,
                     ReluScope scope, ParamGrads* pg, std::size_t stop_at = 0) {
  if (trace.activations.size() != model.layers.size() + 1) {
    throw TraceMismatch("trace does not match the model's layer count");
  }
  if (!g.same_shape(trace.activations.back())) {
    throw TraceMismatch("seed gradient does not match the logits shape");
  }
  if (pg) {
    pg->layer_a.assign(model.layers.size(), {});
    pg->layer_b.assign(model.layers.size(), {});
    pg->question.assign(model.question_dim, 0.0);
  }
  for (std::size_t k = model.layers.size(); k-- > stop_at;) {
    const Tensor& x = trace.activations[k];
    const Layer& layer = model.layers[k];
    if (const auto* conv = std::get_if<Conv2D>(&layer)) {
      g = conv_backward(*conv, x, g, pg, k);
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      g = bn_backward(*bn, x, g, pg, k);
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      g = dense_backward(*dense, x, g, pg, k);
    } else if (std::holds_alternative<ReLU>(layer)) {
      ReluMode effective = mode;
      if (scope == ReluScope::ConvOnly && model.stages[k] != Stage::Conv) {
        effective = ReluMode::Standard;
      }
      g = relu_backward(x, g, effective);
    } else if (const auto* pc = std::get_if<PairConcat>(&layer)) {
      g = pair_backward(*pc, x, g, pg);
    } else {
      g = sumpool_backward(x, g);
    }
  }
  return g;
}

}  // namespace

ForwardTrace forward(const Model& model, const Tensor& x, const std::vector<double>& q) {
  if (x.shape != std::vector<int>{model.input_channels, model.input_height, model.input_width}) {
    throw ShapeMismatch("input does not match the model's input shape");
  }
  ForwardTrace trace;
  trace.question = q;
  trace.activations.reserve(model.layers.size() + 1);
  trace.activations.push_back(x);
  for (const Layer& layer : model.layers) {
    const Tensor& in = trace.activations.back();
    Tensor out;
    if (const auto* conv = std::get_if<Conv2D>(&layer)) {
      out = conv_forward(*conv, in);
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      out = bn_forward(*bn, in);
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      out = dense_forward(*dense, in);
    } else if (std::holds_alternative<ReLU>(layer)) {
      out = Tensor(in.shape);
      for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = std::max(in.data[i], 0.0);
    } else if (const auto* pc = std::get_if<PairConcat>(&layer)) {
      out = pair_forward(*pc, in, q);
    } else {
      out = sumpool_forward(in);
    }
    for (double v : out.data) {
      if (!std::isfinite(v)) throw NonFiniteActivation("non-finite activation");
    }
    trace.activations.push_back(std::move(out));
  }
  return trace;
}

Tensor backward(const Model& model, const ForwardTrace& trace, int target_class,
                ReluMode relu_mode, ReluScope relu_scope) {
  const Tensor& logits = trace.activations.back();
  if (target_class < 0 || target_class >= logits.size()) {
    throw TraceMismatch("target class out of range");
  }
  Tensor seed(logits.shape);
  seed.data[target_class] = 1.0;
  return backward_core(model, trace, std::move(seed), relu_mode, relu_scope, nullptr);
}

Tensor backward_to_activation(const Model& model, const ForwardTrace& trace, int target_class,
                              std::size_t activation_index) {
  const Tensor& logits = trace.activations.back();
  if (target_class < 0 || target_class >= logits.size()) {
    throw TraceMismatch("target class out of range");
  }
  if (activation_index >= trace.activations.size()) {
    throw TraceMismatch("activation index out of range");
  }
  Tensor seed(logits.shape);
  seed.data[target_class] = 1.0;
  return backward_core(model, trace, std::move(seed), ReluMode::Standard, ReluScope::All,
                       nullptr, activation_index);
}

ParamGrads backward_training(const Model& model, const ForwardTrace& trace,
                             const std::vector<double>& logit_grad) {
  const Tensor& logits = trace.activations.back();
  if (static_cast<std::int64_t>(logit_grad.size()) != logits.size()) {
    throw TraceMismatch("logit gradient length mismatch");
  }
  Tensor seed(logits.shape);
  seed.data = logit_grad;
  ParamGrads grads;
  grads.input = backward_core(model, trace, std::move(seed), ReluMode::Standard,
                              ReluScope::All, &grads);
  return grads;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Prediction predict(const Model& model, const Tensor& x, const std::vector<double>& q) {
  ForwardTrace trace = forward(model, x, q);
  const auto& logits = trace.activations.back().data;
  auto probs = softmax(logits);
  Prediction p;
  p.class_id = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  p.probability = probs[p.class_id];
  return p;
}

namespace {

constexpr char kMagic[8] = {'X', 'A', 'I', 'N', 'E', 'T', '0', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void write_f64(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CorruptPayload("short read");
  return v;
}
void read_f64(std::istream& in, double* data, std::size_t n) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw CorruptPayload("short read");
  }
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  write_u32(out, static_cast<std::uint32_t>(model.input_channels));
  write_u32(out, static_cast<std::uint32_t>(model.input_height));
  write_u32(out, static_cast<std::uint32_t>(model.input_width));
  write_u32(out, static_cast<std::uint32_t>(model.question_dim));
  write_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (std::size_t k = 0; k < model.layers.size(); ++k) {
    const Layer& layer = model.layers[k];
    std::uint8_t tag = static_cast<std::uint8_t>(layer.index());
    std::uint8_t stage = static_cast<std::uint8_t>(model.stages[k]);
    out.put(static_cast<char>(tag));
    out.put(static_cast<char>(stage));
    if (const auto* conv = std::get_if<Conv2D>(&layer)) {
      write_u32(out, conv->in_channels);
      write_u32(out, conv->out_channels);
      write_u32(out, conv->kernel);
      write_u32(out, conv->stride);
      write_f64(out, conv->kernels.data.data(), conv->kernels.data.size());
      write_f64(out, conv->bias.data(), conv->bias.size());
    } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
      write_u32(out, bn->channels);
      write_f64(out, &bn->eps, 1);
      write_f64(out, bn->gamma.data(), bn->gamma.size());
      write_f64(out, bn->beta.data(), bn->beta.size());
      write_f64(out, bn->mean.data(), bn->mean.size());
      write_f64(out, bn->var.data(), bn->var.size());
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      write_u32(out, dense->in_features);
      write_u32(out, dense->out_features);
      write_f64(out, dense->weights.data.data(), dense->weights.data.size());
      write_f64(out, dense->bias.data(), dense->bias.size());
    } else if (const auto* pc = std::get_if<PairConcat>(&layer)) {
      write_u32(out, pc->question_dim);
    }
  }
  write_u32(out, static_cast<std::uint32_t>(model.question_table.size()));
  for (const auto& [key, vec] : model.question_table) {
    write_u32(out, static_cast<std::uint32_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    write_f64(out, vec.data(), vec.size());
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw CorruptPayload("file too short for header");
  if (std::memcmp(magic, kMagic, 6) != 0) throw BadMagic("not a model file");
  if (std::memcmp(magic + 6, kMagic + 6, 2) != 0) throw VersionMismatch("unsupported version");
  Model model;
  model.input_channels = static_cast<int>(read_u32(in));
  model.input_height = static_cast<int>(read_u32(in));
  model.input_width = static_cast<int>(read_u32(in));
  model.question_dim = static_cast<int>(read_u32(in));
  std::uint32_t layer_count = read_u32(in);
  for (std::uint32_t k = 0; k < layer_count; ++k) {
    int tag = in.get();
    int stage = in.get();
    if (tag < 0 || stage < 0) throw CorruptPayload("short read in layer header");
    if (stage > 2) throw CorruptPayload("bad stage tag");
    model.stages.push_back(static_cast<Stage>(stage));
    switch (tag) {
      case 0: {
        Conv2D conv;
        conv.in_channels = static_cast<int>(read_u32(in));
        conv.out_channels = static_cast<int>(read_u32(in));
        conv.kernel = static_cast<int>(read_u32(in));
        conv.stride = static_cast<int>(read_u32(in));
        if (conv.in_channels <= 0 || conv.out_channels <= 0 || conv.kernel <= 0 ||
            conv.stride <= 0) {
          throw CorruptPayload("bad conv dimensions");
        }
        conv.kernels = Tensor({conv.out_channels, conv.in_channels, conv.kernel, conv.kernel});
        conv.bias.resize(conv.out_channels);
        read_f64(in, conv.kernels.data.data(), conv.kernels.data.size());
        read_f64(in, conv.bias.data(), conv.bias.size());
        model.layers.emplace_back(std::move(conv));
        break;
      }
      case 1: {
        BatchNorm bn;
        bn.channels = static_cast<int>(read_u32(in));
        if (bn.channels <= 0) throw CorruptPayload("bad batchnorm channels");
        read_f64(in, &bn.eps, 1);
        bn.gamma.resize(bn.channels);
        bn.beta.resize(bn.channels);
        bn.mean.resize(bn.channels);
        bn.var.resize(bn.channels);
        read_f64(in, bn.gamma.data(), bn.gamma.size());
        read_f64(in, bn.beta.data(), bn.beta.size());
        read_f64(in, bn.mean.data(), bn.mean.size());
        read_f64(in, bn.var.data(), bn.var.size());
        model.layers.emplace_back(std::move(bn));
        break;
      }
      case 2: {
        Dense dense;
        dense.in_features = static_cast<int>(read_u32(in));
        dense.out_features = static_cast<int>(read_u32(in));
        if (dense.in_features <= 0 || dense.out_features <= 0) {
          throw CorruptPayload("bad dense dimensions");
        }
        dense.weights = Tensor({dense.out_features, dense.in_features});
        dense.bias.resize(dense.out_features);
        read_f64(in, dense.weights.data.data(), dense.weights.data.size());
        read_f64(in, dense.bias.data(), dense.bias.size());
        model.layers.emplace_back(std::move(dense));
        break;
      }
      case 3:
        model.layers.emplace_back(ReLU{});
        break;
      case 4: {
        PairConcat pc;
        pc.question_dim = static_cast<int>(read_u32(in));
        model.layers.emplace_back(pc);
        break;
      }
      case 5:
        model.layers.emplace_back(SumPool{});
        break;
      default:
        throw CorruptPayload("unknown layer tag");
    }
  }
  std::uint32_t entries = read_u32(in);
  for (std::uint32_t e = 0; e < entries; ++e) {
    std::uint32_t len = read_u32(in);
    std::string key(len, '\0');
    if (!in.read(key.data(), len)) throw CorruptPayload("short read in question table");
    std::vector<double> vec(model.question_dim);
    read_f64(in, vec.data(), vec.size());
    model.question_table.emplace(std::move(key), std::move(vec));
  }
  return model;
}

Model make_relation_network(const NetConfig& config, Rng& rng) {
  Model model;
  model.input_channels = config.input_channels;
  model.input_height = config.input_height;
  model.input_width = config.input_width;
  model.question_dim = config.question_dim;

  auto gaussian_fill = [&](std::vector<double>& v, double std) {
    for (double& x : v) x = rng.next_gaussian() * std;
  };
  auto add = [&](Layer layer, Stage stage) {
    model.layers.push_back(std::move(layer));
    model.stages.push_back(stage);
  };

  const int strides[4] = {2, 1, 2, 1};
  int in_c = config.input_channels;
  int cell_h = config.input_height, cell_w = config.input_width;
  for (int b = 0; b < 4; ++b) {
    cell_h = (cell_h - 3) / strides[b] + 1;
    cell_w = (cell_w - 3) / strides[b] + 1;
    Conv2D conv;
    conv.in_channels = in_c;
    conv.out_channels = config.conv_width;
    conv.kernel = 3;
    conv.stride = strides[b];
    conv.kernels = Tensor({conv.out_channels, conv.in_channels, 3, 3});
    gaussian_fill(conv.kernels.data, std::sqrt(2.0 / (in_c * 9)));
    conv.bias.assign(conv.out_channels, 0.0);
    add(std::move(conv), Stage::Conv);
    add(ReLU{}, Stage::Conv);
    BatchNorm bn;
    bn.channels = config.conv_width;
    bn.gamma.assign(bn.channels, 1.0);
    bn.beta.assign(bn.channels, 0.0);
    bn.mean.assign(bn.channels, 0.0);
    bn.var.assign(bn.channels, 1.0);
    add(std::move(bn), Stage::Conv);
    in_c = config.conv_width;
  }

  auto dense = [&](int in, int out) {
    Dense d;
    d.in_features = in;
    d.out_features = out;
    d.weights = Tensor({out, in});
    gaussian_fill(d.weights.data, std::sqrt(2.0 / in));
    d.bias.assign(out, 0.0);
    return d;
  };

  add(PairConcat{config.question_dim}, Stage::Relation);
  int d_in = 2 * config.conv_width + config.question_dim;
  for (int b = 0; b < 4; ++b) {
    Dense d = dense(d_in, config.rn_hidden);
    if (b == 3) {
      // The pair sum adds ~cells² terms; shrinking the last pre-sum layer
      // keeps the classifier input near unit scale at initialization.
      double pairs = static_cast<double>(cell_h * cell_w) * (cell_h * cell_w);
      for (double& w : d.weights.data) w /= std::sqrt(pairs);
    }
    add(std::move(d), Stage::Relation);
    add(ReLU{}, Stage::Relation);
    d_in = config.rn_hidden;
  }
  add(SumPool{}, Stage::Relation);

  add(dense(config.rn_hidden, config.rn_hidden), Stage::Classifier);
  add(ReLU{}, Stage::Classifier);
  add(dense(config.rn_hidden, config.rn_hidden), Stage::Classifier);
  add(ReLU{}, Stage::Classifier);
  add(dense(config.rn_hidden, config.classes), Stage::Classifier);
  return model;
}

}  // namespace xaibench
