#pragma once

#include <cstdint>
#include <stdexcept>

#include "xaibench/dataset.hpp"
#include "xaibench/net.hpp"

namespace xaibench {

struct DivergedTraining : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainParams {
  double lr = 1e-3;
  double weight_decay = 1e-4;     // decoupled, conv kernels and dense weights only
  int epochs = 40;
  int batch = 32;
  int conv_width = 12;
  int rn_hidden = 32;
  std::uint64_t seed = 0;
  int threads = 4;
  double holdout_fraction = 0.1;  // trailing scenes, split at scene granularity
  bool verbose = false;           // per-epoch loss on stderr
};

struct TrainReport {
  double final_loss = 0;
  double train_accuracy = 0;
  double heldout_accuracy = 0;        // all held-out questions
  double heldout_color_accuracy = 0;  // held-out simple query_color questions
  int heldout_count = 0;
  int heldout_color_count = 0;
};

// Adam + cross-entropy on all dataset questions. Question vectors are token
// means, so a held-out program embeds sensibly as long as its tokens appear
// somewhere in training. Deterministic for any thread count: per-sample
// gradients are reduced in sample order.
Model train_toy_model(const Dataset& ds, const TrainParams& params,
                      TrainReport* report = nullptr);

}  // namespace xaibench
