#pragma once

#include "sst/model.hpp"
#include "sst/train.hpp"

#include <map>
#include <string>

namespace sst {

/// Versioned binary container: magic "SLSTMCKPT", format version, a
/// key=value config block, then named tensors (name length + name + rank +
/// extents + little-endian f64 payload). Load/save round-trips are
/// bit-identical.
struct Checkpoint {
  ModelConfig model_cfg;
  TrainConfig train_cfg;
  AdamState adam;
  int epoch = 0;
  uint64_t vocab_hash = 0;
  double best_metric = 0.0;
  std::vector<std::string> label_names;
  std::map<std::string, Tensor> tensors;  // parameters by name

  static Checkpoint capture(Model& model, const TrainConfig& tc,
                            const AdamState& adam, int epoch,
                            uint64_t vocab_hash, double best_metric,
                            const std::vector<std::string>& label_names);

  /// Rebuilds the model (embedding table sized from the stored tensor) and
  /// restores every parameter and Adam moment.
  Model restore_model() const;
  void restore_adam(AdamState& out) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sst
