#pragma once

#include <optional>
#include <string>
#include <vector>

#include "neugap/errors.hpp"
#include "neugap/training.hpp"

namespace neugap {

enum class MethodKind { proposed, gp, nn };

inline std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::proposed: return "proposed";
    case MethodKind::gp: return "gp";
    case MethodKind::nn: return "nn";
  }
  return "?";
}

inline MethodKind parse_method(const std::string &name) {
  if (name == "proposed") return MethodKind::proposed;
  if (name == "gp") return MethodKind::gp;
  if (name == "nn") return MethodKind::nn;
  throw ConfigError("unknown model kind '" + name + "' (expected proposed, gp or nn)");
}

/// Options shared by the sparse GP trainer and the NN regressor.
struct FitConfig {
  MethodKind kind = MethodKind::proposed;
  int hidden = 5;
  double alpha0 = 1.0;
  std::optional<double> gamma0;  // 1 / D when unset
  int num_inducing = 100;
  bool optimize_inducing = false;
  int minibatch = 64;
  int max_epochs = 500;
  int patience = 20;
  AdamHyper adam;
  int pretrain_epochs = 200;

  void validate() const {
    if (hidden < 1) throw ConfigError("mlp.hidden must be positive");
    if (!(alpha0 > 0)) throw ConfigError("kernel.alpha0 must be positive");
    if (gamma0 && !(*gamma0 > 0)) throw ConfigError("kernel.gamma0 must be positive");
    if (num_inducing < 1) throw ConfigError("inducing.M must be positive");
    if (minibatch < 1) throw ConfigError("training.minibatch must be positive");
    if (max_epochs < 1) throw ConfigError("training.max_epochs must be positive");
    if (patience < 0) throw ConfigError("training.patience must be nonnegative");
    if (pretrain_epochs < 1) throw ConfigError("training.pretrain_epochs must be positive");
    if (!(adam.lr > 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) ||
        !(adam.eps > 0))
      throw ConfigError("training.adam settings out of range");
  }
};

struct EpochRecord {
  long epoch = 0;
  double objective = 0.0;  // minibatch estimate of the training objective
  double valid_loglik = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  long skipped_batches = 0;
  long best_epoch = -1;
  bool stopped_early = false;
};

}  // namespace neugap
