// Self-supervised training loop: shuffled minibatch steps on the total loss,
// per-epoch validation, early stopping after a warmup epoch, checkpointing of
// the best validation weights.
#pragma once

#include <string>
#include <vector>

#include "metal/config.hpp"
#include "metal/data.hpp"
#include "metal/metal_model.hpp"

namespace metal {

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0;
    double val_loss = 0;
    double lr = 0;
    double seconds = 0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_loss = 0;
    int stopped_epoch = 0;
};

// The early-stop rule as a pure function of the validation-loss sequence:
// training runs epochs 1..max_epochs; improvement means strictly lower
// validation loss; the run stops at the first epoch e with
// e > start_after and no improvement in the last `patience` epochs.
// Returns the number of epochs actually run.
int early_stop_epoch(const std::vector<double>& val_losses, int max_epochs, int start_after,
                     int patience);

class Adam {
  public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore<float>& params, double lr, double weight_decay);

  private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat<float>> m_, v_;
};

// Trains in place; returns the loss history and restores the parameters of
// the best validation epoch. Throws DivergenceError when the loss turns
// non-finite.
TrainResult train(MetalModel<float>& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const Config& cfg, bool verbose = false);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace metal
