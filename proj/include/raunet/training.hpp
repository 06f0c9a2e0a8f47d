#pragma once

// Dice loss, Adam, the plateau learning-rate schedule, k-fold splitting and
// the patch training loop.

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raunet/architectures.hpp"

namespace raunet {

inline constexpr double kDiceEpsilon = 1e-6;

// 1 - 2 sum(s g) / (sum(s^2) + sum(g^2) + epsilon). Differentiable in `pred`;
// `target` is treated as a constant.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target, double epsilon = kDiceEpsilon);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
class Adam {
public:
    using NamedTensor = std::pair<std::string, Tensor<T>>;

    Adam(std::vector<NamedTensor> params, AdamConfig config = {});

    // One bias-corrected update of every parameter, in registration order.
    // A missing gradient counts as zero. Throws NumericError, leaving every
    // parameter and moment untouched, if any gradient is non-finite.
    void step();
    void zero_grad();

    double learning_rate() const { return config_.lr; }
    void set_learning_rate(double lr) { config_.lr = lr; }
    std::uint64_t step_count() const { return t_; }
    const std::vector<T>& first_moment(std::size_t i) const { return m_.at(i); }
    const std::vector<T>& second_moment(std::size_t i) const { return v_.at(i); }

private:
    std::vector<NamedTensor> params_;
    AdamConfig config_;
    std::vector<std::vector<T>> m_, v_;
    std::uint64_t t_ = 0;
};

struct PlateauConfig {
    std::size_t patience = 20;
    double factor = 0.1;
};

// Multiplies the learning rate by `factor` once `patience` consecutive epochs
// pass without a strict improvement of the best validation loss; the counter
// then restarts.
class PlateauSchedule {
public:
    explicit PlateauSchedule(double lr, PlateauConfig config = {});

    // Feeds one epoch's validation loss and returns the learning rate to use next.
    double update(double val_loss);

    double learning_rate() const { return lr_; }
    double best() const { return best_; }
    std::size_t stagnant_epochs() const { return stagnant_; }
    std::size_t reductions() const { return reductions_; }

private:
    PlateauConfig config_;
    double lr_;
    double best_;
    std::size_t stagnant_ = 0;
    std::size_t reductions_ = 0;
};

// Replays `history` through a fresh schedule and returns the final rate.
double plateau_schedule(const std::vector<double>& history, double initial_lr, PlateauConfig config = {});

struct Fold {
    std::vector<std::string> train;
    std::vector<std::string> validation;
};

struct FoldPlan {
    std::size_t k = 5;
    std::vector<Fold> folds;
};

// Seeded shuffle, then contiguous validation slices whose sizes differ by at
// most one (the first n % k folds get the extra case).
FoldPlan kfold_split(const std::vector<std::string>& case_ids, std::size_t k = 5, std::uint64_t seed = 0);

struct Sample {
    Tensor<float> image;   // [1, C, spatial...]
    Tensor<float> target;  // [1, 1, spatial...], values in {0, 1}
};

struct TrainConfig {
    std::size_t epochs = 50;
    // Optimiser steps per epoch; 0 means one pass over the training samples.
    std::size_t steps_per_epoch = 0;
    AdamConfig adam;
    PlateauConfig plateau;
    std::uint64_t seed = 0;
    // Normalisation used when scoring validation samples.
    NormMode eval_norm = NormMode::BatchStats;
    std::string checkpoint_path;  // best-validation weights, if non-empty
    std::string loss_csv_path;    // loss curve, if non-empty
    bool verbose = false;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> curve;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
    double best_val_loss = 0.0;
    std::size_t steps = 0;
};

// Batch-size-1 Adam training on Dice loss. Validation loss is the mean over
// `val` (or over `train` when `val` is empty). The network is left holding
// the best-validation weights. Throws NumericError on a non-finite loss.
TrainResult train_network(Network<float>& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
                          const TrainConfig& config);

double evaluate_loss(Network<float>& net, const std::vector<Sample>& samples, NormMode mode);

void write_loss_csv(const std::string& path, const std::vector<EpochRecord>& curve);

}  // namespace raunet
