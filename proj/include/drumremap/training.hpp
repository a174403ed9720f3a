#pragma once

// Feature-difference loss, direct modulation search, mapping-model training
// and test-split evaluation.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drumremap/dataset.hpp"
#include "drumremap/features.hpp"
#include "drumremap/models.hpp"
#include "drumremap/synth.hpp"
#include "json.hpp"

namespace drumremap {

/// Sum of absolute componentwise differences.
double feature_difference_loss(const FeatureArray<double>& y_hat, const FeatureArray<double>& y);

/// Subgradient of the loss w.r.t. y_hat; 0 where y_hat == y.
FeatureArray<double> loss_gradient(const FeatureArray<double>& y_hat, const FeatureArray<double>& y);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t size, const AdamConfig& cfg = {});

  void step(std::span<double> params, std::span<const double> grad);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  double lr_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Multiplies the learning rate by `factor` once `patience` consecutive
/// updates bring no improvement over the best value seen.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(std::size_t patience = 20, double factor = 0.5);

  /// Returns true when this update triggered a reduction.
  bool update(double value, Adam& optimizer);
  std::size_t stale() const { return stale_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double factor_;
  double best_;
  std::size_t stale_ = 0;
};

/// y_hat = f(g(clamp(theta_pre + theta_mod))) - f(g(theta_pre)). The
/// unmodulated render and its features are computed once.
///
/// A modulation that silences a segment has no features; it degrades to the
/// preset (y_hat = 0, zero Jacobian) and is flagged as silent.
class AnalogySynth {
 public:
  explicit AnalogySynth(SynthContext ctx);

  struct Gradient {
    FeatureArray<double> y_hat{};
    std::array<ParamArray<double>, kNumFeatures> jacobian{};  // d y_hat_i / d theta_mod_j
    bool silent = false;
  };

  /// Forward-mode pass: features and their 7x14 Jacobian.
  Gradient evaluate(const ParamArray<double>& theta_mod) const;

  /// Plain double pass, for evaluation and finite differences.
  FeatureArray<double> y_hat(const ParamArray<double>& theta_mod) const;
  FeatureArray<double> y_hat(const ParamArray<double>& theta_mod, bool& silent) const;

  const SynthContext& context() const { return ctx_; }
  const FeatureArray<double>& base_features() const { return base_; }

 private:
  SynthContext ctx_;
  FeatureArray<double> base_{};       // f(x_c), plain path
  FeatureArray<double> base_dual_{};  // f(x_c), value part of the dual path
};

struct DirectOptConfig {
  std::size_t iterations = 250;
  AdamConfig adam{0.01};
  std::size_t patience = 40;  // plateau halving, in iterations
  /// Stop once the loss falls to this fraction of the initial loss.
  std::optional<double> stop_fraction;
  ParamArray<double> damping = default_damping_mask();
};

struct DirectOptResult {
  ParamArray<double> theta_mod{};
  double initial_loss = 0.0;
  double best_loss = 0.0;
  std::size_t iterations = 0;
  std::vector<double> losses;
};

/// Adam on theta_mod = damping * u from u = 0; returns the best iterate.
/// Throws DataError if the loss turns non-finite.
DirectOptResult direct_optimize(const AnalogySynth& synth, const FeatureArray<double>& y_target,
                                const DirectOptConfig& cfg = {});

struct TrainConfig {
  std::size_t epochs = 250;
  AdamConfig adam;
  std::size_t patience = 20;
  double lr_factor = 0.5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  std::size_t silent = 0;  // train + val predictions that fell back to the preset
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;  // epoch 0 is the untrained model
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

nlohmann::json to_json(const TrainHistory& h);

struct TrainResult {
  MappingModel model;
  TrainHistory history;
};

/// The context a model trained on `manifest` with `preset` renders in.
SynthContext context_for(const DatasetManifest& manifest, const Preset& preset,
                         const ParamRangeTable& ranges = ParamRangeTable());

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train_mapping(const DatasetManifest& manifest, const SynthContext& ctx, ModelKind kind,
                          const TrainConfig& cfg = {}, const EpochCallback& on_epoch = {});

/// Mean L1 loss of `model` over the records with the given split. `silent`,
/// if given, is increased by the number of silent predictions.
double split_loss(const MappingModel& model, const AnalogySynth& synth, const DatasetManifest& manifest,
                  Split split, std::size_t* silent = nullptr);

struct ErrorColumn {
  std::string method;
  FeatureArray<double> mean{};
  FeatureArray<double> stddev{};  // population
};

ErrorColumn error_column(const std::string& method, std::span<const FeatureArray<double>> y_hat,
                         std::span<const FeatureArray<double>> y);

struct EvalReport {
  std::size_t test_records = 0;
  std::size_t silent_predictions = 0;  // model predictions that fell back to the preset
  std::vector<ErrorColumn> columns;

  const ErrorColumn& column(const std::string& method) const;
  /// Feature rows, one "mean ± std" cell per method.
  std::string table() const;
};

nlohmann::json to_json(const EvalReport& r);

/// Model column followed by the unmodulated-preset column.
EvalReport evaluate(const MappingModel& model, const DatasetManifest& manifest);
EvalReport evaluate(const MappingModel& model, const AnalogySynth& synth, const DatasetManifest& manifest);

/// Per test record, the directly optimized modulation.
ErrorColumn evaluate_direct(const AnalogySynth& synth, const DatasetManifest& manifest,
                            const DirectOptConfig& cfg = {});

}  // namespace drumremap
