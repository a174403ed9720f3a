#pragma once

// Mapping networks from normalized onset features to parameter modulations.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "drumremap/dataset.hpp"
#include "drumremap/features.hpp"
#include "drumremap/synth.hpp"
#include "json.hpp"

namespace drumremap {

inline constexpr std::size_t kModelInputs = 3;
inline constexpr std::size_t kMaxLayerWidth = 64;
inline constexpr double kFrequencyDamping = 1e-3;

enum class ModelKind { Linear, Mlp32, Mlp64x3 };

const char* kind_name(ModelKind kind);
ModelKind kind_from_name(const std::string& name);

/// Layer widths from input to output, e.g. {3, 32, 14}.
std::vector<std::size_t> architecture(ModelKind kind);

/// Weights plus biases of the bias-bearing affine stack.
std::size_t expected_param_count(ModelKind kind);

/// 1e-3 on both oscillator frequencies, 1 elsewhere.
ParamArray<double> default_damping_mask();

/// Everything needed to turn a predicted modulation back into sound and to
/// reproduce the features the model was trained against.
struct SynthContext {
  Preset preset{"default", SynthParams()};
  ParamRangeTable ranges;
  RenderConfig render{0.5, 48000.0, 0};
  FrameConfig frames;
  std::size_t onset_window = 256;
};

nlohmann::json to_json(const SynthContext& ctx);
SynthContext synth_context_from_json(const nlohmann::json& j);

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t offset = 0;  // into the flat parameter vector: W (out x in, row-major) then b

  std::size_t weights() const { return in * out; }
  std::size_t size() const { return in * out + out; }
};

using ModelInput = std::array<double, kModelInputs>;

/// Linear: one affine map. MLPs: affine + ReLU per hidden layer, final affine
/// + tanh. The damping mask multiplies every output slot in all kinds.
class MappingModel {
 public:
  MappingModel(ModelKind kind, const ParamArray<double>& damping = default_damping_mask());

  /// Hidden layers uniform in +-sqrt(1/fan_in); the output layer starts at
  /// zero so a fresh model predicts no modulation.
  static MappingModel init(ModelKind kind, std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  std::span<const LayerShape> layers() const { return layers_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  const ParamArray<double>& damping() const { return damping_; }

  /// Inputs are clamped to [0, 1]. No allocation.
  ParamArray<double> forward(const ModelInput& x) const;

  /// Adds dL/dphi to `grad` (length param_count) for upstream dL/dtheta_mod
  /// and returns dL/dx. Activations are recomputed; no allocation.
  ModelInput backward(const ModelInput& x, const ParamArray<double>& upstream, std::span<double> grad) const;

  NormalizationStats normalization;
  SynthContext context;

 private:
  ModelKind kind_;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
  ParamArray<double> damping_;
};

nlohmann::json to_json(const MappingModel& model);
MappingModel model_from_json(const nlohmann::json& j);
MappingModel load_model(const std::filesystem::path& path);
void save_model(const MappingModel& model, const std::filesystem::path& path);

}  // namespace drumremap
