#include "drumremap/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "drumremap/errors.hpp"
#include "drumremap/json_io.hpp"

namespace drumremap {
namespace {

constexpr int kSchemaVersion = 1;
constexpr std::size_t kMaxLayers = 4;

using Activations = std::array<std::array<double, kMaxLayerWidth>, kMaxLayers + 1>;

std::vector<LayerShape> make_layers(ModelKind kind) {
  const auto widths = architecture(kind);
  std::vector<LayerShape> layers;
  std::size_t offset = 0;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    LayerShape l{widths[i], widths[i + 1], offset};
    offset += l.size();
    layers.push_back(l);
  }
  return layers;
}

template <class T>
T get_field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model field '") + key + "': " + e.what());
  }
}

}  // namespace

const char* kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear: return "linear";
    case ModelKind::Mlp32: return "mlp32";
    case ModelKind::Mlp64x3: return "mlp64x3";
  }
  return "linear";
}

ModelKind kind_from_name(const std::string& name) {
  if (name == "linear") return ModelKind::Linear;
  if (name == "mlp32") return ModelKind::Mlp32;
  if (name == "mlp64x3") return ModelKind::Mlp64x3;
  throw DataError("unknown model kind '" + name + "' (expected linear, mlp32 or mlp64x3)");
}

std::vector<std::size_t> architecture(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear: return {kModelInputs, kNumParams};
    case ModelKind::Mlp32: return {kModelInputs, 32, kNumParams};
    case ModelKind::Mlp64x3: return {kModelInputs, 64, 64, 64, kNumParams};
  }
  return {};
}

std::size_t expected_param_count(ModelKind kind) {
  std::size_t n = 0;
  for (const auto& l : make_layers(kind)) n += l.size();
  return n;
}

ParamArray<double> default_damping_mask() {
  ParamArray<double> m;
  m.fill(1.0);
  m[index(Slot::Osc1Freq)] = kFrequencyDamping;
  m[index(Slot::Osc2Freq)] = kFrequencyDamping;
  return m;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const SynthContext& ctx) {
  return {{"preset", to_json(ctx.preset)},
          {"ranges", to_json(ctx.ranges)},
          {"render", {{"duration_s", ctx.render.duration_s},
                      {"sample_rate", ctx.render.sample_rate},
                      {"noise_seed", ctx.render.noise_seed}}},
          {"frame_config", to_json(ctx.frames)},
          {"onset_window", ctx.onset_window}};
}

SynthContext synth_context_from_json(const nlohmann::json& j) {
  SynthContext ctx;
  try {
    ctx.preset = preset_from_json(j.at("preset"));
    ctx.ranges = range_table_from_json(j.at("ranges"));
    const auto& r = j.at("render");
    ctx.render.duration_s = r.at("duration_s").get<double>();
    ctx.render.sample_rate = r.at("sample_rate").get<double>();
    ctx.render.noise_seed = r.at("noise_seed").get<std::uint64_t>();
    ctx.frames = frame_config_from_json(j.at("frame_config"));
    ctx.onset_window = j.at("onset_window").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synth context: ") + e.what());
  }
  render_length(ctx.render);
  if (ctx.onset_window == 0) throw DataError("onset_window must be positive");
  return ctx;
}

// ---------------------------------------------------------------------------

MappingModel::MappingModel(ModelKind kind, const ParamArray<double>& damping)
    : kind_(kind), layers_(make_layers(kind)), params_(expected_param_count(kind), 0.0), damping_(damping) {
  normalization.min.fill(0.0);
  normalization.max.fill(1.0);
  for (double d : damping_) {
    if (!std::isfinite(d)) throw DataError("damping mask must be finite");
  }
}

MappingModel MappingModel::init(ModelKind kind, std::uint64_t seed) {
  MappingModel m(kind);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < m.layers_.size(); ++l) {
    const auto& shape = m.layers_[l];
    const double bound = std::sqrt(1.0 / static_cast<double>(shape.in));
    for (std::size_t i = 0; i < shape.size(); ++i) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      m.params_[shape.offset + i] = (2.0 * u - 1.0) * bound;
    }
  }
  return m;
}

namespace {

/// Fills acts[0] with the clamped input and acts[l + 1] with the output of
/// layer l (after its nonlinearity).
void run_layers(std::span<const LayerShape> layers, std::span<const double> params, bool mlp, const ModelInput& x,
                Activations& acts) {
  for (std::size_t i = 0; i < kModelInputs; ++i) acts[0][i] = std::clamp(x[i], 0.0, 1.0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layers[l];
    const double* w = params.data() + s.offset;
    const double* b = w + s.weights();
    const bool last = l + 1 == layers.size();
    for (std::size_t o = 0; o < s.out; ++o) {
      double z = b[o];
      const double* row = w + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) z += row[i] * acts[l][i];
      if (!mlp) {
        acts[l + 1][o] = z;
      } else if (last) {
        acts[l + 1][o] = std::tanh(z);
      } else {
        acts[l + 1][o] = z > 0.0 ? z : 0.0;
      }
    }
  }
}

}  // namespace

ParamArray<double> MappingModel::forward(const ModelInput& x) const {
  Activations acts;
  run_layers(layers_, params_, kind_ != ModelKind::Linear, x, acts);
  const auto& y = acts[layers_.size()];
  ParamArray<double> out;
  for (std::size_t k = 0; k < kNumParams; ++k) out[k] = y[k] * damping_[k];
  return out;
}

ModelInput MappingModel::backward(const ModelInput& x, const ParamArray<double>& upstream,
                                  std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("gradient buffer has the wrong size");
  const bool mlp = kind_ != ModelKind::Linear;
  Activations acts;
  run_layers(layers_, params_, mlp, x, acts);

  std::array<double, kMaxLayerWidth> delta{};
  std::array<double, kMaxLayerWidth> prev{};
  const std::size_t n_layers = layers_.size();
  for (std::size_t k = 0; k < kNumParams; ++k) {
    delta[k] = upstream[k] * damping_[k];
    if (mlp) {
      const double t = acts[n_layers][k];
      delta[k] *= 1.0 - t * t;
    }
  }
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& s = layers_[l];
    const double* w = params_.data() + s.offset;
    double* gw = grad.data() + s.offset;
    double* gb = gw + s.weights();
    std::fill(prev.begin(), prev.begin() + static_cast<std::ptrdiff_t>(s.in), 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double d = delta[o];
      gb[o] += d;
      if (d == 0.0) continue;
      const double* row = w + o * s.in;
      double* grow = gw + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) {
        grow[i] += d * acts[l][i];
        prev[i] += row[i] * d;
      }
    }
    if (l > 0) {
      for (std::size_t i = 0; i < s.in; ++i) delta[i] = acts[l][i] > 0.0 ? prev[i] : 0.0;
    } else {
      for (std::size_t i = 0; i < s.in; ++i) delta[i] = prev[i];
    }
  }
  ModelInput dx;
  for (std::size_t i = 0; i < kModelInputs; ++i) dx[i] = (x[i] >= 0.0 && x[i] <= 1.0) ? delta[i] : 0.0;
  return dx;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const MappingModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  const auto p = model.params();
  for (const auto& s : model.layers()) {
    const auto w = p.subspan(s.offset, s.weights());
    const auto b = p.subspan(s.offset + s.weights(), s.out);
    layers.push_back({{"in", s.in},
                      {"out", s.out},
                      {"weights", std::vector<double>(w.begin(), w.end())},
                      {"bias", std::vector<double>(b.begin(), b.end())}});
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", kind_name(model.kind())},
          {"input_width", kModelInputs},
          {"output_width", kNumParams},
          {"param_count", model.param_count()},
          {"layers", layers},
          {"damping_mask", model.damping()},
          {"normalization", to_json(model.normalization)},
          {"context", to_json(model.context)}};
}

namespace {

MappingModel parse_model(const nlohmann::json& j) {
  if (get_field<int>(j, "schema_version") != kSchemaVersion) throw DataError("unsupported model schema_version");
  const auto kind = kind_from_name(get_field<std::string>(j, "kind"));
  if (get_field<std::size_t>(j, "input_width") != kModelInputs) throw DataError("model input width must be 3");
  if (get_field<std::size_t>(j, "output_width") != kNumParams) throw DataError("model output width must be 14");
  const auto mask_vec = get_field<std::vector<double>>(j, "damping_mask");
  if (mask_vec.size() != kNumParams) throw DataError("damping mask must have 14 entries");
  ParamArray<double> mask;
  std::copy(mask_vec.begin(), mask_vec.end(), mask.begin());

  MappingModel m(kind, mask);
  const auto declared = get_field<std::size_t>(j, "param_count");
  if (declared != m.param_count()) {
    throw DataError("model declares " + std::to_string(declared) + " parameters, " + kind_name(kind) + " has " +
                    std::to_string(m.param_count()));
  }
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != m.layers().size()) throw DataError("layer count does not match kind");
  auto params = m.params();
  std::size_t total = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = m.layers()[l];
    const auto& lj = layers[l];
    if (get_field<std::size_t>(lj, "in") != s.in || get_field<std::size_t>(lj, "out") != s.out) {
      throw DataError("layer " + std::to_string(l) + " has the wrong shape");
    }
    const auto w = get_field<std::vector<double>>(lj, "weights");
    const auto b = get_field<std::vector<double>>(lj, "bias");
    if (w.size() != s.weights() || b.size() != s.out) {
      throw DataError("layer " + std::to_string(l) + " has the wrong number of parameters");
    }
    std::copy(w.begin(), w.end(), params.begin() + static_cast<std::ptrdiff_t>(s.offset));
    std::copy(b.begin(), b.end(), params.begin() + static_cast<std::ptrdiff_t>(s.offset + s.weights()));
    total += w.size() + b.size();
  }
  if (total != expected_param_count(kind)) throw DataError("parameter count mismatch");
  for (double v : params) {
    if (!std::isfinite(v)) throw DataError("model weights must be finite");
  }
  m.normalization = normalization_from_json(j.at("normalization"));
  m.context = synth_context_from_json(j.at("context"));
  return m;
}

}  // namespace

MappingModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("model file must be a JSON object");
  try {
    return parse_model(j);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model: ") + e.what());
  }
}

MappingModel load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

void save_model(const MappingModel& model, const std::filesystem::path& path) {
  write_json_file(path, to_json(model));
}

}  // namespace drumremap
