#include "drumremap/synth.hpp"

#include <set>

#include "drumremap/errors.hpp"
#include "drumremap/json_io.hpp"

namespace drumremap {

std::optional<Slot> slot_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (kSlotNames[i] == name) return static_cast<Slot>(i);
  }
  return std::nullopt;
}

SynthParams::SynthParams(const ParamArray<double>& values) : values_(values) {
  for (std::size_t i = 0; i < kNumParams; ++i) {
    if (!(values[i] >= 0.0 && values[i] <= 1.0)) {
      throw DataError("parameter " + std::string(kSlotNames[i]) + " outside [0, 1]");
    }
  }
}

SynthParams apply_modulation(const SynthParams& theta_pre, const ParamArray<double>& theta_mod) {
  return SynthParams(apply_modulation<double>(theta_pre, theta_mod));
}

double ParamRange::to_normalized(double physical) const {
  if (curve == Curve::Linear) return (physical - min) / (max - min);
  return std::log(physical / min) / std::log(max / min);
}

namespace {

void validate(const ParamRange& r, std::string_view slot) {
  if (!(r.min < r.max)) throw DataError("range for " + std::string(slot) + " needs min < max");
  if (r.curve == Curve::Exponential && !(r.min > 0.0)) {
    throw DataError("exponential range for " + std::string(slot) + " needs min > 0");
  }
}

std::array<ParamRange, kNumParams> default_ranges() {
  constexpr auto lin = Curve::Linear;
  constexpr auto ex = Curve::Exponential;
  return {{
      {40.0, 400.0, ex},     // osc1_freq
      {0.0, 8.0, lin},       // osc1_fm_amount
      {0.0, 1.0, lin},       // osc1_gain
      {0.01, 2.0, ex},       // osc1_amp_decay
      {80.0, 800.0, ex},     // osc2_freq
      {0.0, 8.0, lin},       // osc2_fm_amount
      {0.0, 1.0, lin},       // osc2_gain
      {0.01, 2.0, ex},       // osc2_amp_decay
      {0.005, 0.3, ex},      // freq_env_decay
      {0.0, 1.0, lin},       // noise_gain
      {0.01, 2.0, ex},       // noise_amp_decay
      {20.0, 16000.0, ex},   // hpf_cutoff
      {0.5, 10.0, ex},       // hpf_q
      {0.1, 10.0, ex},       // shaper_drive
  }};
}

template <class Fn>
void for_each_slot_object(const nlohmann::json& obj, std::string_view what, Fn&& fn) {
  if (!obj.is_object()) throw DataError(std::string(what) + " must be an object");
  std::set<std::string> seen;
  for (const auto& [key, value] : obj.items()) {
    const auto slot = slot_from_name(key);
    if (!slot) throw DataError("unknown slot '" + key + "' in " + std::string(what));
    seen.insert(key);
    fn(*slot, value);
  }
  if (seen.size() != kNumParams) {
    for (auto name : kSlotNames) {
      if (!seen.contains(std::string(name))) {
        throw DataError("missing slot '" + std::string(name) + "' in " + std::string(what));
      }
    }
  }
}

constexpr int kSchemaVersion = 1;

void check_schema_version(const nlohmann::json& j, std::string_view what) {
  if (!j.contains("schema_version")) return;
  const auto& v = j.at("schema_version");
  if (!v.is_number_integer() || v.get<int>() != kSchemaVersion) {
    throw DataError("unsupported " + std::string(what) + " schema_version");
  }
}

}  // namespace

ParamRangeTable::ParamRangeTable() : ranges_(default_ranges()) {}

ParamRangeTable::ParamRangeTable(const std::array<ParamRange, kNumParams>& ranges) : ranges_(ranges) {
  for (std::size_t i = 0; i < kNumParams; ++i) validate(ranges_[i], kSlotNames[i]);
}

nlohmann::json to_json(const Preset& preset) {
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumParams; ++i) params[std::string(kSlotNames[i])] = preset.params.values()[i];
  return {{"schema_version", kSchemaVersion}, {"name", preset.name}, {"params", params}};
}

Preset preset_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("name") || !j.contains("params") || !j.at("name").is_string()) {
    throw DataError("preset needs a string 'name' and a 'params' object");
  }
  check_schema_version(j, "preset");
  ParamArray<double> values{};
  for_each_slot_object(j.at("params"), "preset params", [&](Slot s, const nlohmann::json& v) {
    if (!v.is_number()) throw DataError("preset parameter values must be numbers");
    values[index(s)] = v.get<double>();
  });
  return {j.at("name").get<std::string>(), SynthParams(values)};
}

Preset load_preset(const std::filesystem::path& path) { return preset_from_json(read_json_file(path)); }

void save_preset(const Preset& preset, const std::filesystem::path& path) {
  write_json_file(path, to_json(preset));
}

nlohmann::json to_json(const ParamRangeTable& table) {
  nlohmann::json j = {{"schema_version", kSchemaVersion}};
  for (std::size_t i = 0; i < kNumParams; ++i) {
    const auto& r = table.ranges()[i];
    j[std::string(kSlotNames[i])] = {
        {"min", r.min}, {"max", r.max}, {"curve", r.curve == Curve::Linear ? "linear" : "exponential"}};
  }
  return j;
}

ParamRangeTable range_table_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("range table must be an object");
  check_schema_version(j, "range table");
  auto slots = j;
  slots.erase("schema_version");
  std::array<ParamRange, kNumParams> ranges{};
  for_each_slot_object(slots, "range table", [&](Slot s, const nlohmann::json& v) {
    try {
      const auto curve = v.at("curve").get<std::string>();
      if (curve != "linear" && curve != "exponential") throw DataError("curve must be linear or exponential");
      ranges[index(s)] = {v.at("min").get<double>(), v.at("max").get<double>(),
                          curve == "linear" ? Curve::Linear : Curve::Exponential};
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("range table: ") + e.what());
    }
  });
  return ParamRangeTable(ranges);
}

ParamRangeTable load_range_table(const std::filesystem::path& path) {
  return range_table_from_json(read_json_file(path));
}

std::vector<Preset> factory_presets() {
  // osc1: freq fm gain decay | osc2: freq fm gain decay | fenv | noise: gain decay | hpf: cutoff q | drive
  auto make = [](std::string name, ParamArray<double> v) { return Preset{std::move(name), SynthParams(v)}; };
  return {
      make("classic_808", {0.65, 0.10, 0.38, 0.50, 0.62, 0.08, 0.21, 0.45, 0.40, 0.30, 0.48, 0.68, 0.15, 0.55}),
      make("tight", {0.70, 0.15, 0.32, 0.38, 0.66, 0.10, 0.20, 0.35, 0.30, 0.32, 0.36, 0.72, 0.20, 0.60}),
      make("noisy", {0.60, 0.08, 0.26, 0.45, 0.58, 0.06, 0.13, 0.40, 0.40, 0.47, 0.55, 0.62, 0.12, 0.50}),
      make("deep", {0.50, 0.20, 0.47, 0.62, 0.48, 0.15, 0.21, 0.55, 0.50, 0.21, 0.50, 0.55, 0.10, 0.52}),
      make("bright_crack", {0.75, 0.12, 0.28, 0.40, 0.72, 0.10, 0.20, 0.38, 0.35, 0.34, 0.42, 0.80, 0.25, 0.65}),
  };
}

std::vector<double> exp_envelope(double decay_s, std::size_t n, double sample_rate) {
  if (!(decay_s > 0.0)) throw DomainError("decay time must be positive");
  const double tau = decay_s / std::log(1000.0);
  std::vector<double> e(n);
  for (std::size_t t = 0; t < n; ++t) e[t] = std::exp(-static_cast<double>(t) / (sample_rate * tau));
  return e;
}

std::size_t render_length(const RenderConfig& cfg) {
  if (!(cfg.duration_s > 0.0)) throw DataError("render duration must be positive");
  if (!(cfg.sample_rate > 0.0)) throw DataError("sample rate must be positive");
  return static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.sample_rate));
}

}  // namespace drumremap
