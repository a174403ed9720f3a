#include "drumremap/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "drumremap/errors.hpp"

namespace drumremap {

RollingNormalizer::RollingNormalizer(const NormalizationStats& stored, std::size_t window, double epsilon)
    : stored_(stored), window_(window), epsilon_(epsilon), history_(window) {
  if (window < 2) throw DataError("normalizer window must hold at least 2 onsets");
  if (!(epsilon > 0.0)) throw DataError("normalizer epsilon must be positive");
}

std::array<double, 3> RollingNormalizer::normalize(const OnsetFeatures& f) {
  const auto raw = f.as_array();
  std::array<double, 3> out;
  const std::size_t n = std::min(count_, window_);
  for (std::size_t k = 0; k < 3; ++k) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, history_[i][k]);
      hi = std::max(hi, history_[i][k]);
    }
    if (n < 2 || !(hi - lo >= epsilon_)) {
      lo = stored_.min[k];
      hi = stored_.max[k];
    }
    const double v = (raw[k] - lo) / (hi - lo + epsilon_);
    out[k] = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
  }
  history_[next_] = raw;
  next_ = (next_ + 1) % window_;
  ++count_;
  return out;
}

nlohmann::json to_json(const TriggerEvent& e, double sample_rate) {
  nlohmann::json theta = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumParams; ++i) theta[std::string(kSlotNames[i])] = e.theta[i];
  return {{"onset_sample", e.onset_sample},
          {"onset_time_s", static_cast<double>(e.onset_sample) / sample_rate},
          {"trigger_sample", e.trigger_sample},
          {"latency_samples", e.trigger_sample - e.onset_sample},
          {"features",
           {{"rms", e.features.rms},
            {"spectral_centroid", e.features.spectral_centroid},
            {"spectral_flatness", e.features.spectral_flatness}}},
          {"normalized", e.normalized},
          {"theta", theta},
          {"noise_seed", e.noise_seed},
          {"fallback", e.fallback},
          {"stole_voice", e.stole_voice}};
}

nlohmann::json events_to_json(std::span<const TriggerEvent> events, double sample_rate) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : events) list.push_back(to_json(e, sample_rate));
  return {{"schema_version", 1}, {"sample_rate", sample_rate}, {"events", list}};
}

// ---------------------------------------------------------------------------

namespace {

void check_renderable(const MappingModel& m, double sample_rate) {
  const double top = m.context.ranges[Slot::HpfCutoff].max;
  if (!(top < sample_rate / 2.0)) {
    throw DataError("high-pass range reaches " + std::to_string(top) + " Hz, above Nyquist at " +
                    std::to_string(sample_rate) + " Hz");
  }
}

}  // namespace

RemapEngine::RemapEngine(const MappingModel& model, const EngineConfig& cfg)
    : cfg_(cfg),
      model_(std::make_unique<MappingModel>(model)),
      window_(model.context.onset_window),
      detector_(cfg.onset, cfg.sample_rate),
      analyzer_(model.context.onset_window, cfg.sample_rate),
      normalizer_(model.normalization, cfg.normalizer_window),
      capture_(model.context.onset_window, 0.0),
      voices_(cfg.max_voices),
      seed_counter_(cfg.seed),
      max_voice_samples_(static_cast<std::uint64_t>(std::llround(cfg.voice_length_s * cfg.sample_rate))),
      silence_(std::pow(10.0, cfg.silence_dbfs / 20.0)),
      incoming_(8),
      retired_(8),
      events_(cfg.event_capacity) {
  if (cfg.max_voices == 0) throw DataError("engine needs at least one voice");
  if (!(cfg.voice_length_s > 0.0)) throw DataError("voice length must be positive");
  check_renderable(model, cfg.sample_rate);
}

RemapEngine::~RemapEngine() {
  while (auto m = incoming_.pop()) delete *m;
  while (auto m = retired_.pop()) delete *m;
}

bool RemapEngine::post_model(std::unique_ptr<MappingModel> model) {
  if (!model) throw std::invalid_argument("null model");
  if (model->context.onset_window != window_) {
    throw DataError("new model uses a " + std::to_string(model->context.onset_window) +
                    "-sample onset window, the engine runs " + std::to_string(window_));
  }
  check_renderable(*model, cfg_.sample_rate);
  MappingModel* raw = model.get();
  if (!incoming_.push(raw)) return false;
  model.release();
  return true;
}

void RemapEngine::collect_garbage() {
  while (auto m = retired_.pop()) delete *m;
}

std::size_t RemapEngine::drain_events(std::vector<TriggerEvent>& out) {
  std::size_t n = 0;
  while (auto e = events_.pop()) {
    out.push_back(*e);
    ++n;
  }
  return n;
}

void RemapEngine::apply_pending_models() {
  // A swap needs room to hand the old model back for freeing.
  while (retired_.can_push()) {
    auto next = incoming_.pop();
    if (!next) return;
    retired_.push(model_.release());
    model_.reset(*next);
    normalizer_.set_stored(model_->normalization);
  }
}

void RemapEngine::trigger(std::uint64_t start) {
  TriggerEvent ev;
  ev.onset_sample = capture_onset_;
  ev.trigger_sample = start;
  ParamArray<double> mod{};
  if (auto f = analyzer_.analyze(capture_)) {
    ev.features = *f;
    ev.normalized = normalizer_.normalize(*f);
    mod = model_->forward(ev.normalized);
    for (double v : mod) {
      if (!std::isfinite(v)) {
        ev.fallback = true;
        mod.fill(0.0);
        break;
      }
    }
  } else {
    ev.fallback = true;
  }
  ev.theta = apply_modulation<double>(model_->context.preset.params, mod);
  ev.noise_seed = cfg_.live_seeds ? seed_counter_++ : cfg_.seed;

  Slot* slot = nullptr;
  for (auto& s : voices_) {
    if (!s.voice) {
      slot = &s;
      break;
    }
  }
  if (slot == nullptr) {
    slot = &*std::min_element(voices_.begin(), voices_.end(),
                              [](const Slot& a, const Slot& b) { return a.start < b.start; });
    ev.stole_voice = true;
  }
  slot->voice.emplace(ev.theta, model_->context.ranges, cfg_.sample_rate, ev.noise_seed);
  slot->start = start;
  if (!events_.push(ev)) dropped_events_.fetch_add(1, std::memory_order_relaxed);
}

void RemapEngine::process_block(std::span<const double> input, std::span<double> output) {
  apply_pending_models();
  const std::size_t n = std::min(input.size(), output.size());
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0.0;
    for (auto& s : voices_) {
      if (!s.voice || s.start > position_) continue;
      y += s.voice->next();
      const std::size_t age = s.voice->position();
      if (age >= max_voice_samples_ || (age % 64 == 0 && s.voice->level_bound() < silence_)) s.voice.reset();
    }
    output[i] = y;

    const double x = input[i];
    if (capturing_) {
      capture_[captured_++] = x;
    }
    if (detector_.process(x)) {
      if (capturing_) {
        ignored_onsets_.fetch_add(1, std::memory_order_relaxed);
      } else {
        capturing_ = true;
        capture_onset_ = position_;
        capture_[0] = x;
        captured_ = 1;
      }
    }
    if (capturing_ && captured_ == window_) {
      capturing_ = false;
      trigger(position_ + 1);
    }
    ++position_;
  }
  std::size_t active = 0;
  for (const auto& s : voices_) active += s.voice.has_value();
  active_.store(active, std::memory_order_relaxed);
  // Samples the caller gave more room for than input: silence.
  for (std::size_t i = n; i < output.size(); ++i) output[i] = 0.0;
}

// ---------------------------------------------------------------------------

RemapResult remap_offline(std::span<const double> input, const MappingModel& model, const EngineConfig& cfg,
                          std::size_t block_size) {
  if (block_size == 0) throw DataError("block size must be positive");
  auto engine = std::make_unique<RemapEngine>(model, cfg);
  const auto tail = static_cast<std::size_t>(std::llround(cfg.voice_length_s * cfg.sample_rate));
  const std::size_t total = input.size() + engine->onset_window() + tail;
  RemapResult result;
  result.output.assign(total, 0.0);
  std::vector<double> block(block_size);
  for (std::size_t start = 0; start < total; start += block_size) {
    const std::size_t n = std::min(block_size, total - start);
    for (std::size_t i = 0; i < n; ++i) block[i] = start + i < input.size() ? input[start + i] : 0.0;
    engine->process_block(std::span<const double>(block.data(), n), std::span<double>(result.output.data() + start, n));
    engine->drain_events(result.events);
    engine->collect_garbage();
  }
  return result;
}

}  // namespace drumremap
