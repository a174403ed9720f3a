#pragma once

// Real-time remapping engine: streaming onsets, post-onset feature capture,
// rolling normalization, model inference and polyphonic voices.
//
// Threading: one audio thread calls process_block(); one control thread
// posts models, drains events and frees retired models. They talk only
// through the bounded single-producer/single-consumer queues below.

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "drumremap/dataset.hpp"
#include "drumremap/features.hpp"
#include "drumremap/models.hpp"
#include "drumremap/synth.hpp"
#include "json.hpp"

namespace drumremap {

/// Wait-free bounded queue for exactly one producer and one consumer thread.
/// Storage is allocated once at construction.
template <class T>
class SpscQueue {
 public:
  explicit SpscQueue(std::size_t capacity) : slots_(capacity + 1) {}

  bool push(const T& value) {
    const std::size_t head = head_.load(std::memory_order_relaxed);
    const std::size_t next = (head + 1) % slots_.size();
    if (next == tail_.load(std::memory_order_acquire)) return false;
    slots_[head] = value;
    head_.store(next, std::memory_order_release);
    return true;
  }

  /// Producer side: whether push() would succeed now.
  bool can_push() const {
    const std::size_t next = (head_.load(std::memory_order_relaxed) + 1) % slots_.size();
    return next != tail_.load(std::memory_order_acquire);
  }

  std::optional<T> pop() {
    const std::size_t tail = tail_.load(std::memory_order_relaxed);
    if (tail == head_.load(std::memory_order_acquire)) return std::nullopt;
    T value = slots_[tail];
    tail_.store((tail + 1) % slots_.size(), std::memory_order_release);
    return value;
  }

  std::size_t capacity() const { return slots_.size() - 1; }

 private:
  std::vector<T> slots_;
  alignas(64) std::atomic<std::size_t> head_{0};
  alignas(64) std::atomic<std::size_t> tail_{0};
};

/// Min/max over the last K onsets, per feature. With fewer than two
/// observations, or a range below epsilon, the stored stats are used.
class RollingNormalizer {
 public:
  explicit RollingNormalizer(const NormalizationStats& stored, std::size_t window = 64, double epsilon = 1e-6);

  /// (x - min) / (max - min + eps) clamped to [0, 1], computed before `f`
  /// joins the history.
  std::array<double, 3> normalize(const OnsetFeatures& f);

  void set_stored(const NormalizationStats& stored) { stored_ = stored; }
  std::size_t observed() const { return count_; }

 private:
  NormalizationStats stored_;
  std::size_t window_;
  double epsilon_;
  std::vector<std::array<double, 3>> history_;
  std::size_t next_ = 0;
  std::size_t count_ = 0;
};

struct EngineConfig {
  double sample_rate = 48000.0;
  std::size_t max_voices = 8;
  OnsetConfig onset;
  std::size_t normalizer_window = 64;
  double voice_length_s = 1.0;     // hard cap on a voice's life
  double silence_dbfs = -90.0;     // voices below this are reclaimed
  bool live_seeds = false;         // per-trigger seed counter instead of a fixed seed
  std::uint64_t seed = 0;          // fixed seed (offline) or counter start (live)
  std::size_t event_capacity = 1024;
};

struct TriggerEvent {
  std::uint64_t onset_sample = 0;
  std::uint64_t trigger_sample = 0;  // first sample the voice sounds on
  OnsetFeatures features;
  std::array<double, 3> normalized{};
  ParamArray<double> theta{};
  std::uint64_t noise_seed = 0;
  bool fallback = false;  // model output unusable, preset played instead
  bool stole_voice = false;
};

nlohmann::json to_json(const TriggerEvent& e, double sample_rate);

class RemapEngine {
 public:
  RemapEngine(const MappingModel& model, const EngineConfig& cfg);
  ~RemapEngine();
  RemapEngine(const RemapEngine&) = delete;
  RemapEngine& operator=(const RemapEngine&) = delete;

  // --- audio thread -------------------------------------------------------

  /// Sample-accurate: a voice starts exactly onset_window samples after its
  /// onset, whatever the block size. No allocation, locking or I/O.
  void process_block(std::span<const double> input, std::span<double> output);

  // --- control thread -----------------------------------------------------

  /// Queues a model swap, applied at the next block boundary. The onset
  /// window and sample rate must match the running model. Returns false if
  /// the queue is full.
  bool post_model(std::unique_ptr<MappingModel> model);
  /// Frees models the audio thread has swapped out.
  void collect_garbage();
  /// Moves pending trigger events into `out`; returns how many.
  std::size_t drain_events(std::vector<TriggerEvent>& out);

  // --- either thread (relaxed counters) ------------------------------------

  std::size_t active_voices() const { return active_.load(std::memory_order_relaxed); }
  std::uint64_t dropped_events() const { return dropped_events_.load(std::memory_order_relaxed); }
  std::uint64_t ignored_onsets() const { return ignored_onsets_.load(std::memory_order_relaxed); }
  std::uint64_t processed_samples() const { return position_; }
  std::size_t onset_window() const { return window_; }

 private:
  struct Slot {
    std::optional<SnareVoice<double>> voice;
    std::uint64_t start = 0;
  };

  void apply_pending_models();
  void trigger(std::uint64_t start);

  EngineConfig cfg_;
  std::unique_ptr<MappingModel> model_;
  std::size_t window_;
  OnsetDetector detector_;
  OnsetAnalyzer analyzer_;
  RollingNormalizer normalizer_;
  std::vector<double> capture_;
  std::size_t captured_ = 0;
  bool capturing_ = false;
  std::uint64_t capture_onset_ = 0;
  std::vector<Slot> voices_;
  std::uint64_t position_ = 0;
  std::uint64_t seed_counter_;
  std::uint64_t max_voice_samples_;
  double silence_;

  SpscQueue<MappingModel*> incoming_;
  SpscQueue<MappingModel*> retired_;
  SpscQueue<TriggerEvent> events_;
  std::atomic<std::size_t> active_{0};
  std::atomic<std::uint64_t> dropped_events_{0};
  std::atomic<std::uint64_t> ignored_onsets_{0};
};

struct RemapResult {
  std::vector<double> output;
  std::vector<TriggerEvent> events;
};

/// Runs a whole signal through a fresh engine in blocks of `block_size`.
RemapResult remap_offline(std::span<const double> input, const MappingModel& model, const EngineConfig& cfg,
                          std::size_t block_size = 128);

nlohmann::json events_to_json(std::span<const TriggerEvent> events, double sample_rate);

}  // namespace drumremap
