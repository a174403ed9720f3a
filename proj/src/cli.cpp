#include "drumremap/cli.hpp"

#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "drumremap/dataset.hpp"
#include "drumremap/engine.hpp"
#include "drumremap/errors.hpp"
#include "drumremap/json_io.hpp"
#include "drumremap/models.hpp"
#include "drumremap/training.hpp"
#include "drumremap/wav.hpp"

namespace fs = std::filesystem;

namespace drumremap {
namespace {

/// Bad flags or values the parser cannot catch: exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<std::string, std::string> split_pair(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

double parse_number(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw UsageError("value for '" + key + "' is not a number: '" + text + "'");
  }
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  const double v = parse_number(key, text);
  if (v < 0 || v != std::floor(v)) throw UsageError("value for '" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

void check_output(const fs::path& path) {
  const auto parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw UsageError("output directory does not exist: " + parent.string());
}

void check_onset_window(std::size_t w) {
  if (w != 256 && w != 2048) throw UsageError("--onset-window must be 256 or 2048");
}

// --set overrides ------------------------------------------------------------

void apply_dataset_override(DatasetConfig& cfg, const std::string& key, const std::string& value) {
  static const std::map<std::string, double OnsetConfig::*> onset = {
      {"onset.fast_attack_ms", &OnsetConfig::fast_attack_ms},
      {"onset.fast_release_ms", &OnsetConfig::fast_release_ms},
      {"onset.slow_attack_ms", &OnsetConfig::slow_attack_ms},
      {"onset.slow_release_ms", &OnsetConfig::slow_release_ms},
      {"onset.on_threshold_db", &OnsetConfig::on_threshold_db},
      {"onset.off_threshold_db", &OnsetConfig::off_threshold_db},
      {"onset.min_inter_onset_ms", &OnsetConfig::min_inter_onset_ms},
      {"onset.floor_db", &OnsetConfig::floor_db},
  };
  if (auto it = onset.find(key); it != onset.end()) {
    cfg.onset.*(it->second) = parse_number(key, value);
  } else if (key == "frames.window_ms") {
    cfg.frames.window_ms = parse_number(key, value);
  } else if (key == "frames.overlap") {
    cfg.frames.overlap = parse_number(key, value);
  } else if (key == "frames.tc_window_ms") {
    cfg.frames.tc_window_ms = parse_number(key, value);
  } else if (key == "frames.n_transient") {
    cfg.frames.n_transient_frames = parse_count(key, value);
  } else if (key == "frames.n_sustain") {
    cfg.frames.n_sustain_frames = parse_count(key, value);
  } else if (key == "hit_length_s") {
    cfg.hit_length_s = parse_number(key, value);
  } else if (key == "val_frac") {
    cfg.val_frac = parse_number(key, value);
  } else if (key == "test_frac") {
    cfg.test_frac = parse_number(key, value);
  } else {
    throw UsageError("unknown setting '" + key + "'");
  }
}

void apply_train_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "epochs") {
    cfg.epochs = parse_count(key, value);
  } else if (key == "lr") {
    cfg.adam.lr = parse_number(key, value);
  } else if (key == "beta1") {
    cfg.adam.beta1 = parse_number(key, value);
  } else if (key == "beta2") {
    cfg.adam.beta2 = parse_number(key, value);
  } else if (key == "eps") {
    cfg.adam.eps = parse_number(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = parse_count(key, value);
  } else if (key == "patience") {
    cfg.patience = parse_count(key, value);
  } else if (key == "lr_factor") {
    cfg.lr_factor = parse_number(key, value);
  } else {
    throw UsageError("unknown setting '" + key + "'");
  }
}

void apply_direct_override(DirectOptConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "iterations") {
    cfg.iterations = parse_count(key, value);
  } else if (key == "lr") {
    cfg.adam.lr = parse_number(key, value);
  } else if (key == "patience") {
    cfg.patience = parse_count(key, value);
  } else {
    throw UsageError("unknown setting '" + key + "'");
  }
}

template <class Cfg, class Fn>
void apply_overrides(Cfg& cfg, const std::vector<std::string>& pairs, Fn&& apply) {
  for (const auto& kv : pairs) {
    const auto [key, value] = split_pair(kv);
    apply(cfg, key, value);
  }
}

// Helpers -------------------------------------------------------------------

Preset load_preset_arg(const std::string& arg) {
  if (fs::exists(arg)) return load_preset(arg);
  for (auto& p : factory_presets()) {
    if (p.name == arg) return p;
  }
  throw UsageError("preset '" + arg + "' is neither a file nor a factory preset name");
}

ParamRangeTable load_ranges_arg(const std::string& arg) {
  return arg.empty() ? ParamRangeTable() : load_range_table(arg);
}

FeatureArray<double> target_from_json(const nlohmann::json& j) {
  const nlohmann::json& v = j.is_object() && j.contains("y") ? j.at("y") : j;
  FeatureArray<double> y{};
  if (v.is_array()) {
    if (v.size() != kNumFeatures) throw DataError("target y must have 7 entries");
    for (std::size_t i = 0; i < kNumFeatures; ++i) y[i] = v[i].get<double>();
    return y;
  }
  if (v.is_object()) {
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      if (!v.contains(kFeatureNames[i])) throw DataError(std::string("target y is missing ") + kFeatureNames[i]);
      y[i] = v.at(kFeatureNames[i]).get<double>();
    }
    if (v.size() != kNumFeatures) throw DataError("target y has unknown feature names");
    return y;
  }
  throw DataError("target y must be an array of 7 numbers or an object keyed by feature name");
}

nlohmann::json theta_json(const ParamArray<double>& theta) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumParams; ++i) j[std::string(kSlotNames[i])] = theta[i];
  return j;
}

ParamArray<double> parse_mods(const std::vector<std::string>& mods) {
  ParamArray<double> out{};
  for (const auto& kv : mods) {
    const auto [key, value] = split_pair(kv);
    const auto slot = slot_from_name(key);
    if (!slot) throw UsageError("unknown parameter slot '" + key + "'");
    out[index(*slot)] = parse_number(key, value);
  }
  return out;
}

// Subcommands ---------------------------------------------------------------

struct SegmentArgs {
  std::string input, out;
  std::size_t onset_window = 256;
  std::vector<std::string> set;
};

int cmd_segment(const SegmentArgs& a) {
  check_output(a.out);
  check_onset_window(a.onset_window);
  DatasetConfig cfg;
  cfg.onset_window = a.onset_window;
  apply_overrides(cfg, a.set, apply_dataset_override);
  const auto audio = read_wav(a.input);
  spdlog::info("{}: {} samples at {} Hz", a.input, audio.samples.size(), audio.sample_rate);
  auto m = build_dataset(audio.samples, audio.sample_rate, cfg);
  m.source = a.input;
  if (m.dropped > 0) spdlog::warn("dropped {} silent or degenerate hits", m.dropped);
  spdlog::info("{} onsets, {} records (train {}, val {}, test {}), reference hit {}", m.onsets.size(),
               m.records.size(), m.select(Split::Train).size(), m.select(Split::Val).size(),
               m.select(Split::Test).size(), m.reference_hit_id);
  save_manifest(m, a.out);
  return kExitOk;
}

struct TrainArgs {
  std::string manifest, preset, ranges, model = "mlp32", out, history;
  std::uint64_t seed = 0;
  std::vector<std::string> set;
};

int cmd_train(const TrainArgs& a) {
  check_output(a.out);
  if (!a.history.empty()) check_output(a.history);
  TrainConfig cfg;
  cfg.seed = a.seed;
  apply_overrides(cfg, a.set, apply_train_override);
  const auto kind = kind_from_name(a.model);
  const auto manifest = load_manifest(a.manifest);
  const auto ctx = context_for(manifest, load_preset_arg(a.preset), load_ranges_arg(a.ranges));
  spdlog::info("training {} ({} parameters) on {} train / {} val records, preset '{}'", a.model,
               expected_param_count(kind), manifest.select(Split::Train).size(), manifest.select(Split::Val).size(),
               ctx.preset.name);
  const auto result = train_mapping(manifest, ctx, kind, cfg, [&](const EpochRecord& e) {
    const auto level = e.epoch % 10 == 0 || e.epoch == cfg.epochs ? spdlog::level::info : spdlog::level::debug;
    spdlog::log(level, "epoch {:4d}  train {:.4f}  val {:.4f}  lr {:.2e}", e.epoch, e.train_loss, e.val_loss, e.lr);
    if (e.silent > 0) spdlog::debug("epoch {:4d}: {} silent predictions fell back to the preset", e.epoch, e.silent);
  });
  spdlog::info("best val loss {:.4f} at epoch {}", result.history.best_val_loss, result.history.best_epoch);
  save_model(result.model, a.out);
  if (!a.history.empty()) {
    auto h = to_json(result.history);
    h["schema_version"] = 1;
    h["kind"] = a.model;
    h["seed"] = a.seed;
    write_json_file(a.history, h);
  }
  return kExitOk;
}

struct EvalArgs {
  std::string model, manifest, report;
  bool direct = false;
  std::vector<std::string> set;
};

int cmd_eval(const EvalArgs& a) {
  check_output(a.report);
  DirectOptConfig dcfg;
  apply_overrides(dcfg, a.set, apply_direct_override);
  const auto model = load_model(a.model);
  const auto manifest = load_manifest(a.manifest);
  const AnalogySynth synth(model.context);
  auto report = evaluate(model, synth, manifest);
  if (report.silent_predictions > 0) {
    spdlog::warn("{} predictions rendered silence and fell back to the preset", report.silent_predictions);
  }
  if (a.direct) report.columns.insert(report.columns.begin(), evaluate_direct(synth, manifest, dcfg));
  std::cout << report.table();
  write_json_file(a.report, to_json(report));
  return kExitOk;
}

struct RenderArgs {
  std::string preset, ranges, out;
  std::vector<std::string> mods;
  double duration = 1.0;
  double sample_rate = 48000.0;
  std::uint64_t seed = 0;
};

int cmd_render(const RenderArgs& a) {
  check_output(a.out);
  const auto preset = load_preset_arg(a.preset);
  const auto ranges = load_ranges_arg(a.ranges);
  const auto theta = apply_modulation<double>(preset.params, parse_mods(a.mods));
  const RenderConfig rc{a.duration, a.sample_rate, a.seed};
  if (ranges[Slot::HpfCutoff].max >= a.sample_rate / 2.0) throw DataError("high-pass range exceeds Nyquist");
  const auto audio = render<double>(theta, ranges, rc);
  double peak = 0.0;
  for (double x : audio) peak = std::max(peak, std::abs(x));
  spdlog::info("rendered '{}' for {} s, peak {:.3f}", preset.name, a.duration, peak);
  write_wav(a.out, audio, a.sample_rate);
  return kExitOk;
}

struct RemapArgs {
  std::string input, model, out, events;
  std::size_t block_size = 128;
  std::uint64_t seed = 0;
};

int cmd_remap(const RemapArgs& a) {
  check_output(a.out);
  if (!a.events.empty()) check_output(a.events);
  if (a.block_size == 0) throw UsageError("--block-size must be positive");
  const auto model = load_model(a.model);
  const auto audio = read_wav(a.input);
  EngineConfig cfg;
  cfg.sample_rate = audio.sample_rate;
  cfg.seed = a.seed;
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = remap_offline(audio.samples, model, cfg, a.block_size);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("{} triggers, {:.2f} s of audio in {:.2f} s", result.events.size(),
               static_cast<double>(audio.samples.size()) / audio.sample_rate, secs);
  write_wav(a.out, result.output, audio.sample_rate);
  if (!a.events.empty()) write_json_file(a.events, events_to_json(result.events, audio.sample_rate));
  return kExitOk;
}

struct DirectArgs {
  std::string preset, ranges, target, out;
  double duration = 0.5;
  double sample_rate = 48000.0;
  std::uint64_t seed = 0;
  std::vector<std::string> set;
};

int cmd_direct(const DirectArgs& a) {
  check_output(a.out);
  DirectOptConfig cfg;
  apply_overrides(cfg, a.set, apply_direct_override);
  SynthContext ctx;
  ctx.preset = load_preset_arg(a.preset);
  ctx.ranges = load_ranges_arg(a.ranges);
  ctx.render = {a.duration, a.sample_rate, a.seed};
  const auto y = target_from_json(read_json_file(a.target));
  const AnalogySynth synth(ctx);
  const auto r = direct_optimize(synth, y, cfg);
  spdlog::info("loss {:.4f} -> {:.4f} in {} iterations", r.initial_loss, r.best_loss, r.iterations);
  write_json_file(a.out, {{"schema_version", 1},
                          {"preset", ctx.preset.name},
                          {"theta_mod", theta_json(r.theta_mod)},
                          {"y_target", y},
                          {"y_hat", synth.y_hat(r.theta_mod)},
                          {"initial_loss", r.initial_loss},
                          {"best_loss", r.best_loss},
                          {"iterations", r.iterations},
                          {"losses", r.losses}});
  return kExitOk;
}

struct LiveArgs {
  std::string model, device = "stdio", events;
  double sample_rate = 48000.0;
  std::size_t block_size = 128;
  std::uint64_t seed = 0;
};

/// Raw float32 mono in on stdin, out on stdout. A control thread reloads the
/// model whenever its file changes and collects trigger events.
int cmd_live(const LiveArgs& a) {
  if (a.device != "stdio") {
    throw UsageError("no audio device backend in this build; use --device stdio and pipe raw float32 audio");
  }
  if (a.block_size == 0) throw UsageError("--block-size must be positive");
  if (!a.events.empty()) check_output(a.events);
  EngineConfig cfg;
  cfg.sample_rate = a.sample_rate;
  cfg.live_seeds = true;
  cfg.seed = a.seed;
  auto engine = std::make_unique<RemapEngine>(load_model(a.model), cfg);

  std::atomic<bool> running{true};
  std::vector<TriggerEvent> events;
  std::thread control([&] {
    auto stamp = fs::last_write_time(a.model);
    while (running.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      engine->collect_garbage();
      const auto before = events.size();
      engine->drain_events(events);
      for (auto i = before; i < events.size(); ++i) {
        spdlog::debug("trigger at sample {}", events[i].trigger_sample);
      }
      std::error_code ec;
      const auto now = fs::last_write_time(a.model, ec);
      if (ec || now == stamp) continue;
      stamp = now;
      try {
        if (engine->post_model(std::make_unique<MappingModel>(load_model(a.model)))) {
          spdlog::info("reloaded {}", a.model);
        }
      } catch (const std::exception& e) {
        spdlog::error("model reload failed, keeping the running model: {}", e.what());
      }
    }
  });

  std::vector<float> in_f(a.block_size), out_f(a.block_size);
  std::vector<double> in(a.block_size), out(a.block_size);
  for (;;) {
    const std::size_t n = std::fread(in_f.data(), sizeof(float), a.block_size, stdin);
    if (n == 0) break;
    for (std::size_t i = 0; i < n; ++i) in[i] = in_f[i];
    engine->process_block(std::span<const double>(in.data(), n), std::span<double>(out.data(), n));
    for (std::size_t i = 0; i < n; ++i) out_f[i] = static_cast<float>(out[i]);
    std::fwrite(out_f.data(), sizeof(float), n, stdout);
    std::fflush(stdout);
  }
  running.store(false);
  control.join();
  engine->drain_events(events);
  spdlog::info("{} triggers", events.size());
  if (!a.events.empty()) write_json_file(a.events, events_to_json(events, a.sample_rate));
  return kExitOk;
}

struct ReproduceArgs {
  std::string performances, work, out;
  std::vector<std::string> presets;
  std::vector<std::string> models{"linear", "mlp32", "mlp64x3"};
  std::size_t onset_window = 256;
  bool direct = true;
  std::uint64_t seed = 0;
  std::vector<std::string> set;
};

/// segment -> train -> eval for every performance x preset, pooled into one
/// report with direct, model and preset columns.
int cmd_reproduce(const ReproduceArgs& a) {
  check_output(a.out);
  check_onset_window(a.onset_window);
  TrainConfig tcfg;
  tcfg.seed = a.seed;
  apply_overrides(tcfg, a.set, apply_train_override);
  std::vector<ModelKind> kinds;
  for (const auto& m : a.models) kinds.push_back(kind_from_name(m));
  std::vector<Preset> presets;
  for (const auto& p : a.presets) presets.push_back(load_preset_arg(p));
  if (presets.empty()) presets = factory_presets();

  std::vector<fs::path> wavs;
  for (const auto& entry : fs::directory_iterator(a.performances)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav") wavs.push_back(entry.path());
  }
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw DataError("no .wav files in " + a.performances);
  const fs::path work = a.work.empty() ? fs::path(a.out).parent_path() / "reproduce_work" : fs::path(a.work);
  fs::create_directories(work);

  std::map<std::string, std::vector<FeatureArray<double>>> predictions;
  std::vector<FeatureArray<double>> targets;
  std::vector<std::string> order;
  std::size_t silent = 0;
  if (a.direct) order.push_back("direct");
  for (auto k : kinds) order.push_back(kind_name(k));
  order.push_back("preset");

  for (const auto& wav : wavs) {
    DatasetConfig dcfg;
    dcfg.onset_window = a.onset_window;
    const auto audio = read_wav(wav);
    auto manifest = build_dataset(audio.samples, audio.sample_rate, dcfg);
    manifest.source = wav.string();
    const auto stem = wav.stem().string();
    save_manifest(manifest, work / (stem + ".manifest.json"));
    spdlog::info("{}: {} records", stem, manifest.records.size());
    const auto test = manifest.select(Split::Test);
    for (const auto& preset : presets) {
      const auto ctx = context_for(manifest, preset);
      const AnalogySynth synth(ctx);
      for (const auto* r : test) {
        targets.push_back(r->y);
        predictions["preset"].push_back(synth.y_hat(ParamArray<double>{}));
      }
      if (a.direct) {
        for (const auto* r : test) predictions["direct"].push_back(synth.y_hat(direct_optimize(synth, r->y).theta_mod));
      }
      for (auto kind : kinds) {
        const auto result = train_mapping(manifest, ctx, kind, tcfg);
        save_model(result.model, work / (stem + "." + preset.name + "." + kind_name(kind) + ".json"));
        for (const auto* r : test) {
          const auto x = result.model.normalization.normalize(r->onset_features);
          bool quiet = false;
          predictions[kind_name(kind)].push_back(synth.y_hat(result.model.forward(x), quiet));
          silent += quiet;
        }
        spdlog::info("{} / {} / {}: best val {:.4f}", stem, preset.name, kind_name(kind),
                     result.history.best_val_loss);
      }
    }
  }
  EvalReport report;
  report.test_records = targets.size();
  report.silent_predictions = silent;
  for (const auto& method : order) report.columns.push_back(error_column(method, predictions[method], targets));
  std::cout << report.table();
  auto j = to_json(report);
  j["performances"] = wavs.size();
  j["presets"] = presets.size();
  write_json_file(a.out, j);
  return kExitOk;
}

struct PerformanceArgs {
  std::string out;
  std::size_t hits = 80;
  std::uint64_t seed = 0;
  double sample_rate = 48000.0;
  double spacing = 0.6;
};

int cmd_performance(const PerformanceArgs& a) {
  check_output(a.out);
  const auto perf = synthesize_performance(a.hits, a.seed, a.sample_rate, a.spacing);
  spdlog::info("{} hits, {:.1f} s", a.hits, static_cast<double>(perf.audio.size()) / a.sample_rate);
  write_wav(a.out, perf.audio, a.sample_rate);
  return kExitOk;
}

int cmd_presets(const std::string& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir);
  for (const auto& p : factory_presets()) save_preset(p, fs::path(dir) / (p.name + ".json"));
  write_json_file(fs::path(dir) / "param_ranges.json", to_json(ParamRangeTable()));
  return kExitOk;
}

void setup_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("drumremap");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  spdlog::cfg::load_env_levels();  // SPDLOG_LEVEL=debug etc.
}

}  // namespace

int run(const std::vector<std::string>& args) {
  setup_logging();
  CLI::App app{"Timbre remapping for a differentiable snare synthesizer"};
  app.name(args.empty() ? "drumremap" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.set_version_flag("--version", "drumremap 1.0");

  SegmentArgs seg;
  auto* s = app.add_subcommand("segment", "Detect hits in a performance and build a dataset manifest");
  s->add_option("input", seg.input, "Performance WAV")->required()->check(CLI::ExistingFile);
  s->add_option("--out", seg.out, "Manifest JSON to write")->required();
  s->add_option("--onset-window", seg.onset_window, "Post-onset samples for onset features (256 or 2048)");
  s->add_option("--set", seg.set, "Config override key=value (onset.*, frames.*, hit_length_s, val_frac, test_frac)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a mapping model on a manifest");
  t->add_option("--manifest", tr.manifest)->required()->check(CLI::ExistingFile);
  t->add_option("--preset", tr.preset, "Preset JSON or factory preset name")->required();
  t->add_option("--ranges", tr.ranges, "Parameter range table JSON")->check(CLI::ExistingFile);
  t->add_option("--model", tr.model, "linear, mlp32 or mlp64x3")
      ->check(CLI::IsMember({"linear", "mlp32", "mlp64x3"}));
  t->add_option("--out", tr.out, "Model JSON to write")->required();
  t->add_option("--history", tr.history, "Training history JSON to write");
  t->add_option("--seed", tr.seed);
  t->add_option("--set", tr.set, "Override key=value (epochs, lr, beta1, beta2, eps, batch_size, patience, lr_factor)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Feature-difference errors of a model on the test split");
  e->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
  e->add_option("--manifest", ev.manifest)->required()->check(CLI::ExistingFile);
  e->add_option("--report", ev.report, "Report JSON to write")->required();
  e->add_flag("--direct", ev.direct, "Add a directly optimized column");
  e->add_option("--set", ev.set, "Direct optimization override key=value (iterations, lr, patience)");

  RenderArgs rn;
  auto* r = app.add_subcommand("render", "Render one hit to a WAV file");
  r->add_option("--preset", rn.preset, "Preset JSON or factory preset name")->required();
  r->add_option("--ranges", rn.ranges)->check(CLI::ExistingFile);
  r->add_option("--mod", rn.mods, "Modulation slot=value, added to the preset");
  r->add_option("--out", rn.out)->required();
  r->add_option("--duration", rn.duration, "Seconds")->check(CLI::PositiveNumber);
  r->add_option("--sample-rate", rn.sample_rate)->check(CLI::PositiveNumber);
  r->add_option("--seed", rn.seed, "Noise seed");

  RemapArgs rm;
  auto* m = app.add_subcommand("remap", "Remap a performance file through a model");
  m->add_option("--input", rm.input)->required()->check(CLI::ExistingFile);
  m->add_option("--model", rm.model)->required()->check(CLI::ExistingFile);
  m->add_option("--out", rm.out, "Output WAV (32-bit float)")->required();
  m->add_option("--events", rm.events, "Event log JSON");
  m->add_option("--block-size", rm.block_size);
  m->add_option("--seed", rm.seed, "Noise seed for every voice");

  DirectArgs da;
  auto* d = app.add_subcommand("direct-opt", "Optimize a modulation to match a feature-difference target");
  d->add_option("--preset", da.preset)->required();
  d->add_option("--ranges", da.ranges)->check(CLI::ExistingFile);
  d->add_option("--target-y", da.target, "JSON: 7 numbers, or an object keyed by feature name")
      ->required()
      ->check(CLI::ExistingFile);
  d->add_option("--out", da.out)->required();
  d->add_option("--duration", da.duration)->check(CLI::PositiveNumber);
  d->add_option("--sample-rate", da.sample_rate)->check(CLI::PositiveNumber);
  d->add_option("--seed", da.seed);
  d->add_option("--set", da.set, "Override key=value (iterations, lr, patience)");

  LiveArgs lv;
  auto* l = app.add_subcommand("live", "Stream raw float32 audio from stdin to stdout through a model");
  l->add_option("--model", lv.model)->required()->check(CLI::ExistingFile);
  l->add_option("--device", lv.device, "Audio device; only 'stdio' is available");
  l->add_option("--events", lv.events, "Event log JSON written on exit");
  l->add_option("--sample-rate", lv.sample_rate)->check(CLI::PositiveNumber);
  l->add_option("--block-size", lv.block_size);
  l->add_option("--seed", lv.seed, "First noise seed of the per-trigger counter");

  ReproduceArgs rp;
  auto* p = app.add_subcommand("reproduce", "segment, train and eval over a directory of performances");
  p->add_option("--performances", rp.performances, "Directory of WAV files")->required()->check(CLI::ExistingDirectory);
  p->add_option("--preset", rp.presets, "Preset JSON or factory name (repeatable; default: all factory presets)");
  p->add_option("--models", rp.models, "Model kinds")->delimiter(',');
  p->add_option("--out", rp.out, "Merged report JSON")->required();
  p->add_option("--work", rp.work, "Directory for intermediate manifests and models");
  p->add_option("--onset-window", rp.onset_window);
  p->add_flag("!--no-direct", rp.direct, "Skip the direct optimization column");
  p->add_option("--seed", rp.seed);
  p->add_option("--set", rp.set, "Training override key=value");

  PerformanceArgs pf;
  auto* f = app.add_subcommand("performance", "Write a synthetic snare performance to use as input");
  f->add_option("--out", pf.out, "Output WAV (32-bit float)")->required();
  f->add_option("--hits", pf.hits)->check(CLI::PositiveNumber);
  f->add_option("--seed", pf.seed);
  f->add_option("--sample-rate", pf.sample_rate)->check(CLI::PositiveNumber);
  f->add_option("--spacing", pf.spacing, "Seconds between hits (at least 0.5)");

  std::string preset_dir;
  auto* x = app.add_subcommand("presets", "Write the factory presets and range table as JSON");
  x->add_option("--out", preset_dir, "Existing directory")->required();

  std::vector<const char*> argv;
  std::vector<std::string> storage = args.empty() ? std::vector<std::string>{"drumremap"} : args;
  for (const auto& a : storage) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    if (*s) return cmd_segment(seg);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*r) return cmd_render(rn);
    if (*m) return cmd_remap(rm);
    if (*d) return cmd_direct(da);
    if (*l) return cmd_live(lv);
    if (*p) return cmd_reproduce(rp);
    if (*f) return cmd_performance(pf);
    if (*x) return cmd_presets(preset_dir);
  } catch (const UsageError& err) {
    spdlog::error("{}", err.what());
    std::cerr << app.help() << '\n';
    return kExitUsage;
  } catch (const DataError& err) {
    spdlog::error("{}", err.what());
    return kExitData;
  } catch (const DomainError& err) {
    spdlog::error("{}", err.what());
    return kExitData;
  } catch (const nlohmann::json::exception& err) {
    spdlog::error("malformed JSON: {}", err.what());
    return kExitData;
  } catch (const fs::filesystem_error& err) {
    spdlog::error("{}", err.what());
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace drumremap
