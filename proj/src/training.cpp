#include "drumremap/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "drumremap/errors.hpp"

namespace drumremap {

double feature_difference_loss(const FeatureArray<double>& y_hat, const FeatureArray<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kNumFeatures; ++i) acc += std::abs(y_hat[i] - y[i]);
  return acc;
}

FeatureArray<double> loss_gradient(const FeatureArray<double>& y_hat, const FeatureArray<double>& y) {
  FeatureArray<double> g;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    const double d = y_hat[i] - y[i];
    g[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  }
  return g;
}

// ---------------------------------------------------------------------------

Adam::Adam(std::size_t size, const AdamConfig& cfg) : cfg_(cfg), lr_(cfg.lr), m_(size, 0.0), v_(size, 0.0) {
  if (!(cfg.lr > 0.0)) throw DataError("learning rate must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw DataError("Adam betas must lie in [0, 1)");
  }
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw std::invalid_argument("Adam size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
  }
}

PlateauScheduler::PlateauScheduler(std::size_t patience, double factor)
    : patience_(patience), factor_(factor), best_(std::numeric_limits<double>::infinity()) {
  if (patience == 0) throw DataError("plateau patience must be at least 1");
  if (!(factor > 0.0 && factor < 1.0)) throw DataError("plateau factor must lie in (0, 1)");
}

bool PlateauScheduler::update(double value, Adam& optimizer) {
  if (value < best_) {
    best_ = value;
    stale_ = 0;
    return false;
  }
  if (++stale_ < patience_) return false;
  optimizer.set_lr(optimizer.lr() * factor_);
  stale_ = 0;
  return true;
}

// ---------------------------------------------------------------------------

namespace {

FeatureArray<DualValue> dual_features(const SynthContext& ctx, const ParamArray<double>& theta_mod) {
  ParamArray<DualValue> mod;
  for (std::size_t j = 0; j < kNumParams; ++j) mod[j] = DualValue::lift(theta_mod[j], j);
  const auto theta = apply_modulation<DualValue>(ctx.preset.params, mod);
  const auto audio = render<DualValue>(theta, ctx.ranges, ctx.render);
  return extract_feature_vector<DualValue>(std::span<const DualValue>(audio), ctx.frames, ctx.render.sample_rate);
}

FeatureArray<double> plain_features(const SynthContext& ctx, const ParamArray<double>& theta_mod) {
  const auto theta = apply_modulation<double>(ctx.preset.params, theta_mod);
  const auto audio = render<double>(theta, ctx.ranges, ctx.render);
  return extract_feature_vector<double>(std::span<const double>(audio), ctx.frames, ctx.render.sample_rate);
}

}  // namespace

AnalogySynth::AnalogySynth(SynthContext ctx) : ctx_(std::move(ctx)) {
  ctx_.frames.validate();
  const ParamArray<double> zero{};
  base_ = plain_features(ctx_, zero);
  base_dual_ = values_of(dual_features(ctx_, zero));
}

AnalogySynth::Gradient AnalogySynth::evaluate(const ParamArray<double>& theta_mod) const {
  FeatureArray<DualValue> f;
  try {
    f = dual_features(ctx_, theta_mod);
  } catch (const SilentSegmentError&) {
    Gradient g;
    g.silent = true;
    return g;
  }
  Gradient g;
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    g.y_hat[i] = f[i].value() - base_dual_[i];
    for (std::size_t j = 0; j < kNumParams; ++j) g.jacobian[i][j] = f[i].tangent(j);
  }
  return g;
}

FeatureArray<double> AnalogySynth::y_hat(const ParamArray<double>& theta_mod) const {
  bool silent = false;
  return y_hat(theta_mod, silent);
}

FeatureArray<double> AnalogySynth::y_hat(const ParamArray<double>& theta_mod, bool& silent) const {
  FeatureArray<double> f;
  try {
    f = plain_features(ctx_, theta_mod);
  } catch (const SilentSegmentError&) {
    silent = true;
    return {};
  }
  silent = false;
  FeatureArray<double> out;
  for (std::size_t i = 0; i < kNumFeatures; ++i) out[i] = f[i] - base_[i];
  return out;
}

namespace {

/// dL/dtheta_mod = (dL/dy_hat)^T J.
ParamArray<double> chain(const FeatureArray<double>& upstream, const AnalogySynth::Gradient& g) {
  ParamArray<double> out{};
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (upstream[i] == 0.0) continue;
    for (std::size_t j = 0; j < kNumParams; ++j) out[j] += upstream[i] * g.jacobian[i][j];
  }
  return out;
}

}  // namespace

DirectOptResult direct_optimize(const AnalogySynth& synth, const FeatureArray<double>& y_target,
                                const DirectOptConfig& cfg) {
  if (cfg.iterations == 0) throw DataError("direct optimization needs at least one iteration");
  std::vector<double> u(kNumParams, 0.0);
  std::vector<double> grad(kNumParams, 0.0);
  Adam adam(kNumParams, cfg.adam);
  PlateauScheduler plateau(cfg.patience, 0.5);

  DirectOptResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0;; ++it) {
    ParamArray<double> theta;
    for (std::size_t j = 0; j < kNumParams; ++j) theta[j] = cfg.damping[j] * u[j];
    const auto g = synth.evaluate(theta);
    const double loss = feature_difference_loss(g.y_hat, y_target);
    if (!std::isfinite(loss)) {
      throw DataError("direct optimization diverged at iteration " + std::to_string(it) + " (loss is not finite)");
    }
    if (it == 0) result.initial_loss = loss;
    result.losses.push_back(loss);
    if (loss < result.best_loss) {
      result.best_loss = loss;
      result.theta_mod = theta;
    }
    result.iterations = it;
    if (it == cfg.iterations || loss == 0.0) break;
    if (cfg.stop_fraction && loss <= *cfg.stop_fraction * result.initial_loss) break;

    const auto d_theta = chain(loss_gradient(g.y_hat, y_target), g);
    for (std::size_t j = 0; j < kNumParams; ++j) grad[j] = cfg.damping[j] * d_theta[j];
    adam.step(u, grad);
    // Past a bound the clamp makes theta flat, so pull u back onto the box
    // where the gradient still sees the slot.
    for (std::size_t j = 0; j < kNumParams; ++j) {
      if (cfg.damping[j] == 0.0) continue;
      const double pre = synth.context().preset.params.values()[j];
      const double lo = (0.0 - pre) / cfg.damping[j];
      const double hi = (1.0 - pre) / cfg.damping[j];
      u[j] = std::clamp(u[j], std::min(lo, hi), std::max(lo, hi));
    }
    plateau.update(loss, adam);
  }
  return result;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const TrainHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"lr", e.lr},
                      {"silent", e.silent}});
  }
  return {{"best_epoch", h.best_epoch}, {"best_val_loss", h.best_val_loss}, {"epochs", epochs}};
}

SynthContext context_for(const DatasetManifest& manifest, const Preset& preset, const ParamRangeTable& ranges) {
  SynthContext ctx;
  ctx.preset = preset;
  ctx.ranges = ranges;
  ctx.render = {manifest.config.hit_length_s, manifest.sample_rate, 0};
  ctx.frames = manifest.config.frames;
  ctx.onset_window = manifest.config.onset_window;
  return ctx;
}

namespace {

ModelInput model_input(const MappingModel& model, const AnalogyRecord& r) {
  return model.normalization.normalize(r.onset_features);
}

void check_compatible(const SynthContext& ctx, const DatasetManifest& manifest) {
  if (ctx.render.sample_rate != manifest.sample_rate) {
    throw DataError("model renders at " + std::to_string(ctx.render.sample_rate) + " Hz but the manifest is at " +
                    std::to_string(manifest.sample_rate) + " Hz");
  }
}

}  // namespace

double split_loss(const MappingModel& model, const AnalogySynth& synth, const DatasetManifest& manifest,
                  Split split, std::size_t* silent) {
  const auto records = manifest.select(split);
  if (records.empty()) throw DataError(std::string("the ") + split_name(split) + " split is empty");
  double acc = 0.0;
  for (const auto* r : records) {
    bool quiet = false;
    acc += feature_difference_loss(synth.y_hat(model.forward(model_input(model, *r)), quiet), r->y);
    if (quiet && silent) ++*silent;
  }
  return acc / static_cast<double>(records.size());
}

TrainResult train_mapping(const DatasetManifest& manifest, const SynthContext& ctx, ModelKind kind,
                          const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.epochs == 0) throw DataError("epochs must be at least 1");
  if (cfg.batch_size == 0) throw DataError("batch size must be at least 1");
  check_compatible(ctx, manifest);
  const auto train = manifest.select(Split::Train);
  if (train.empty()) throw DataError("the train split is empty");
  if (manifest.select(Split::Val).empty()) throw DataError("the val split is empty");

  const AnalogySynth synth(ctx);
  MappingModel model = MappingModel::init(kind, cfg.seed);
  model.normalization = manifest.normalization;
  model.context = ctx;

  Adam adam(model.param_count(), cfg.adam);
  PlateauScheduler plateau(cfg.patience, cfg.lr_factor);
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<double> grad(model.param_count());
  std::vector<double> best(model.params().begin(), model.params().end());

  TrainResult result{model, {}};
  EpochRecord e0;
  e0.train_loss = split_loss(model, synth, manifest, Split::Train, &e0.silent);
  e0.val_loss = split_loss(model, synth, manifest, Split::Val, &e0.silent);
  e0.lr = adam.lr();
  result.history.epochs.push_back(e0);
  result.history.best_val_loss = e0.val_loss;
  if (on_epoch) on_epoch(e0);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double train_acc = 0.0;
    std::size_t silent = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& r = *train[order[k]];
        const auto x = model_input(model, r);
        const auto g = synth.evaluate(model.forward(x));
        const double loss = feature_difference_loss(g.y_hat, r.y);
        if (!std::isfinite(loss)) {
          throw DataError("training diverged in epoch " + std::to_string(epoch) + " (loss is not finite)");
        }
        train_acc += loss;
        if (g.silent) {
          ++silent;
          continue;
        }
        model.backward(x, chain(loss_gradient(g.y_hat, r.y), g), grad);
      }
      const double scale = 1.0 / static_cast<double>(end - start);
      for (double& v : grad) v *= scale;
      adam.step(model.params(), grad);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_acc / static_cast<double>(order.size());
    rec.silent = silent;
    rec.val_loss = split_loss(model, synth, manifest, Split::Val, &rec.silent);
    rec.lr = adam.lr();
    if (!std::isfinite(rec.val_loss)) {
      throw DataError("training diverged in epoch " + std::to_string(epoch) + " (val loss is not finite)");
    }
    if (rec.val_loss < result.history.best_val_loss) {
      result.history.best_val_loss = rec.val_loss;
      result.history.best_epoch = epoch;
      std::copy(model.params().begin(), model.params().end(), best.begin());
    }
    plateau.update(rec.val_loss, adam);
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  std::copy(best.begin(), best.end(), model.params().begin());
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------

ErrorColumn error_column(const std::string& method, std::span<const FeatureArray<double>> y_hat,
                         std::span<const FeatureArray<double>> y) {
  if (y_hat.size() != y.size()) throw std::invalid_argument("prediction and target counts differ");
  if (y.empty()) throw DataError("no records to evaluate");
  ErrorColumn c;
  c.method = method;
  const double n = static_cast<double>(y.size());
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    double sum = 0.0;
    for (std::size_t r = 0; r < y.size(); ++r) sum += std::abs(y_hat[r][i] - y[r][i]);
    const double mean = sum / n;
    double var = 0.0;
    for (std::size_t r = 0; r < y.size(); ++r) {
      const double d = std::abs(y_hat[r][i] - y[r][i]) - mean;
      var += d * d;
    }
    c.mean[i] = mean;
    c.stddev[i] = std::sqrt(var / n);
  }
  return c;
}

const ErrorColumn& EvalReport::column(const std::string& method) const {
  for (const auto& c : columns) {
    if (c.method == method) return c;
  }
  throw std::out_of_range("no column '" + method + "'");
}

std::string EvalReport::table() const {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"Feature"};
  for (const auto& c : columns) header.push_back(c.method);
  cells.push_back(header);
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    std::vector<std::string> row{kFeatureNames[i]};
    for (const auto& c : columns) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.3f ± %.3f", c.mean[i], c.stddev[i]);
      row.emplace_back(buf);
    }
    cells.push_back(row);
  }
  // "±" is two bytes but one column wide.
  const auto width = [](const std::string& s) {
    std::size_t w = 0;
    for (unsigned char ch : s) w += (ch & 0xC0) != 0x80;
    return w;
  };
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t k = 0; k < row.size(); ++k) widths[k] = std::max(widths[k], width(row[k]));
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t k = 0; k < cells[r].size(); ++k) {
      const auto& s = cells[r][k];
      const std::size_t pad = widths[k] - width(s);
      if (k == 0) {
        out << s << std::string(pad, ' ');
      } else {
        out << "  " << std::string(pad, ' ') << s;
      }
    }
    out << '\n';
    if (r == 0) {
      std::size_t total = widths[0];
      for (std::size_t k = 1; k < widths.size(); ++k) total += 2 + widths[k];
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : r.columns) {
    nlohmann::json features = nlohmann::json::object();
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      features[kFeatureNames[i]] = {{"mean", c.mean[i]}, {"std", c.stddev[i]}};
    }
    cols.push_back({{"method", c.method}, {"features", features}});
  }
  return {{"schema_version", 1},
          {"test_records", r.test_records},
          {"silent_predictions", r.silent_predictions},
          {"columns", cols}};
}

EvalReport evaluate(const MappingModel& model, const DatasetManifest& manifest) {
  check_compatible(model.context, manifest);
  return evaluate(model, AnalogySynth(model.context), manifest);
}

EvalReport evaluate(const MappingModel& model, const AnalogySynth& synth, const DatasetManifest& manifest) {
  const auto test = manifest.select(Split::Test);
  if (test.empty()) throw DataError("the test split is empty");
  std::vector<FeatureArray<double>> y, predicted, baseline;
  const ParamArray<double> zero{};
  EvalReport report;
  report.test_records = test.size();
  for (const auto* r : test) {
    bool silent = false;
    y.push_back(r->y);
    predicted.push_back(synth.y_hat(model.forward(model_input(model, *r)), silent));
    baseline.push_back(synth.y_hat(zero));
    report.silent_predictions += silent;
  }
  report.columns.push_back(error_column(kind_name(model.kind()), predicted, y));
  report.columns.push_back(error_column("preset", baseline, y));
  return report;
}

ErrorColumn evaluate_direct(const AnalogySynth& synth, const DatasetManifest& manifest, const DirectOptConfig& cfg) {
  const auto test = manifest.select(Split::Test);
  if (test.empty()) throw DataError("the test split is empty");
  std::vector<FeatureArray<double>> y, predicted;
  for (const auto* r : test) {
    const auto opt = direct_optimize(synth, r->y, cfg);
    y.push_back(r->y);
    predicted.push_back(synth.y_hat(opt.theta_mod));
  }
  return error_column("direct", predicted, y);
}

}  // namespace drumremap
