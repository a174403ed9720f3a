#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "drumremap/errors.hpp"
#include "drumremap/models.hpp"

using namespace drumremap;

namespace {

// Reference forward pass with plain nested vectors.
ParamArray<double> oracle_forward(const MappingModel& m, const ModelInput& x) {
  const auto p = m.params();
  std::vector<double> a(x.begin(), x.end());
  for (double& v : a) v = std::min(1.0, std::max(0.0, v));
  const auto layers = m.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<double> z(layers[l].out);
    for (std::size_t o = 0; o < layers[l].out; ++o) {
      z[o] = p[layers[l].offset + layers[l].weights() + o];
      for (std::size_t i = 0; i < layers[l].in; ++i) z[o] += p[layers[l].offset + o * layers[l].in + i] * a[i];
      if (m.kind() != ModelKind::Linear) z[o] = l + 1 == layers.size() ? std::tanh(z[o]) : std::max(0.0, z[o]);
    }
    a = z;
  }
  ParamArray<double> out;
  for (std::size_t k = 0; k < kNumParams; ++k) out[k] = a[k] * m.damping()[k];
  return out;
}

MappingModel randomized(ModelKind kind, std::uint64_t seed, double scale = 0.5) {
  auto m = MappingModel::init(kind, seed);
  std::mt19937_64 rng(seed + 100);
  std::normal_distribution<double> g(0.0, scale);
  for (double& v : m.params()) v += g(rng);
  return m;
}

ModelInput random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  return {u(rng), u(rng), u(rng)};
}

double dot(const ParamArray<double>& a, const ParamArray<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < kNumParams; ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("parameter counts") {
    CHECK(expected_param_count(ModelKind::Linear) == 3 * 14 + 14);
    CHECK(expected_param_count(ModelKind::Mlp32) == 590);
    CHECK(expected_param_count(ModelKind::Mlp64x3) == (3 * 64 + 64) + 2 * (64 * 64 + 64) + (64 * 14 + 14));
    // Published as "9.5k".
    CHECK(std::lround(static_cast<double>(expected_param_count(ModelKind::Mlp64x3)) / 100.0) == 95);
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp32, ModelKind::Mlp64x3}) {
      CHECK(MappingModel(kind).param_count() == expected_param_count(kind));
      CHECK(kind_from_name(kind_name(kind)) == kind);
      const auto arch = architecture(kind);
      CHECK(arch.front() == 3);
      CHECK(arch.back() == 14);
    }
    CHECK_THROWS_AS(kind_from_name("mlp128"), DataError);
  }

  TEST_CASE("fresh models predict no modulation") {
    std::mt19937_64 rng(1);
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp32, ModelKind::Mlp64x3}) {
      const auto m = MappingModel::init(kind, 7);
      for (int t = 0; t < 10; ++t) {
        for (double v : m.forward(random_input(rng))) CHECK(v == 0.0);
      }
      // Hidden layers respect the uniform bound.
      for (std::size_t l = 0; l + 1 < m.layers().size(); ++l) {
        const auto& s = m.layers()[l];
        const double bound = std::sqrt(1.0 / static_cast<double>(s.in));
        for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(m.params()[s.offset + i]) <= bound);
      }
    }
  }

  TEST_CASE("damping mask") {
    const auto d = default_damping_mask();
    CHECK(d[index(Slot::Osc1Freq)] == 1e-3);
    CHECK(d[index(Slot::Osc2Freq)] == 1e-3);
    std::size_t ones = 0;
    for (double v : d) ones += v == 1.0;
    CHECK(ones == 12);
  }

  TEST_CASE("tiny linear model by hand") {
    ParamArray<double> ones;
    ones.fill(1.0);
    MappingModel m(ModelKind::Linear, ones);
    auto p = m.params();
    // Row k of W is (k, 0, -1), bias k / 10.
    for (std::size_t k = 0; k < 14; ++k) {
      p[k * 3 + 0] = static_cast<double>(k);
      p[k * 3 + 2] = -1.0;
      p[42 + k] = static_cast<double>(k) / 10.0;
    }
    const auto y = m.forward({0.5, 0.9, 0.25});
    for (std::size_t k = 0; k < 14; ++k) CHECK(y[k] == doctest::Approx(0.5 * k - 0.25 + k / 10.0));
    // Inputs are clamped.
    CHECK(m.forward({2.0, 0.0, -1.0})[3] == doctest::Approx(3.0 + 0.3));
  }

  TEST_CASE("forward matches the reference pass") {
    std::mt19937_64 rng(3);
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp32, ModelKind::Mlp64x3}) {
      const auto m = randomized(kind, 11);
      for (int t = 0; t < 20; ++t) {
        const auto x = random_input(rng);
        const auto a = m.forward(x);
        const auto b = oracle_forward(m, x);
        for (std::size_t k = 0; k < kNumParams; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("backward matches finite differences") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp32, ModelKind::Mlp64x3}) {
      ParamArray<double> ones;
      ones.fill(1.0);
      auto m = randomized(kind, 21, 0.3);
      const auto x = random_input(rng);
      ParamArray<double> up;
      for (double& v : up) v = g(rng);
      std::vector<double> grad(m.param_count(), 0.0);
      const auto dx = m.backward(x, up, grad);

      std::size_t checked = 0, bad = 0;
      for (std::size_t i = 0; i < m.param_count(); i += kind == ModelKind::Mlp64x3 ? 17 : 1) {
        const double keep = m.params()[i];
        m.params()[i] = keep + 1e-6;
        const double lp = dot(m.forward(x), up);
        m.params()[i] = keep - 1e-6;
        const double lm = dot(m.forward(x), up);
        m.params()[i] = keep;
        const double fd = (lp - lm) / 2e-6;
        ++checked;
        if (std::abs(fd - grad[i]) > 1e-4 * std::max(1.0, std::abs(fd))) ++bad;
      }
      CHECK(checked > 50);
      CHECK(bad == 0);
      for (std::size_t i = 0; i < kModelInputs; ++i) {
        auto xp = x, xm = x;
        xp[i] += 1e-6;
        xm[i] -= 1e-6;
        const double fd = (dot(m.forward(xp), up) - dot(m.forward(xm), up)) / 2e-6;
        CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
      }
    }
  }

  TEST_CASE("zero upstream gives zero gradient; linear weight gradient is an outer product") {
    const auto m = randomized(ModelKind::Mlp32, 5);
    std::vector<double> grad(m.param_count(), 0.0);
    ParamArray<double> zero{};
    m.backward({0.3, 0.4, 0.5}, zero, grad);
    for (double v : grad) CHECK(v == 0.0);

    ParamArray<double> ones;
    ones.fill(1.0);
    MappingModel lin(ModelKind::Linear, ones);
    ParamArray<double> up;
    for (std::size_t k = 0; k < 14; ++k) up[k] = static_cast<double>(k) - 6.5;
    const ModelInput x = {0.2, 0.7, 0.9};
    std::vector<double> g(lin.param_count(), 0.0);
    lin.backward(x, up, g);
    for (std::size_t k = 0; k < 14; ++k) {
      for (std::size_t i = 0; i < 3; ++i) CHECK(g[k * 3 + i] == doctest::Approx(up[k] * x[i]));
      CHECK(g[42 + k] == doctest::Approx(up[k]));
    }
    std::vector<double> wrong(3);
    CHECK_THROWS_AS(lin.backward(x, up, wrong), std::invalid_argument);
  }

  TEST_CASE("save and load are bit identical") {
    const auto dir = std::filesystem::temp_directory_path() / "drumremap_models_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(8);
    for (auto kind : {ModelKind::Linear, ModelKind::Mlp32, ModelKind::Mlp64x3}) {
      auto m = randomized(kind, 31);
      m.normalization.min = {0.0, 100.0, 0.01};
      m.normalization.max = {0.7, 9000.0, 0.6};
      m.context.preset = factory_presets()[2];
      const auto path = dir / (std::string(kind_name(kind)) + ".json");
      save_model(m, path);
      const auto back = load_model(path);
      REQUIRE(back.param_count() == m.param_count());
      for (std::size_t i = 0; i < m.param_count(); ++i) REQUIRE(back.params()[i] == m.params()[i]);
      for (int t = 0; t < 100; ++t) {
        const auto x = random_input(rng);
        REQUIRE(back.forward(x) == m.forward(x));
      }
      CHECK(back.context.preset.name == m.context.preset.name);
      CHECK(back.normalization.max == m.normalization.max);
    }

    const auto good = to_json(randomized(ModelKind::Mlp32, 1));
    auto bad = good;
    bad["param_count"] = 589;
    CHECK_THROWS_AS(model_from_json(bad), DataError);
    bad = good;
    bad["layers"][1]["weights"].erase(0);
    CHECK_THROWS_AS(model_from_json(bad), DataError);
    bad = good;
    bad.erase("layers");
    CHECK_THROWS_AS(model_from_json(bad), DataError);
    bad = good;
    bad["kind"] = "mlp64x3";
    CHECK_THROWS_AS(model_from_json(bad), DataError);

    const auto text = good.dump();
    const auto truncated = dir / "truncated.json";
    std::ofstream(truncated) << text.substr(0, text.size() / 2);
    CHECK_THROWS_AS(load_model(truncated), DataError);
    CHECK_THROWS_AS(load_model(dir / "missing.json"), DataError);
    std::filesystem::remove_all(dir);
  }
}
