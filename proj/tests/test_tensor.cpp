#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "frl/adam.hpp"
#include "frl/checkpoint.hpp"
#include "frl/fastmath.hpp"
#include "frl/rng.hpp"
#include "frl/tensor.hpp"
#include "gradcheck.hpp"

using frl::Rng;
using frl::Shape;
using frl::TensorT;
using DTensor = TensorT<double>;
using FTensor = TensorT<float>;

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("finite differences confirm the tape gradient of every op") {
  const int kTrials = 100;
  uint64_t op_index = 0;
  for (const auto& op : gradcheck::op_checks()) {
    Rng rng(frl::mix_seed(0x5eed5eedULL, op_index++));
    double worst = 0.0;
    for (int t = 0; t < kTrials; ++t) worst = std::max(worst, op.run(rng));
    CHECK_MESSAGE(worst < gradcheck::kGate, op.name, " worst rel err ", worst);
  }
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  DTensor x = DTensor::param({1.5, -0.25, 2.0}, {3});
  frl::TapeT<double> tape;
  // x enters the graph three times; contributions must add up
  DTensor y = add(mul(x, x), add(x, x));
  auto grads = tape.backward(sum(y));
  const auto& g = grads.at(x);
  for (size_t i = 0; i < g.size(); ++i)
    CHECK(g[i] == doctest::Approx(2.0 * (*x.data)[i] + 2.0).epsilon(1e-14));
}

TEST_CASE("leaves disconnected from the loss report zero gradients") {
  DTensor a = DTensor::param({1.0, 2.0}, {2});
  DTensor b = DTensor::param({3.0, 4.0}, {2});
  frl::TapeT<double> tape;
  DTensor unused = relu(a);  // recorded, but not part of the loss
  auto grads = tape.backward(sum(mul(b, b)));
  for (const double v : grads.at(a)) CHECK(v == 0.0);
  CHECK(grads.at(b)[0] == doctest::Approx(6.0));
  // interior results are not leaves and carry no queryable gradient
  CHECK_THROWS_AS((void)grads.at(unused), std::invalid_argument);
}

TEST_CASE("tape enforces its single-shot contract") {
  SUBCASE("backward consumes the tape") {
    DTensor x = DTensor::param({1.0}, {1});
    frl::TapeT<double> tape;
    DTensor loss = mul(x, x);
    (void)tape.backward(loss);
    CHECK_THROWS_AS((void)tape.backward(loss), std::invalid_argument);
  }
  SUBCASE("loss must be scalar") {
    DTensor x = DTensor::param({1.0, 2.0}, {2});
    frl::TapeT<double> tape;
    DTensor y = mul(x, x);
    CHECK_THROWS_AS((void)tape.backward(y), std::invalid_argument);
  }
  SUBCASE("loss must come from this tape") {
    DTensor x = DTensor::param({1.0}, {1});
    frl::TapeT<double> tape;
    CHECK_THROWS_AS((void)tape.backward(x), std::invalid_argument);
  }
  SUBCASE("one active tape per thread") {
    frl::TapeT<double> tape;
    CHECK_THROWS_AS(frl::TapeT<double>{}, std::invalid_argument);
  }
}

TEST_CASE("ops reject invalid shapes and arguments") {
  DTensor a = DTensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
  DTensor b = DTensor::from({1, 2, 3, 4}, {4});
  CHECK_THROWS_AS((void)add(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)sub(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)mul(a, b), std::invalid_argument);
  CHECK_THROWS_AS((void)matmul(a, a), std::invalid_argument);
  CHECK_THROWS_AS((void)reshape(a, {4, 2}), std::invalid_argument);
  CHECK_THROWS_AS((void)softmax(a, 2), std::invalid_argument);
  CHECK_THROWS_AS((void)gather(a, {0, 6}), std::invalid_argument);
  CHECK_THROWS_AS((void)DTensor::from({1, 2, 3}, {2, 2}), std::invalid_argument);

  DTensor img = DTensor::zeros({1, 2, 3, 3});
  DTensor img2 = DTensor::zeros({1, 2, 4, 3});
  CHECK_THROWS_AS((void)concat_channels(img, img2), std::invalid_argument);
  CHECK_THROWS_AS((void)slice_channels(img, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)slice_channels(img, 0, 3), std::invalid_argument);
  CHECK_THROWS_AS((void)pad_reflect(img, 3), std::invalid_argument);
  CHECK_THROWS_AS((void)pad_reflect(a, 1), std::invalid_argument);

  DTensor w = DTensor::zeros({4, 3, 3, 3});  // 3 input channels vs 2 in img
  CHECK_THROWS_AS((void)conv2d(img, w, 1, 1), std::invalid_argument);
  DTensor logits = DTensor::zeros({1, 4, 2, 2});
  CHECK_THROWS_AS((void)log_softmax_pick(logits, 3, std::vector<int32_t>(8, 0)),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)log_softmax_pick(logits, 2, std::vector<int32_t>(4, 0)),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)log_softmax_pick(logits, 2, std::vector<int32_t>(8, 2)),
                  std::invalid_argument);
}

TEST_CASE("domain violations and non-finite results raise distinct errors") {
  // bad values flowing through the graph are runtime errors, unlike the
  // shape/argument mistakes above
  DTensor zero = DTensor::from({0.0}, {1});
  DTensor neg = DTensor::from({-1.0}, {1});
  CHECK_THROWS_AS((void)log(zero), std::runtime_error);
  CHECK_THROWS_AS((void)log(neg), std::runtime_error);
  // overflow inside an op is a runtime error naming the op
  DTensor big = DTensor::from({1e308}, {1});
  CHECK_THROWS_WITH_AS((void)mul(big, big), doctest::Contains("mul"), std::runtime_error);
  DTensor huge = DTensor::from({1000.0}, {1});
  CHECK_THROWS_WITH_AS((void)exp(huge), doctest::Contains("exp"), std::runtime_error);
}

TEST_CASE("softmax rows sum to one and log variants agree") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    DTensor x = gradcheck::rand_tensor({3, 5, 4}, rng, -4.0, 4.0);
    const int64_t axis = static_cast<int64_t>(rng.below(3));
    DTensor s = softmax(x, axis);
    DTensor ls = log_softmax(x, axis);
    // reduce along the chosen axis by brute force
    const auto& sv = *s.data;
    const auto& lv = *ls.data;
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    const int64_t len = x.shape[axis];
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        double total = 0.0;
        for (int64_t k = 0; k < len; ++k) {
          const double p = sv[(o * len + k) * inner + i];
          total += p;
          CHECK(std::fabs(std::log(p) - lv[(o * len + k) * inner + i]) < 1e-12);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("log_softmax_pick equals the composed reshape/log_softmax/gather") {
  Rng rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const int64_t n = 1 + static_cast<int64_t>(rng.below(2));
    const int64_t g = 1 + static_cast<int64_t>(rng.below(3));
    const int64_t q = 2 + static_cast<int64_t>(rng.below(3));
    const int64_t h = 2 + static_cast<int64_t>(rng.below(2));
    const int64_t w = 2 + static_cast<int64_t>(rng.below(2));
    DTensor x = gradcheck::rand_tensor({n, g * q, h, w}, rng, -3.0, 3.0);
    std::vector<int32_t> levels(static_cast<size_t>(n * g * h * w));
    for (auto& lv : levels) lv = static_cast<int32_t>(rng.below(static_cast<uint64_t>(q)));
    DTensor head = gradcheck::rand_tensor({n * g * h * w}, rng, -1.0, 1.0);

    // composed form: widen to [N,G,Q,H,W], normalize the level axis, gather
    std::vector<int64_t> idx(levels.size());
    const int64_t hw = h * w;
    for (int64_t f = 0; f < n * g; ++f)
      for (int64_t p = 0; p < hw; ++p)
        idx[static_cast<size_t>(f * hw + p)] =
            (f * q + levels[static_cast<size_t>(f * hw + p)]) * hw + p;

    std::vector<double> gf, gc, vf, vc;
    {
      DTensor xf = DTensor::param(*x.data, x.shape);
      frl::TapeT<double> tape;
      DTensor out = log_softmax_pick(xf, q, levels);
      vf = *out.data;
      auto grads = tape.backward(sum(mul(out, head)));
      gf = grads.at(xf);
    }
    {
      DTensor xc = DTensor::param(*x.data, x.shape);
      frl::TapeT<double> tape;
      DTensor out = gather(log_softmax(reshape(xc, {n, g, q, h, w}), 2), idx);
      vc = *out.data;
      auto grads = tape.backward(sum(mul(out, head)));
      gc = grads.at(xc);
    }
    for (size_t i = 0; i < vf.size(); ++i) CHECK(std::fabs(vf[i] - vc[i]) < 1e-12);
    for (size_t i = 0; i < gf.size(); ++i) CHECK(std::fabs(gf[i] - gc[i]) < 1e-12);
  }
}

TEST_CASE("shape ops move values without touching them") {
  Rng rng(31);
  SUBCASE("reshape keeps storage order") {
    DTensor x = gradcheck::rand_tensor({2, 3, 4}, rng);
    DTensor y = reshape(x, {4, 6});
    REQUIRE(y.shape == Shape{4, 6});
    for (int64_t i = 0; i < x.numel(); ++i) CHECK((*y.data)[i] == (*x.data)[i]);
  }
  SUBCASE("concat then slice round-trips both halves") {
    DTensor a = gradcheck::rand_tensor({2, 2, 3, 3}, rng);
    DTensor b = gradcheck::rand_tensor({2, 3, 3, 3}, rng);
    DTensor cat = concat_channels(a, b);
    REQUIRE(cat.shape == Shape{2, 5, 3, 3});
    DTensor a2 = slice_channels(cat, 0, 2);
    DTensor b2 = slice_channels(cat, 2, 5);
    CHECK(*a2.data == *a.data);
    CHECK(*b2.data == *b.data);
  }
  SUBCASE("pad_reflect mirrors without repeating the border pixel") {
    DTensor x = gradcheck::rand_tensor({1, 1, 4, 5}, rng);
    const int64_t p = 2;
    DTensor y = pad_reflect(x, p);
    REQUIRE(y.shape == Shape{1, 1, 8, 9});
    auto mirror = [](int64_t i, int64_t n) {
      if (i < 0) return -i;
      if (i >= n) return 2 * n - 2 - i;
      return i;
    };
    for (int64_t yy = 0; yy < 8; ++yy)
      for (int64_t xx = 0; xx < 9; ++xx)
        CHECK((*y.data)[yy * 9 + xx] ==
              (*x.data)[mirror(yy - p, 4) * 5 + mirror(xx - p, 5)]);
  }
  SUBCASE("gather pulls flat indices in order") {
    DTensor x = DTensor::from({10, 11, 12, 13, 14, 15}, {2, 3});
    DTensor y = gather(x, {5, 0, 0, 3});
    CHECK(*y.data == std::vector<double>{15, 10, 10, 13});
  }
}

TEST_CASE("constructors produce the documented layouts") {
  DTensor z = DTensor::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.rank() == 2);
  for (const double v : *z.data) CHECK(v == 0.0);
  DTensor f = DTensor::full({2, 2}, 1.25);
  for (const double v : *f.data) CHECK(v == 1.25);
  DTensor s = DTensor::scalar(-2.5);
  CHECK(s.numel() == 1);
  CHECK((*s.data)[0] == -2.5);
  DTensor p = DTensor::param({1, 2}, {2});
  CHECK(p.requires_grad);
}

TEST_CASE("fast float exp tracks the reference across its domain") {
  SUBCASE("relative accuracy on a dense grid") {
    double worst = 0.0;
    for (double xd = -85.0; xd <= 88.0; xd += 0.00125) {
      const float x = static_cast<float>(xd);
      const double ref = std::exp(static_cast<double>(x));
      const double got = static_cast<double>(frl::detail::fast_expf(x));
      worst = std::max(worst, std::fabs(got - ref) / ref);
    }
    CHECK(worst < 2e-7);
  }
  SUBCASE("clamps at the domain edges") {
    CHECK(frl::detail::fast_expf(-86.5f) == 0.0f);
    CHECK(frl::detail::fast_expf(-1000.0f) == 0.0f);
    CHECK(frl::detail::fast_expf(89.0f) == std::numeric_limits<float>::infinity());
    CHECK(std::isnan(frl::detail::fast_expf(std::numeric_limits<float>::quiet_NaN())));
    CHECK(frl::detail::fast_expf(0.0f) == 1.0f);
  }
  SUBCASE("vector span matches the scalar path bit for bit") {
    Rng rng(47);
    std::vector<float> xs(1003);  // odd length exercises the scalar tail
    for (auto& v : xs) v = static_cast<float>(-90.0 + 180.0 * rng.uniform());
    xs[0] = -86.5f;
    xs[1] = 88.5f;
    std::vector<float> ys(xs.size());
    frl::detail::exp_span(xs.data(), ys.data(), xs.size());
    for (size_t i = 0; i < xs.size(); ++i) {
      const float ref = frl::detail::fast_expf(xs[i]);
      CHECK(std::memcmp(&ys[i], &ref, sizeof(float)) == 0);
    }
  }
  SUBCASE("double span is the libm exponential") {
    Rng rng(53);
    std::vector<double> xs(257), ys(257);
    for (auto& v : xs) v = -700.0 + 1400.0 * rng.uniform();
    frl::detail::exp_span(xs.data(), ys.data(), xs.size());
    for (size_t i = 0; i < xs.size(); ++i) CHECK(ys[i] == std::exp(xs[i]));
  }
}

TEST_CASE("adam reproduces the textbook recurrence") {
  frl::AdamConfig cfg;
  cfg.lr = 0.37;
  cfg.beta1 = 0.81;
  cfg.beta2 = 0.95;
  cfg.eps = 1e-8;
  frl::AdamT<double> opt(cfg);
  DTensor p = DTensor::param({0.5, -1.5, 2.0}, {3});
  std::vector<double> ref = *p.data;
  std::vector<double> m(3, 0.0), v(3, 0.0);
  Rng rng(71);
  std::vector<TensorT<double>*> params{&p};
  for (int t = 1; t <= 9; ++t) {
    std::vector<double> g(3);
    for (auto& x : g) x = rng.normal();
    // hand-rolled reference step
    for (size_t j = 0; j < 3; ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / (1.0 - std::pow(cfg.beta1, t));
      const double vhat = v[j] / (1.0 - std::pow(cfg.beta2, t));
      ref[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    const std::vector<const std::vector<double>*> grads{&g};
    opt.step(params, grads);
    for (size_t j = 0; j < 3; ++j) CHECK((*p.data)[j] == doctest::Approx(ref[j]).epsilon(1e-14));
  }
  CHECK(opt.steps() == 9);
}

TEST_CASE("adam edge behavior") {
  SUBCASE("zero gradients leave parameters untouched") {
    frl::AdamT<double> opt(frl::AdamConfig{});
    DTensor p = DTensor::param({1.0, -2.0}, {2});
    const std::vector<double> before = *p.data;
    std::vector<TensorT<double>*> params{&p};
    const std::vector<double> g(2, 0.0);
    const std::vector<const std::vector<double>*> grads{&g};
    opt.step(params, grads);
    CHECK(*p.data == before);
  }
  SUBCASE("mismatched inputs are rejected") {
    frl::AdamT<double> opt(frl::AdamConfig{});
    DTensor p = DTensor::param({1.0, 2.0}, {2});
    std::vector<TensorT<double>*> params{&p};
    const std::vector<const std::vector<double>*> none{};
    CHECK_THROWS_AS(opt.step(params, none), std::invalid_argument);
    const std::vector<double> wrong(3, 0.0);
    const std::vector<const std::vector<double>*> bad{&wrong};
    CHECK_THROWS_AS(opt.step(params, bad), std::invalid_argument);
  }
  SUBCASE("parameter overflow aborts") {
    frl::AdamConfig cfg;
    cfg.lr = 1e308;
    frl::AdamT<double> opt(cfg);
    DTensor p = DTensor::param({0.0}, {1});
    std::vector<TensorT<double>*> params{&p};
    const std::vector<double> g{1.0};
    const std::vector<const std::vector<double>*> grads{&g};
    CHECK_THROWS_AS((opt.step(params, grads), opt.step(params, grads), opt.step(params, grads)),
                    std::runtime_error);
  }
}

TEST_CASE("checkpoints round trip byte for byte") {
  Rng rng(97);
  std::vector<float> v1(24);
  for (auto& x : v1) x = static_cast<float>(rng.normal());
  FTensor w1 = FTensor::param(std::move(v1), {2, 3, 2, 2});
  std::vector<float> v2(5);
  for (auto& x : v2) x = static_cast<float>(rng.normal());
  FTensor w2 = FTensor::param(std::move(v2), {5});
  const std::vector<frl::NamedParam> params{{"net.w", &w1}, {"net.b", &w2}};

  const auto path = temp_path("frl_ckpt_test.frl1");
  frl::save_checkpoint(path.string(), params);

  SUBCASE("load returns exact shapes and bits") {
    const auto loaded = frl::load_checkpoint(path.string());
    REQUIRE(loaded.size() == 2);
    REQUIRE(loaded.count("net.w") == 1);
    CHECK(loaded.at("net.w").shape == Shape{2, 3, 2, 2});
    CHECK(loaded.at("net.w").data == *w1.data);
    CHECK(loaded.at("net.b").data == *w2.data);
  }
  SUBCASE("saving twice produces identical files") {
    const auto path2 = temp_path("frl_ckpt_test2.frl1");
    frl::save_checkpoint(path2.string(), params);
    CHECK(read_file(path.string()) == read_file(path2.string()));
    std::filesystem::remove(path2);
  }
  SUBCASE("assign_params restores values and validates the name set") {
    FTensor r1 = FTensor::param(std::vector<float>(24, 0.0f), {2, 3, 2, 2});
    FTensor r2 = FTensor::param(std::vector<float>(5, 0.0f), {5});
    const auto loaded = frl::load_checkpoint(path.string());
    std::vector<frl::NamedParam> dst{{"net.w", &r1}, {"net.b", &r2}};
    frl::assign_params(loaded, dst);
    CHECK(*r1.data == *w1.data);
    CHECK(*r2.data == *w2.data);

    std::vector<frl::NamedParam> misnamed{{"net.w", &r1}, {"net.bias", &r2}};
    CHECK_THROWS_AS(frl::assign_params(loaded, misnamed), std::runtime_error);
    FTensor wrong_shape = FTensor::param(std::vector<float>(5, 0.0f), {1, 5});
    std::vector<frl::NamedParam> misshaped{{"net.w", &r1}, {"net.b", &wrong_shape}};
    CHECK_THROWS_AS(frl::assign_params(loaded, misshaped), std::runtime_error);
    std::vector<frl::NamedParam> fewer{{"net.w", &r1}};
    CHECK_THROWS_AS(frl::assign_params(loaded, fewer), std::runtime_error);
  }
  SUBCASE("corrupted files are rejected") {
    auto bytes = read_file(path.string());
    auto bad_magic = bytes;
    bad_magic[0] ^= 0xFF;
    const auto p1 = temp_path("frl_ckpt_badmagic.frl1");
    write_file(p1.string(), bad_magic);
    CHECK_THROWS_AS((void)frl::load_checkpoint(p1.string()), std::runtime_error);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    const auto p2 = temp_path("frl_ckpt_trunc.frl1");
    write_file(p2.string(), truncated);
    CHECK_THROWS_AS((void)frl::load_checkpoint(p2.string()), std::runtime_error);

    auto trailing = bytes;
    trailing.push_back(0);
    const auto p3 = temp_path("frl_ckpt_trail.frl1");
    write_file(p3.string(), trailing);
    CHECK_THROWS_AS((void)frl::load_checkpoint(p3.string()), std::runtime_error);

    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
    std::filesystem::remove(p3);
  }
  std::filesystem::remove(path);
}
