#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "glab/errors.hpp"
#include "glab/model.hpp"
#include "glab/sprites.hpp"
#include "gradcheck.hpp"

using namespace glab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "glab_test_model";
  fs::create_directories(dir);
  return dir / name;
}

bool same_params(const ModelGraph& a, const ModelGraph& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    if (a.params()[i].name != b.params()[i].name || !a.params()[i].value.same_values(b.params()[i].value)) {
      return false;
    }
  }
  return true;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("micro cnn layout") {
  const ModelGraph m = build_micro_cnn({1, 32, 32}, 8, 7);
  // 32x32 -> conv1 32x32x4 -> conv2 16x16x8 -> conv3 16x16x8 -> pool 8x8x8
  CHECK(m.feature_count() == 512);
  CHECK(m.parameter_count() == 40 + 296 + 584 + 8 * 512 + 8);
  CHECK(m.parameter_count() <= 50000);
  CHECK(m.params()[m.head_weight_index()].value.shape() == Shape{8, 512});
  CHECK(m.params()[m.head_bias_index()].value.shape() == Shape{8});
  CHECK_FALSE(m.trained());
  CHECK_THROWS_AS(build_micro_cnn({1, 8, 32}, 8, 7), ConfigError);

  const ModelGraph lin = build_linear_model({1, 8, 8}, 4, 1);
  CHECK(lin.parameter_count() == 64 * 4 + 4);
}

TEST_CASE("initialisation is seeded and bounded") {
  const ModelGraph a = build_micro_cnn({3, 16, 16}, 5, 42);
  const ModelGraph b = build_micro_cnn({3, 16, 16}, 5, 42);
  const ModelGraph c = build_micro_cnn({3, 16, 16}, 5, 43);
  CHECK(same_params(a, b));
  CHECK_FALSE(same_params(a, c));
  CHECK(a.fingerprint() == b.fingerprint());
  // conv1 fan-in is 3 * 3 * 3
  for (double v : a.params()[0].value.values()) CHECK(std::abs(v) <= 1.0 / std::sqrt(27.0));
}

TEST_CASE("forward shapes and logits") {
  const ModelGraph m = build_micro_cnn({1, 16, 16}, 4, 1);
  Tape tape;
  const auto params = m.bind(tape, false);
  const Var batch = tape.constant(Tensor({3, 1, 16, 16}, 0.5));
  const Var out = m.forward(batch, params);
  CHECK(out.shape() == Shape{3, 4});
  const auto single = m.logits(Tensor({1, 16, 16}, 0.5));
  for (std::size_t k = 0; k < 4; ++k) CHECK(single[k] == doctest::Approx(out.value()[k]).epsilon(1e-14));
  CHECK_THROWS_AS(m.logits(Tensor({1, 15, 16}, 0.5)), DimensionError);
}

TEST_CASE("full model loss matches finite differences") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto c = testing::micro_cnn_loss_case(seed);
    CAPTURE(seed);
    CHECK(testing::gradcheck(c.fn, c.inputs) < 1e-4);
  }
}

TEST_CASE("training") {
  const Dataset data = generate_sprites({.height = 16, .width = 16, .count = 32, .class_count = 4}, 3);

  SUBCASE("lr = 0 leaves parameters unchanged") {
    ModelGraph m = build_micro_cnn({1, 16, 16}, 4, 1);
    const ModelGraph before = m;
    train(m, data, {.epochs = 2, .lr = 0.0});
    CHECK(same_params(m, before));
    CHECK(m.trained());
  }

  SUBCASE("loss trace is reproducible and decreases") {
    ModelGraph a = build_micro_cnn({1, 16, 16}, 4, 1);
    ModelGraph b = build_micro_cnn({1, 16, 16}, 4, 1);
    const TrainResult ra = train(a, data, {.epochs = 5, .seed = 9});
    const TrainResult rb = train(b, data, {.epochs = 5, .seed = 9});
    REQUIRE(ra.loss_trace.size() == 5);
    CHECK(ra.loss_trace == rb.loss_trace);
    CHECK(same_params(a, b));
    CHECK(ra.loss_trace.back() < ra.loss_trace.front());
  }

  SUBCASE("one epoch reduces the loss") {
    ModelGraph m = build_micro_cnn({1, 16, 16}, 4, 1);
    auto loss_of = [&](const ModelGraph& model) {
      double total = 0.0;
      for (std::size_t i = 0; i < data.size(); ++i) {
        Tape t;
        const auto p = model.bind(t, false);
        total += classification_loss(model.forward(t.constant(data.images[i]), p), data.label_sets[i],
                                     LossKind::cross_entropy)
                     .item();
      }
      return total;
    };
    const double before = loss_of(m);
    train(m, data, {.epochs = 1, .lr = 1e-3, .batch_size = 32});
    CHECK(loss_of(m) < before);
  }

  SUBCASE("divergence names the epoch") {
    ModelGraph m = build_micro_cnn({1, 16, 16}, 4, 1);
    try {
      train(m, data, {.epochs = 3, .lr = 1e300});
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }
}

TEST_CASE("weights round trip") {
  ModelGraph m = build_micro_cnn({1, 16, 16}, 4, 11);
  m.set_trained(true);
  const fs::path path = scratch("weights.bin");
  save_weights(m, path);
  const ModelGraph back = load_weights(path);
  CHECK(same_params(m, back));
  CHECK(back.trained());
  CHECK(back.fingerprint() == m.fingerprint());
  CHECK(back.input_shape() == m.input_shape());

  save_weights(back, scratch("weights2.bin"));
  CHECK(slurp(path) == slurp(scratch("weights2.bin")));

  SUBCASE("truncated file") {
    auto bytes = slurp(path);
    bytes.resize(bytes.size() / 2);
    std::ofstream(scratch("short.bin"), std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(load_weights(scratch("short.bin")), FormatError);
  }

  SUBCASE("unknown version") {
    auto bytes = slurp(path);
    const std::uint32_t v = 999;
    std::memcpy(bytes.data() + 4, &v, sizeof v);
    std::ofstream(scratch("v999.bin"), std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(load_weights(scratch("v999.bin")), VersionError);
  }

  SUBCASE("missing file") { CHECK_THROWS_AS(load_weights(scratch("absent.bin")), Error); }
}

TEST_CASE("ncb copy mode reproduces the model head") {
  ModelGraph m = build_micro_cnn({1, 16, 16}, 5, 2);
  CHECK_THROWS_AS(build_ncb(m, NcbMode::copy_weights), ConfigError);
  m.set_trained(true);
  const NCBGraph ncb = build_ncb(m, NcbMode::copy_weights);
  const std::size_t k = 5, f = m.feature_count();
  CHECK(ncb.input_shape() == Shape{k, f, 1, 1});

  // row r of the input scored by head row r; the identity batch norm keeps its epsilon
  std::mt19937_64 rng(4);
  const Tensor input = testing::random_tensor(rng, {k, f});
  const auto scores = ncb.scores(input);
  const Tensor& w = m.params()[m.head_weight_index()].value;
  const Tensor& b = m.params()[m.head_bias_index()].value;
  for (std::size_t r = 0; r < k; ++r) {
    double z = 0.0;
    for (std::size_t j = 0; j < f; ++j) z += input[r * f + j] * w[r * f + j];
    z = z / std::sqrt(1.0 + 1e-5) + b[r];
    CHECK(scores[r] == doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-12));
  }

  const auto zero = ncb.scores(Tensor({k, f}, 0.0));
  for (double s : zero) CHECK(std::isfinite(s));

  const std::uint64_t sum = ncb.checksum();
  (void)ncb.scores(input);
  CHECK(ncb.checksum() == sum);
}

TEST_CASE("ncb training and round trip") {
  const ModelGraph m = build_micro_cnn({1, 16, 16}, 3, 2);
  std::mt19937_64 rng(8);
  std::vector<NcbExample> corpus;
  for (std::size_t i = 0; i < 12; ++i) {
    corpus.push_back({testing::random_tensor(rng, {3, m.feature_count()}, -1e-8, 1e-8), {i % 3}});
  }
  const NcbTrainOptions opts{.epochs = 5, .seed = 1};
  const NCBGraph a = build_ncb(m, NcbMode::train_on_gradients, corpus, opts);
  const NCBGraph b = build_ncb(m, NcbMode::train_on_gradients, corpus, opts);
  CHECK(a.checksum() == b.checksum());
  CHECK_THROWS_AS(build_ncb(m, NcbMode::train_on_gradients, {}, opts), ConfigError);

  CHECK(a.hidden() == 16);
  CHECK(a.params()[0].value.shape() == Shape{16, m.feature_count()});

  save_ncb(a, scratch("ncb.bin"));
  const NCBGraph back = load_ncb(scratch("ncb.bin"));
  CHECK(back.checksum() == a.checksum());
  CHECK(back.hidden() == 16);
  CHECK(back.scores(corpus[0].head_gradient.reshaped({3, m.feature_count()})) ==
        a.scores(corpus[0].head_gradient));
  CHECK_THROWS_AS(load_ncb(scratch("weights.bin")), FormatError);
}
