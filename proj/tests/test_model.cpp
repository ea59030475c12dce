#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "test_support.hpp"
#include "tripletlab/adagrad.hpp"
#include "tripletlab/checkpoint.hpp"
#include "tripletlab/embedder.hpp"
#include "tripletlab/loss.hpp"

using namespace tripletlab;
using testing_support::numeric_gradient;
using testing_support::random_matrix;
using testing_support::relative_error;

namespace {

// Random triplets over `rows` points whose hinge value stays clear of zero,
// so central differences never straddle the kink.
TripletList smooth_triplets(const Matrix& f, int count, double margin, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, static_cast<int>(f.rows()) - 1);
  TripletList t;
  while (static_cast<int>(t.size()) < count) {
    Triplet c{pick(rng), pick(rng), pick(rng)};
    if (c.anchor == c.positive || c.anchor == c.negative || c.positive == c.negative) continue;
    const double h = (f.row(c.anchor) - f.row(c.positive)).squaredNorm() + margin -
                     (f.row(c.anchor) - f.row(c.negative)).squaredNorm();
    if (std::abs(h) > 1e-3) t.push_back(c);
  }
  return t;
}

double weighted_sum(const EmbedderParams& p, const Matrix& x, const Matrix& g) {
  return (embed(p, x).array() * g.array()).sum();
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("tripletlab_" + name)).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(TripletLoss, CoincidentPointsCostMargin) {
  const Matrix f = Matrix::Ones(3, 4);
  const auto r = triplet_loss(f, {{0, 1, 2}}, 0.2);
  EXPECT_DOUBLE_EQ(r.total, 0.2);
  EXPECT_EQ(r.active, 1);
}

TEST(TripletLoss, HandArithmetic) {
  // 1-D points chosen for the requested squared distances.
  Matrix f(3, 1);
  f << 0, 0.5, std::sqrt(1.25);
  EXPECT_DOUBLE_EQ(triplet_loss(f, {{0, 1, 2}}, 0.2).total, 0.0);
  f << 0, 1, 0.5;
  EXPECT_NEAR(triplet_loss(f, {{0, 1, 2}}, 0.2).total, 0.95, 1e-15);
}

TEST(TripletLoss, EmptyListAndRangeCheck) {
  const Matrix f = Matrix::Zero(2, 2);
  const auto r = triplet_loss(f, {}, 0.2);
  EXPECT_EQ(r.total, 0.0);
  EXPECT_TRUE(r.per_triplet.empty());
  EXPECT_THROW(triplet_loss(f, {{0, 1, 2}}, 0.2), Error);
  EXPECT_THROW(triplet_loss_backward(f, {{0, -1, 1}}, 0.2), Error);
}

TEST(TripletLoss, MeanOfNonNegativeParts) {
  Rng rng(1);
  const auto f = l2_normalize(random_matrix(12, 5, rng));
  const auto t = smooth_triplets(f, 30, 0.2, rng);
  const auto r = triplet_loss(f, t, 0.2);
  double sum = 0.0;
  int active = 0;
  for (double l : r.per_triplet) {
    EXPECT_GE(l, 0.0);
    sum += l;
    active += l > 0.0;
  }
  EXPECT_NEAR(r.total, sum / 30.0, 1e-15);
  EXPECT_EQ(r.active, active);
}

TEST(TripletLoss, PermutationInvariant) {
  Rng rng(2);
  const auto f = l2_normalize(random_matrix(10, 4, rng));
  auto t = smooth_triplets(f, 25, 0.5, rng);
  const double base = triplet_loss(f, t, 0.5).total;
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(t.begin(), t.end(), rng);
    EXPECT_NEAR(triplet_loss(f, t, 0.5).total, base, 1e-14);
  }
}

TEST(TripletLossBackward, OneDimensionalExample) {
  Matrix f(3, 1);
  f << 0, 1, 0.1;
  const auto g = triplet_loss_backward(f, {{0, 1, 2}}, 0.2);
  EXPECT_NEAR(g(0, 0), -1.8, 1e-15);
  EXPECT_NEAR(g(1, 0), 2.0, 1e-15);
  EXPECT_NEAR(g(2, 0), -0.2, 1e-15);
}

TEST(TripletLossBackward, InactiveGivesZero) {
  Matrix f(3, 1);
  f << 0, 0.1, 5;
  EXPECT_TRUE(triplet_loss_backward(f, {{0, 1, 2}}, 0.2).isZero(0.0));
}

TEST(TripletLossBackward, MatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto f = random_matrix(8, 4, rng, 0.6);
    const double margin = 0.2 + 0.01 * trial;
    const auto t = smooth_triplets(f, 6, margin, rng);
    const Matrix numeric = numeric_gradient(f, [&](const Matrix& x) { return triplet_loss(x, t, margin).total; });
    EXPECT_LE(relative_error(triplet_loss_backward(f, t, margin), numeric), 1e-5) << "trial " << trial;
  }
}

TEST(Softmax, UniformLogitsGiveLogC) {
  for (int c : {2, 5, 17}) {
    const SoftmaxHead head{Matrix::Zero(3, c), Matrix::Zero(1, c)};
    Rng rng(4);
    const auto f = random_matrix(6, 3, rng);
    const LabelVector labels = {0, 1, 0, 1, 0, 1};
    EXPECT_NEAR(softmax_xent_forward_backward(head, f, labels).loss, std::log(static_cast<double>(c)), 1e-12);
  }
}

TEST(Softmax, ConfidentCorrectLogitsGiveNearZeroLoss) {
  SoftmaxHead head{Matrix::Zero(2, 2), Matrix::Zero(1, 2)};
  head.weight << 100, -100, -100, 100;
  Matrix f(2, 2);
  f << 1, 0, 0, 1;
  const auto r = softmax_xent_forward_backward(head, f, {0, 1});
  EXPECT_LT(r.loss, 1e-12);
  EXPECT_EQ(r.correct, 2);
}

TEST(Softmax, Errors) {
  const auto head = SoftmaxHead::init(3, 4, 1);
  EXPECT_THROW(softmax_xent_forward_backward(head, Matrix::Zero(2, 3), {0, 4}), Error);
  EXPECT_THROW(softmax_xent_forward_backward(head, Matrix::Zero(2, 2), {0, 1}), Error);
  EXPECT_THROW(SoftmaxHead::init(3, 1, 1), ConfigError);
}

TEST(Softmax, MatchesFiniteDifferences) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + trial % 5, n = 3 + trial % 4, d = 2 + trial % 3;
    auto head = SoftmaxHead::init(d, c, static_cast<std::uint64_t>(trial));
    head.bias = random_matrix(1, c, rng, 0.3);
    const auto f = random_matrix(n, d, rng);
    LabelVector labels;
    std::uniform_int_distribution<int> pick(0, c - 1);
    for (int i = 0; i < n; ++i) labels.push_back(pick(rng));
    const auto r = softmax_xent_forward_backward(head, f, labels);

    const Matrix gf = numeric_gradient(f, [&](const Matrix& x) { return softmax_xent_forward_backward(head, x, labels).loss; });
    EXPECT_LE(relative_error(r.grad_features, gf), 1e-5);
    const Matrix gw = numeric_gradient(head.weight, [&](const Matrix& w) {
      return softmax_xent_forward_backward(SoftmaxHead{w, head.bias}, f, labels).loss;
    });
    EXPECT_LE(relative_error(r.grad_head.weight, gw), 1e-5);
    const Matrix gb = numeric_gradient(head.bias, [&](const Matrix& b) {
      return softmax_xent_forward_backward(SoftmaxHead{head.weight, b}, f, labels).loss;
    });
    EXPECT_LE(relative_error(r.grad_head.bias, gb), 1e-5);
  }
}

TEST(Embedder, OutputRowsHaveUnitNorm) {
  Rng rng(6);
  const auto p = EmbedderParams::init({7, 16, 16, 5}, 3);
  const auto f = embed(p, random_matrix(20, 7, rng));
  for (int r = 0; r < f.rows(); ++r) EXPECT_NEAR(f.row(r).norm(), 1.0, 1e-6);
}

TEST(Embedder, ZeroWeightsHitZeroNormError) {
  const auto p = EmbedderParams::zeros({3, 4, 2});
  EXPECT_THROW(embed(p, Matrix::Ones(2, 3)), Error);
}

TEST(Embedder, IdentitySingleLayerIsNormalization) {
  auto p = EmbedderParams::zeros({4, 4});
  p.weights[0] = Matrix::Identity(4, 4);
  Rng rng(7);
  const auto x = random_matrix(9, 4, rng);
  EXPECT_TRUE(embed(p, x).isApprox(l2_normalize(x), 1e-15));
}

TEST(Embedder, DimensionMismatch) {
  const auto p = EmbedderParams::init({4, 3}, 1);
  EXPECT_THROW(embed(p, Matrix::Ones(2, 5)), Error);
}

TEST(Embedder, ZeroUpstreamGivesZeroGradients) {
  Rng rng(8);
  const auto p = EmbedderParams::init({5, 6, 3}, 2);
  const auto r = embed_forward(p, random_matrix(4, 5, rng));
  const auto g = embed_backward(p, r.cache, Matrix::Zero(4, 3));
  for (const Matrix* b : g.blocks()) EXPECT_TRUE(b->isZero(0.0));
}

TEST(Embedder, NormalizationJacobianAnnihilatesParallelComponent) {
  // With a single linear layer and one row, the bias gradient equals J g.
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = EmbedderParams::init({4, 6}, static_cast<std::uint64_t>(trial));
    const auto r = embed_forward(p, random_matrix(1, 4, rng));
    const Matrix g = random_matrix(1, 6, rng);
    const auto jg = embed_backward(p, r.cache, g).biases[0];
    EXPECT_NEAR(r.features.row(0).dot(jg.row(0)), 0.0, 1e-9);
    const auto parallel = embed_backward(p, r.cache, r.features).biases[0];
    EXPECT_LT(parallel.norm(), 1e-12);
  }
}

TEST(Embedder, StaleCacheRejected) {
  Rng rng(10);
  const auto p = EmbedderParams::init({4, 5, 3}, 1);
  const auto other = EmbedderParams::init({4, 6, 3}, 1);
  const auto r = embed_forward(p, random_matrix(2, 4, rng));
  EXPECT_THROW(embed_backward(other, r.cache, Matrix::Zero(2, 3)), Error);
  EXPECT_THROW(embed_backward(p, r.cache, Matrix::Zero(3, 3)), Error);
}

TEST(Embedder, ParameterGradientsMatchFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<int> sizes = {3 + trial % 3, 5, 4, 3 + trial % 2};
    const auto p = EmbedderParams::init(sizes, static_cast<std::uint64_t>(trial));
    const auto x = random_matrix(4, sizes.front(), rng);
    const auto g = random_matrix(4, sizes.back(), rng);
    const auto r = embed_forward(p, x);
    auto analytic = embed_backward(p, r.cache, g);
    const auto ablocks = analytic.blocks();
    for (std::size_t b = 0; b < ablocks.size(); ++b) {
      const Matrix numeric = numeric_gradient(*p.blocks()[b], [&](const Matrix& v) {
        EmbedderParams q = p;
        *q.blocks()[b] = v;
        return weighted_sum(q, x, g);
      });
      EXPECT_LE(relative_error(*ablocks[b], numeric), 1e-4) << "trial " << trial << " block " << b;
    }
  }
}

TEST(Embedder, TripletLossThroughEmbedderMatchesFiniteDifferences) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = EmbedderParams::init({4, 6, 3}, static_cast<std::uint64_t>(100 + trial));
    const auto x = random_matrix(6, 4, rng);
    const auto r = embed_forward(p, x);
    const auto t = smooth_triplets(r.features, 5, 0.5, rng);
    auto analytic = embed_backward(p, r.cache, triplet_loss_backward(r.features, t, 0.5));
    const Matrix numeric = numeric_gradient(p.weights[0], [&](const Matrix& w) {
      EmbedderParams q = p;
      q.weights[0] = w;
      return triplet_loss(embed(q, x), t, 0.5).total;
    });
    EXPECT_LE(relative_error(analytic.weights[0], numeric), 1e-4);
  }
}

TEST(Adagrad, FirstStepIsSignStep) {
  auto p = EmbedderParams::zeros({2, 2});
  auto g = EmbedderParams::zeros({2, 2});
  g.weights[0] << 0.5, -2.0, 1e-3, 0.0;
  AdagradState s;
  s.learning_rate = 0.1;
  adagrad_step(s, p, g);
  EXPECT_NEAR(p.weights[0](0, 0), -0.1, 1e-7);
  EXPECT_NEAR(p.weights[0](0, 1), 0.1, 1e-7);
  EXPECT_NEAR(p.weights[0](1, 0), -0.1, 1e-5);
  EXPECT_EQ(p.weights[0](1, 1), 0.0);
  EXPECT_TRUE(p.biases[0].isZero(0.0));
}

TEST(Adagrad, SecondIdenticalStepIsSmaller) {
  auto p = EmbedderParams::init({3, 2}, 1);
  auto g = EmbedderParams::init({3, 2}, 2);
  g.biases[0] << 0.3, -0.7;
  AdagradState s;
  auto before = p;
  adagrad_step(s, p, g);
  const Matrix first = p.weights[0] - before.weights[0];
  before = p;
  const auto acc_before = s.accumulators;
  adagrad_step(s, p, g);
  const Matrix second = p.weights[0] - before.weights[0];
  EXPECT_TRUE((second.array().abs() < first.array().abs()).all());
  for (std::size_t b = 0; b < s.accumulators.size(); ++b)
    EXPECT_TRUE((s.accumulators[b].array() >= acc_before[b].array()).all());
}

TEST(Adagrad, ShapeMismatch) {
  auto p = EmbedderParams::zeros({2, 2});
  AdagradState s;
  EXPECT_THROW(adagrad_step(s, p, EmbedderParams::zeros({2, 3})), Error);
}

TEST(Adagrad, SmallStepDecreasesActiveTripletLoss) {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = EmbedderParams::init({5, 8, 4}, static_cast<std::uint64_t>(trial));
    const auto x = random_matrix(3, 5, rng);
    const TripletList t = {{0, 1, 2}};
    const double margin = 4.0;  // active for any unit-norm triple
    const auto r = embed_forward(p, x);
    const double before = triplet_loss(r.features, t, margin).total;
    ASSERT_GT(before, 0.0);
    const auto g = embed_backward(p, r.cache, triplet_loss_backward(r.features, t, margin));
    AdagradState s;
    s.learning_rate = 1e-4;
    adagrad_step(s, p, g);
    EXPECT_LT(triplet_loss(embed(p, x), t, margin).total, before);
  }
}

TEST(Checkpoint, BitExactRoundTrip) {
  const auto path = temp_path("roundtrip.ckpt");
  Checkpoint ck{EmbedderParams::init({6, 5, 4}, 42), SoftmaxHead::init(4, 3, 7)};
  ck.embedder.biases[1] << 1e-300, -0.0, 3.141592653589793, 1.0 / 3.0;
  save_checkpoint(path, ck);
  const auto back = load_checkpoint(path);
  EXPECT_TRUE(back.embedder == ck.embedder);
  ASSERT_TRUE(back.head.has_value());
  EXPECT_EQ(back.head->weight, ck.head->weight);
  EXPECT_EQ(back.head->bias, ck.head->bias);
  const auto again = temp_path("roundtrip2.ckpt");
  save_checkpoint(again, back);
  EXPECT_EQ(slurp(path), slurp(again));
  std::filesystem::remove(path);
  std::filesystem::remove(again);
}

TEST(Checkpoint, WithoutHeadAndCorruption) {
  const auto path = temp_path("nohead.ckpt");
  save_checkpoint(path, {EmbedderParams::init({3, 2}, 1), std::nullopt});
  EXPECT_FALSE(load_checkpoint(path).head.has_value());
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out << 'x';
  }
  EXPECT_THROW(load_checkpoint(path), Error);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "NOTACKPT";
  }
  EXPECT_THROW(load_checkpoint(path), Error);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), ConfigError);
}
