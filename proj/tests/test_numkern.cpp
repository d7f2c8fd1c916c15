#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/adam.hpp"
#include "blockecho/numkern/dense_net.hpp"
#include "blockecho/numkern/gradcheck.hpp"
#include "blockecho/numkern/matrix.hpp"
#include "blockecho/numkern/rng.hpp"
#include "blockecho/numkern/serialize.hpp"
#include "oracles.hpp"

using namespace blockecho;
using numkern::Activation;
using numkern::DenseLayer;
using numkern::DenseNet;
using numkern::Matrix;
using numkern::Rng;

TEST(Matmul, IdentityTimesColumn) {
  const Matrix r = numkern::matmul(Matrix::identity(2), Matrix{{5}, {6}});
  EXPECT_EQ(r, (Matrix{{5}, {6}}));
}

TEST(Matmul, HandProduct) {
  const Matrix r = numkern::matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{5}, {6}});
  EXPECT_EQ(r, (Matrix{{17}, {39}}));
}

TEST(Matmul, ZeroAnnihilates) {
  Rng rng(3);
  const Matrix a = rng.gaussian_matrix(4, 3);
  const Matrix r = numkern::matmul(a, Matrix(3, 5));
  EXPECT_EQ(r, Matrix(4, 5));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    numkern::matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
  }
}

TEST(Matmul, MatchesNaiveOracleOnRandomShapes) {
  Rng rng(11);
  for (int t = 0; t < 20; ++t) {
    const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(9), n = 1 + rng.below(9);
    const Matrix a = rng.gaussian_matrix(m, k), b = rng.gaussian_matrix(k, n);
    const auto want = oracle::matmul(oracle::to_grid(a), oracle::to_grid(b));
    const Matrix got = numkern::matmul(a, b);
    const Matrix got_tn = numkern::matmul_tn(numkern::transpose(a), b);
    const Matrix got_nt = numkern::matmul_nt(a, numkern::transpose(b));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_NEAR(got(i, j), want[i][j], 1e-12);
        EXPECT_NEAR(got_tn(i, j), want[i][j], 1e-12);
        EXPECT_NEAR(got_nt(i, j), want[i][j], 1e-12);
      }
  }
}

TEST(Matmul, Deterministic) {
  Rng rng(5);
  const Matrix a = rng.gaussian_matrix(30, 20), b = rng.gaussian_matrix(20, 10);
  EXPECT_TRUE(numkern::matmul(a, b).bitwise_equal(numkern::matmul(a, b)));
}

TEST(MatrixOps, ConcatSliceGather) {
  const Matrix a{{1, 2}, {3, 4}}, b{{5}, {6}};
  const Matrix c = numkern::hconcat({&a, &b});
  EXPECT_EQ(c, (Matrix{{1, 2, 5}, {3, 4, 6}}));
  EXPECT_EQ(numkern::column_slice(c, 1, 2), (Matrix{{2, 5}, {4, 6}}));
  const std::vector<std::size_t> idx{1, 1, 0};
  EXPECT_EQ(numkern::gather_rows(c, idx), (Matrix{{3, 4, 6}, {3, 4, 6}, {1, 2, 5}}));
}

TEST(MatrixOps, RejectsBadData) {
  EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(numkern::hadamard(Matrix(2, 2), Matrix(2, 3)), ShapeError);
}

TEST(MatrixOps, FiniteInputsGiveFiniteOutputs) {
  Rng rng(7);
  const Matrix a = rng.gaussian_matrix(6, 6), b = rng.gaussian_matrix(6, 6);
  for (const Matrix& r : {numkern::matmul(a, b), numkern::add(a, b), numkern::subtract(a, b),
                          numkern::hadamard(a, b), numkern::scale(a, 3.5), numkern::transpose(a)}) {
    EXPECT_TRUE(r.all_finite());
  }
}

// ---------------------------------------------------------------------------------

TEST(DenseNetForward, ZeroWeightsIdentityReturnsBias) {
  DenseNet net({DenseLayer{Matrix(3, 2), Matrix{{0.25, -4.0}}, Activation::identity}});
  Rng rng(1);
  const Matrix out = net.predict(rng.gaussian_matrix(5, 3));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(out(i, 0), 0.25);
    EXPECT_EQ(out(i, 1), -4.0);
  }
}

TEST(DenseNetForward, SingleNeuronHandValue) {
  DenseNet net({DenseLayer{Matrix{{2}}, Matrix{{1}}, Activation::identity}});
  EXPECT_EQ(net.predict(Matrix{{3}}), (Matrix{{7}}));
}

TEST(DenseNetForward, SigmoidOfZeroIsHalf) {
  DenseNet net({DenseLayer{Matrix(4, 3), Matrix(1, 3), Activation::sigmoid}});
  const Matrix out = net.predict(Matrix(2, 4));
  for (double v : out.values()) EXPECT_EQ(v, 0.5);
}

TEST(DenseNetForward, ShapeMismatch) {
  Rng rng(2);
  DenseNet net({3, 4, 1}, {Activation::relu, Activation::sigmoid}, rng);
  EXPECT_THROW(net.forward(Matrix(2, 5)), ShapeError);
}

TEST(DenseNetForward, GlorotInitWithinLimit) {
  Rng rng(9);
  DenseNet net({10, 6}, {Activation::relu}, rng);
  const double limit = std::sqrt(6.0 / 16.0);
  EXPECT_LE(numkern::max_abs(net.layers()[0].weights), limit);
  EXPECT_EQ(numkern::max_abs(net.layers()[0].bias), 0.0);
}

TEST(DenseNetBackward, ZeroOutputGradGivesZeroGradients) {
  Rng rng(4);
  DenseNet net({3, 5, 2}, {Activation::relu, Activation::sigmoid}, rng);
  const auto cache = net.forward(rng.gaussian_matrix(4, 3));
  const auto g = net.backward(cache, Matrix(4, 2));
  for (const auto& w : g.weights) EXPECT_EQ(numkern::max_abs(w), 0.0);
  for (const auto& b : g.biases) EXPECT_EQ(numkern::max_abs(b), 0.0);
  EXPECT_EQ(numkern::max_abs(g.input), 0.0);
}

TEST(DenseNetBackward, SingleNeuronHandGradient) {
  DenseNet net({DenseLayer{Matrix{{2}}, Matrix{{1}}, Activation::identity}});
  const auto cache = net.forward(Matrix{{3}});
  const auto g = net.backward(cache, Matrix{{1}});
  EXPECT_EQ(g.weights[0](0, 0), 3.0);
  EXPECT_EQ(g.biases[0](0, 0), 1.0);
  EXPECT_EQ(g.input(0, 0), 2.0);
}

TEST(DenseNetBackward, StaleCacheIsUsageError) {
  Rng rng(6);
  DenseNet net({2, 3, 1}, {Activation::relu, Activation::identity}, rng);
  DenseNet other({2, 3, 1}, {Activation::relu, Activation::identity}, rng);
  const auto cache = net.forward(Matrix{{1, 2}});
  EXPECT_THROW(other.backward(cache, Matrix{{1}}), UsageError);
  net.parameters();  // handing out mutable parameters invalidates earlier caches
  EXPECT_THROW(net.backward(cache, Matrix{{1}}), UsageError);
}

TEST(DenseNetBackward, MatchesFiniteDifferencesAcrossActivations) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    DenseNet net({4, 6, 5, 3}, {Activation::sigmoid, Activation::relu, Activation::identity}, rng);
    const Matrix x = rng.gaussian_matrix(7, 4);
    const Matrix target = rng.gaussian_matrix(7, 3);
    // loss = 0.5 * ||net(x) - target||^2
    auto loss = [&] {
      const Matrix y = net.predict(x);
      double s = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) s += 0.5 * (y[k] - target[k]) * (y[k] - target[k]);
      return s;
    };
    auto params = net.parameters();
    const auto cache = net.forward(x);
    const auto grads = net.backward(cache, numkern::subtract(cache.output, target));
    auto grads_copy = grads;
    const auto rep = numkern::check_gradients(loss, params, std::move(grads_copy).flatten());
    EXPECT_LT(rep.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(DenseNetBackward, InputGradientMatchesFiniteDifferences) {
  Rng rng(21);
  DenseNet net({3, 4, 2}, {Activation::sigmoid, Activation::sigmoid}, rng);
  Matrix x = rng.gaussian_matrix(2, 3);
  auto loss = [&] { return numkern::sum(net.predict(x)); };
  const auto cache = net.forward(x);
  const auto g = net.backward(cache, Matrix::ones(2, 2));
  const auto rep = numkern::check_gradients(loss, {&x}, {g.input});
  EXPECT_LT(rep.max_relative_error, 1e-6);
}

TEST(DenseNetSerialize, RoundTripIsBitExact) {
  Rng rng(8);
  DenseNet net({3, 4, 2}, {Activation::relu, Activation::sigmoid}, rng);
  const DenseNet back = numkern::net_from_json(nlohmann::json::parse(numkern::net_to_json(net).dump()));
  const Matrix x = rng.gaussian_matrix(5, 3);
  EXPECT_TRUE(net.predict(x).bitwise_equal(back.predict(x)));
}

TEST(DenseNetSerialize, MalformedJsonIsParseError) {
  EXPECT_THROW(numkern::net_from_json(nlohmann::json::parse(R"({"layers":[{"weights":1}]})")),
               ParseError);
}

// ---------------------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Matrix p{{1.5, -2.0}};
  numkern::OptimState st({&p}, {"p"}, {});
  st.step({&p}, {Matrix(1, 2)});
  EXPECT_EQ(p, (Matrix{{1.5, -2.0}}));
  EXPECT_EQ(st.step_count(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // t=1: mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps).
  Matrix p{{0.0}};
  numkern::OptimState st({&p}, {"p"}, {1e-3});
  st.step({&p}, {Matrix{{1.0}}});
  EXPECT_NEAR(p(0, 0), -1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, SecondStepHandValue) {
  Matrix p{{0.0}};
  numkern::OptimState st({&p}, {"p"}, {0.1});
  st.step({&p}, {Matrix{{2.0}}});
  st.step({&p}, {Matrix{{-1.0}}});
  const double m2 = 0.9 * 0.1 * 2.0 + 0.1 * -1.0;
  const double v2 = 0.999 * 0.001 * 4.0 + 0.001 * 1.0;
  const double mhat = m2 / (1 - 0.81), vhat = v2 / (1 - 0.999 * 0.999);
  const double want = -0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  EXPECT_NEAR(p(0, 0), want, 1e-14);
}

TEST(Adam, DeterministicAcrossIdenticalRuns) {
  auto run = [] {
    Matrix p{{0.3, 0.7}, {-1.0, 2.0}};
    numkern::OptimState st({&p}, {"p"}, {});
    for (int i = 0; i < 3; ++i) st.step({&p}, {Matrix{{0.1, -0.2}, {0.3, 0.05}}});
    return p;
  };
  EXPECT_TRUE(run().bitwise_equal(run()));
}

TEST(Adam, NonFiniteGradientNamesTheBlock) {
  Matrix a{{1.0}}, b{{2.0}};
  numkern::OptimState st({&a, &b}, {"G.w0", "G.b0"}, {});
  try {
    st.step({&a, &b}, {Matrix{{0.1}}, Matrix{{std::numeric_limits<double>::quiet_NaN()}}});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("G.b0"), std::string::npos);
  }
  EXPECT_EQ(a(0, 0), 1.0);  // nothing applied
  EXPECT_EQ(st.step_count(), 0u);
}

TEST(Adam, ShapeMismatchIsShapeError) {
  Matrix a{{1.0}};
  numkern::OptimState st({&a}, {"a"}, {});
  EXPECT_THROW(st.step({&a}, {Matrix(1, 2)}), ShapeError);
}

// ---------------------------------------------------------------------------------

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(Rng, StreamsDiffer) {
  Rng a(42, numkern::Stream::kMask), b(42, numkern::Stream::kNoise);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += a.uniform() == b.uniform();
  EXPECT_LT(equal, 2);
}

TEST(Rng, UniformMomentsAndRange) {
  Rng r(1);
  double s = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
  }
  EXPECT_NEAR(s / n, 0.5, 0.01);
}

TEST(Rng, GaussianMoments) {
  Rng r(2);
  double s = 0.0, s2 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double g = r.gaussian();
    s += g;
    s2 += g * g;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

TEST(Rng, PoissonMean) {
  for (double lambda : {0.5, 4.0, 80.0}) {
    Rng r(3);
    double s = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) s += static_cast<double>(r.poisson(lambda));
    EXPECT_NEAR(s / n, lambda, 0.05 * lambda + 0.02) << lambda;
  }
}

TEST(Rng, BelowStaysInRange) {
  Rng r(4);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
}
