#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "daf/numerics/grad_check.hpp"
#include "daf/numerics/tape.hpp"
#include "daf/numerics/tensor.hpp"

using namespace daf;

namespace {

Eigen::ArrayXd random_array(std::mt19937_64& rng, Index n, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::ArrayXd a(n);
  for (Index i = 0; i < n; ++i) a[i] = dist(rng);
  return a;
}

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0,
                     double hi = 1.0) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return Tensor(std::move(shape), random_array(rng, n, lo, hi));
}

// Independent oracle: textbook triple loop, no Eigen products involved.
RowMatrixXd matmul_oracle(const Tensor& a, const Tensor& b) {
  const auto ma = a.mat();
  const auto mb = b.mat();
  RowMatrixXd out = RowMatrixXd::Zero(ma.rows(), mb.cols());
  for (Index i = 0; i < ma.rows(); ++i) {
    for (Index j = 0; j < mb.cols(); ++j) {
      double acc = 0.0;
      for (Index k = 0; k < ma.cols(); ++k) acc += ma(i, k) * mb(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

double max_abs_diff(const Tensor& t, const RowMatrixXd& m) {
  Eigen::Map<const Eigen::ArrayXd> flat(m.data(), m.size());
  return (t.data() - flat).abs().maxCoeff();
}

}  // namespace

TEST_CASE("tensor invariants") {
  SUBCASE("shape product must match storage length") {
    CHECK_THROWS_AS(Tensor(Shape{2, 3}, Eigen::ArrayXd::Zero(5)), ShapeError);
  }
  SUBCASE("non-positive dimensions rejected") {
    CHECK_THROWS_AS(Tensor(Shape{2, 0}, Eigen::ArrayXd::Zero(0)), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros(Shape{-1}), ShapeError);
  }
  SUBCASE("non-finite entries rejected") {
    Eigen::ArrayXd bad = Eigen::ArrayXd::Zero(3);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(Tensor(Shape{3}, bad), NumericError);
    bad[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(Tensor(Shape{3}, bad), NumericError);
  }
  SUBCASE("matrix view requires rank 2") {
    CHECK_THROWS_AS((void)Tensor::zeros(Shape{4}).mat(), ShapeError);
    CHECK(Tensor::zeros(Shape{2, 2}).mat().rows() == 2);
  }
  SUBCASE("scalar access") {
    CHECK(Tensor::scalar(2.5).scalar_value() == 2.5);
    CHECK_THROWS_AS((void)Tensor::zeros(Shape{2}).scalar_value(), ShapeError);
  }
}

TEST_CASE("matmul against identity and zero") {
  Tape tape;
  Tensor a(Shape{2, 2}, [] {
    Eigen::ArrayXd v(4);
    v << 1, 2, 3, 4;
    return v;
  }());
  NodeId na = tape.constant(a);
  NodeId id2 = tape.constant(Tensor::from_matrix(RowMatrixXd::Identity(2, 2)));
  NodeId z = tape.constant(Tensor::zeros(Shape{2, 3}));
  CHECK(bitwise_equal(tape.value(tape.matmul(na, id2)), a));
  CHECK((tape.value(tape.matmul(na, z)).data() == 0.0).all());
}

TEST_CASE("matmul matches the triple-loop oracle") {
  std::mt19937_64 rng(7001);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<Index> d(1, 8);
    const Index m = d(rng), k = d(rng), n = d(rng);
    Tensor a = random_tensor(rng, {m, k});
    Tensor b = random_tensor(rng, {k, n});
    Tape tape;
    NodeId c = tape.matmul(tape.constant(a), tape.constant(b));
    CHECK(max_abs_diff(tape.value(c), matmul_oracle(a, b)) <= 1e-12);
  }
}

TEST_CASE("matmul associativity stays within 1e-10 relative") {
  std::mt19937_64 rng(7002);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor a = random_tensor(rng, {4, 6});
    Tensor b = random_tensor(rng, {6, 5});
    Tensor c = random_tensor(rng, {5, 3});
    Tape tape;
    NodeId na = tape.constant(a), nb = tape.constant(b), nc = tape.constant(c);
    const Tensor left = tape.value(tape.matmul(tape.matmul(na, nb), nc));
    const Tensor right = tape.value(tape.matmul(na, tape.matmul(nb, nc)));
    const double scale = std::max(1.0, left.data().abs().maxCoeff());
    CHECK((left.data() - right.data()).abs().maxCoeff() / scale <= 1e-10);
  }
}

TEST_CASE("matmul rejects incompatible shapes naming both") {
  Tape tape;
  NodeId a = tape.constant(Tensor::zeros(Shape{2, 3}));
  NodeId b = tape.constant(Tensor::zeros(Shape{4, 2}));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       doctest::Contains("[2x3]"), ShapeError);
  try {
    tape.matmul(a, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("relu forward") {
  Tape tape;
  Tensor x(Shape{3}, [] {
    Eigen::ArrayXd v(3);
    v << -1, 0, 2;
    return v;
  }());
  const Tensor y = tape.value(tape.relu(tape.constant(x)));
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 0.0);
  CHECK(y.data()[2] == 2.0);

  std::mt19937_64 rng(7003);
  Tensor neg = random_tensor(rng, {4, 4}, -2.0, -0.1);
  CHECK((tape.value(tape.relu(tape.constant(neg))).data() == 0.0).all());
}

TEST_CASE("relu subgradient at zero is zero") {
  Tape tape;
  Tensor x(Shape{3}, [] {
    Eigen::ArrayXd v(3);
    v << -1, 0, 2;
    return v;
  }());
  NodeId nx = tape.param(x);
  NodeId loss = tape.sum(tape.relu(nx));
  const Tensor g = tape.backward(loss).at(nx);
  CHECK(g.data()[0] == 0.0);
  CHECK(g.data()[1] == 0.0);  // exactly zero at the kink
  CHECK(g.data()[2] == 1.0);
}

TEST_CASE("backward of a plain sum is all ones") {
  Tape tape;
  std::mt19937_64 rng(7004);
  NodeId x = tape.param(random_tensor(rng, {5}));
  const Tensor g = tape.backward(tape.sum(x)).at(x);
  CHECK((g.data() == 1.0).all());
}

TEST_CASE("gradient of half squared norm is the parameter itself") {
  std::mt19937_64 rng(7005);
  Tape tape;
  Tensor theta = random_tensor(rng, {8});
  NodeId p = tape.param(theta);
  NodeId loss = tape.scale(tape.sum(tape.mul(p, p)), 0.5);
  const Tensor g = tape.backward(loss).at(p);
  CHECK((g.data() - theta.data()).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  NodeId x = tape.param(Tensor::zeros(Shape{2, 2}));
  CHECK_THROWS_AS((void)tape.backward(x), ContractError);
}

TEST_CASE("nodes not reaching the loss read back zero gradients") {
  Tape tape;
  std::mt19937_64 rng(7006);
  NodeId used = tape.param(random_tensor(rng, {3}));
  NodeId orphan = tape.param(random_tensor(rng, {4}));
  NodeId loss = tape.sum(used);
  const auto grads = tape.backward(loss);
  CHECK((grads.at(orphan).data() == 0.0).all());
  CHECK((grads.at(used).data() == 1.0).all());
}

TEST_CASE("constants are detached") {
  Tape tape;
  std::mt19937_64 rng(7007);
  Tensor w = random_tensor(rng, {3, 3});
  NodeId c = tape.constant(w);
  NodeId p = tape.param(random_tensor(rng, {2, 3}));
  NodeId loss = tape.sum(tape.matmul(p, c));
  const auto grads = tape.backward(loss);
  CHECK((grads.at(c).data() == 0.0).all());
  CHECK(grads.at(p).data().abs().maxCoeff() > 0.0);
}

TEST_CASE("backward twice on one tape is bitwise identical") {
  std::mt19937_64 rng(7008);
  Tape tape;
  NodeId x = tape.param(random_tensor(rng, {4, 3}));
  NodeId w = tape.param(random_tensor(rng, {3, 2}));
  NodeId loss =
      tape.softmax_cross_entropy(tape.matmul(tape.relu(x), w), {0, 1, 0, 1});
  const auto g1 = tape.backward(loss);
  const auto g2 = tape.backward(loss);
  CHECK(bitwise_equal(g1.at(x), g2.at(x)));
  CHECK(bitwise_equal(g1.at(w), g2.at(w)));
}

TEST_CASE("tape replay reproduces recorded values bitwise") {
  std::mt19937_64 rng(7009);
  Tape tape;
  NodeId x = tape.param(random_tensor(rng, {4, 5}));
  NodeId w = tape.param(random_tensor(rng, {5, 3}));
  NodeId b = tape.param(random_tensor(rng, {3}));
  NodeId h = tape.relu(tape.add_bias(tape.matmul(x, w), b));
  (void)tape.softmax_cross_entropy(h, {0, 2, 1, 0});
  CHECK(tape.replay_bitwise_equal());
}

TEST_CASE("cross entropy value matches a direct softmax computation") {
  Tape tape;
  Tensor logits(Shape{2, 3}, [] {
    Eigen::ArrayXd v(6);
    v << 2.0, 1.0, -1.0, 0.5, 0.5, 0.5;
    return v;
  }());
  NodeId loss = tape.softmax_cross_entropy(tape.constant(logits), {0, 2});
  // Row 1: -log(e^2 / (e^2+e^1+e^-1)); row 2: uniform -> log(3).
  const double row1 = -std::log(std::exp(2.0) / (std::exp(2.0) + std::exp(1.0) +
                                                 std::exp(-1.0)));
  const double row2 = std::log(3.0);
  CHECK(tape.value(loss).scalar_value() ==
        doctest::Approx(0.5 * (row1 + row2)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects out-of-range labels and bad shapes") {
  Tape tape;
  NodeId l = tape.constant(Tensor::zeros(Shape{2, 3}));
  CHECK_THROWS_AS(tape.softmax_cross_entropy(l, {0, 3}), ContractError);
  CHECK_THROWS_AS(tape.softmax_cross_entropy(l, {0}), ShapeError);
}

namespace {

// Builds loss = sum(weights * op(...)) for one op and runs the central
// difference audit on the designated input. Kink-free by construction: ReLU
// inputs are kept at magnitude >= 0.05, far above h = 1e-5.
double op_fd_error(std::uint64_t seed, int which_op) {
  std::mt19937_64 rng(seed);
  const Index rows = 3, cols = 4;
  Eigen::ArrayXd theta = random_array(rng, rows * cols, 0.05, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (Index i = 0; i < theta.size(); ++i) {
    if (flip(rng)) theta[i] = -theta[i];
  }
  const Tensor other = random_tensor(rng, {rows, cols}, 0.2, 1.0);
  const Tensor right = random_tensor(rng, {cols, 2}, -1.0, 1.0);
  const Tensor weights2 = random_tensor(rng, {rows, 2}, -1.0, 1.0);
  const Tensor weights = random_tensor(rng, {rows, cols}, -1.0, 1.0);
  const Tensor bias = random_tensor(rng, {cols}, -1.0, 1.0);
  const std::vector<int> labels = {0, 1, 0};

  auto build = [&](Tape& tape, const Eigen::ArrayXd& t) {
    NodeId x = tape.param(Tensor(Shape{rows, cols}, t));
    NodeId w = tape.constant(weights);
    switch (which_op) {
      case 0:  // matmul (left operand)
        return tape.sum(tape.mul(tape.constant(weights2),
                                 tape.matmul(x, tape.constant(right))));
      case 1:  // add
        return tape.sum(tape.mul(w, tape.add(x, tape.constant(other))));
      case 2:  // sub
        return tape.sum(tape.mul(w, tape.sub(x, tape.constant(other))));
      case 3:  // mul
        return tape.sum(tape.mul(w, tape.mul(x, tape.constant(other))));
      case 4:  // relu
        return tape.sum(tape.mul(w, tape.relu(x)));
      case 5:  // scale
        return tape.sum(tape.mul(w, tape.scale(x, 1.75)));
      case 6:  // add_bias
        return tape.sum(tape.mul(w, tape.add_bias(x, tape.constant(bias))));
      case 7:  // softmax cross entropy
        return tape.softmax_cross_entropy(
            tape.matmul(x, tape.constant(right)), labels);
      default:
        throw ContractError("unknown op index");
    }
  };

  Tape tape;
  NodeId loss = build(tape, theta);
  NodeId x{0};  // the param leaf is always pushed first
  Eigen::ArrayXd grad = tape.backward(loss).flat_at(x);
  auto f = [&](const Eigen::ArrayXd& t) {
    Tape probe;
    return probe.value(build(probe, t)).scalar_value();
  };
  return finite_diff_check(f, theta, grad, 1e-5);
}

}  // namespace

TEST_CASE("every differentiable op agrees with central finite differences") {
  for (int op = 0; op < 8; ++op) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      worst = std::max(worst, op_fd_error(9000 + seed * 13 + op, op));
    }
    INFO("op index ", op, " worst relative error ", worst);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("two-layer mlp with cross entropy matches finite differences") {
  std::mt19937_64 rng(7010);
  const Index n = 4, d_in = 5, d = 6, c = 3;
  const Tensor x = random_tensor(rng, {n, d_in}, 0.2, 1.0);
  const Tensor w2 = random_tensor(rng, {d, d}, -0.5, 0.5);
  const Tensor b2 = random_tensor(rng, {d}, -0.2, 0.2);
  const Tensor wout = random_tensor(rng, {d, c}, -0.5, 0.5);
  const std::vector<int> labels = {0, 1, 2, 1};

  // Trainable first layer; resample until pre-activations clear the ReLU
  // kinks by a wide margin so the finite-difference audit is valid.
  struct Graph {
    NodeId w1, b1, pre1, pre2, loss;
  };
  Eigen::ArrayXd theta;
  auto build = [&](Tape& tape, const Eigen::ArrayXd& t) {
    Graph g;
    g.w1 = tape.param(Tensor(Shape{d_in, d}, t.head(d_in * d)));
    g.b1 = tape.param(Tensor(Shape{d}, t.tail(d)));
    g.pre1 = tape.add_bias(tape.matmul(tape.constant(x), g.w1), g.b1);
    NodeId h1 = tape.relu(g.pre1);
    g.pre2 = tape.add_bias(tape.matmul(h1, tape.constant(w2)),
                           tape.constant(b2));
    NodeId logits = tape.matmul(tape.relu(g.pre2), tape.constant(wout));
    g.loss = tape.softmax_cross_entropy(logits, labels);
    return g;
  };
  for (int attempt = 0;; ++attempt) {
    REQUIRE(attempt < 50);
    theta = random_array(rng, d_in * d + d, -0.6, 0.6);
    Tape probe;
    Graph g = build(probe, theta);
    const double closest =
        std::min(probe.value(g.pre1).data().abs().minCoeff(),
                 probe.value(g.pre2).data().abs().minCoeff());
    if (closest > 1e-3) break;
  }

  Tape tape;
  Graph g = build(tape, theta);
  Eigen::ArrayXd grad(theta.size());
  const auto grads = tape.backward(g.loss);
  grad << grads.flat_at(g.w1), grads.flat_at(g.b1);
  auto f = [&](const Eigen::ArrayXd& t) {
    Tape probe;
    return probe.value(build(probe, t).loss).scalar_value();
  };
  CHECK(finite_diff_check(f, theta, grad, 1e-5) <= 1e-4);
}

TEST_CASE("finite_diff_check on a quadratic with its exact gradient") {
  std::mt19937_64 rng(7011);
  Eigen::ArrayXd theta = random_array(rng, 6);
  auto f = [](const Eigen::ArrayXd& t) { return 0.5 * (t * t).sum(); };
  CHECK(finite_diff_check(f, theta, theta) <= 1e-7);
}

TEST_CASE("finite_diff_check on a constant function") {
  Eigen::ArrayXd theta = Eigen::ArrayXd::Zero(4);
  auto f = [](const Eigen::ArrayXd&) { return 3.0; };
  CHECK(finite_diff_check(f, theta, Eigen::ArrayXd::Zero(4)) == 0.0);
}

TEST_CASE("finite_diff_check rejects non-finite objectives and bad steps") {
  Eigen::ArrayXd theta = Eigen::ArrayXd::Zero(2);
  auto bad = [](const Eigen::ArrayXd&) { return std::nan(""); };
  CHECK_THROWS_AS((void)finite_diff_check(bad, theta, theta), NumericError);
  auto good = [](const Eigen::ArrayXd&) { return 1.0; };
  CHECK_THROWS_AS((void)finite_diff_check(good, theta, theta, 0.0),
                  ContractError);
}

TEST_CASE("finite_diff_check flags a wrong gradient") {
  Eigen::ArrayXd theta = Eigen::ArrayXd::Constant(3, 1.0);
  auto f = [](const Eigen::ArrayXd& t) { return 0.5 * (t * t).sum(); };
  Eigen::ArrayXd wrong = theta + 1.0;
  CHECK(finite_diff_check(f, theta, wrong) > 0.4);
}
