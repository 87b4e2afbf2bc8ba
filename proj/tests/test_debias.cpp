#include <doctest.h>

#include <cmath>

#include "dssl/debias.hpp"
#include "dssl/random_stream.hpp"

using namespace dssl;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

MatrixXd row(std::initializer_list<double> v) { return vec(v).transpose(); }

MatrixXd random_logits(RandomStream& rs, Index rows, Index cols, double spread) {
  MatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rs.uniform(-spread, spread);
  return m;
}

std::vector<Index> argmaxes(const MatrixXd& m) {
  std::vector<Index> out;
  for (Index r = 0; r < m.rows(); ++r) out.push_back(argmax(m.row(r)));
  return out;
}

}  // namespace

TEST_CASE("prior construction") {
  const ClassPrior uniform(4, 0.9);
  CHECK((uniform.p_hat().array() - 0.25).abs().maxCoeff() == 0.0);
  CHECK((uniform.pi().array() - 0.25).abs().maxCoeff() == 0.0);

  const std::vector<int> counts{6, 3, 1, 0};
  const ClassPrior from_counts(counts, 0.9);
  CHECK(from_counts.pi()(0) == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(from_counts.pi()(3) > 0.0);
  CHECK(from_counts.pi().sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((from_counts.p_hat().array() - 0.25).abs().maxCoeff() == 0.0);
}

TEST_CASE("prior update") {
  ClassPrior prior(vec({0.5, 0.5}), vec({0.5, 0.5}), 0.9);
  update_prior(prior, row({0.8, 0.2}));
  CHECK(prior.p_hat()(0) == doctest::Approx(0.53).epsilon(1e-12));
  CHECK(prior.p_hat()(1) == doctest::Approx(0.47).epsilon(1e-12));

  ClassPrior frozen(vec({0.3, 0.7}), vec({0.5, 0.5}), 1.0);
  frozen.update(row({1.0, 0.0}));
  CHECK(frozen.p_hat() == vec({0.3, 0.7}));

  ClassPrior fixed(3, 0.5);
  fixed.update(MatrixXd::Constant(4, 3, 1.0 / 3.0));
  CHECK((fixed.p_hat().array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-15);

  ClassPrior untouched(3, 0.5);
  untouched.update(MatrixXd(0, 3));
  CHECK((untouched.p_hat().array() - 1.0 / 3.0).abs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(untouched.update(MatrixXd::Constant(2, 4, 0.25)), ShapeError);
}

TEST_CASE("prior stays on the simplex") {
  RandomStream rs(17);
  ClassPrior prior(6, 0.5);
  for (int i = 0; i < 10000; ++i) {
    const Index rows = 1 + static_cast<Index>(rs.below(5));
    // Occasionally push a class to exactly zero mass to exercise the floor.
    MatrixXd logits = random_logits(rs, rows, 6, 8.0);
    MatrixXd probs = softmax(logits);
    if (i % 97 == 0) {
      probs.col(2).setZero();
      for (Index r = 0; r < rows; ++r) probs.row(r) /= probs.row(r).sum();
    }
    prior.update(probs);
    REQUIRE(prior.p_hat().minCoeff() >= 0.0);
    REQUIRE(std::abs(prior.p_hat().sum() - 1.0) <= 1e-9);
  }
}

TEST_CASE("debias logits") {
  const ClassPrior prior(vec({0.7, 0.2, 0.1}), vec({1, 1, 1}), 0.9);
  const MatrixXd out = debias_logits(row({2.0, 1.0, 0.5}), prior, 0.5);
  CHECK(out(0, 0) == doctest::Approx(2.17834).epsilon(1e-5));
  CHECK(out(0, 1) == doctest::Approx(1.80472).epsilon(1e-5));
  CHECK(out(0, 2) == doctest::Approx(1.65129).epsilon(1e-5));

  RandomStream rs(4);
  const MatrixXd logits = random_logits(rs, 50, 5, 3.0);
  const ClassPrior skewed(vec({0.5, 0.2, 0.1, 0.1, 0.1}), vec({1, 1, 1, 1, 1}), 0.9);
  CHECK(debias_logits(logits, skewed, 0.0) == logits);
  const ClassPrior uniform(5, 0.9);
  for (double lambda : {0.1, 0.5, 2.0}) {
    const MatrixXd shifted = debias_logits(logits, uniform, lambda);
    CHECK(argmaxes(shifted) == argmaxes(logits));
    CHECK(((shifted - logits).array() - lambda * std::log(5.0)).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("pseudo-label selection") {
  const ClassPrior uniform2(2, 0.9);
  const auto confident = select_pseudo_labels(row({10, 0}), uniform2, 0.5, 0.95);
  CHECK(confident.confidence(0) == doctest::Approx(0.9999546).epsilon(1e-6));
  CHECK(confident.accepted[0] == 1);
  CHECK(confident.pseudo_label[0] == 0);

  const auto flat = select_pseudo_labels(row({0, 0}), uniform2, 0.5, 0.95);
  CHECK(flat.confidence(0) == doctest::Approx(0.5));
  CHECK(flat.accepted[0] == 0);
  CHECK(flat.accepted_count() == 0);

  const ClassPrior skewed(vec({0.98, 0.01, 0.01}), vec({1, 1, 1}), 0.9);
  const auto flipped = select_pseudo_labels(row({0, 0, 0}), skewed, 1.0, 0.5);
  CHECK(flipped.debiased_logits(0, 0) == doctest::Approx(0.0202027).epsilon(1e-6));
  CHECK(flipped.debiased_logits(0, 1) == doctest::Approx(4.60517).epsilon(1e-6));
  CHECK(flipped.debiased_logits(0, 2) == doctest::Approx(4.60517).epsilon(1e-6));
  CHECK(flipped.pseudo_label[0] == 1);
  CHECK(flipped.raw_logits == row({0, 0, 0}));

  RandomStream rs(6);
  const MatrixXd logits = random_logits(rs, 200, 4, 4.0);
  const ClassPrior uniform4(4, 0.9);
  const auto all = select_pseudo_labels(logits, uniform4, 0.0, 0.0);
  CHECK(all.accepted_count() == 200);
  for (Index r = 0; r < 200; ++r) CHECK(all.pseudo_label[static_cast<std::size_t>(r)] == argmax(logits.row(r)));

  const ClassPrior biased(vec({0.6, 0.2, 0.15, 0.05}), vec({1, 1, 1, 1}), 0.9);
  const auto picked = select_pseudo_labels(logits, biased, 0.5, 0.7);
  for (Index r = 0; r < picked.size(); ++r) {
    const auto i = static_cast<std::size_t>(r);
    CHECK(picked.pseudo_label[i] == argmax(picked.debiased_logits.row(r)));
    CHECK(picked.confidence(r) == doctest::Approx(softmax(picked.debiased_logits.row(r)).maxCoeff()));
    CHECK((picked.accepted[i] != 0) == (picked.confidence(r) >= 0.7));
  }
}

TEST_CASE("margins") {
  const ClassPrior two(vec({0.8, 0.2}), vec({1, 1}), 0.9);
  const VectorXd d = margin_deltas(two, 1.0);
  CHECK(d(0) == doctest::Approx(0.223144).epsilon(1e-6));
  CHECK(d(1) == doctest::Approx(1.609438).epsilon(1e-6));
  CHECK(margin_deltas(two, 0.0).isZero());
  const VectorXd four = margin_deltas(ClassPrior(4, 0.9), 1.0);
  CHECK((four.array() - std::log(4.0)).abs().maxCoeff() <= 1e-12);

  CHECK(margin_cross_entropy(row({0, 0}), 0, VectorXd::Zero(2)) == doctest::Approx(std::log(2.0)));
  CHECK(margin_cross_entropy(row({1, 0}), 0, d) == doctest::Approx(0.0879833).epsilon(1e-6));
  CHECK_THROWS_AS(margin_cross_entropy(row({1, 0}), 2, d), IndexError);
  CHECK_THROWS_AS(margin_cross_entropy(row({1, 0, 0}), 0, d), ShapeError);
}

TEST_CASE("margin loss properties") {
  RandomStream rs(21);
  const VectorXd zero = VectorXd::Zero(7);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const MatrixXd z = random_logits(rs, 1, 7, 6.0);
    const int t = static_cast<int>(rs.below(7));
    const std::vector<int> target{t};
    worst = std::max(worst, std::abs(margin_cross_entropy(z, t, zero) - cross_entropy_from_logits(z, target)));
  }
  CHECK(worst <= 1e-12);

  for (int i = 0; i < 100; ++i) {
    const MatrixXd z = random_logits(rs, 1, 5, 4.0);
    VectorXd d(5);
    for (Index k = 0; k < 5; ++k) d(k) = rs.uniform(0.0, 3.0);
    const int t = static_cast<int>(rs.below(5));
    double prev = -1.0;
    for (double g = 0.0; g <= 5.0; g += 0.25) {
      d(t) = g;
      const double loss = margin_cross_entropy(z, t, d);
      CHECK(loss >= prev);
      prev = loss;
    }
  }

  // gradient of the row loss against central differences
  const MatrixXd z = random_logits(rs, 1, 5, 2.0);
  const VectorXd d = vec({0.1, 0.9, 0.3, 1.7, 0.0});
  const RowVectorXd g = margin_cross_entropy_grad(z, 3, d);
  for (Index k = 0; k < 5; ++k) {
    MatrixXd up = z, down = z;
    up(0, k) += 1e-6;
    down(0, k) -= 1e-6;
    CHECK(g(k) == doctest::Approx((margin_cross_entropy(up, 3, d) - margin_cross_entropy(down, 3, d)) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("evaluation logit adjustment") {
  const MatrixXd out = adjust_logits_eval(row({2, 2}), vec({0.9, 0.1}), 1.0);
  CHECK(out(0, 0) == doctest::Approx(2.10536).epsilon(1e-5));
  CHECK(out(0, 1) == doctest::Approx(4.30259).epsilon(1e-5));
  CHECK(argmax(out.row(0)) == 1);

  RandomStream rs(9);
  const MatrixXd logits = random_logits(rs, 300, 6, 5.0);
  CHECK(adjust_logits_eval(logits, vec({0.5, 0.2, 0.1, 0.1, 0.05, 0.05}), 0.0) == logits);
  const VectorXd uniform = VectorXd::Constant(6, 1.0 / 6.0);
  for (double t : {0.5, 1.0, 3.0}) CHECK(argmaxes(adjust_logits_eval(logits, uniform, t)) == argmaxes(logits));
}

TEST_CASE("KL to uniform") {
  const std::vector<long> flat{5, 5, 5, 5};
  CHECK(kl_to_uniform(flat) == 0.0);
  const std::vector<long> empty{0, 0, 0};
  CHECK(kl_to_uniform(empty) == 0.0);
  const std::vector<long> single{9, 0, 0, 0};
  CHECK(kl_to_uniform(single) == doctest::Approx(std::log(4.0)));
  const std::vector<long> skew{3, 1};
  CHECK(kl_to_uniform(skew) == doctest::Approx(0.75 * std::log(1.5) + 0.25 * std::log(0.5)));

  RandomStream rs(10);
  for (int i = 0; i < 500; ++i) {
    std::vector<long> c(5);
    for (long& v : c) v = static_cast<long>(rs.below(20));
    CHECK(kl_to_uniform(c) >= 0.0);
  }
}

TEST_CASE("config validation") {
  DebiasConfig c;
  CHECK_NOTHROW(c.validate());
  c.tau = 0.0;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("debias.tau"), ConfigError);
  c = DebiasConfig{};
  c.tau = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = DebiasConfig{};
  c.momentum = 1.2;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("debias.momentum"), ConfigError);
  c = DebiasConfig{};
  c.lambda_debias = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = DebiasConfig{};
  c.tau_la = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
