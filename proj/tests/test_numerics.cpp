#include <cmath>

#include "doctest.h"
#include "opendg/errors.hpp"
#include "opendg/matrix.hpp"
#include "opendg/mlp.hpp"
#include "opendg/rng.hpp"
#include "oracles.hpp"

using namespace opendg;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

Matrix random_simplex_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      m.at(i, j) = rng.gamma(1.0);
      sum += m.at(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) m.at(i, j) /= sum;
  }
  return m;
}

}  // namespace

TEST_CASE("matmul identity and hand examples") {
  Rng rng(11);
  const Matrix a = random_matrix(2, 2, rng);
  const Matrix ia = matmul(Matrix::identity(2), a);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(ia.data[i] == a.data[i]);

  const Matrix b = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix v = Matrix::from_rows({{0}, {1}});
  const Matrix bv = matmul(b, v);
  CHECK(bv.at(0, 0) == 2.0);
  CHECK(bv.at(1, 0) == 4.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(12);
  const Matrix a = random_matrix(5, 7, rng);
  const Matrix b = random_matrix(7, 3, rng);
  const Matrix got = matmul(a, b);
  const Matrix want = oracles::matmul_oracle(a, b);
  for (std::size_t i = 0; i < got.data.size(); ++i) {
    CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-12);
  }
}

TEST_CASE("matmul rejects dimension mismatch") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
}

TEST_CASE("softmax closed forms") {
  const Matrix sym = softmax_rows(Matrix::from_rows({{0, 0, 0}}));
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(sym.at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }
  for (double c : {0.0, -5.0, 123.0}) {
    const Matrix m = softmax_rows(Matrix::from_rows({{c, c + std::log(2.0)}}));
    CHECK(m.at(0, 0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(m.at(0, 1) == doctest::Approx(2.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("softmax is overflow-safe and row-stochastic") {
  const Matrix big = softmax_rows(Matrix::from_rows({{1000, 0}}));
  CHECK(all_finite(big));
  CHECK(big.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.at(0, 1) < 1e-300);

  Rng rng(13);
  const Matrix logits = random_matrix(20, 6, rng);
  const Matrix p = softmax_rows(logits);
  for (std::size_t i = 0; i < p.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < p.cols; ++j) {
      sum += p.at(i, j);
      CHECK(p.at(i, j) >= 0.0);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax is shift-invariant per row") {
  Rng rng(14);
  const Matrix logits = random_matrix(10, 5, rng);
  Matrix shifted = logits;
  for (std::size_t i = 0; i < shifted.rows; ++i) {
    const double c = rng.uniform(-50.0, 50.0);
    for (std::size_t j = 0; j < shifted.cols; ++j) shifted.at(i, j) += c;
  }
  const Matrix p0 = softmax_rows(logits);
  const Matrix p1 = softmax_rows(shifted);
  for (std::size_t i = 0; i < p0.data.size(); ++i) {
    CHECK(std::abs(p0.data[i] - p1.data[i]) <= 1e-12);
  }
}

TEST_CASE("soft cross-entropy closed forms") {
  const Matrix onehot = Matrix::from_rows({{0, 1, 0}});
  CHECK(std::abs(soft_cross_entropy(onehot, onehot)) < 1e-9);

  const Matrix uniform = Matrix::from_rows({{0.25, 0.25, 0.25, 0.25}});
  const Matrix target = Matrix::from_rows({{0.1, 0.2, 0.3, 0.4}});
  CHECK(soft_cross_entropy(uniform, target) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-9));

  const Matrix pred = Matrix::from_rows({{0.7, 0.3}});
  const Matrix half = Matrix::from_rows({{0.5, 0.5}});
  const double want = -0.5 * (std::log(0.7) + std::log(0.3));
  CHECK(soft_cross_entropy(pred, half) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("soft cross-entropy input contracts") {
  CHECK_THROWS_AS(soft_cross_entropy(Matrix(1, 2, 0.5), Matrix(1, 3, 1.0 / 3)),
                  ShapeError);
  CHECK_THROWS_AS(soft_cross_entropy(Matrix(1, 2, 0.9), Matrix(1, 2, 0.5)),
                  ContractError);
}

TEST_CASE("Gibbs inequality on random simplex pairs") {
  Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix p = random_simplex_rows(1, 5, rng);
    const Matrix t = random_simplex_rows(1, 5, rng);
    CHECK(soft_cross_entropy(p, t) >= soft_cross_entropy(t, t) - 1e-9);
  }
}

TEST_CASE("mlp_forward degenerate nets") {
  Rng rng(16);
  Mlp zero = make_mlp({3, 4, 2}, Activation::kRelu, Activation::kIdentity, rng);
  for (auto& layer : zero.layers) {
    for (auto& w : layer.weight.data) w = 0.0;
  }
  const Matrix out = mlp_forward(zero, random_matrix(5, 3, rng));
  for (double v : out.data) CHECK(v == 0.0);

  Mlp ident;
  Layer layer;
  layer.weight = Matrix::identity(3);
  layer.bias.assign(3, 0.0);
  layer.act = Activation::kIdentity;
  ident.layers.push_back(layer);
  const Matrix x = random_matrix(4, 3, rng);
  const Matrix y = mlp_forward(ident, x);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("mlp_forward matches scalar oracle and is pure") {
  Rng rng(17);
  const Mlp mlp = make_mlp({4, 6, 3}, Activation::kRelu, Activation::kIdentity, rng);
  const Matrix x = random_matrix(7, 4, rng);
  const Matrix out = mlp_forward(mlp, x);

  oracles::ScalarNet net;
  oracles::append_mlp(net, mlp);
  for (std::size_t r = 0; r < x.rows; ++r) {
    std::vector<double> row(x.row_ptr(r), x.row_ptr(r) + x.cols);
    const std::vector<double> want = oracles::scalar_forward(net, row);
    for (std::size_t j = 0; j < want.size(); ++j) {
      CHECK(std::abs(out.at(r, j) - want[j]) <= 1e-12);
    }
  }

  const Matrix again = mlp_forward(mlp, x);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    CHECK(out.data[i] == again.data[i]);
  }

  CHECK_THROWS_AS(mlp_forward(mlp, Matrix(2, 5)), ShapeError);
}

TEST_CASE("mlp_backward zero upstream gives zero gradients") {
  Rng rng(18);
  const Mlp mlp = make_mlp({3, 5, 2}, Activation::kRelu, Activation::kIdentity, rng);
  ForwardCache cache;
  mlp_forward(mlp, random_matrix(4, 3, rng), &cache);
  const MlpGradients grads = mlp_backward(mlp, cache, Matrix(4, 2, 0.0));
  CHECK(grads.squared_norm() == 0.0);
}

TEST_CASE("mlp_backward matches logistic-regression closed form") {
  Rng rng(19);
  const Mlp mlp = make_mlp({3, 2}, Activation::kIdentity, Activation::kIdentity, rng);
  const Matrix x = random_matrix(1, 3, rng);
  Matrix y(1, 2);
  y.at(0, 1) = 1.0;

  ForwardCache cache;
  const Matrix probs = softmax_rows(mlp_forward(mlp, x, &cache));
  const MlpGradients grads =
      mlp_backward(mlp, cache, soft_cross_entropy_logit_grad(probs, y));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const double want = x.at(0, i) * (probs.at(0, j) - y.at(0, j));
      CHECK(grads.layers[0].weight.at(i, j) == doctest::Approx(want).epsilon(1e-9));
    }
  }
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(grads.layers[0].bias[j] ==
          doctest::Approx(probs.at(0, j) - y.at(0, j)).epsilon(1e-9));
  }
}

TEST_CASE("mlp_backward matches finite differences on every layer type") {
  Rng rng(20);
  Mlp mlp = make_mlp({3, 6, 4, 2}, Activation::kRelu, Activation::kIdentity, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix target = random_simplex_rows(5, 2, rng);

  auto loss = [&] {
    return soft_cross_entropy(softmax_rows(mlp_forward(mlp, x)), target);
  };
  ForwardCache cache;
  const Matrix probs = softmax_rows(mlp_forward(mlp, x, &cache));
  const MlpGradients grads =
      mlp_backward(mlp, cache, soft_cross_entropy_logit_grad(probs, target));

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t li = 0; li < mlp.layers.size(); ++li) {
    auto check_param = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = loss();
      param = saved - h;
      const double down = loss();
      param = saved;
      const double fd = (up - down) / (2 * h);
      const double scale = std::max({1e-6, std::abs(fd), std::abs(analytic)});
      worst = std::max(worst, std::abs(fd - analytic) / scale);
    };
    for (std::size_t i = 0; i < mlp.layers[li].weight.data.size(); ++i) {
      check_param(mlp.layers[li].weight.data[i], grads.layers[li].weight.data[i]);
    }
    for (std::size_t i = 0; i < mlp.layers[li].bias.size(); ++i) {
      check_param(mlp.layers[li].bias[i], grads.layers[li].bias[i]);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("mlp_backward input gradient matches finite differences") {
  Rng rng(21);
  const Mlp mlp = make_mlp({3, 5, 2}, Activation::kRelu, Activation::kIdentity, rng);
  Matrix x = random_matrix(2, 3, rng);
  const Matrix target = random_simplex_rows(2, 2, rng);

  ForwardCache cache;
  const Matrix probs = softmax_rows(mlp_forward(mlp, x, &cache));
  Matrix input_grad;
  mlp_backward(mlp, cache, soft_cross_entropy_logit_grad(probs, target), &input_grad);

  const double h = 1e-5;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double saved = x.data[i];
    x.data[i] = saved + h;
    const double up = soft_cross_entropy(softmax_rows(mlp_forward(mlp, x)), target);
    x.data[i] = saved - h;
    const double down = soft_cross_entropy(softmax_rows(mlp_forward(mlp, x)), target);
    x.data[i] = saved;
    const double fd = (up - down) / (2 * h);
    const double scale = std::max({1e-6, std::abs(fd), std::abs(input_grad.data[i])});
    CHECK(std::abs(fd - input_grad.data[i]) / scale < 1e-4);
  }
}

TEST_CASE("mlp_backward rejects a cache from another net") {
  Rng rng(22);
  const Mlp a = make_mlp({3, 2}, Activation::kIdentity, Activation::kIdentity, rng);
  const Mlp b = make_mlp({3, 2}, Activation::kIdentity, Activation::kIdentity, rng);
  ForwardCache cache;
  mlp_forward(a, Matrix(1, 3, 0.5), &cache);
  CHECK_THROWS_AS(mlp_backward(b, cache, Matrix(1, 2, 0.0)), ContractError);
}
