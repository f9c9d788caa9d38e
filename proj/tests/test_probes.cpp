#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "privgap/metrics.hpp"
#include "privgap/probes.hpp"

using namespace privgap;
using testing::error_of;

namespace {

using U8 = std::vector<std::uint8_t>;

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return X;
}

struct Blobs {
  Matrix X;
  U8 y;
};

Blobs blobs(int n, double separation, std::uint64_t seed, int dim = 2) {
  oracle::Lcg g(seed);
  Blobs b{Matrix(n, dim), {}};
  for (int i = 0; i < n; ++i) {
    const std::uint8_t label = i % 2;
    b.y.push_back(label);
    for (int j = 0; j < dim; ++j) b.X(i, j) = g.normal() + (j == 0 ? (label ? separation / 2 : -separation / 2) : 0.0);
  }
  return b;
}

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_SUITE("probes") {
  TEST_CASE("standardizer examples") {
    Matrix a(2, 1);
    a << 0, 2;
    auto s = fit_standardizer(a);
    CHECK(s.means(0) == 1.0);
    CHECK(s.scales(0) == 1.0);

    Matrix c(3, 1);
    c << 5, 5, 5;
    s = fit_standardizer(c);
    CHECK(s.means(0) == 5.0);
    CHECK(s.scales(0) == 1.0);

    Matrix b(3, 2);
    b << 1, 2, 3, 4, 5, 6;
    s = fit_standardizer(b);
    CHECK(s.means(0) == 3.0);
    CHECK(s.means(1) == 4.0);
    CHECK(s.scales(0) == doctest::Approx(std::sqrt(8.0 / 3.0)));

    CHECK(error_of([] { fit_standardizer(Matrix(1, 3)); }) == ErrorCode::EmptyInput);
    CHECK(error_of([&] { s.transform(Matrix(2, 3)); }) == ErrorCode::DimMismatch);
  }

  TEST_CASE("balanced weights") {
    U8 y(10, 0);
    y[0] = y[1] = 1;
    auto w = balanced_weights(y);
    CHECK(w.w_pos == 2.5);
    CHECK(w.w_neg == 0.625);
    w = balanced_weights(U8{1, 1, 1, 1, 1, 0, 0, 0, 0, 0});
    CHECK(w.w_pos == 1.0);
    CHECK(w.w_neg == 1.0);
    CHECK(error_of([] { balanced_weights(U8(5, 1)); }) == ErrorCode::SingleClass);
  }

  TEST_CASE("analytic gradient matches central differences") {
    oracle::Lcg g(50);
    for (int t = 0; t < 50; ++t) {
      const int n = 5 + g.below(20), d = 1 + g.below(5);
      Matrix X(n, d);
      U8 y;
      Vector s(n), w(d);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) X(i, j) = 2.0 * g.normal();
        y.push_back(static_cast<std::uint8_t>(g.below(2)));
        s(i) = 0.2 + 2.0 * g.uniform();
      }
      for (int j = 0; j < d; ++j) w(j) = g.normal();
      const double b = g.normal(), C = std::pow(10.0, -2.0 + 3.0 * g.uniform());
      Vector grad;
      logistic_objective(X, y, s, w, b, C, &grad);
      const double h = 1e-5;
      double max_rel = 0.0;
      for (int j = 0; j <= d; ++j) {
        Vector wp = w, wm = w;
        double bp = b, bm = b;
        if (j < d) {
          wp(j) += h;
          wm(j) -= h;
        } else {
          bp += h;
          bm -= h;
        }
        const double fd = (logistic_objective(X, y, s, wp, bp, C, nullptr) -
                           logistic_objective(X, y, s, wm, bm, C, nullptr)) / (2 * h);
        max_rel = std::max(max_rel, std::abs(fd - grad(j)) / std::max(1.0, std::abs(grad(j))));
      }
      CHECK(max_rel <= 1e-4);
    }
  }

  TEST_CASE("coefficients match the gradient-descent oracle on the seed-7 dataset") {
    const auto data = oracle::logistic_dataset(7, 20);
    // Frozen output of oracle::logistic_gd (gradient norm below 1e-10).
    struct Frozen {
      double C;
      double w[3];
      double b;
    };
    const Frozen frozen[] = {
        {0.1, {0.2228676703, -0.2878006994, -0.0572699389}, -0.0003103503},
        {1.0, {0.6226921990, -0.8179986044, -0.0509670865}, -0.0022784277},
    };
    for (const auto& f : frozen) {
      const auto ref = oracle::logistic_gd(data, f.C);
      REQUIRE(ref.grad_norm <= 1e-10);
      for (int j = 0; j < 3; ++j) CHECK(ref.w[static_cast<std::size_t>(j)] == doctest::Approx(f.w[j]).epsilon(1e-9));
      const LinearProbe p = train_linear_probe(to_matrix(data.X), data.y, f.C);
      CHECK(p.info.converged);
      for (int j = 0; j < 3; ++j) CHECK(std::abs(p.weights(j) - f.w[j]) <= 1e-3);
      CHECK(std::abs(p.intercept - f.b) <= 1e-3);
    }
  }

  TEST_CASE("symmetric 1-D data predicts 0.5 at the origin") {
    Matrix X(2, 1);
    X << -1, 1;
    const LinearProbe p = train_linear_probe(X, U8{0, 1}, 1.0);
    Matrix x0(1, 1);
    x0 << 0;
    CHECK(std::abs(predict_proba(p, x0)(0) - 0.5) <= 1e-6);
  }

  TEST_CASE("tiny C shrinks to 0.5") {
    const auto b = blobs(60, 3.0, 4);
    U8 y = b.y;
    y[0] = y[2] = y[4] = 1;  // imbalance, so the balanced intercept matters
    const LinearProbe p = train_linear_probe(b.X, y, 1e-9);
    const Vector proba = predict_proba(p, b.X);
    CHECK((proba.array() - 0.5).abs().maxCoeff() <= 1e-3);
  }

  TEST_CASE("objective is non-increasing along accepted iterates") {
    oracle::Lcg g(3);
    for (int t = 0; t < 20; ++t) {
      const auto b = blobs(40 + g.below(60), g.uniform() * 3, static_cast<std::uint64_t>(t), 1 + g.below(6));
      const LinearProbe p = train_linear_probe(b.X, b.y, t % 2 ? 0.01 : 10.0);
      for (std::size_t i = 1; i < p.info.objective_trace.size(); ++i) {
        CHECK(p.info.objective_trace[i] <= p.info.objective_trace[i - 1]);
      }
    }
  }

  TEST_CASE("integer class weights equal duplicated positives") {
    const auto b = blobs(30, 1.0, 12, 3);
    const int r = 3;
    Vector s(30);
    std::vector<Eigen::Index> rows;
    U8 y_dup;
    for (Eigen::Index i = 0; i < 30; ++i) {
      s(i) = b.y[static_cast<std::size_t>(i)] ? r : 1.0;
      for (int c = 0; c < (b.y[static_cast<std::size_t>(i)] ? r : 1); ++c) {
        rows.push_back(i);
        y_dup.push_back(b.y[static_cast<std::size_t>(i)]);
      }
    }
    const Matrix X_dup = b.X(rows, Eigen::all);
    const LogisticOptions tight{500, 1e-11};
    const LinearProbe weighted = fit_logistic(b.X, b.y, s, 0.5, tight);
    const LinearProbe dup = fit_logistic(X_dup, y_dup, Vector::Ones(static_cast<Eigen::Index>(rows.size())), 0.5, tight);
    CHECK((weighted.weights - dup.weights).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(std::abs(weighted.intercept - dup.intercept) <= 1e-6);
  }

  TEST_CASE("iteration cap is not an error") {
    const auto b = blobs(50, 2.0, 5);
    const LinearProbe p = train_linear_probe(b.X, b.y, 1.0, {1, 1e-14});
    CHECK_FALSE(p.info.converged);
    CHECK(p.info.iterations == 1);
    CHECK(error_of([&] { train_linear_probe(b.X, U8(50, 0), 1.0); }) == ErrorCode::SingleClass);
  }

  TEST_CASE("tune_C") {
    const auto b = blobs(90, 1.0, 21, 4);
    const std::vector<double> grid{0.01, 0.1};
    const double c = tune_C(b.X, b.y, grid, 1);
    CHECK((c == 0.01 || c == 0.1));

    // Perfectly separable in one feature: every C ranks perfectly, a tie.
    Matrix X(30, 1);
    U8 y;
    for (int i = 0; i < 30; ++i) {
      X(i, 0) = i;
      y.push_back(i >= 15);
    }
    CHECK(tune_C(X, y, std::vector<double>{0.1, 0.01}, 3) == 0.01);

    const auto before = training_calls();
    CHECK(tune_C(b.X, b.y, std::vector<double>{0.1}, 1) == 0.1);
    CHECK(training_calls() == before);
    CHECK(error_of([&] { tune_C(b.X, U8(90, 1), grid, 1); }) == ErrorCode::SingleClass);
    CHECK(error_of([&] { tune_C(b.X, b.y, std::vector<double>{}, 1); }) == ErrorCode::InvalidArgument);
  }

  TEST_CASE("predict_proba examples") {
    LinearProbe p;
    p.weights = Vector::Ones(1);
    p.intercept = 0.0;
    p.standardizer = {Vector::Zero(1), Vector::Ones(1)};
    Matrix x(2, 1);
    x << 0, std::log(3.0);
    const Vector out = predict_proba(p, x);
    CHECK(out(0) == 0.5);
    CHECK(out(1) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(error_of([&] { predict_proba(p, Matrix(1, 2)); }) == ErrorCode::DimMismatch);

    p.weights(0) = 1e6;  // saturates; the score must still be inside (0,1)
    Matrix big(2, 1);
    big << 100, -100;
    const Vector sat = predict_proba(p, big);
    CHECK(sat(0) < 1.0);
    CHECK(sat(1) > 0.0);
  }

  TEST_CASE("mlp probe") {
    const auto b = blobs(200, 8.0, 9);  // means 4 sd either side of 0: margin 4 sigma
    const MLPProbe a = train_mlp_probe(b.X, b.y, 42);
    const MLPProbe again = train_mlp_probe(b.X, b.y, 42);
    CHECK(a == again);
    CHECK(a.hidden_width() == 100);
    CHECK(a.alpha == 0.1);
    const Vector s = predict_proba(a, b.X);
    CHECK(auc(as_std(s), b.y) >= 0.99);
    CHECK(s.minCoeff() > 0.0);
    CHECK(s.maxCoeff() < 1.0);
    CHECK(a.info.iterations <= 500);

    CHECK(error_of([&] { train_mlp_probe(b.X.topRows(19), U8(b.y.begin(), b.y.begin() + 19), 1); }) ==
          ErrorCode::TooFewExamples);
    CHECK(error_of([&] { train_mlp_probe(b.X, U8(200, 0), 1); }) == ErrorCode::SingleClass);
  }

  TEST_CASE("probe JSON round trip") {
    const auto b = blobs(60, 2.0, 14, 3);
    const Probe lin = train_linear_probe(b.X, b.y, 0.1);
    const Probe back = probe_from_json(probe_to_json(lin));
    CHECK(predict_proba(back, b.X) == predict_proba(lin, b.X));

    MlpOptions fast;
    fast.max_epochs = 5;
    const Probe mlp = train_mlp_probe(b.X, b.y, 3, fast);
    const Probe mlp_back = probe_from_json(probe_to_json(mlp));
    CHECK(predict_proba(mlp_back, b.X) == predict_proba(mlp, b.X));
    CHECK(error_of([] { probe_from_json("{\"type\":\"forest\"}"); }) == ErrorCode::ParseError);
  }
}
