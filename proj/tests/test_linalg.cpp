#include "support.hpp"

using namespace kfac2l;
using namespace testing;

TEST_CASE("kron: identity and scalar cases") {
  CHECK(linalg::kron(Matrix::Identity(2, 2), Matrix::Identity(3, 3)) == Matrix::Identity(6, 6));
  auto e = engine(1);
  const Matrix b = random_matrix(e, 3, 2);
  CHECK(linalg::kron(Matrix::Constant(1, 1, 2.0), b) == 2.0 * b);
}

TEST_CASE("kron: block definition expanded by hand") {
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 0, 1, 1, 0;
  Matrix expected(4, 4);
  expected << 0, 1, 0, 2,
              1, 0, 2, 0,
              0, 3, 0, 4,
              3, 0, 4, 0;
  CHECK(linalg::kron(a, b) == expected);
}

TEST_CASE("kron: associativity on random 2x2 inputs") {
  auto e = engine(2);
  for (int k = 0; k < 50; ++k) {
    const Matrix a = random_matrix(e, 2, 2), b = random_matrix(e, 2, 2), c = random_matrix(e, 2, 2);
    CHECK(rel(linalg::kron(linalg::kron(a, b), c), linalg::kron(a, linalg::kron(b, c))) <= 1e-12);
  }
}

TEST_CASE("kron_matvec matches the explicit product") {
  auto e = engine(3);
  SUBCASE("3x3 and 2x2") {
    const Matrix a = random_matrix(e, 3, 3), b = random_matrix(e, 2, 2);
    const Vector x = random_vector(e, 6);
    CHECK(rel(linalg::kron_matvec(a, b, x), linalg::kron(a, b) * x) <= 1e-12);
  }
  SUBCASE("random rectangular shapes with p <= 64") {
    for (int k = 0; k < 200; ++k) {
      const Index ar = uniform(e, 1, 8), ac = uniform(e, 1, 8), br = uniform(e, 1, 8);
      const Index bc = uniform(e, 1, std::max<Index>(1, 64 / ac));
      const Matrix a = random_matrix(e, ar, ac), b = random_matrix(e, br, bc);
      const Vector x = random_vector(e, ac * bc);
      CHECK(rel(linalg::kron_matvec(a, b, x), linalg::kron(a, b) * x) <= 1e-10);
    }
  }
  SUBCASE("identity and diagonal factors") {
    const Vector x = random_vector(e, 6);
    CHECK(linalg::kron_matvec(Matrix::Identity(3, 3), Matrix::Identity(2, 2), x) == x);
    const Vector da = Vector::LinSpaced(3, 1, 3), db = Vector::LinSpaced(2, 4, 5);
    const Vector y = linalg::kron_matvec(da.asDiagonal().toDenseMatrix(), db.asDiagonal().toDenseMatrix(), x);
    for (Index j = 0; j < 3; ++j)
      for (Index i = 0; i < 2; ++i) CHECK(y(2 * j + i) == doctest::Approx(da(j) * db(i) * x(2 * j + i)));
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(linalg::kron_matvec(Matrix::Identity(2, 2), Matrix::Identity(2, 2), Vector::Ones(3)), Error);
  }
}

TEST_CASE("sym_eig: hand-computed spectra") {
  SUBCASE("diagonal") {
    const auto eig = linalg::sym_eig(Vector(Vector::LinSpaced(3, 3, 1).eval()).asDiagonal().toDenseMatrix());
    Matrix d = Matrix::Zero(3, 3);
    d.diagonal() << 3, 1, 2;
    const auto e2 = linalg::sym_eig(d);
    CHECK(e2.values(0) == doctest::Approx(1));
    CHECK(e2.values(1) == doctest::Approx(2));
    CHECK(e2.values(2) == doctest::Approx(3));
    CHECK(std::abs(e2.vectors(1, 0)) == doctest::Approx(1));
    CHECK(std::abs(e2.vectors(2, 1)) == doctest::Approx(1));
    CHECK(std::abs(e2.vectors(0, 2)) == doctest::Approx(1));
    CHECK(eig.values.size() == 3);
  }
  SUBCASE("[[2,1],[1,2]] has eigenvalues 1 and 3") {
    Matrix a(2, 2);
    a << 2, 1, 1, 2;
    const auto eig = linalg::sym_eig(a);
    CHECK(eig.values(0) == doctest::Approx(1));
    CHECK(eig.values(1) == doctest::Approx(3));
    const double s = 1 / std::sqrt(2.0);
    // first nonzero component made positive
    CHECK(eig.vectors(0, 0) == doctest::Approx(s));
    CHECK(eig.vectors(1, 0) == doctest::Approx(-s));
    CHECK(eig.vectors(0, 1) == doctest::Approx(s));
    CHECK(eig.vectors(1, 1) == doctest::Approx(s));
  }
  SUBCASE("identity") {
    const auto eig = linalg::sym_eig(Matrix::Identity(4, 4));
    CHECK((eig.values.array() - 1.0).abs().maxCoeff() <= 1e-14);
  }
  SUBCASE("non-square input") { CHECK_THROWS_AS(linalg::sym_eig(Matrix::Zero(2, 3)), Error); }
}

TEST_CASE("sym_eig: round trip and orthonormality on random symmetric matrices") {
  auto e = engine(4);
  for (int k = 0; k < 100; ++k) {
    const Index n = uniform(e, 1, 12);
    const Matrix m = random_matrix(e, n, n);
    const Matrix a = (m + m.transpose()) / 2;
    const auto eig = linalg::sym_eig(a);
    CHECK(rel(eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose(), a) <= 1e-10);
    CHECK((eig.vectors.transpose() * eig.vectors - Matrix::Identity(n, n)).norm() <= 1e-10);
    for (Index i = 1; i < n; ++i) CHECK(eig.values(i - 1) <= eig.values(i));
    for (Index j = 0; j < n; ++j) {
      Index first = 0;
      while (std::abs(eig.vectors(first, j)) <= 1e-12) ++first;
      CHECK(eig.vectors(first, j) > 0);
    }
  }
}

TEST_CASE("solve_spd") {
  SUBCASE("identity") {
    const Vector b = Vector::LinSpaced(4, 1, 4);
    CHECK(linalg::solve_spd(Matrix::Identity(4, 4), b) == b);
  }
  SUBCASE("diagonal") {
    Matrix a = Matrix::Zero(2, 2);
    a.diagonal() << 2, 4;
    const Vector x = linalg::solve_spd(a, Vector::LinSpaced(2, 2, 8));
    CHECK(x(0) == doctest::Approx(1));
    CHECK(x(1) == doctest::Approx(2));
  }
  SUBCASE("random SPD residual") {
    auto e = engine(5);
    for (int k = 0; k < 50; ++k) {
      const Index n = uniform(e, 1, 10);
      const Matrix a = random_spd(e, n);
      const Vector b = random_vector(e, n);
      CHECK((a * linalg::solve_spd(a, b) - b).norm() <= 1e-8 * b.norm());
    }
  }
  SUBCASE("jitter is part of the system") {
    const Vector x = linalg::solve_spd(Matrix::Identity(3, 3), Vector::Ones(3), 1.0);
    CHECK(rel(x, Vector::Constant(3, 0.5)) <= 1e-14);
  }
  SUBCASE("singular after retries") {
    Matrix a(2, 2);
    a << 1, 0, 0, -1;
    CHECK_THROWS_AS(linalg::solve_spd(a, Vector::Ones(2)), Error);
  }
}

TEST_CASE("vec/mat convention stacks columns") {
  Matrix x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  Vector v(6);
  v << 1, 4, 2, 5, 3, 6;
  CHECK(linalg::vec(x) == v);
  CHECK(linalg::mat(v, 2, 3) == x);
  auto e = engine(6);
  for (int k = 0; k < 50; ++k) {
    const Matrix m = random_matrix(e, uniform(e, 1, 6), uniform(e, 1, 6));
    CHECK(linalg::mat(linalg::vec(m), m.rows(), m.cols()) == m);
  }
}
