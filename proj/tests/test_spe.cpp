#include "hpdp/spe.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace hpdp;

TEST(Spe, SpecExamples) {
  EXPECT_EQ(encode_position({0, 0}, 4), (RowVectorXd(4) << 0, 1, 0, 1).finished());

  const RowVectorXd e2 = encode_position({2, 0}, 4);
  EXPECT_NEAR(e2(0), 0.90930, 1e-5);
  EXPECT_NEAR(e2(1), -0.41615, 1e-5);
  EXPECT_EQ(e2(2), 0.0);
  EXPECT_EQ(e2(3), 1.0);

  const RowVectorXd e8 = encode_position({1, 1}, 8);
  const double want[] = {std::sin(1.0), std::cos(1.0), std::sin(0.01), std::cos(0.01)};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(e8(i), want[i], 1e-15);
    EXPECT_EQ(e8(i + 4), e8(i));
  }
}

TEST(Spe, RejectsWidthNotMultipleOfFour) {
  for (Eigen::Index d : {0, 2, 6, 30}) EXPECT_THROW(encode_position({1, 1}, d), ConfigError);
}

TEST(Spe, FuseExamples) {
  const MatrixXd f = MatrixXd::Ones(1, 4);
  const Coord origin{0, 0};
  const MatrixXd s = encode_positions(std::span<const Coord>(&origin, 1), 4);
  EXPECT_EQ(fuse(f, s), (MatrixXd(1, 4) << 1, 2, 1, 2).finished());
  EXPECT_EQ(fuse(f, MatrixXd::Zero(1, 4)), f);
  EXPECT_EQ(fuse(MatrixXd::Zero(1, 4), s), s);
  EXPECT_THROW(fuse(f, MatrixXd::Zero(2, 4)), ShapeError);
}

TEST(Spe, DeterministicBoundedAxisIndependent) {
  for (int x = 0; x <= 50; x += 7)
    for (int y = 0; y <= 50; y += 5) {
      const RowVectorXd a = encode_position({double(x), double(y)}, 32);
      EXPECT_EQ(a, encode_position({double(x), double(y)}, 32));
      EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
      const RowVectorXd b = encode_position({double(x), double(y + 3)}, 32);
      EXPECT_EQ(a.head(16), b.head(16));
    }
}

TEST(Spe, InjectiveOnDeskGrid) {
  for (Eigen::Index d : {8, 32}) {
    std::vector<Coord> coords;
    for (int x = 0; x <= 50; ++x)
      for (int y = 0; y <= 50; ++y) coords.push_back({double(x), double(y)});
    const MatrixXd e = encode_positions(coords, d);
    double closest = 1e300;
    for (Eigen::Index i = 0; i < e.rows(); ++i)
      for (Eigen::Index j = i + 1; j < e.rows(); ++j)
        closest = std::min(closest, (e.row(i) - e.row(j)).cwiseAbs().maxCoeff());
    EXPECT_GT(closest, 1e-6) << "D=" << d;
  }
}
