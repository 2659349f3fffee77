#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "plqkit/plq.hpp"
#include "support.hpp"

using namespace plqkit;
using testsupport::eq23;
using testsupport::single;

namespace {

Error capture(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no error raised";
  return Error(ErrorCode::InvalidArgument, "none");
}

}  // namespace

TEST(ExtReal, OrdersInfinitiesAgainstFinites) {
  EXPECT_LT(ExtReal::neg_inf(), ExtReal(-1e300));
  EXPECT_LT(ExtReal(1e300), ExtReal::pos_inf());
  EXPECT_EQ(ExtReal::pos_inf(), ExtReal::pos_inf());
  EXPECT_FALSE(ExtReal(2.0) < ExtReal(2.0));
  EXPECT_THROW(ExtReal(std::nan("")), Error);
  EXPECT_THROW(ExtReal::pos_inf().value(), Error);
}

TEST(Validate, AcceptsWorkedExampleWithoutContinuityCheck) {
  const PlqFunction f = eq23();
  EXPECT_EQ(f.size(), 4u);
  EXPECT_TRUE(f.unbounded_left());
  EXPECT_TRUE(f.unbounded_right());
}

TEST(Validate, WorkedExampleAsPrintedJumpsAtSix) {
  const Error e = capture([] {
    validate_plq({ExtReal::neg_inf(), 1.0, 2.5, 6.0, ExtReal::pos_inf()},
                 {{0.5, 0, 1}, {0, 2, -0.5}, {0, -1, 7}, {1, 0, -5}});
  });
  EXPECT_EQ(e.code(), ErrorCode::DiscontinuousInterior);
  EXPECT_EQ(e.index(), 3u);
  EXPECT_DOUBLE_EQ(e.magnitude(), 30.0);
}

TEST(Validate, SinglePieceIsValid) {
  const PlqFunction f = validate_plq({0.0, 1.0}, {{1, 0, 0}});
  EXPECT_EQ(f.size(), 1u);
}

TEST(Validate, ReportsJumpLocationAndSize) {
  const Error e = capture([] { validate_plq({0.0, 1.0, 2.0}, {{0, 0, 0}, {0, 0, 5}}); });
  EXPECT_EQ(e.code(), ErrorCode::DiscontinuousInterior);
  EXPECT_EQ(e.index(), 1u);
  EXPECT_DOUBLE_EQ(e.magnitude(), 5.0);
}

TEST(Validate, StructuralErrors) {
  EXPECT_EQ(capture([] { validate_plq({0.0, 2.0, 1.0}, {{}, {}}); }).code(),
            ErrorCode::NonIncreasingBreakpoints);
  EXPECT_EQ(capture([] { validate_plq({0.0, ExtReal::pos_inf(), ExtReal::pos_inf()}, {{}, {}}); }).code(),
            ErrorCode::InteriorInfinity);
  EXPECT_EQ(capture([] { validate_plq({0.0, 1.0}, {{}, {}}); }).code(), ErrorCode::LengthMismatch);
  EXPECT_EQ(capture([] { validate_plq({0.0, 1.0}, {{HUGE_VAL, 0, 0}}); }).code(), ErrorCode::NonFiniteValue);
}

TEST(Eval, HalfOpenIntervals) {
  const PlqFunction f = eq23();
  EXPECT_DOUBLE_EQ(eval(f, 1.0).value(), 1.5);
  EXPECT_DOUBLE_EQ(eval(f, 2.5).value(), 4.5);
  EXPECT_DOUBLE_EQ(eval(f, 6.0).value(), 1.0);  // left piece at the jump
  EXPECT_DOUBLE_EQ(eval(f, 7.0).value(), 44.0);
  const PlqFunction g = single({1, 0, 0}, 0.0, 1.0);
  EXPECT_TRUE(eval(g, 2.0).is_pos_inf());
  EXPECT_TRUE(eval(g, 0.0).is_pos_inf());
  EXPECT_DOUBLE_EQ(eval(g, 1.0).value(), 1.0);
}

TEST(Derivative, OneSidedSlopes) {
  const PlqFunction f = eq23();
  EXPECT_DOUBLE_EQ(derivative(f, 2.5, Side::Left), 2.0);
  EXPECT_DOUBLE_EQ(derivative(f, 2.5, Side::Right), -1.0);
  const PlqFunction sq = single({1, 0, 0}, -1.0, 1.0);
  EXPECT_DOUBLE_EQ(derivative(sq, 0.0, Side::Left), 0.0);
  EXPECT_DOUBLE_EQ(derivative(sq, 0.0, Side::Right), 0.0);
  const PlqFunction abs = validate_plq({ExtReal::neg_inf(), 0.0, ExtReal::pos_inf()}, {{0, -1, 0}, {0, 1, 0}});
  EXPECT_DOUBLE_EQ(derivative(abs, 0.0, Side::Left), -1.0);
  EXPECT_DOUBLE_EQ(derivative(abs, 0.0, Side::Right), 1.0);
  EXPECT_EQ(capture([&] { derivative(sq, 1.0, Side::Right); }).code(), ErrorCode::OutsideDomain);
}

TEST(Derivative, MatchesForwardDifferences) {
  std::mt19937_64 rng(11);
  const PlqFunction f = testsupport::random_continuous(rng, 6, false);
  std::uniform_real_distribution<double> u(-2.9, 2.9);
  for (int k = 0; k < 100; ++k) {
    const double x = u(rng);
    const double d = derivative(f, x, Side::Right);
    double prev = HUGE_VAL;
    for (double h : {1e-3, 1e-4, 1e-5}) {
      const double fd = (eval(f, x + h).value() - eval(f, x).value()) / h;
      const double err = std::abs(fd - d);
      EXPECT_LE(err, prev + 1e-9);
      prev = err;
    }
    EXPECT_LT(prev, 1e-3);
  }
}

TEST(Moments, AnalyticValues) {
  const auto m01 = interval_moments(0, 1);
  const auto msym = interval_moments(-1, 1);
  const auto m12 = interval_moments(1, 2);
  const double e01[] = {1, 0.5, 1.0 / 3, 0.25, 0.2};
  const double esym[] = {2, 0, 2.0 / 3, 0, 0.4};
  const double e12[] = {1, 1.5, 7.0 / 3, 3.75, 6.2};
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_NEAR(m01[k], e01[k], 1e-15);
    EXPECT_NEAR(msym[k], esym[k], 1e-15);
    EXPECT_NEAR(m12[k], e12[k], 1e-14);
  }
  EXPECT_EQ(capture([] { interval_moments(1, 1); }).code(), ErrorCode::EmptyInterval);
}

TEST(SegmentErrorForm, Examples) {
  EXPECT_NEAR(segment_error_form({0, 0, 0}, 0, 1).evaluate(QuadCoeffs{0, 1, 0}), 1.0 / 3, 1e-15);
  EXPECT_NEAR(segment_error_form({1, 0, 0}, 0, 1).evaluate(QuadCoeffs{1, 0, 0}), 0.0, 1e-15);
  EXPECT_NEAR(segment_error_form({1, 0, 0}, 0, 1).evaluate(QuadCoeffs{0, 1, 0}), 1.0 / 30, 1e-15);
}

TEST(SegmentErrorForm, MatchesQuadratureOnRandomTriples) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 1000; ++k) {
    const QuadCoeffs p{u(rng), u(rng), u(rng)};
    const QuadCoeffs th{u(rng), u(rng), u(rng)};
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < 1e-2) hi = lo + 0.5;
    const auto form = segment_error_form(p, lo, hi);
    const double oracle = testsupport::quad_sq_distance(single(p, lo, hi), single(th, lo, hi), lo, hi, 8);
    EXPECT_NEAR(form.evaluate(th), oracle, 1e-9 * std::max(1.0, oracle));
    const double tr = form.H.trace();
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(form.H).eigenvalues().minCoeff(), -1e-10 * tr);
  }
}

TEST(CommonRefinement, UnionOfBreakpoints) {
  const PlqFunction f = validate_plq({0.0, 1.0, 2.0}, {{0, 1, 0}, {0, 1, 0}});
  const PlqFunction g = validate_plq({0.0, 1.5, 2.0}, {{1, 0, 0}, {1, 0, 0}});
  const auto [fr, gr] = common_refinement(f, g);
  const std::vector<ExtReal> want{0.0, 1.0, 1.5, 2.0};
  EXPECT_EQ(fr.breakpoint_vector(), want);
  EXPECT_EQ(gr.breakpoint_vector(), want);
  const auto [ff, gg] = common_refinement(f, f);
  EXPECT_EQ(ff, f);
  EXPECT_EQ(gg, f);
  EXPECT_EQ(capture([&] { common_refinement(f, single({}, 0.0, 3.0)); }).code(), ErrorCode::DomainMismatch);
}

TEST(CommonRefinement, PreservesValues) {
  const PlqFunction f = single({1, -1, 2}, 0.0, 2.0);
  const PlqFunction g = validate_plq({0.0, 1.0, 2.0}, {{1, -1, 2}, {1, -1, 2}});
  const auto [fr, gr] = common_refinement(f, g);
  for (int k = 1; k <= 100; ++k) {
    const double x = 2.0 * k / 100.0;
    EXPECT_EQ(eval(fr, x).value(), eval(f, x).value());
    EXPECT_EQ(eval(gr, x).value(), eval(g, x).value());
  }
}

TEST(L2Distance, Examples) {
  const PlqFunction f = eq23();
  EXPECT_EQ(l2_distance(f, f).value(), 0.0);
  EXPECT_NEAR(l2_distance(single({0, 1, 0}, 0.0, 1.0), single({}, 0.0, 1.0)).value(), std::sqrt(1.0 / 3), 1e-15);
  EXPECT_TRUE(l2_distance(single({}, 0.0, 1.0), single({}, 0.0, 2.0)).is_pos_inf());
  EXPECT_TRUE(l2_distance(single({1, 0, 0}, ExtReal::neg_inf(), ExtReal::pos_inf()),
                          single({1, 0, 1}, ExtReal::neg_inf(), ExtReal::pos_inf()))
                  .is_pos_inf());
}

TEST(L2Distance, BoundedModificationMatchesQuadrature) {
  const PlqFunction f = eq23();
  const PlqFunction g = validate_plq({ExtReal::neg_inf(), 1.0, 3.0, 4.5, 6.0, ExtReal::pos_inf()},
                                     {{0.5, 0, 1}, {-0.3, 1, 0.2}, {0.7, -2, 3}, {0, 0.4, 1}, {1, 0, -5}},
                                     kNoContinuityCheck);
  const double d = l2_distance(f, g).value();
  const double oracle = testsupport::quad_sq_distance(f, g, 1.0, 6.0, 20000);
  EXPECT_NEAR(d * d, oracle, 1e-8 * oracle);
}

TEST(L2Distance, RefinementInvariance) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const PlqFunction f = testsupport::random_continuous(rng, 5, false);
    const PlqFunction g = testsupport::random_continuous(rng, 4, true);
    const double base = l2_distance(f, g).value();
    std::vector<ExtReal> extra = f.breakpoint_vector();
    extra.insert(extra.begin() + 1, ExtReal(f.breakpoint(0).value() + 1e-3));
    const PlqFunction fr = restrict_to(f, extra);
    EXPECT_NEAR(l2_distance(fr, g).value(), base, 1e-12 * std::max(1.0, base));
  }
}
