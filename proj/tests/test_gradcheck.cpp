#include <hier/gradcheck.hpp>

#include <gtest/gtest.h>

#include <set>
#include <string>

namespace {

TEST(GradCheckBattery, CoversAllSixComposites) {
  auto entries = hier::run_gradcheck_battery(11, 3);
  std::set<std::string> names;
  for (const auto& e : entries) names.insert(e.name);
  std::set<std::string> expected = {"hyp_distance", "exp_map",
                                    "clip_and_exp", "hier_loss",
                                    "proxy_anchor", "multi_similarity"};
  EXPECT_EQ(names, expected);
}

TEST(GradCheckBattery, SmallRunPassesAtTolerance) {
  auto entries = hier::run_gradcheck_battery(3, 10);
  for (const auto& e : entries) {
    EXPECT_EQ(e.instances, 10) << e.name;
    EXPECT_GT(e.coords, 0) << e.name;
    EXPECT_TRUE(e.pass(1e-4)) << e.name << " max_rel_err=" << e.max_rel_err;
  }
}

TEST(GradCheckBattery, DeterministicPerSeed) {
  auto a = hier::run_gradcheck_battery(7, 4);
  auto b = hier::run_gradcheck_battery(7, 4);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].max_rel_err, b[i].max_rel_err);
    EXPECT_EQ(a[i].instances, b[i].instances);
    EXPECT_EQ(a[i].redraws, b[i].redraws);
    EXPECT_EQ(a[i].coords, b[i].coords);
  }
  auto c = hier::run_gradcheck_battery(8, 4);
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].max_rel_err != c[i].max_rel_err) any_diff = true;
  EXPECT_TRUE(any_diff);
}

TEST(GradCheckBattery, RejectsBadArguments) {
  EXPECT_THROW(hier::run_gradcheck_battery(1, 0), std::invalid_argument);
  EXPECT_THROW(hier::run_gradcheck_battery(1, 5, 0.0), std::invalid_argument);
}

TEST(GradCheckBattery, PassPredicateHonorsTolerance) {
  hier::GradCheckEntry e;
  e.name = "x";
  e.instances = 1;
  e.max_rel_err = 5e-5;
  EXPECT_TRUE(e.pass(1e-4));
  EXPECT_FALSE(e.pass(1e-5));
  e.instances = 0;
  EXPECT_FALSE(e.pass(1e-4));
}

}  // namespace
